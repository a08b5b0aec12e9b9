#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "qadistill/numerics/gradcheck.hpp"
#include "qadistill/numerics/tensor.hpp"

namespace qadistill {

struct ReaderConfig {
  std::size_t vocab_size = 2;
  std::size_t embed_dim = 32;
  std::size_t hidden = 32;
  // Neighbours on each side concatenated by the contextualizer layers.
  std::size_t window_radius = 2;
  double init_scale = 0.3;

  friend bool operator==(const ReaderConfig&, const ReaderConfig&) = default;
};

// Trainable arrays of the reader, in a fixed order shared by checkpoints,
// optimizers and gradient buffers.
class ReaderParams {
 public:
  enum Slot : std::size_t {
    kEmbedding,
    kContext0Weight,
    kContext0Bias,
    kContext1Weight,
    kContext1Bias,
    kSimilarityQuery,
    kSimilarityPassage,
    kFuseWeight,
    kFuseBias,
    kStartWeight,
    kEndWeight,
    kSlotCount
  };

  ReaderParams() = default;
  // All arrays zero.
  explicit ReaderParams(const ReaderConfig& config);
  // Uniform on [-init_scale, init_scale] from the seed.
  static ReaderParams initialize(const ReaderConfig& config, std::uint64_t seed);

  static const std::array<std::string, kSlotCount>& names();
  static std::array<Shape, kSlotCount> shapes(const ReaderConfig& config);

  const ReaderConfig& config() const { return config_; }
  Tensor& operator[](std::size_t slot) { return tensors_[slot]; }
  const Tensor& operator[](std::size_t slot) const { return tensors_[slot]; }
  std::vector<Tensor>& tensors() { return tensors_; }
  const std::vector<Tensor>& tensors() const { return tensors_; }

  std::size_t parameter_count() const;
  bool all_finite() const;
  void zero();
  std::vector<NamedParam> named();
  // FNV-1a over the raw bytes of every value, as hex.
  std::string digest() const;

  friend bool operator==(const ReaderParams&, const ReaderParams&) = default;

 private:
  ReaderConfig config_;
  std::vector<Tensor> tensors_;
};

}  // namespace qadistill
