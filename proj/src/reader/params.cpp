#include "qadistill/reader/params.hpp"

#include <algorithm>
#include <cstring>
#include <random>

#include <fmt/format.h>

namespace qadistill {

const std::array<std::string, ReaderParams::kSlotCount>& ReaderParams::names() {
  static const std::array<std::string, kSlotCount> n{"embedding",      "context0.weight", "context0.bias",
                                                     "context1.weight", "context1.bias",   "similarity.query",
                                                     "similarity.passage", "fuse.weight", "fuse.bias",
                                                     "start.weight",   "end.weight"};
  return n;
}

std::array<Shape, ReaderParams::kSlotCount> ReaderParams::shapes(const ReaderConfig& c) {
  const std::size_t window = 2 * c.window_radius + 1;
  return {Shape{c.vocab_size, c.embed_dim}, Shape{window * c.embed_dim, c.hidden}, Shape{c.hidden},
          Shape{window * c.hidden, c.hidden}, Shape{c.hidden},                     Shape{c.hidden, c.hidden},
          Shape{c.hidden, c.hidden},          Shape{3 * c.hidden, c.hidden},       Shape{c.hidden},
          Shape{c.hidden, 1},                 Shape{2 * c.hidden, 1}};
}

ReaderParams::ReaderParams(const ReaderConfig& config) : config_(config) {
  for (auto& s : shapes(config)) tensors_.emplace_back(s, 0.0);
}

ReaderParams ReaderParams::initialize(const ReaderConfig& config, std::uint64_t seed) {
  ReaderParams p(config);
  std::mt19937_64 rng(seed);
  for (auto& t : p.tensors_) {
    for (auto& v : t.values()) {
      // 53 random bits mapped onto [-scale, scale].
      const double unit = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      v = (2.0 * unit - 1.0) * config.init_scale;
    }
  }
  return p;
}

std::size_t ReaderParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

bool ReaderParams::all_finite() const {
  return std::all_of(tensors_.begin(), tensors_.end(), [](const Tensor& t) { return t.all_finite(); });
}

void ReaderParams::zero() {
  for (auto& t : tensors_) t.fill(0.0);
}

std::vector<NamedParam> ReaderParams::named() {
  std::vector<NamedParam> out;
  for (std::size_t i = 0; i < tensors_.size(); ++i) out.push_back({names()[i], &tensors_[i]});
  return out;
}

std::string ReaderParams::digest() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& t : tensors_) {
    for (double v : t.values()) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &v, sizeof v);
      for (unsigned char b : bytes) {
        h ^= b;
        h *= 1099511628211ULL;
      }
    }
  }
  return fmt::format("{:016x}", h);
}

}  // namespace qadistill
