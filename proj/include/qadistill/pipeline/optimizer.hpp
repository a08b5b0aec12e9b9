#pragma once

#include <vector>

#include "qadistill/reader/params.hpp"

namespace qadistill {

struct AdamSettings {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(const ReaderParams& like, AdamSettings settings);
  // One bias-corrected update of params from grads.
  void step(ReaderParams& params, const ReaderParams& grads);
  std::size_t steps() const { return t_; }

 private:
  AdamSettings s_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::size_t t_ = 0;
};

double global_norm(const ReaderParams& grads);
// Rescales grads to norm max_norm when above it; returns the norm before clipping.
double clip_global_norm(ReaderParams& grads, double max_norm);

}  // namespace qadistill
