#include "qadistill/pipeline/optimizer.hpp"

#include <cmath>

namespace qadistill {

Adam::Adam(const ReaderParams& like, AdamSettings settings) : s_(settings) {
  for (const auto& t : like.tensors()) {
    m_.emplace_back(t.shape());
    v_.emplace_back(t.shape());
  }
}

void Adam::step(ReaderParams& params, const ReaderParams& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(s_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(s_.beta2, static_cast<double>(t_));
  for (std::size_t slot = 0; slot < m_.size(); ++slot) {
    auto p = params[slot].values();
    auto g = grads[slot].values();
    auto m = m_[slot].values();
    auto v = v_[slot].values();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = s_.beta1 * m[i] + (1 - s_.beta1) * g[i];
      v[i] = s_.beta2 * v[i] + (1 - s_.beta2) * g[i] * g[i];
      p[i] -= s_.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + s_.eps);
    }
  }
}

double global_norm(const ReaderParams& grads) {
  double sq = 0;
  for (const auto& t : grads.tensors()) {
    for (double g : t.values()) sq += g * g;
  }
  return std::sqrt(sq);
}

double clip_global_norm(ReaderParams& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (norm > max_norm) {
    const double f = max_norm / norm;
    for (auto& t : grads.tensors()) {
      for (auto& g : t.values()) g *= f;
    }
  }
  return norm;
}

}  // namespace qadistill
