#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "qadistill/numerics/tape.hpp"

namespace qadistill {

struct GradCheckOptions {
  double eps = 1e-5;
  double tol = 1e-4;
  // Coordinates sampled per parameter; 0 checks every coordinate.
  std::size_t max_coords = 0;
  std::uint64_t seed = 7;
};

struct GradMismatch {
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct ParamGradReport {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  std::vector<GradMismatch> failures;
  bool ok() const { return failures.empty(); }
};

struct GradCheckReport {
  std::vector<ParamGradReport> params;
  bool ok() const;
  double max_rel_error() const;
  std::string summary() const;
};

struct NamedParam {
  std::string name;
  Tensor* tensor = nullptr;
};

// Builds the scalar objective on a fresh tape from the bound parameters
// (given in the same order as the NamedParam list).
using ScalarObjective = std::function<Var(Tape&, std::span<const Var>)>;

// Compares reverse-mode gradients against central differences
//   |analytic - numeric| / max(1, |analytic|, |numeric|) <= tol.
// Parameters are perturbed in place and restored. Throws NumericalError when
// the objective is non-finite at a perturbed point and ConfigError for eps
// outside [1e-7, 1e-3].
GradCheckReport grad_check(const ScalarObjective& f, std::span<const NamedParam> params,
                           const GradCheckOptions& options = {});

}  // namespace qadistill
