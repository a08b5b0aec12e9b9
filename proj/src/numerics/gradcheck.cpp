#include "qadistill/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "qadistill/errors.hpp"

namespace qadistill {
namespace {

double evaluate(const ScalarObjective& f, std::span<const NamedParam> params) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const auto& p : params) vars.push_back(tape.constant(*p.tensor));
  const double v = f(tape, vars).value().item();
  if (!std::isfinite(v)) throw NumericalError("objective is not finite at a perturbed point");
  return v;
}

std::vector<std::size_t> sample_coords(std::size_t n, std::size_t limit, std::mt19937_64& rng) {
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  if (limit == 0 || limit >= n) return all;
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(limit);
  std::sort(all.begin(), all.end());
  return all;
}

}  // namespace

bool GradCheckReport::ok() const {
  return std::all_of(params.begin(), params.end(), [](const auto& p) { return p.ok(); });
}

double GradCheckReport::max_rel_error() const {
  double worst = 0.0;
  for (const auto& p : params) worst = std::max(worst, p.max_rel_error);
  return worst;
}

std::string GradCheckReport::summary() const {
  std::string out;
  for (const auto& p : params) {
    out += fmt::format("{:<16} checked={:<5} max_rel_err={:.3e} {}\n", p.name, p.checked, p.max_rel_error,
                       p.ok() ? "ok" : "FAIL");
    for (const auto& f : p.failures) {
      out += fmt::format("    [{}] analytic={:.10g} numeric={:.10g} rel={:.3e}\n", f.index, f.analytic, f.numeric,
                         f.rel_error);
    }
  }
  return out;
}

GradCheckReport grad_check(const ScalarObjective& f, std::span<const NamedParam> params,
                           const GradCheckOptions& options) {
  if (options.eps < 1e-7 || options.eps > 1e-3) {
    throw ConfigError(fmt::format("grad_check eps {} outside [1e-7, 1e-3]", options.eps));
  }

  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& p : params) vars.push_back(tape.leaf(*p.tensor));
    Var out = f(tape, vars);
    if (!std::isfinite(out.value().item())) throw NumericalError("objective is not finite");
    tape.backward(out);
    for (std::size_t k = 0; k < params.size(); ++k) {
      analytic.push_back(tape.grad(vars[k].id));
    }
  }

  std::mt19937_64 rng(options.seed);
  GradCheckReport report;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& x = *params[k].tensor;
    ParamGradReport pr;
    pr.name = params[k].name;
    for (std::size_t i : sample_coords(x.size(), options.max_coords, rng)) {
      const double saved = x[i];
      x[i] = saved + options.eps;
      const double up = evaluate(f, params);
      x[i] = saved - options.eps;
      const double down = evaluate(f, params);
      x[i] = saved;
      const double numeric = (up - down) / (2.0 * options.eps);
      const double a = analytic[k][i];
      const double rel = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      pr.max_rel_error = std::max(pr.max_rel_error, rel);
      ++pr.checked;
      if (rel > options.tol) pr.failures.push_back({i, a, numeric, rel});
    }
    report.params.push_back(std::move(pr));
  }
  return report;
}

}  // namespace qadistill
