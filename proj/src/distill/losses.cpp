#include "qadistill/distill/losses.hpp"

#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "qadistill/errors.hpp"
#include "qadistill/numerics/ops.hpp"

namespace qadistill {

namespace {

void check_span(TokenSpan s, std::size_t m, const char* what) {
  if (s.start < 0 || s.end < s.start || static_cast<std::size_t>(s.end) >= m) {
    throw ShapeError(fmt::format("{} span ({}, {}) is invalid for a passage of {} tokens", what, s.start, s.end, m));
  }
}

void check_soft(std::span<const double> q, std::size_t m, const char* what) {
  if (q.size() != m) throw ShapeError(fmt::format("{} target has {} entries, logits have {}", what, q.size(), m));
  const double total = std::accumulate(q.begin(), q.end(), 0.0);
  if (std::abs(total - 1.0) > kSoftTargetTolerance) {
    throw DataError(fmt::format("{} target sums to {:.8f}, not 1", what, total));
  }
}

Var soft_cross_entropy(Var logits, std::span<const double> q, double tau) {
  Var target = logits.tape->constant(Tensor::vector({q.begin(), q.end()}));
  return sum(mul(target, log_softmax_temp(logits, tau)));
}

Var margin_hinge(Var logits, int good, int bad, double margin) {
  return hinge(shift(sub(pick(logits, bad), pick(logits, good)), margin));
}

}  // namespace

void DistillConfig::validate() const {
  if (!(tau > 0) || !std::isfinite(tau)) throw ConfigError(fmt::format("tau must be positive, got {}", tau));
  if (lambda && !(*lambda >= 0)) throw ConfigError(fmt::format("lambda must be non-negative, got {}", *lambda));
  if (!(gamma >= 0)) throw ConfigError(fmt::format("gamma must be non-negative, got {}", gamma));
  if (!(delta >= 0)) throw ConfigError(fmt::format("delta must be non-negative, got {}", delta));
  if (!(margin > 0)) throw ConfigError(fmt::format("margin must be positive, got {}", margin));
  if (top_k < 1) throw ConfigError("top_k must be at least 1");
  if (ensemble_size < 1) throw ConfigError("ensemble_size must be at least 1");
  if (max_span_len < 1) throw ConfigError("max_span_len must be at least 1");
}

Var loss_ce(const ReaderOutput& out, TokenSpan gold) {
  const std::size_t m = out.start_logits.value().size();
  check_span(gold, m, "gold");
  Var ls = log_softmax_temp(out.start_logits, 1.0);
  Var le = log_softmax_temp(out.end_logits, 1.0);
  return scale(add(pick(ls, gold.start), pick(le, gold.end)), -1.0);
}

Var loss_kd(Var start_logits, Var end_logits, std::span<const double> start_soft, std::span<const double> end_soft,
            double tau) {
  if (!(tau > 0)) throw ConfigError(fmt::format("tau must be positive, got {}", tau));
  check_soft(start_soft, start_logits.value().size(), "start");
  check_soft(end_soft, end_logits.value().size(), "end");
  return scale(add(soft_cross_entropy(start_logits, start_soft, tau), soft_cross_entropy(end_logits, end_soft, tau)),
               -1.0);
}

Var loss_ans(Var start_logits, Var end_logits, TokenSpan gold, TokenSpan confusing, double margin) {
  if (!(margin > 0)) throw ConfigError(fmt::format("margin must be positive, got {}", margin));
  const std::size_t m = start_logits.value().size();
  if (end_logits.value().size() != m) throw ShapeError("start and end logits differ in length");
  check_span(gold, m, "gold");
  check_span(confusing, m, "confusing");
  return add(margin_hinge(start_logits, gold.start, confusing.start, margin),
             margin_hinge(end_logits, gold.end, confusing.end, margin));
}

Var loss_att(Var student_attention, const Tensor& teacher_attention) {
  if (student_attention.shape() != teacher_attention.shape()) {
    throw ShapeError(fmt::format("attention shapes differ: student {} vs teacher {}",
                                 shape_string(student_attention.shape()), shape_string(teacher_attention.shape())));
  }
  return scale(squared_error(student_attention, student_attention.tape->reference(teacher_attention)), 0.5);
}

double loss_joint(const LossValues& v, const DistillConfig& config) {
  config.validate();
  double total = v.ce;
  if (config.use_kd) total += config.kd_weight() * v.kd;
  if (config.use_ans) total += config.gamma * v.ans;
  if (config.use_att) total += config.delta * v.att;
  return total;
}

std::optional<Var> loss_joint(const LossTerms& terms, const DistillConfig& config) {
  config.validate();
  std::optional<Var> total;
  auto accumulate = [&](const std::optional<Var>& term, bool enabled, double weight) {
    if (!term || !enabled) return;
    Var part = weight == 1.0 ? *term : scale(*term, weight);
    total = total ? add(*total, part) : part;
  };
  accumulate(terms.ce, true, 1.0);
  accumulate(terms.kd, config.use_kd, config.kd_weight());
  accumulate(terms.ans, config.use_ans, config.gamma);
  accumulate(terms.att, config.use_att, config.delta);
  return total;
}

LossValues values_of(const LossTerms& terms) {
  auto get = [](const std::optional<Var>& v) { return v ? v->value().item() : 0.0; };
  return {get(terms.ce), get(terms.kd), get(terms.ans), get(terms.att)};
}

}  // namespace qadistill
