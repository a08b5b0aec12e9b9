#pragma once

#include <optional>
#include <span>

#include "qadistill/corpus/example.hpp"
#include "qadistill/numerics/tape.hpp"
#include "qadistill/numerics/tensor.hpp"
#include "qadistill/reader/reader.hpp"

namespace qadistill {

struct DistillConfig {
  double tau = 2.0;
  std::optional<double> lambda;  // tau^2 when unset
  double gamma = 0.3;
  double delta = 0.1;
  std::size_t top_k = 4;
  std::size_t ensemble_size = 3;
  double margin = 1.0;
  std::size_t max_span_len = 15;
  bool use_kd = true;
  bool use_ans = true;
  bool use_att = true;
  bool stagewise = false;

  double kd_weight() const { return lambda.value_or(tau * tau); }
  // Throws ConfigError.
  void validate() const;
};

// Tolerance on teacher distributions summing to one.
inline constexpr double kSoftTargetTolerance = 1e-5;

// -log p1(k) - log p2(l), computed from the logits.
Var loss_ce(const ReaderOutput& out, TokenSpan gold);

// Cross entropy of the student's temperature-tau distributions against
// teacher targets already computed at tau.
Var loss_kd(Var start_logits, Var end_logits, std::span<const double> start_soft, std::span<const double> end_soft,
            double tau);

// max(0, margin - b1[k] + b1[i]) + max(0, margin - b2[l] + b2[j]).
Var loss_ans(Var start_logits, Var end_logits, TokenSpan gold, TokenSpan confusing, double margin = 1.0);

// Half the summed squared difference of the attention matrices.
Var loss_att(Var student_attention, const Tensor& teacher_attention);

struct LossValues {
  double ce = 0.0;
  double kd = 0.0;
  double ans = 0.0;
  double att = 0.0;
};

// Terms left unset are switched off and add nothing.
struct LossTerms {
  std::optional<Var> ce;
  std::optional<Var> kd;
  std::optional<Var> ans;
  std::optional<Var> att;
};

double loss_joint(const LossValues& v, const DistillConfig& config);
// Null when no term is set.
std::optional<Var> loss_joint(const LossTerms& terms, const DistillConfig& config);

LossValues values_of(const LossTerms& terms);

}  // namespace qadistill
