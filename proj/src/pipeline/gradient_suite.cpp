#include "qadistill/pipeline/gradient_suite.hpp"

#include <cmath>
#include <random>

#include <fmt/format.h>

#include "qadistill/distill/losses.hpp"
#include "qadistill/numerics/ops.hpp"
#include "qadistill/reader/reader.hpp"

namespace qadistill {

namespace {

std::vector<double> random_distribution(std::size_t m, std::mt19937_64& rng, double tau) {
  std::uniform_real_distribution<double> dist(-2, 2);
  std::vector<double> logits(m);
  for (auto& v : logits) v = dist(rng);
  return softmax_temp(logits, tau);
}

}  // namespace

std::vector<GradientCase> run_gradient_suite(std::uint64_t seed, const GradCheckOptions& options) {
  ReaderConfig rc;
  rc.vocab_size = 10;
  rc.embed_dim = 4;
  rc.hidden = 4;
  auto params = ReaderParams::initialize(rc, seed);
  auto named = params.named();
  const ReaderInput input{{2, 3, 4}, {5, 6, 2, 7, 8, 9}};
  const TokenSpan gold{2, 3};
  const TokenSpan confusing{4, 5};
  std::mt19937_64 rng(seed);

  std::vector<GradientCase> cases;
  auto check = [&](std::string name, const std::function<Var(const ReaderOutput&)>& loss) {
    auto f = [&](Tape&, std::span<const Var> v) { return loss(forward(bind_vars(v, rc), input)); };
    cases.push_back({std::move(name), grad_check(f, named, options)});
  };

  check("ce", [&](const ReaderOutput& out) { return loss_ce(out, gold); });
  for (double tau : {1.0, 2.0, 3.0, 5.0}) {
    auto q1 = random_distribution(6, rng, tau);
    auto q2 = random_distribution(6, rng, tau);
    check(fmt::format("kd tau={}", tau),
          [=](const ReaderOutput& out) { return loss_kd(out.start_logits, out.end_logits, q1, q2, tau); });
  }

  check("ans active", [&](const ReaderOutput& out) {
    return loss_ans(out.start_logits, out.end_logits, gold, confusing, 10.0);
  });
  // A gold/confusing pair the initial logits already separate, with the
  // margin at half the smaller gap so both hinges sit flat at zero.
  auto base = predict(params, input);
  TokenSpan lead, trail;
  double best_gap = 0.0;
  for (int k = 0; k < 6; ++k) {
    for (int l = k; l < 6; ++l) {
      for (int i = 0; i < 6; ++i) {
        for (int j = i; j < 6; ++j) {
          const double g = std::min(base.start_logits[k] - base.start_logits[i], base.end_logits[l] - base.end_logits[j]);
          if (g > best_gap) {
            best_gap = g;
            lead = {k, l};
            trail = {i, j};
          }
        }
      }
    }
  }
  if (best_gap > 1e-3) {
    check("ans inactive", [&](const ReaderOutput& out) {
      return loss_ans(out.start_logits, out.end_logits, lead, trail, best_gap / 2);
    });
  }

  Tensor teacher_att({6, 3});
  for (std::size_t j = 0; j < 6; ++j) {
    auto row = random_distribution(3, rng, 1.0);
    for (std::size_t i = 0; i < 3; ++i) teacher_att.at(j, i) = row[i];
  }
  check("att", [&](const ReaderOutput& out) { return loss_att(out.attention, teacher_att); });

  DistillConfig dc;
  dc.margin = 10.0;
  auto q1 = random_distribution(6, rng, dc.tau);
  auto q2 = random_distribution(6, rng, dc.tau);
  check("joint", [&](const ReaderOutput& out) {
    LossTerms t;
    t.ce = loss_ce(out, gold);
    t.kd = loss_kd(out.start_logits, out.end_logits, q1, q2, dc.tau);
    t.ans = loss_ans(out.start_logits, out.end_logits, gold, confusing, dc.margin);
    t.att = loss_att(out.attention, teacher_att);
    return *loss_joint(t, dc);
  });
  return cases;
}

}  // namespace qadistill
