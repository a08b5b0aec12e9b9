#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "doctest.h"
#include "qadistill/corpus/synthetic.hpp"
#include "qadistill/corpus/vocabulary.hpp"
#include "qadistill/decode_eval/metrics.hpp"
#include "qadistill/distill/annotation.hpp"
#include "qadistill/distill/losses.hpp"
#include "qadistill/errors.hpp"
#include "qadistill/numerics/gradcheck.hpp"
#include "qadistill/numerics/ops.hpp"

using namespace qadistill;

namespace {

std::vector<double> random_vector(std::size_t m, std::mt19937_64& rng, double lo = -2, double hi = 2) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(m);
  for (auto& x : v) x = dist(rng);
  return v;
}

// Straightforward softmax with no max shift; fine for the small logits used here.
std::vector<double> naive_softmax(const std::vector<double>& x, double tau) {
  std::vector<double> e(x.size());
  double z = 0;
  for (std::size_t i = 0; i < x.size(); ++i) z += (e[i] = std::exp(x[i] / tau));
  for (auto& v : e) v /= z;
  return e;
}

double scalar(Var v) { return v.value().item(); }

Var vec(Tape& tape, const std::vector<double>& v) { return tape.constant(Tensor::vector(v)); }

ReaderOutput logits_only(Tape& tape, const std::vector<double>& b1, const std::vector<double>& b2) {
  ReaderOutput out;
  out.start_logits = vec(tape, b1);
  out.end_logits = vec(tape, b2);
  return out;
}

}  // namespace

TEST_CASE("loss_ce against the direct formula") {
  std::mt19937_64 rng(1);
  Tape tape;
  auto b1 = random_vector(4, rng);
  auto b2 = random_vector(4, rng);
  const double ref = -std::log(naive_softmax(b1, 1)[1]) - std::log(naive_softmax(b2, 1)[3]);
  CHECK(scalar(loss_ce(logits_only(tape, b1, b2), {1, 3})) == doctest::Approx(ref).epsilon(1e-12));

  std::vector<double> flat(5, 0.7);
  CHECK(scalar(loss_ce(logits_only(tape, flat, flat), {0, 2})) == doctest::Approx(2 * std::log(5.0)));

  std::vector<double> peak1{0, 60, 0}, peak2{0, 0, 60};
  CHECK(scalar(loss_ce(logits_only(tape, peak1, peak2), {1, 2})) < 1e-20);
  CHECK_THROWS_AS(loss_ce(logits_only(tape, peak1, peak2), {2, 3}), ShapeError);
  CHECK_THROWS_AS(loss_ce(logits_only(tape, peak1, peak2), {2, 1}), ShapeError);
}

TEST_CASE("loss_kd against brute-force summation") {
  std::mt19937_64 rng(2);
  for (double tau : {1.0, 2.0, 3.0, 5.0}) {
    Tape tape;
    auto b1 = random_vector(5, rng);
    auto b2 = random_vector(5, rng);
    auto q1 = naive_softmax(random_vector(5, rng), tau);
    auto q2 = naive_softmax(random_vector(5, rng), tau);
    auto p1 = naive_softmax(b1, tau);
    auto p2 = naive_softmax(b2, tau);
    double ref = 0;
    for (std::size_t k = 0; k < 5; ++k) ref -= q1[k] * std::log(p1[k]);
    for (std::size_t l = 0; l < 5; ++l) ref -= q2[l] * std::log(p2[l]);
    CHECK(scalar(loss_kd(vec(tape, b1), vec(tape, b2), q1, q2, tau)) == doctest::Approx(ref).epsilon(1e-12));
  }
}

TEST_CASE("loss_kd special cases") {
  Tape tape;
  const std::size_t m = 6;
  std::vector<double> zeros(m, 0.0), uniform(m, 1.0 / m);
  CHECK(scalar(loss_kd(vec(tape, zeros), vec(tape, zeros), uniform, uniform, 2.0)) ==
        doctest::Approx(2 * std::log(double(m))));

  std::mt19937_64 rng(3);
  auto b1 = random_vector(m, rng);
  auto b2 = random_vector(m, rng);
  std::vector<double> hot1(m, 0.0), hot2(m, 0.0);
  hot1[2] = 1;
  hot2[4] = 1;
  const double tau = 3.0;
  const double ce_tau = -std::log(naive_softmax(b1, tau)[2]) - std::log(naive_softmax(b2, tau)[4]);
  CHECK(scalar(loss_kd(vec(tape, b1), vec(tape, b2), hot1, hot2, tau)) == doctest::Approx(ce_tau).epsilon(1e-12));

  auto p1 = naive_softmax(b1, tau);
  auto p2 = naive_softmax(b2, tau);
  double h = 0;
  for (double p : p1) h -= p * std::log(p);
  for (double p : p2) h -= p * std::log(p);
  CHECK(scalar(loss_kd(vec(tape, b1), vec(tape, b2), p1, p2, tau)) == doctest::Approx(h).epsilon(1e-12));

  std::vector<double> bad(m, 0.2);
  CHECK_THROWS_AS(loss_kd(vec(tape, b1), vec(tape, b2), bad, p2, tau), DataError);
  CHECK_THROWS_AS(loss_kd(vec(tape, b1), vec(tape, b2), std::vector<double>{1.0}, p2, tau), ShapeError);
}

TEST_CASE("loss_kd is minimized where the student matches the teacher") {
  std::mt19937_64 rng(4);
  const double tau = 2.0;
  auto q1 = naive_softmax(random_vector(5, rng), tau);
  auto q2 = naive_softmax(random_vector(5, rng), tau);
  Tensor b1 = Tensor::vector(std::vector<double>(5, 0.0));
  Tensor b2 = b1;
  for (int step = 0; step < 5000; ++step) {
    Tape tape;
    Var v1 = tape.leaf(b1);
    Var v2 = tape.leaf(b2);
    tape.backward(loss_kd(v1, v2, q1, q2, tau));
    for (std::size_t i = 0; i < 5; ++i) {
      b1[i] -= 2.0 * v1.grad()[i];
      b2[i] -= 2.0 * v2.grad()[i];
    }
  }
  auto p1 = softmax_temp(b1.values(), tau);
  auto p2 = softmax_temp(b2.values(), tau);
  double kl = 0;
  for (std::size_t i = 0; i < 5; ++i) kl += q1[i] * std::log(q1[i] / p1[i]) + q2[i] * std::log(q2[i] / p2[i]);
  CHECK(kl < 1e-6);
}

TEST_CASE("loss_kd gradient check across the temperature grid") {
  std::mt19937_64 rng(5);
  for (double tau : {1.0, 2.0, 3.0, 5.0}) {
    Tensor b1 = Tensor::vector(random_vector(7, rng));
    Tensor b2 = Tensor::vector(random_vector(7, rng));
    auto q1 = naive_softmax(random_vector(7, rng), tau);
    auto q2 = naive_softmax(random_vector(7, rng), tau);
    std::vector<NamedParam> params{{"b1", &b1}, {"b2", &b2}};
    auto report = grad_check([&](Tape&, std::span<const Var> v) { return loss_kd(v[0], v[1], q1, q2, tau); }, params);
    INFO(report.summary());
    CHECK(report.ok());
  }
}

TEST_CASE("loss_ans worked values") {
  Tape tape;
  auto ans = [&](std::vector<double> b1, std::vector<double> b2) {
    return scalar(loss_ans(vec(tape, b1), vec(tape, b2), {0, 1}, {2, 3}, 1.0));
  };
  CHECK(ans({2, 0, 0, 0}, {0, 1.5, 0, 0}) == 0.0);
  CHECK(ans({0.3, 0, 0.3, 0}, {0, -1, 0, -1}) == doctest::Approx(2.0));
  CHECK(ans({0.4, 0, 0, 0}, {0, 2, 0, 0}) == doctest::Approx(0.6));
  CHECK_THROWS_AS(loss_ans(vec(tape, {0, 0}), vec(tape, {0, 0}), {0, 1}, {1, 2}), ShapeError);
  CHECK_THROWS_AS(loss_ans(vec(tape, {0, 0}), vec(tape, {0, 0}), {0, 1}, {0, 0}, 0.0), ConfigError);
}

TEST_CASE("loss_ans is translation invariant and differentiable off the kink") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    auto b1 = random_vector(6, rng);
    auto b2 = random_vector(6, rng);
    const double c1 = random_vector(1, rng, -10, 10)[0];
    const double c2 = random_vector(1, rng, -10, 10)[0];
    auto s1 = b1, s2 = b2;
    for (auto& v : s1) v += c1;
    for (auto& v : s2) v += c2;
    Tape tape;
    const double a = scalar(loss_ans(vec(tape, b1), vec(tape, b2), {1, 2}, {4, 5}));
    const double b = scalar(loss_ans(vec(tape, s1), vec(tape, s2), {1, 2}, {4, 5}));
    CHECK(a == doctest::Approx(b).epsilon(1e-12));
  }

  Tensor b1 = Tensor::vector({0.1, 0.5, -0.2, 0.0});
  Tensor b2 = Tensor::vector({0.3, -0.4, 0.2, 0.9});
  std::vector<NamedParam> params{{"b1", &b1}, {"b2", &b2}};
  auto report = grad_check(
      [](Tape&, std::span<const Var> v) { return loss_ans(v[0], v[1], {1, 2}, {0, 3}); }, params);
  CHECK(report.ok());
}

TEST_CASE("loss_att against a double loop") {
  Tape tape;
  CHECK(scalar(loss_att(tape.constant(Tensor::matrix(1, 2, {0, 1})), Tensor::matrix(1, 2, {1, 0}))) ==
        doctest::Approx(1.0));

  std::mt19937_64 rng(7);
  Tensor s({3, 4}), t({3, 4});
  for (std::size_t j = 0; j < 3; ++j) {
    auto a = naive_softmax(random_vector(4, rng), 1);
    auto b = naive_softmax(random_vector(4, rng), 1);
    for (std::size_t i = 0; i < 4; ++i) {
      s.at(j, i) = a[i];
      t.at(j, i) = b[i];
    }
  }
  double ref = 0;
  for (std::size_t j = 0; j < 3; ++j) {
    for (std::size_t i = 0; i < 4; ++i) ref += (t.at(j, i) - s.at(j, i)) * (t.at(j, i) - s.at(j, i));
  }
  CHECK(scalar(loss_att(tape.constant(s), t)) == doctest::Approx(ref / 2).epsilon(1e-12));
  CHECK(scalar(loss_att(tape.constant(s), s)) == 0.0);
  CHECK_THROWS_AS(loss_att(tape.constant(s), Tensor({4, 3})), ShapeError);
}

TEST_CASE("loss_joint weighting") {
  DistillConfig cfg;
  CHECK(cfg.kd_weight() == 4.0);
  CHECK(loss_joint(LossValues{1, 0.5, 2, 3}, cfg) == doctest::Approx(3.9));
  CHECK(loss_joint(LossValues{1.25, 0, 0, 0}, cfg) == 1.25);

  cfg.use_kd = cfg.use_ans = cfg.use_att = false;
  CHECK(loss_joint(LossValues{1, 0.5, 2, 3}, cfg) == 1.0);

  DistillConfig neg;
  neg.gamma = -0.1;
  CHECK_THROWS_AS(loss_joint(LossValues{}, neg), ConfigError);
  neg.gamma = 0.3;
  neg.lambda = -1.0;
  CHECK_THROWS_AS(loss_joint(LossValues{}, neg), ConfigError);

  DistillConfig t3;
  t3.tau = 3;
  CHECK(t3.kd_weight() == 9.0);
  t3.lambda = 1.5;
  CHECK(t3.kd_weight() == 1.5);
}

TEST_CASE("loss_joint on the tape matches the value form") {
  Tape tape;
  LossTerms terms{vec(tape, {1.0}), vec(tape, {0.5}), vec(tape, {2.0}), vec(tape, {3.0})};
  DistillConfig cfg;
  CHECK(loss_joint(terms, cfg)->value().item() == doctest::Approx(3.9));
  CHECK(loss_joint(values_of(terms), cfg) == doctest::Approx(3.9));
  cfg.use_ans = false;
  CHECK(loss_joint(terms, cfg)->value().item() == doctest::Approx(3.3));
  CHECK_FALSE(loss_joint(LossTerms{}, cfg).has_value());
}

TEST_CASE("joint objective through the reader passes grad_check") {
  ReaderConfig rc;
  rc.vocab_size = 10;
  rc.embed_dim = 4;
  rc.hidden = 4;
  rc.init_scale = 0.5;
  auto params = ReaderParams::initialize(rc, 21);
  auto named = params.named();
  const ReaderInput input{{2, 3, 4}, {5, 6, 2, 7, 8, 9}};

  std::mt19937_64 rng(8);
  const double tau = 2.0;
  auto q1 = naive_softmax(random_vector(6, rng), tau);
  auto q2 = naive_softmax(random_vector(6, rng), tau);
  Tensor teacher_att({6, 3});
  for (std::size_t j = 0; j < 6; ++j) {
    auto row = naive_softmax(random_vector(3, rng), 1);
    for (std::size_t i = 0; i < 3; ++i) teacher_att.at(j, i) = row[i];
  }
  DistillConfig cfg;
  cfg.tau = tau;
  // A large margin keeps both hinges active and away from the kink.
  cfg.margin = 50.0;
  auto f = [&](Tape&, std::span<const Var> v) {
    auto out = forward(bind_vars(v, rc), input);
    LossTerms terms;
    terms.ce = loss_ce(out, {2, 3});
    terms.kd = loss_kd(out.start_logits, out.end_logits, q1, q2, tau);
    terms.ans = loss_ans(out.start_logits, out.end_logits, {2, 3}, {4, 5}, cfg.margin);
    terms.att = loss_att(out.attention, teacher_att);
    return *loss_joint(terms, cfg);
  };
  auto report = grad_check(f, named);
  INFO(report.summary());
  CHECK(report.ok());
}

TEST_CASE("select_confusing and mine_confusing") {
  std::vector<MiningCandidate> member{{{0, 0}, 0.6, 0.5}, {{1, 1}, 0.3, 0.0}, {{2, 3}, 0.25, 0.0}};
  auto pick = select_confusing(member);
  REQUIRE(pick);
  CHECK(pick->span == TokenSpan{1, 1});
  CHECK(pick->confidence == 0.3);

  std::vector<MiningCandidate> overlapping{{{0, 0}, 0.6, 0.5}, {{0, 1}, 0.2, 0.4}};
  CHECK_FALSE(select_confusing(overlapping));

  std::vector<std::vector<MiningCandidate>> members{member, {{{4, 4}, 0.45, 0.0}}, overlapping};
  auto best = mine_confusing(members);
  REQUIRE(best);
  CHECK(best->span == TokenSpan{4, 4});
  CHECK(best->confidence == 0.45);

  std::vector<std::vector<MiningCandidate>> none{overlapping, {}};
  CHECK_FALSE(mine_confusing(none));
}

TEST_CASE("mine_confusing agrees with an exhaustive scan on random lists") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::vector<MiningCandidate>> members(1 + rng() % 4);
    for (auto& list : members) {
      list.resize(rng() % 5);
      for (auto& c : list) c = {{int(rng() % 9), 9}, std::round(u(rng) * 8) / 8, (rng() % 2) ? 0.0 : u(rng)};
    }
    std::optional<ConfusingAnswer> ref;
    for (const auto& list : members) {
      for (const auto& c : list) {
        if (c.max_f1 == 0.0 && (!ref || c.confidence > ref->confidence)) ref = ConfusingAnswer{c.span, c.confidence};
      }
    }
    auto got = mine_confusing(members);
    REQUIRE(got.has_value() == ref.has_value());
    if (got) {
      CHECK(got->confidence == ref->confidence);
      CHECK(got->span == ref->span);
    }
  }
}

TEST_CASE("mined spans never overlap the gold answers") {
  SynthSpec spec;
  spec.seed = 31;
  spec.num_passages = 20;
  auto corpus = generate_synthetic(spec);
  auto vocab = Vocabulary::build(corpus);
  ReaderConfig rc;
  rc.vocab_size = vocab.size();
  rc.init_scale = 0.5;
  DistillConfig cfg;
  std::size_t mined = 0;
  for (std::uint64_t member = 0; member < 3; ++member) {
    auto params = ReaderParams::initialize(rc, 40 + member);
    for (const auto& ex : corpus) {
      auto a = annotate_member(predict(params, make_input(ex, vocab)), ex, cfg);
      validate(a);
      if (!a.confusing) continue;
      ++mined;
      const auto text = span_text(*ex.passage, a.confusing->span);
      for (const auto& g : ex.gold_texts) CHECK(overlap_f1(g, text) == 0.0);
    }
  }
  CHECK(mined > 0);
}

TEST_CASE("aggregate_ensemble") {
  TeacherAnnotation a;
  a.example_id = "x";
  a.tau = 2;
  a.start_soft = {1, 0};
  a.end_soft = {0.5, 0.5};
  a.attention = Tensor::matrix(2, 2, {1, 0, 0.25, 0.75});
  a.confusing = ConfusingAnswer{{1, 1}, 0.3};
  TeacherAnnotation b = a;
  b.start_soft = {0, 1};
  b.attention = Tensor::matrix(2, 2, {0, 1, 0.75, 0.25});
  b.confusing = ConfusingAnswer{{0, 1}, 0.45};

  std::vector<TeacherAnnotation> same{a, a, a};
  auto s = aggregate_ensemble(same);
  CHECK(s.start_soft == a.start_soft);
  CHECK(s.attention == a.attention);
  CHECK(s.confusing->span == a.confusing->span);

  std::vector<TeacherAnnotation> pair{a, b};
  auto m = aggregate_ensemble(pair);
  CHECK(m.start_soft == std::vector<double>{0.5, 0.5});
  CHECK(m.attention == Tensor::matrix(2, 2, {0.5, 0.5, 0.5, 0.5}));
  CHECK(m.confusing->span == TokenSpan{0, 1});
  validate(m);

  b.tau = 3;
  std::vector<TeacherAnnotation> mixed{a, b};
  CHECK_THROWS_AS(aggregate_ensemble(mixed), ShapeError);
  b.tau = 2;
  b.end_soft = {1, 0, 0};
  std::vector<TeacherAnnotation> ragged{a, b};
  CHECK_THROWS_AS(aggregate_ensemble(ragged), ShapeError);
}

TEST_CASE("aggregated random rows stay normalized") {
  std::mt19937_64 rng(10);
  std::vector<TeacherAnnotation> members(5);
  for (auto& a : members) {
    a.example_id = "e";
    a.tau = 1;
    a.start_soft = naive_softmax(random_vector(8, rng), 1);
    a.end_soft = naive_softmax(random_vector(8, rng), 1);
    a.attention = Tensor({8, 3});
    for (std::size_t j = 0; j < 8; ++j) {
      auto row = naive_softmax(random_vector(3, rng), 1);
      for (std::size_t i = 0; i < 3; ++i) a.attention.at(j, i) = row[i];
    }
  }
  auto agg = aggregate_ensemble(members);
  CHECK(std::accumulate(agg.start_soft.begin(), agg.start_soft.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-6));
  for (std::size_t j = 0; j < 8; ++j) {
    auto row = agg.attention.row(j);
    CHECK(std::accumulate(row.begin(), row.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("distilled records round trip in id order") {
  TeacherAnnotation a;
  a.example_id = "b-2";
  a.tau = 2;
  a.start_soft = {0.1, 0.2, 0.7};
  a.end_soft = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  a.attention = Tensor::matrix(3, 2, {0.5, 0.5, 0.1, 0.9, 1.0, 0.0});
  a.confusing = ConfusingAnswer{{0, 1}, 0.125};
  TeacherAnnotation b = a;
  b.example_id = "a-1";
  b.confusing.reset();

  const auto path = std::filesystem::temp_directory_path() / "qadistill_distilled_test.jsonl";
  write_distilled(path, {a, b});
  auto back = read_distilled(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].example_id == "a-1");
  CHECK_FALSE(back[0].confusing);
  CHECK(back[1].start_soft == a.start_soft);
  CHECK(back[1].end_soft == a.end_soft);
  CHECK(back[1].attention == a.attention);
  CHECK(back[1].confusing->span == TokenSpan{0, 1});
  CHECK(back[1].confusing->confidence == 0.125);

  std::ofstream(path) << R"({"example_id": "z", "tau": 2, "start_soft": [0.5, 0.2], "end_soft": [0.5, 0.5],)"
                      << R"( "attention": [[1], [1]], "confusing_span": null, "confusing_confidence": null})" << "\n";
  CHECK_THROWS_AS(read_distilled(path), DataError);
  std::ofstream(path) << "{not json\n";
  CHECK_THROWS_AS(read_distilled(path), DataError);
  std::filesystem::remove(path);
}
