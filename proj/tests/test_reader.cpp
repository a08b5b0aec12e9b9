#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "qadistill/errors.hpp"
#include "qadistill/numerics/gradcheck.hpp"
#include "qadistill/numerics/ops.hpp"
#include "qadistill/reader/checkpoint.hpp"
#include "qadistill/reader/reader.hpp"

using namespace qadistill;

namespace {

ReaderConfig small_config() {
  ReaderConfig c;
  c.vocab_size = 12;
  c.embed_dim = 5;
  c.hidden = 4;
  c.window_radius = 2;
  c.init_scale = 0.5;
  return c;
}

Tensor random_tensor(Shape shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-1, 1);
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

const ReaderInput kInput{{3, 4, 5}, {6, 7, 3, 8, 9, 10}};

}  // namespace

TEST_CASE("forward output shapes") {
  auto params = ReaderParams::initialize(small_config(), 1);
  Tape tape;
  auto out = forward(bind_frozen(tape, params), kInput);
  CHECK(out.start_logits.shape() == Shape{6});
  CHECK(out.end_logits.shape() == Shape{6});
  CHECK(out.attention.shape() == Shape{6, 3});
  CHECK(out.start_dist.shape() == Shape{6});
  for (std::size_t j = 0; j < 6; ++j) {
    auto row = out.attention.value().row(j);
    CHECK(std::accumulate(row.begin(), row.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("zero parameters give zero encodings and uniform distributions") {
  ReaderParams params(small_config());
  auto pred = predict(params, kInput);
  for (double p : pred.start_dist) CHECK(p == doctest::Approx(1.0 / 6));
  for (double p : pred.end_dist) CHECK(p == doctest::Approx(1.0 / 6));
  for (double a : pred.attention.values()) CHECK(a == doctest::Approx(1.0 / 3));
  Tape tape;
  auto enc = encode(bind_frozen(tape, params), kInput);
  for (double v : enc.passage.value().values()) CHECK(v == 0.0);
}

TEST_CASE("similarity with identity projections is a scaled dot product") {
  auto cfg = small_config();
  auto params = ReaderParams::initialize(cfg, 2);
  Tensor eye({cfg.hidden, cfg.hidden});
  for (std::size_t i = 0; i < cfg.hidden; ++i) eye.at(i, i) = 1.0;
  params[ReaderParams::kSimilarityQuery] = eye;
  params[ReaderParams::kSimilarityPassage] = eye;

  std::mt19937_64 rng(4);
  Tensor v = random_tensor({3, cfg.hidden}, rng);
  Tape tape;
  auto vars = bind_frozen(tape, params);
  auto e = similarity(vars, tape.constant(v), tape.constant(v)).value();
  for (std::size_t i = 0; i < 3; ++i) {
    double sq = 0;
    for (double x : v.row(i)) sq += x * x;
    CHECK(e.at(i, i) == doctest::Approx(sq / 2.0));  // sqrt(4) = 2
  }
}

TEST_CASE("similarity matches a double loop and is permutation equivariant") {
  auto cfg = small_config();
  auto params = ReaderParams::initialize(cfg, 3);
  std::mt19937_64 rng(5);
  Tensor q = random_tensor({3, cfg.hidden}, rng);
  Tensor u = random_tensor({5, cfg.hidden}, rng);
  Tape tape;
  auto vars = bind_frozen(tape, params);
  auto e = similarity(vars, tape.constant(q), tape.constant(u)).value();
  REQUIRE(e.shape() == Shape{3, 5});

  const auto& wq = params[ReaderParams::kSimilarityQuery];
  const auto& wp = params[ReaderParams::kSimilarityPassage];
  const std::size_t h = cfg.hidden;
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 5; ++j) {
      double ref = 0;
      for (std::size_t d = 0; d < h; ++d) {
        double a = 0, b = 0;
        for (std::size_t k = 0; k < h; ++k) {
          a += q.at(i, k) * wq.at(k, d);
          b += u.at(j, k) * wp.at(k, d);
        }
        ref += a * b;
      }
      CHECK(e.at(i, j) == doctest::Approx(ref / std::sqrt(double(h))).epsilon(1e-12));
    }
  }

  const std::vector<std::size_t> perm{2, 0, 1};
  Tensor qp({3, h});
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t k = 0; k < h; ++k) qp.at(i, k) = q.at(perm[i], k);
  }
  auto ep = similarity(vars, tape.constant(qp), tape.constant(u)).value();
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 5; ++j) CHECK(ep.at(i, j) == doctest::Approx(e.at(perm[i], j)).epsilon(1e-12));
  }
}

TEST_CASE("attention concentrates on the dominant question word") {
  auto cfg = small_config();
  auto params = ReaderParams::initialize(cfg, 6);
  std::mt19937_64 rng(7);
  Tensor q = random_tensor({3, cfg.hidden}, rng);
  Tensor u = random_tensor({4, cfg.hidden}, rng);
  Tensor sim({3, 4});
  for (std::size_t j = 0; j < 4; ++j) sim.at(1, j) = 200.0;
  Tape tape;
  auto vars = bind_frozen(tape, params);
  auto fused = attend_and_fuse(vars, tape.constant(sim), tape.constant(q), tape.constant(u));
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(fused.attention.value().at(j, 1) == doctest::Approx(1.0));
    CHECK(fused.attention.value().at(j, 0) < 1e-12);
  }

  auto uniform = attend_and_fuse(vars, tape.constant(Tensor({3, 4})), tape.constant(q), tape.constant(u));
  for (double a : uniform.attention.value().values()) CHECK(a == doctest::Approx(1.0 / 3));
}

TEST_CASE("single-token passage puts all mass on it") {
  auto params = ReaderParams::initialize(small_config(), 8);
  auto pred = predict(params, ReaderInput{{3, 4}, {5}});
  CHECK(pred.start_dist == std::vector<double>{1.0});
  CHECK(pred.end_dist == std::vector<double>{1.0});
}

TEST_CASE("scaling the start head keeps the argmax") {
  auto params = ReaderParams::initialize(small_config(), 9);
  auto before = predict(params, kInput);
  for (auto& v : params[ReaderParams::kStartWeight].values()) v *= 2.0;
  auto after = predict(params, kInput);
  auto argmax = [](const std::vector<double>& v) { return std::max_element(v.begin(), v.end()) - v.begin(); };
  CHECK(argmax(before.start_logits) == argmax(after.start_logits));
  for (std::size_t i = 0; i < 6; ++i) CHECK(after.start_logits[i] == doctest::Approx(2 * before.start_logits[i]));
}

TEST_CASE("empty inputs are rejected") {
  auto params = ReaderParams::initialize(small_config(), 1);
  CHECK_THROWS_AS(predict(params, ReaderInput{{}, {1, 2}}), DataError);
  CHECK_THROWS_AS(predict(params, ReaderInput{{1}, {}}), DataError);
}

TEST_CASE("end-to-end cross entropy passes grad_check") {
  auto params = ReaderParams::initialize(small_config(), 10);
  auto named = params.named();
  const auto cfg = params.config();
  auto f = [&](Tape&, std::span<const Var> v) {
    auto out = forward(bind_vars(v, cfg), kInput);
    Var ls = log_softmax_temp(out.start_logits, 1.0);
    Var le = log_softmax_temp(out.end_logits, 1.0);
    return scale(add(pick(ls, 1), pick(le, 3)), -1.0);
  };
  GradCheckOptions opt;
  opt.eps = 1e-5;
  opt.tol = 1e-4;
  auto report = grad_check(f, named, opt);
  INFO(report.summary());
  CHECK(report.ok());
}

TEST_CASE("trainable binding accumulates the same gradients") {
  auto params = ReaderParams::initialize(small_config(), 11);
  ReaderParams grads(params.config());
  Tape tape;
  auto out = forward(bind_trainable(tape, params, grads), kInput);
  tape.backward(pick(out.start_logits, 2));
  double norm = 0;
  for (const auto& t : grads.tensors()) {
    for (double g : t.values()) norm += g * g;
  }
  CHECK(norm > 0);
  CHECK(grads.all_finite());
}

TEST_CASE("initialization and prediction are deterministic") {
  auto a = ReaderParams::initialize(small_config(), 12);
  auto b = ReaderParams::initialize(small_config(), 12);
  CHECK(a == b);
  CHECK(a.digest() == b.digest());
  CHECK(a.digest() != ReaderParams::initialize(small_config(), 13).digest());
  CHECK(predict(a, kInput).start_logits == predict(b, kInput).start_logits);
}

TEST_CASE("checkpoint round trip") {
  std::vector<std::string> words{"alpha", "beta", "gamma", "delta", "eps", "zeta", "eta", "theta", "iota", "kappa"};
  Checkpoint ckpt;
  ckpt.vocab = Vocabulary(words);
  auto cfg = small_config();
  cfg.vocab_size = ckpt.vocab.size();
  ckpt.params = ReaderParams::initialize(cfg, 14);
  // Exactly representable values survive the float32 body unchanged.
  for (auto& t : ckpt.params.tensors()) {
    for (auto& v : t.values()) v = static_cast<float>(v);
  }
  ckpt.meta["tau"] = 2.0;

  auto bytes = serialize_checkpoint(ckpt);
  auto back = deserialize_checkpoint(bytes);
  CHECK(back.params == ckpt.params);
  CHECK(back.vocab.hash() == ckpt.vocab.hash());
  CHECK(back.meta.at("tau").get<double>() == 2.0);
  CHECK(predict(back.params, kInput).end_dist == predict(ckpt.params, kInput).end_dist);

  CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)), DataError);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes + "x"), DataError);
  CHECK_THROWS_AS(deserialize_checkpoint("no header"), DataError);
  auto bumped = bytes;
  bumped.replace(bumped.find("\"format_version\":1"), 18, "\"format_version\":9");
  CHECK_THROWS_AS(deserialize_checkpoint(bumped), DataError);
}
