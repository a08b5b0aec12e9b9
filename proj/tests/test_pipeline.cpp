#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "doctest.h"
#include "json.hpp"
#include "qadistill/corpus/squad.hpp"
#include "qadistill/corpus/synthetic.hpp"
#include "qadistill/corpus/tokenize.hpp"
#include "qadistill/errors.hpp"
#include "qadistill/pipeline/config.hpp"
#include "qadistill/pipeline/gradient_suite.hpp"
#include "qadistill/pipeline/manifest.hpp"
#include "qadistill/pipeline/optimizer.hpp"
#include "qadistill/pipeline/steps.hpp"

namespace fs = std::filesystem;
using namespace qadistill;

namespace {

struct Corpus {
  std::vector<Example> train, dev, adv;
  Vocabulary vocab;
};

const Corpus& small_corpus() {
  static const Corpus c = [] {
    Corpus out;
    SynthSpec spec;
    spec.seed = 3;
    spec.num_passages = 24;
    spec.name_pool = 60;
    spec.id_prefix = "train";
    out.train = generate_synthetic(spec);
    spec.seed = 4;
    spec.num_passages = 6;
    spec.id_prefix = "dev";
    out.dev = generate_synthetic(spec);
    spec.adversarial = true;
    out.adv = generate_synthetic(spec);
    out.vocab = Vocabulary::build(out.train);
    return out;
  }();
  return c;
}

TrainConfig quick_config() {
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 8;
  tc.reader.embed_dim = 8;
  tc.reader.hidden = 8;
  tc.distill.ensemble_size = 2;
  return tc;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("qadistill_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("config text: keys, comments, overrides, errors") {
  RunConfig rc;
  apply_config_text(rc, "# comment\n tau = 3\ngamma=0.5  # trailing\n\nuse_ans = false\nepochs = 7\n");
  CHECK(rc.train.distill.tau == 3.0);
  CHECK(rc.train.distill.kd_weight() == 9.0);
  CHECK(rc.train.distill.gamma == 0.5);
  CHECK_FALSE(rc.train.distill.use_ans);
  CHECK(rc.train.epochs == 7);
  set_config_value(rc, "tau", "5");
  CHECK(rc.train.distill.tau == 5.0);

  CHECK_THROWS_AS(apply_config_text(rc, "nonsense = 1\n"), ConfigError);
  CHECK_THROWS_AS(apply_config_text(rc, "tau 3\n"), ConfigError);
  CHECK_THROWS_AS(apply_config_text(rc, "epochs = many\n"), ConfigError);
  CHECK_THROWS_AS(apply_config_text(rc, "use_kd = maybe\n"), ConfigError);
  try {
    apply_config_text(rc, "\n\nbogus = 2\n", "run.cfg");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("run.cfg:3") != std::string::npos);
  }

  auto snap = config_snapshot(rc);
  for (const auto& k : config_keys()) CHECK(snap.contains(k.name));
  CHECK(snap["lambda"].get<double>() == 25.0);
}

TEST_CASE("train config validation") {
  TrainConfig tc;
  tc.validate();
  tc.epochs = 0;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
  tc = TrainConfig{};
  tc.learning_rate = -1;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
  tc = TrainConfig{};
  tc.distill.delta = -0.1;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
}

TEST_CASE("adam first step and gradient clipping") {
  ReaderConfig rc;
  rc.vocab_size = 3;
  rc.embed_dim = 2;
  rc.hidden = 2;
  ReaderParams p(rc), g(rc);
  for (auto& t : g.tensors()) {
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = (i % 2 ? -0.5 : 2.0);
  }
  Adam adam(p, {0.01, 0.9, 0.999, 1e-8});
  adam.step(p, g);
  // Bias-corrected first step moves every coordinate by lr against the sign.
  for (std::size_t s = 0; s < ReaderParams::kSlotCount; ++s) {
    for (std::size_t i = 0; i < p[s].size(); ++i) {
      CHECK(p[s][i] == doctest::Approx(i % 2 ? 0.01 : -0.01).epsilon(1e-6));
    }
  }
  const double before = global_norm(g);
  CHECK(clip_global_norm(g, before / 2) == doctest::Approx(before));
  CHECK(global_norm(g) == doctest::Approx(before / 2));
  const double small = global_norm(g);
  clip_global_norm(g, 1e9);
  CHECK(global_norm(g) == small);
}

TEST_CASE("teacher ensemble: determinism, distinct members, single member equals baseline") {
  const auto& c = small_corpus();
  auto tc = quick_config();
  tc.seed = 11;
  auto first = train_teacher_ensemble(tc, c.train, c.dev, c.vocab);
  auto second = train_teacher_ensemble(tc, c.train, c.dev, c.vocab);
  REQUIRE(first.size() == 2);
  CHECK(first[0].params.digest() == second[0].params.digest());
  CHECK(first[1].params.digest() == second[1].params.digest());
  CHECK(first[0].params.digest() != first[1].params.digest());

  tc.distill.ensemble_size = 1;
  auto single = train_teacher_ensemble(tc, c.train, c.dev, c.vocab);
  auto base = train_baseline(tc, 11, c.train, c.dev, c.vocab);
  CHECK(single[0].params.digest() == base.params.digest());
  REQUIRE(base.history.size() == 2);
  CHECK(base.history[0].epoch == 1);
  CHECK(base.history[1].epoch == 2);
}

TEST_CASE("annotation: record count, recount oracle, serial equals parallel, single member") {
  const auto& c = small_corpus();
  auto tc = quick_config();
  std::vector<ReaderParams> members;
  for (std::uint64_t s = 0; s < 3; ++s) members.push_back(initial_params(tc, c.vocab, s));
  std::vector<const ReaderParams*> ptrs;
  for (const auto& m : members) ptrs.push_back(&m);

  auto dir = scratch_dir("annotate");
  write_squad_json(c.train, (dir / "train.json").string());
  AnnotateStats stats;
  auto records = annotate(ptrs, load_squad_json((dir / "train.json").string()).examples, c.vocab, tc.distill,
                          tc.max_passage_tokens, &stats);
  write_distilled(dir / "distilled.jsonl", records);

  // Independent recount straight from the corpus file.
  std::map<std::string, std::size_t> lengths;
  std::ifstream in(dir / "train.json");
  auto doc = nlohmann::json::parse(in);
  for (const auto& article : doc["data"]) {
    for (const auto& para : article["paragraphs"]) {
      const auto m = tokenize(para["context"].get<std::string>()).tokens.size();
      for (const auto& qa : para["qas"]) lengths[qa["id"].get<std::string>()] = m;
    }
  }
  auto back = read_distilled(dir / "distilled.jsonl");
  CHECK(back.size() == lengths.size());
  CHECK(stats.dropped == 0);
  for (const auto& r : back) CHECK(r.passage_length() == lengths.at(r.example_id));

  auto serial = annotate(ptrs, c.train, c.vocab, tc.distill, tc.max_passage_tokens, nullptr, kernels::Exec::kSerial);
  auto parallel = annotate(ptrs, c.train, c.vocab, tc.distill, tc.max_passage_tokens, nullptr, kernels::Exec::kParallel);
  REQUIRE(serial.size() == parallel.size());
  for (std::size_t i = 0; i < serial.size(); ++i) CHECK(to_jsonl_record(serial[i]) == to_jsonl_record(parallel[i]));

  std::vector<const ReaderParams*> one{ptrs[1]};
  auto solo = annotate(one, c.train, c.vocab, tc.distill, tc.max_passage_tokens);
  for (std::size_t i = 0; i < 5; ++i) {
    auto direct = annotate_member(predict(members[1], make_input(c.train[i], c.vocab)), c.train[i], tc.distill);
    CHECK(to_jsonl_record(solo[i]) == to_jsonl_record(direct));
  }

  AnnotateStats capped;
  annotate(ptrs, c.train, c.vocab, tc.distill, 10, &capped);
  CHECK(capped.examples == 0);
  CHECK(capped.dropped == c.train.size());
  fs::remove_all(dir);
}

TEST_CASE("student with every switch off reproduces the baseline bit for bit") {
  const auto& c = small_corpus();
  auto tc = quick_config();
  std::vector<ReaderParams> members{initial_params(tc, c.vocab, 5)};
  std::vector<const ReaderParams*> ptrs{&members[0]};
  auto records = annotate(ptrs, c.train, c.vocab, tc.distill, tc.max_passage_tokens);

  tc.distill.use_kd = tc.distill.use_ans = tc.distill.use_att = tc.distill.stagewise = false;
  auto student = train_student(tc, 21, c.train, {}, records, c.dev, c.vocab);
  auto base = train_baseline(tc, 21, c.train, c.dev, c.vocab);
  REQUIRE(student.history.size() == base.history.size());
  for (std::size_t i = 0; i < base.history.size(); ++i) {
    CHECK(student.history[i].loss == base.history[i].loss);
    CHECK(student.history[i].dev_f1 == base.history[i].dev_f1);
  }
  CHECK(student.params.digest() == base.params.digest());
}

TEST_CASE("zero ANS and ATT weights contribute no gradient") {
  const auto& c = small_corpus();
  auto tc = quick_config();
  auto params = initial_params(tc, c.vocab, 8);
  std::vector<const ReaderParams*> ptrs{&params};
  DistillConfig forced = tc.distill;
  forced.margin = 100.0;  // every hinge active
  auto records = annotate(ptrs, c.train, c.vocab, forced, tc.max_passage_tokens);

  auto grads_for = [&](const DistillConfig& dc, std::size_t i) {
    ReaderParams grads(params.config());
    Tape tape;
    TrainItem item{&c.train[i], make_input(c.train[i], c.vocab), &records[i], true};
    auto out = forward(bind_trainable(tape, params, grads), item.input);
    tape.backward(*example_objective(example_terms(out, item, dc, Phase::kMain, true), dc, Phase::kMain));
    return grads;
  };
  DistillConfig zero = forced;
  zero.gamma = 0.0;
  zero.delta = 0.0;
  DistillConfig off = forced;
  off.use_ans = false;
  off.use_att = false;
  std::size_t with_ans = 0;
  for (std::size_t i = 0; i < 12; ++i) {
    if (records[i].confusing) ++with_ans;
    auto a = grads_for(zero, i);
    auto b = grads_for(off, i);
    for (std::size_t s = 0; s < ReaderParams::kSlotCount; ++s) {
      for (std::size_t k = 0; k < a[s].size(); ++k) CHECK(a[s][k] == doctest::Approx(b[s][k]).epsilon(1e-14));
    }
  }
  CHECK(with_ans > 0);
}

TEST_CASE("student refuses records annotated at another temperature") {
  const auto& c = small_corpus();
  auto tc = quick_config();
  auto params = initial_params(tc, c.vocab, 1);
  std::vector<const ReaderParams*> ptrs{&params};
  auto records = annotate(ptrs, c.train, c.vocab, tc.distill, tc.max_passage_tokens);
  tc.distill.tau = 3.0;
  CHECK_THROWS_AS(train_student(tc, 1, c.train, {}, records, c.dev, c.vocab), ConfigError);
  tc.distill.tau = 2.0;
  records.pop_back();
  CHECK_THROWS_AS(train_student(tc, 1, c.train, {}, records, c.dev, c.vocab), DataError);
}

TEST_CASE("unlabeled augmentation examples train only KD and ATT") {
  const auto& c = small_corpus();
  auto tc = quick_config();
  auto params = initial_params(tc, c.vocab, 2);
  std::vector<const ReaderParams*> ptrs{&params};

  std::vector<Example> extra;
  for (std::size_t i = 0; i < 8; ++i) {
    Example ex = c.dev[i];
    ex.id = "extra-" + std::to_string(i);
    ex.gold_spans.clear();
    ex.gold_texts.clear();
    extra.push_back(ex);
  }
  auto records = annotate(ptrs, extra, c.vocab, tc.distill, tc.max_passage_tokens);
  for (const auto& r : records) CHECK_FALSE(r.confusing);
  Tape tape;
  TrainItem item{&extra[0], make_input(extra[0], c.vocab), &records[0], true};
  auto out = forward(bind_frozen(tape, params), item.input);
  auto terms = example_terms(out, item, tc.distill, Phase::kMain, true);
  CHECK_FALSE(terms.ce);
  CHECK_FALSE(terms.ans);
  CHECK(terms.kd);
  CHECK(terms.att);

  auto train_records = annotate(ptrs, c.train, c.vocab, tc.distill, tc.max_passage_tokens);
  train_records.insert(train_records.end(), records.begin(), records.end());
  auto vocab = build_vocabulary(c.train, extra, tc.vocab_cap);
  auto result = train_student(tc, 3, c.train, extra, train_records, c.dev, vocab);
  CHECK(result.params.all_finite());
}

TEST_CASE("stage-wise history: warm-up first, one entry per epoch") {
  const auto& c = small_corpus();
  auto tc = quick_config();
  tc.warmup_epochs = 2;
  tc.distill.stagewise = true;
  auto params = initial_params(tc, c.vocab, 40);
  std::vector<const ReaderParams*> ptrs{&params};
  auto records = annotate(ptrs, c.train, c.vocab, tc.distill, tc.max_passage_tokens);
  auto r = train_student(tc, 4, c.train, {}, records, c.dev, c.vocab);
  REQUIRE(r.history.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(r.history[i].epoch == i + 1);
  CHECK(r.history[0].phase == "warmup");
  CHECK(r.history[1].phase == "warmup");
  CHECK(r.history[0].terms.ce == 0.0);
  CHECK(r.history[0].terms.att > 0.0);
  CHECK(r.history[2].phase == "main");
  CHECK(r.best_epoch > 2);
}

TEST_CASE("evaluation: oracle predictions, determinism, split bookkeeping, vocabulary mismatch") {
  const auto& c = small_corpus();
  Predictions gold;
  for (const auto& ex : c.dev) gold[ex.id] = span_text(*ex.passage, ex.gold_spans.front());
  auto perfect = evaluate(gold, c.dev);
  CHECK(perfect.em == 100.0);
  CHECK(perfect.f1 == 100.0);

  auto tc = quick_config();
  auto params = initial_params(tc, c.vocab, 6);
  std::vector<const ReaderParams*> ptrs{&params};
  auto a = evaluate_models(ptrs, c.vocab, c.dev, 15);
  auto b = evaluate_models(ptrs, c.vocab, c.dev, 15);
  CHECK(a.predictions == b.predictions);
  CHECK(report_json(a.report) == report_json(b.report));
  CHECK(a.report.adversarial == 0);
  CHECK(evaluate_models(ptrs, c.vocab, c.adv, 15).report.adversarial > a.report.adversarial);

  std::vector<std::string> words{"zzz", "yyy"};
  Vocabulary other(words);
  auto cfg = params.config();
  cfg.vocab_size = other.size();
  auto foreign = ReaderParams::initialize(cfg, 1);
  std::vector<const ReaderParams*> fp{&foreign};
  try {
    evaluate_models(fp, other, c.dev, 15);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find(other.hash()) != std::string::npos);
  }
}

TEST_CASE("bench: single-member ratio and parameter counts") {
  SynthSpec spec;
  spec.num_passages = 60;
  auto corpus = generate_synthetic(spec);
  auto vocab = Vocabulary::build(corpus);
  TrainConfig tc;
  auto student = initial_params(tc, vocab, 1);
  auto member = initial_params(tc, vocab, 2);
  std::vector<const ReaderParams*> one{&member};
  auto rep = bench(student, vocab, one, vocab, corpus, 5);
  CHECK(rep.student_parameters == rep.member_parameters);
  CHECK(rep.ensemble_parameters == rep.member_parameters);
  CHECK(rep.ratio == doctest::Approx(1.0).epsilon(0.1));
  CHECK_THROWS_AS(bench(student, vocab, one, vocab, corpus, 2), ConfigError);
}

TEST_CASE("manifest is append-only and checks outputs exist") {
  auto dir = scratch_dir("manifest");
  std::ofstream(dir / "a.txt") << "a";
  append_manifest(dir, {"one", {}, {dir / "a.txt"}, {dir / "a.txt"}, {}, 0.1});
  append_manifest(dir, {"two", {}, {}, {dir / "a.txt"}, {}, 0.2});
  auto m = read_manifest(dir);
  REQUIRE(m["steps"].size() == 2);
  CHECK(m["steps"][0]["step"] == "one");
  CHECK(m["steps"][1]["index"] == 1);
  CHECK(m["steps"][0]["inputs"][(dir / "a.txt").string()] == file_hash(dir / "a.txt"));
  CHECK_THROWS_AS(append_manifest(dir, {"three", {}, {}, {dir / "missing"}, {}, 0.0}), DataError);
  CHECK(read_manifest(dir)["steps"].size() == 2);
  fs::remove_all(dir);
}

TEST_CASE("rerunning the four steps reproduces byte-identical files") {
  const auto& c = small_corpus();
  auto tc = quick_config();
  auto run = [&](const fs::path& dir) {
    write_squad_json(c.train, (dir / "train.json").string());
    auto train = load_squad_json((dir / "train.json").string()).examples;
    auto vocab = Vocabulary::build(train);
    auto teachers = train_teacher_ensemble(tc, train, c.dev, vocab);
    std::vector<const ReaderParams*> ptrs;
    for (std::size_t i = 0; i < teachers.size(); ++i) {
      save_checkpoint(dir / fmt::format("teacher-{}.ckpt", i), {teachers[i].params, vocab, {}});
      ptrs.push_back(&teachers[i].params);
    }
    write_distilled(dir / "distilled.jsonl", annotate(ptrs, train, vocab, tc.distill, tc.max_passage_tokens));
    auto records = read_distilled(dir / "distilled.jsonl");
    auto student = train_student(tc, tc.seed, train, {}, records, c.dev, vocab);
    save_checkpoint(dir / "student.ckpt", {student.params, vocab, {}});
  };
  auto a = scratch_dir("resume_a");
  auto b = scratch_dir("resume_b");
  run(a);
  run(b);
  for (const char* f : {"train.json", "teacher-0.ckpt", "teacher-1.ckpt", "distilled.jsonl", "student.ckpt"}) {
    INFO(f);
    CHECK(slurp(a / f) == slurp(b / f));
  }
  fs::remove(b / "distilled.jsonl");
  fs::remove(b / "student.ckpt");
  run(b);
  CHECK(slurp(a / "student.ckpt") == slurp(b / "student.ckpt"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("gradient suite passes") {
  for (const auto& c : run_gradient_suite(3)) {
    INFO(c.name);
    INFO(c.report.summary());
    CHECK(c.report.ok());
  }
}
