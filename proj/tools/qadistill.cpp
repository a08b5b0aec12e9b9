#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "qadistill/corpus/squad.hpp"
#include "qadistill/corpus/synthetic.hpp"
#include "qadistill/errors.hpp"
#include "qadistill/pipeline/config.hpp"
#include "qadistill/pipeline/gradient_suite.hpp"
#include "qadistill/pipeline/manifest.hpp"
#include "qadistill/pipeline/steps.hpp"

namespace fs = std::filesystem;
using namespace qadistill;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  std::map<std::string, std::string> overrides;
};

RunConfig resolve_config(const Globals& g) {
  RunConfig rc;
  if (!g.config_path.empty()) apply_config_file(rc, g.config_path);
  for (const auto& [key, value] : g.overrides) set_config_value(rc, key, value);
  if (g.seed) rc.train.seed = *g.seed;
  rc.train.validate();
  return rc;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::vector<Example> load_labeled(const std::string& path) { return load_squad_json(path).examples; }

std::vector<Example> load_any(const std::string& path) {
  SquadLoadOptions opt;
  opt.allow_unlabeled = true;
  return load_squad_json(path, opt).examples;
}

struct LoadedModels {
  std::vector<Checkpoint> checkpoints;
  std::vector<const ReaderParams*> params;
};

LoadedModels load_models(const std::vector<std::string>& paths) {
  LoadedModels m;
  for (const auto& p : paths) m.checkpoints.push_back(load_checkpoint(p));
  for (const auto& c : m.checkpoints) {
    if (c.vocab.hash() != m.checkpoints.front().vocab.hash()) {
      throw DataError(fmt::format("checkpoints disagree on the vocabulary ({} vs {})", c.vocab.hash(),
                                  m.checkpoints.front().vocab.hash()));
    }
    m.params.push_back(&c.params);
  }
  return m;
}

void print_epoch(const std::string& who, const EpochRecord& e) {
  fmt::print("{} epoch {:>3} [{}] loss {:.4f} dev EM {:.2f} F1 {:.2f} ({:.1f}s)\n", who, e.epoch, e.phase, e.loss,
             e.dev_em, e.dev_f1, e.seconds);
  std::fflush(stdout);
}

nlohmann::json train_meta(const std::string& role, std::uint64_t seed, const TrainResult& r, const RunConfig& rc) {
  return {{"role", role},
          {"seed", seed},
          {"best_epoch", r.best_epoch},
          {"best_dev_f1", r.best_dev_f1},
          {"tau", rc.train.distill.tau},
          {"config", config_snapshot(rc)}};
}

int run_gen(const Globals& g) {
  const auto start = std::chrono::steady_clock::now();
  const RunConfig rc = resolve_config(g);
  fs::create_directories(g.out_dir);
  SynthSpec spec;
  spec.seed = rc.train.seed;
  spec.num_passages = rc.gen.train_passages;
  spec.entities_per_passage = rc.gen.entities_per_passage;
  spec.attribute_types = rc.gen.attribute_types;
  spec.distractor_rate = rc.gen.distractor_rate;
  spec.name_pool = rc.gen.name_pool;
  spec.id_prefix = "train";
  const auto train = generate_synthetic(spec);
  spec.seed = rc.train.seed + 1;
  spec.num_passages = rc.gen.dev_passages;
  spec.id_prefix = "dev";
  const auto dev = generate_synthetic(spec);
  spec.adversarial = true;
  const auto adv = generate_synthetic(spec);

  const fs::path dir = g.out_dir;
  write_squad_json(train, (dir / "train.json").string(), "synthetic-train");
  write_squad_json(dev, (dir / "dev.json").string(), "synthetic-dev");
  write_squad_json(adv, (dir / "adv.json").string(), "synthetic-adv");
  fmt::print("wrote {} train, {} dev and {} adversarial questions to {}\n", train.size(), dev.size(), adv.size(),
             dir.string());
  append_manifest(dir, {"gen",
                        config_snapshot(rc),
                        {},
                        {dir / "train.json", dir / "dev.json", dir / "adv.json"},
                        {{"train", train.size()}, {"dev", dev.size()}, {"adv", adv.size()}},
                        seconds_since(start)});
  return kExitOk;
}

int run_train_teacher(const Globals& g, const std::string& train_path, const std::string& dev_path) {
  const auto start = std::chrono::steady_clock::now();
  const RunConfig rc = resolve_config(g);
  const auto train = load_labeled(train_path);
  const auto dev = load_labeled(dev_path);
  const auto vocab = Vocabulary::build(train, rc.train.vocab_cap);
  fs::create_directories(g.out_dir);
  const fs::path dir = g.out_dir;

  auto members = train_teacher_ensemble(rc.train, train, dev, vocab, [](std::size_t i, const EpochRecord& e) {
    print_epoch(fmt::format("teacher {}", i), e);
  });
  std::vector<fs::path> outputs;
  nlohmann::json details = nlohmann::json::object();
  for (std::size_t i = 0; i < members.size(); ++i) {
    const auto path = dir / fmt::format("teacher-{}.ckpt", i);
    save_checkpoint(path, {members[i].params, vocab, train_meta("teacher", rc.train.seed + i, members[i], rc)});
    outputs.push_back(path);
    details[path.string()] = {{"seed", rc.train.seed + i},
                              {"best_epoch", members[i].best_epoch},
                              {"best_dev_f1", members[i].best_dev_f1},
                              {"digest", members[i].params.digest()},
                              {"history", history_json(members[i].history)}};
    fmt::print("teacher {}: best dev F1 {:.2f} at epoch {} -> {}\n", i, members[i].best_dev_f1, members[i].best_epoch,
               path.string());
  }
  details["vocabulary_hash"] = vocab.hash();
  append_manifest(dir, {"train-teacher", config_snapshot(rc), {train_path, dev_path}, outputs, details,
                        seconds_since(start)});
  return kExitOk;
}

int run_annotate(const Globals& g, const std::string& train_path, const std::vector<std::string>& teacher_paths,
                 const std::string& extra_path, std::string out_path) {
  const auto start = std::chrono::steady_clock::now();
  const RunConfig rc = resolve_config(g);
  auto examples = load_labeled(train_path);
  std::size_t extra_count = 0;
  if (!extra_path.empty()) {
    auto extra = load_any(extra_path);
    extra_count = extra.size();
    examples.insert(examples.end(), extra.begin(), extra.end());
  }
  std::set<std::string> ids;
  for (const auto& ex : examples) {
    if (!ids.insert(ex.id).second) throw DataError(fmt::format("duplicate example id {}", ex.id));
  }
  const auto models = load_models(teacher_paths);
  const auto& vocab = models.checkpoints.front().vocab;

  AnnotateStats stats;
  auto records = annotate(models.params, examples, vocab, rc.train.distill, rc.train.max_passage_tokens, &stats);
  fs::create_directories(g.out_dir);
  if (out_path.empty()) out_path = (fs::path(g.out_dir) / "distilled.jsonl").string();
  write_distilled(out_path, std::move(records));
  fmt::print("annotated {} examples ({} augmentation, {} dropped over {} tokens, {} with a confusing span) -> {}\n",
             stats.examples, extra_count, stats.dropped, rc.train.max_passage_tokens, stats.with_confusing, out_path);

  std::vector<fs::path> inputs{train_path};
  if (!extra_path.empty()) inputs.push_back(extra_path);
  for (const auto& p : teacher_paths) inputs.push_back(p);
  append_manifest(g.out_dir, {"annotate",
                              config_snapshot(rc),
                              inputs,
                              {out_path},
                              {{"records", stats.examples},
                               {"dropped", stats.dropped},
                               {"with_confusing", stats.with_confusing},
                               {"tau", rc.train.distill.tau}},
                              seconds_since(start)});
  return kExitOk;
}

int run_train_student(const Globals& g, const std::string& train_path, const std::string& distilled_path,
                      const std::string& dev_path, const std::string& extra_path, const std::string& name) {
  const auto start = std::chrono::steady_clock::now();
  const RunConfig rc = resolve_config(g);
  const auto train = load_labeled(train_path);
  const auto dev = load_labeled(dev_path);
  const std::vector<Example> extra = extra_path.empty() ? std::vector<Example>{} : load_any(extra_path);
  const auto records = read_distilled(distilled_path);
  const auto vocab = build_vocabulary(train, extra, rc.train.vocab_cap);

  auto result = train_student(rc.train, rc.train.seed, train, extra, records, dev, vocab,
                              [&](const EpochRecord& e) { print_epoch(name, e); });
  fs::create_directories(g.out_dir);
  const auto path = fs::path(g.out_dir) / (name + ".ckpt");
  save_checkpoint(path, {result.params, vocab, train_meta("student", rc.train.seed, result, rc)});
  fmt::print("{}: best dev F1 {:.2f} at epoch {} -> {}\n", name, result.best_dev_f1, result.best_epoch, path.string());

  std::vector<fs::path> inputs{train_path, distilled_path, dev_path};
  if (!extra_path.empty()) inputs.push_back(extra_path);
  append_manifest(g.out_dir, {"train-student",
                              config_snapshot(rc),
                              inputs,
                              {path},
                              {{"best_epoch", result.best_epoch},
                               {"best_dev_f1", result.best_dev_f1},
                               {"digest", result.params.digest()},
                               {"vocabulary_hash", vocab.hash()},
                               {"history", history_json(result.history)}},
                              seconds_since(start)});
  return kExitOk;
}

int run_eval(const Globals& g, const std::vector<std::string>& checkpoints, const std::string& corpus_path,
             const std::string& name) {
  const auto start = std::chrono::steady_clock::now();
  const RunConfig rc = resolve_config(g);
  const auto corpus = load_labeled(corpus_path);
  const auto models = load_models(checkpoints);
  auto out = evaluate_models(models.params, models.checkpoints.front().vocab, corpus, rc.train.distill.max_span_len);

  fs::create_directories(g.out_dir);
  const fs::path dir = g.out_dir;
  const auto pred_path = dir / (name + "-predictions.json");
  const auto json_path = dir / (name + "-metrics.json");
  const auto text_path = dir / (name + "-metrics.txt");
  write_predictions(out.predictions, pred_path.string());
  std::ofstream(json_path) << report_json(out.report).dump(2) << '\n';
  const std::string text = format_report(out.report);
  std::ofstream(text_path) << text;
  std::cout << text;

  std::vector<fs::path> inputs{corpus_path};
  for (const auto& c : checkpoints) inputs.push_back(c);
  append_manifest(dir, {"eval", config_snapshot(rc), inputs, {pred_path, json_path, text_path},
                        report_json(out.report), seconds_since(start)});
  return kExitOk;
}

int run_bench(const Globals& g, const std::string& student_path, const std::vector<std::string>& teacher_paths,
              const std::string& corpus_path, std::size_t repetitions) {
  const auto start = std::chrono::steady_clock::now();
  const RunConfig rc = resolve_config(g);
  const auto corpus = load_labeled(corpus_path);
  const auto student = load_checkpoint(student_path);
  const auto teachers = load_models(teacher_paths);
  auto rep = bench(student.params, student.vocab, teachers.params, teachers.checkpoints.front().vocab, corpus,
                   repetitions);
  fmt::print("examples {}  repetitions {}\n", rep.examples, rep.repetitions);
  fmt::print("student   {:.4f}s  {} parameters\n", rep.student_seconds, rep.student_parameters);
  fmt::print("ensemble  {:.4f}s  {} x {} parameters\n", rep.ensemble_seconds, rep.members, rep.member_parameters);
  fmt::print("ratio     {:.2f}x\n", rep.ratio);

  fs::create_directories(g.out_dir);
  const auto path = fs::path(g.out_dir) / "bench.json";
  std::ofstream(path) << rep.to_json().dump(2) << '\n';
  std::vector<fs::path> inputs{corpus_path, student_path};
  for (const auto& t : teacher_paths) inputs.push_back(t);
  append_manifest(g.out_dir, {"bench", config_snapshot(rc), inputs, {path}, rep.to_json(), seconds_since(start)});
  return kExitOk;
}

int run_gradcheck(const Globals& g) {
  const RunConfig rc = resolve_config(g);
  bool ok = true;
  for (const auto& c : run_gradient_suite(rc.train.seed)) {
    fmt::print("{:<14} {}  max rel error {:.2e}\n", c.name, c.report.ok() ? "ok  " : "FAIL", c.report.max_rel_error());
    if (!c.report.ok()) {
      std::cout << c.report.summary();
      ok = false;
    }
  }
  return ok ? kExitOk : kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attention-guided answer distillation for extractive QA"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "key = value configuration file");
  app.add_option("--seed", g.seed, "base random seed (overrides the config file)");
  app.add_option("--out-dir", g.out_dir, "directory for outputs and the run manifest");
  std::map<std::string, std::string> flag_values;
  auto* keys = app.add_option_group("Configuration keys", "override individual configuration keys");
  for (const auto& k : config_keys()) {
    if (k.name == "seed") continue;
    keys->add_option("--" + k.name, flag_values[k.name], k.help);
  }

  auto* gen = app.add_subcommand("gen", "write a synthetic train/dev/adversarial corpus");

  std::string train_path, dev_path, extra_path, distilled_path, out_path, corpus_path, student_path;
  std::string student_name = "student";
  std::string eval_name = "eval";
  std::vector<std::string> teacher_paths, checkpoint_paths;
  std::size_t repetitions = 5;

  auto* tt = app.add_subcommand("train-teacher", "train the teacher ensemble with cross entropy");
  tt->add_option("--train", train_path, "training corpus (SQuAD JSON)")->required();
  tt->add_option("--dev", dev_path, "dev corpus used for model selection")->required();

  auto* an = app.add_subcommand("annotate", "write the distilled dataset from the teacher ensemble");
  an->add_option("--train", train_path, "training corpus")->required();
  an->add_option("--teachers", teacher_paths, "teacher checkpoints")->required();
  an->add_option("--extra", extra_path, "augmentation corpus, answers optional");
  an->add_option("--out", out_path, "output file (default <out-dir>/distilled.jsonl)");

  auto* ts = app.add_subcommand("train-student", "train a single reader on the distilled dataset");
  ts->add_option("--train", train_path, "training corpus")->required();
  ts->add_option("--distilled", distilled_path, "distilled dataset")->required();
  ts->add_option("--dev", dev_path, "dev corpus used for model selection")->required();
  ts->add_option("--extra", extra_path, "augmentation corpus that was annotated with the training set");
  ts->add_option("--name", student_name, "checkpoint name inside --out-dir");

  auto* ev = app.add_subcommand("eval", "predict and score a corpus; several checkpoints are averaged");
  ev->add_option("--checkpoint", checkpoint_paths, "checkpoint(s)")->required();
  ev->add_option("--corpus", corpus_path, "corpus to score")->required();
  ev->add_option("--name", eval_name, "prefix for the report files");

  auto* be = app.add_subcommand("bench", "time the student against the sequential ensemble");
  be->add_option("--student", student_path, "student checkpoint")->required();
  be->add_option("--teachers", teacher_paths, "ensemble checkpoints")->required();
  be->add_option("--corpus", corpus_path, "corpus to run inference on")->required();
  be->add_option("--repetitions", repetitions, "timed passes (median reported)");

  auto* gc = app.add_subcommand("gradcheck", "compare analytic and numeric gradients of every loss");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }
  for (const auto& [key, value] : flag_values) {
    if (!value.empty()) g.overrides[key] = value;
  }

  try {
    if (gen->parsed()) return run_gen(g);
    if (tt->parsed()) return run_train_teacher(g, train_path, dev_path);
    if (an->parsed()) return run_annotate(g, train_path, teacher_paths, extra_path, out_path);
    if (ts->parsed()) return run_train_student(g, train_path, distilled_path, dev_path, extra_path, student_name);
    if (ev->parsed()) return run_eval(g, checkpoint_paths, corpus_path, eval_name);
    if (be->parsed()) return run_bench(g, student_path, teacher_paths, corpus_path, repetitions);
    if (gc->parsed()) return run_gradcheck(g);
  } catch (const ConfigError& e) {
    fmt::print(stderr, "configuration error: {}\n", e.what());
    return kExitConfig;
  } catch (const DataError& e) {
    fmt::print(stderr, "data error: {}\n", e.what());
    return kExitData;
  } catch (const NumericalError& e) {
    fmt::print(stderr, "numerical failure: {}\n", e.what());
    return kExitNumerical;
  } catch (const DegenerateInputError& e) {
    fmt::print(stderr, "numerical failure: {}\n", e.what());
    return kExitNumerical;
  } catch (const std::exception& e) {
    fmt::print(stderr, "internal error: {}\n", e.what());
    return 1;
  }
  return kExitOk;
}
