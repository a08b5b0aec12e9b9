#include "qadistill/pipeline/steps.hpp"

#include <algorithm>
#include <chrono>
#include <exception>
#include <map>

#include <fmt/format.h>

#include "qadistill/errors.hpp"

namespace qadistill {

std::vector<Example> within_cap(std::span<const Example> examples, std::size_t cap, std::size_t* dropped) {
  std::vector<Example> out;
  std::size_t count = 0;
  for (const auto& ex : examples) {
    if (ex.passage_length() > cap) {
      ++count;
      continue;
    }
    out.push_back(ex);
  }
  if (dropped) *dropped = count;
  return out;
}

ReaderParams initial_params(const TrainConfig& config, const Vocabulary& vocab, std::uint64_t seed) {
  ReaderConfig rc = config.reader;
  rc.vocab_size = vocab.size();
  return ReaderParams::initialize(rc, seed);
}

Vocabulary build_vocabulary(std::span<const Example> train, std::span<const Example> extra, std::size_t cap) {
  if (extra.empty()) return Vocabulary::build(train, cap);
  std::vector<Example> all(train.begin(), train.end());
  all.insert(all.end(), extra.begin(), extra.end());
  return Vocabulary::build(all, cap);
}

TrainResult train_baseline(const TrainConfig& config, std::uint64_t seed, std::span<const Example> train,
                           std::span<const Example> dev, const Vocabulary& vocab,
                           const std::function<void(const EpochRecord&)>& on_epoch) {
  auto kept = within_cap(train, config.max_passage_tokens);
  std::vector<TrainItem> items;
  items.reserve(kept.size());
  for (const auto& ex : kept) {
    if (ex.labeled()) items.push_back({&ex, make_input(ex, vocab), nullptr, true});
  }
  TrainConfig c = config;
  c.seed = seed;
  return train_reader(c, initial_params(config, vocab, seed), items, dev, vocab, false, on_epoch);
}

std::vector<TrainResult> train_teacher_ensemble(const TrainConfig& config, std::span<const Example> train,
                                                std::span<const Example> dev, const Vocabulary& vocab,
                                                const std::function<void(std::size_t, const EpochRecord&)>& on_epoch) {
  config.validate();
  std::vector<TrainResult> members;
  for (std::size_t i = 0; i < config.distill.ensemble_size; ++i) {
    try {
      members.push_back(train_baseline(config, config.seed + i, train, dev, vocab, [&](const EpochRecord& e) {
        if (on_epoch) on_epoch(i, e);
      }));
    } catch (const NumericalError& e) {
      throw NumericalError(fmt::format("teacher member {} (seed {}) diverged: {}", i, config.seed + i, e.what()));
    }
  }
  return members;
}

std::vector<TeacherAnnotation> annotate(std::span<const ReaderParams* const> teachers, std::span<const Example> examples,
                                        const Vocabulary& vocab, const DistillConfig& config, std::size_t max_passage_tokens,
                                        AnnotateStats* stats, kernels::Exec exec) {
  config.validate();
  if (teachers.empty()) throw ConfigError("annotation needs at least one teacher");
  std::size_t dropped = 0;
  const auto kept = within_cap(examples, max_passage_tokens, &dropped);
  std::vector<TeacherAnnotation> records(kept.size());

  auto one = [&](std::size_t i) {
    const Example& ex = kept[i];
    const ReaderInput input = make_input(ex, vocab);
    std::vector<TeacherAnnotation> members;
    members.reserve(teachers.size());
    for (const ReaderParams* t : teachers) members.push_back(annotate_member(predict(*t, input), ex, config));
    records[i] = aggregate_ensemble(members);
  };

  const auto n = static_cast<std::ptrdiff_t>(kept.size());
  if (exec == kernels::Exec::kSerial || kernels::max_threads() <= 1) {
    for (std::ptrdiff_t i = 0; i < n; ++i) one(static_cast<std::size_t>(i));
  } else {
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 8)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      try {
        one(static_cast<std::size_t>(i));
      } catch (...) {
#pragma omp critical
        if (!failure) failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);
  }

  if (stats) {
    stats->examples = records.size();
    stats->dropped = dropped;
    stats->with_confusing = static_cast<std::size_t>(
        std::count_if(records.begin(), records.end(), [](const auto& r) { return r.confusing.has_value(); }));
  }
  return records;
}

TrainResult train_student(const TrainConfig& config, std::uint64_t seed, std::span<const Example> train,
                          std::span<const Example> extra, std::span<const TeacherAnnotation> records,
                          std::span<const Example> dev, const Vocabulary& vocab,
                          const std::function<void(const EpochRecord&)>& on_epoch) {
  config.validate();
  std::map<std::string, const TeacherAnnotation*> by_id;
  for (const auto& r : records) {
    if (r.tau != config.distill.tau) {
      throw ConfigError(fmt::format("record {} was annotated at tau {} but the student is configured for tau {}",
                                    r.example_id, r.tau, config.distill.tau));
    }
    by_id[r.example_id] = &r;
  }

  auto kept_train = within_cap(train, config.max_passage_tokens);
  auto kept_extra = within_cap(extra, config.max_passage_tokens);
  std::vector<TrainItem> items;
  auto add = [&](const Example& ex, bool hard) {
    auto it = by_id.find(ex.id);
    if (it == by_id.end()) throw DataError(fmt::format("no distilled record for example {}", ex.id));
    const TeacherAnnotation* a = it->second;
    if (a->passage_length() != ex.passage_length() || a->attention.cols() != ex.question_length()) {
      throw DataError(fmt::format("distilled record {} does not match the example's shape", ex.id));
    }
    items.push_back({&ex, make_input(ex, vocab), a, hard});
  };
  for (const auto& ex : kept_train) {
    if (ex.labeled()) add(ex, true);
  }
  for (const auto& ex : kept_extra) add(ex, config.extra_hard_labels);

  TrainConfig c = config;
  c.seed = seed;
  return train_reader(c, initial_params(config, vocab, seed), items, dev, vocab, true, on_epoch);
}

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

template <typename F>
double time_once(F&& f) {
  const auto start = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

nlohmann::json BenchReport::to_json() const {
  return {{"members", members},
          {"repetitions", repetitions},
          {"examples", examples},
          {"student_seconds", student_seconds},
          {"ensemble_seconds", ensemble_seconds},
          {"ratio", ratio},
          {"student_parameters", student_parameters},
          {"member_parameters", member_parameters},
          {"ensemble_parameters", ensemble_parameters}};
}

BenchReport bench(const ReaderParams& student, const Vocabulary& student_vocab,
                  std::span<const ReaderParams* const> ensemble, const Vocabulary& ensemble_vocab,
                  std::span<const Example> corpus, std::size_t repetitions) {
  if (repetitions < 3) throw ConfigError("bench needs at least 3 repetitions");
  if (ensemble.empty()) throw ConfigError("bench needs at least one ensemble member");
  const int threads = kernels::max_threads();
  kernels::set_threads(1);

  const ReaderParams* s = &student;
  auto run_student = [&] { return predict_answers(std::span(&s, 1), corpus, student_vocab); };
  auto run_ensemble = [&] { return predict_answers(ensemble, corpus, ensemble_vocab); };
  run_student();
  run_ensemble();
  std::vector<double> ts, te;
  for (std::size_t r = 0; r < repetitions; ++r) {
    ts.push_back(time_once(run_student));
    te.push_back(time_once(run_ensemble));
  }
  kernels::set_threads(threads);

  BenchReport rep;
  rep.members = ensemble.size();
  rep.repetitions = repetitions;
  rep.examples = corpus.size();
  rep.student_seconds = median(ts);
  rep.ensemble_seconds = median(te);
  rep.ratio = rep.ensemble_seconds / rep.student_seconds;
  rep.student_parameters = student.parameter_count();
  rep.member_parameters = ensemble.front()->parameter_count();
  for (const auto* m : ensemble) rep.ensemble_parameters += m->parameter_count();
  return rep;
}

EvalOutput evaluate_models(std::span<const ReaderParams* const> models, const Vocabulary& vocab,
                           std::span<const Example> corpus, std::size_t max_span_len) {
  std::vector<std::string> tokens;
  for (const auto& ex : corpus) {
    tokens.insert(tokens.end(), ex.question_tokens.begin(), ex.question_tokens.end());
    tokens.insert(tokens.end(), ex.passage_tokens().begin(), ex.passage_tokens().end());
  }
  const double coverage = vocab.coverage(tokens);
  if (!tokens.empty() && coverage < kMinVocabularyCoverage) {
    throw DataError(fmt::format("corpus does not match the checkpoint vocabulary {} ({:.1f}% of tokens known)",
                                vocab.hash(), 100.0 * coverage));
  }
  EvalOutput out;
  out.predictions = predict_answers(models, corpus, vocab, max_span_len);
  out.report = evaluate(out.predictions, corpus);
  return out;
}

nlohmann::json report_json(const EvalReport& report) {
  nlohmann::json by_type = nlohmann::json::object();
  for (const auto& [type, b] : report.by_type) by_type[type] = {{"count", b.count}, {"em", b.em}, {"f1", b.f1}};
  return {{"exact_match", report.em}, {"f1", report.f1},           {"total", report.total},
          {"missing", report.missing}, {"adversarial", report.adversarial}, {"by_type", by_type}};
}

}  // namespace qadistill
