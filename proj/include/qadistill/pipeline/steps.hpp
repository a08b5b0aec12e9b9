#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "qadistill/corpus/example.hpp"
#include "qadistill/corpus/vocabulary.hpp"
#include "qadistill/distill/annotation.hpp"
#include "qadistill/numerics/kernels.hpp"
#include "qadistill/pipeline/config.hpp"
#include "qadistill/pipeline/trainer.hpp"
#include "qadistill/reader/checkpoint.hpp"

namespace qadistill {

// Examples whose passage exceeds the cap are left out; `dropped` counts them.
std::vector<Example> within_cap(std::span<const Example> examples, std::size_t cap, std::size_t* dropped = nullptr);

ReaderParams initial_params(const TrainConfig& config, const Vocabulary& vocab, std::uint64_t seed);

// Plain cross-entropy training from the given seed.
TrainResult train_baseline(const TrainConfig& config, std::uint64_t seed, std::span<const Example> train,
                           std::span<const Example> dev, const Vocabulary& vocab,
                           const std::function<void(const EpochRecord&)>& on_epoch = {});

// Member i trains with seed config.seed + i.
std::vector<TrainResult> train_teacher_ensemble(const TrainConfig& config, std::span<const Example> train,
                                                std::span<const Example> dev, const Vocabulary& vocab,
                                                const std::function<void(std::size_t, const EpochRecord&)>& on_epoch = {});

struct AnnotateStats {
  std::size_t examples = 0;
  std::size_t dropped = 0;  // passage over the cap
  std::size_t with_confusing = 0;
};

// One aggregated record per example, in input order. kAuto spreads examples
// over OpenMP threads; kSerial is the reference loop.
std::vector<TeacherAnnotation> annotate(std::span<const ReaderParams* const> teachers, std::span<const Example> examples,
                                        const Vocabulary& vocab, const DistillConfig& config, std::size_t max_passage_tokens,
                                        AnnotateStats* stats = nullptr, kernels::Exec exec = kernels::Exec::kAuto);

// `extra` examples are augmentation data: they train KD and ATT, plus CE and
// ANS when they carry gold answers and config.extra_hard_labels is set.
// Throws ConfigError when a record's tau differs from config.distill.tau and
// DataError when an example has no record.
TrainResult train_student(const TrainConfig& config, std::uint64_t seed, std::span<const Example> train,
                          std::span<const Example> extra, std::span<const TeacherAnnotation> records,
                          std::span<const Example> dev, const Vocabulary& vocab,
                          const std::function<void(const EpochRecord&)>& on_epoch = {});

// Vocabulary over the training corpus plus any augmentation data.
Vocabulary build_vocabulary(std::span<const Example> train, std::span<const Example> extra, std::size_t cap);

struct BenchReport {
  std::size_t members = 0;
  std::size_t repetitions = 0;
  std::size_t examples = 0;
  double student_seconds = 0.0;   // median full-corpus pass
  double ensemble_seconds = 0.0;  // median, members run one after another
  double ratio = 0.0;
  std::size_t student_parameters = 0;
  std::size_t member_parameters = 0;
  std::size_t ensemble_parameters = 0;

  nlohmann::json to_json() const;
};

// Timed on one thread after an untimed warm-up pass.
BenchReport bench(const ReaderParams& student, const Vocabulary& student_vocab,
                  std::span<const ReaderParams* const> ensemble, const Vocabulary& ensemble_vocab,
                  std::span<const Example> corpus, std::size_t repetitions);

struct EvalOutput {
  Predictions predictions;
  EvalReport report;
};

// Fraction of corpus tokens the vocabulary must know before evaluation runs.
inline constexpr double kMinVocabularyCoverage = 0.5;

// Throws DataError naming the vocabulary hash when the corpus is mostly out of vocabulary.
EvalOutput evaluate_models(std::span<const ReaderParams* const> models, const Vocabulary& vocab,
                           std::span<const Example> corpus, std::size_t max_span_len);

nlohmann::json report_json(const EvalReport& report);

}  // namespace qadistill
