#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "qadistill/corpus/example.hpp"
#include "qadistill/corpus/vocabulary.hpp"
#include "qadistill/decode_eval/metrics.hpp"
#include "qadistill/distill/annotation.hpp"
#include "qadistill/pipeline/config.hpp"
#include "qadistill/reader/reader.hpp"

namespace qadistill {

struct TrainItem {
  const Example* example = nullptr;
  ReaderInput input;
  const TeacherAnnotation* annotation = nullptr;  // teacher targets, student runs only
  bool hard_label = true;                         // trains CE and ANS when gold exists
};

enum class Phase { kWarmup, kMain };

// Unweighted terms of one example's objective; only enabled terms are built.
LossTerms example_terms(const ReaderOutput& out, const TrainItem& item, const DistillConfig& config, Phase phase,
                        bool distill);
std::optional<Var> example_objective(const LossTerms& terms, const DistillConfig& config, Phase phase);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based, warm-up epochs included
  std::string phase;      // "warmup" or "main"
  double loss = 0.0;      // mean weighted objective
  LossValues terms;       // mean unweighted components
  double dev_em = 0.0;
  double dev_f1 = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  ReaderParams params;  // best dev F1 over main-phase epochs
  std::size_t best_epoch = 0;
  double best_dev_f1 = -1.0;
  std::vector<EpochRecord> history;
};

// Mini-batch training. Plain cross entropy when `distill` is false; otherwise
// the joint objective with the switches of config.distill. Throws
// NumericalError on a non-finite loss or gradient.
TrainResult train_reader(const TrainConfig& config, const ReaderParams& init, std::span<const TrainItem> items,
                         std::span<const Example> dev, const Vocabulary& vocab, bool distill,
                         const std::function<void(const EpochRecord&)>& on_epoch = {});

// Best span under the averaged start/end distributions of the models.
Predictions predict_answers(std::span<const ReaderParams* const> models, std::span<const Example> examples,
                            const Vocabulary& vocab, std::size_t max_span_len = kDefaultMaxSpanLength);

}  // namespace qadistill
