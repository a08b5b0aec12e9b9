#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qadistill/corpus/example.hpp"
#include "qadistill/decode_eval/spans.hpp"
#include "qadistill/distill/losses.hpp"
#include "qadistill/numerics/tensor.hpp"
#include "qadistill/reader/reader.hpp"

namespace qadistill {

struct ConfusingAnswer {
  TokenSpan span;
  double confidence = 0.0;  // q1(i) * q2(j) at temperature 1
};

// One entry of a member's top-K list.
struct MiningCandidate {
  TokenSpan span;
  double confidence = 0.0;
  double max_f1 = 0.0;  // best overlap F1 against the gold answers
};

// Highest-confidence candidate with zero overlap; first in list order on ties.
std::optional<ConfusingAnswer> select_confusing(std::span<const MiningCandidate> candidates);
// Per-member selection, then the maximum across members (earliest member on ties).
std::optional<ConfusingAnswer> mine_confusing(std::span<const std::vector<MiningCandidate>> members);

// Top-K spans of one member's temperature-1 distributions, scored against the golds.
std::vector<MiningCandidate> mining_candidates(std::span<const double> start_dist, std::span<const double> end_dist,
                                               const Example& example, std::size_t top_k, std::size_t max_span_len);

struct TeacherAnnotation {
  std::string example_id;
  double tau = 1.0;
  std::vector<double> start_soft;  // [m], at tau
  std::vector<double> end_soft;    // [m], at tau
  Tensor attention;                // m x n
  std::optional<ConfusingAnswer> confusing;

  std::size_t passage_length() const { return start_soft.size(); }
};

// Throws DataError when distributions are not normalized or shapes disagree.
void validate(const TeacherAnnotation& a);

// One member's view of an example. Unlabeled examples get no confusing span.
TeacherAnnotation annotate_member(const Prediction& pred, const Example& example, const DistillConfig& config);

// Element-wise means of the soft targets and attention; the most confident
// confusing span over all members.
TeacherAnnotation aggregate_ensemble(std::span<const TeacherAnnotation> members);

std::string to_jsonl_record(const TeacherAnnotation& a);
TeacherAnnotation from_jsonl_record(const std::string& line);

// Records are written sorted by example id.
void write_distilled(const std::filesystem::path& path, std::vector<TeacherAnnotation> records);
std::vector<TeacherAnnotation> read_distilled(const std::filesystem::path& path);

}  // namespace qadistill
