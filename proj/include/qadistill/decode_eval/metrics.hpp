#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qadistill/corpus/example.hpp"

namespace qadistill {

// SQuAD answer normalization: ASCII lowercase, strip ASCII punctuation, drop
// the articles "a", "an", "the" as whole tokens, collapse whitespace.
std::string normalize_answer(std::string_view text);
std::vector<std::string> normalized_tokens(std::string_view text);

bool exact_match(std::string_view gold, std::string_view candidate);

// Bag-of-tokens F1 on normalized tokens. Two empty answers score 1; one empty
// answer or no shared token scores 0.
double overlap_f1(std::string_view gold, std::string_view candidate);

// Max over several gold answers.
double max_overlap_f1(std::span<const std::string> golds, std::string_view candidate);
bool max_exact_match(std::span<const std::string> golds, std::string_view candidate);

inline constexpr const char* kQuestionTypes[] = {"what", "who", "which", "how", "why", "when", "where", "other"};

// Lowercased first question token when it is one of the wh-words, else "other".
std::string question_type(std::span<const std::string> question_tokens);

// Example id -> answer string, the official SQuAD prediction layout.
using Predictions = std::map<std::string, std::string>;

struct BucketScore {
  std::size_t count = 0;
  double em = 0.0;  // percent
  double f1 = 0.0;  // percent
};

struct EvalReport {
  double em = 0.0;  // percent
  double f1 = 0.0;  // percent
  std::size_t total = 0;
  std::size_t missing = 0;      // examples without a prediction, scored 0
  std::size_t adversarial = 0;  // examples flagged as adversarial
  std::map<std::string, BucketScore> by_type;
};

EvalReport evaluate(const Predictions& predictions, std::span<const Example> examples);

std::string format_report(const EvalReport& report);

void write_predictions(const Predictions& predictions, const std::string& path);
Predictions read_predictions(const std::string& path);

}  // namespace qadistill
