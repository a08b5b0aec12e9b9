#include "qadistill/decode_eval/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <unordered_map>

#include <fmt/format.h>
#include "json.hpp"

#include "qadistill/errors.hpp"

namespace qadistill {
namespace {

bool is_ascii_punct(unsigned char c) {
  return (c >= 33 && c <= 47) || (c >= 58 && c <= 64) || (c >= 91 && c <= 96) || (c >= 123 && c <= 126);
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

}  // namespace

std::vector<std::string> normalized_tokens(std::string_view text) {
  std::string cleaned;
  cleaned.reserve(text.size());
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_ascii_punct(c)) continue;
    cleaned.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : ch);
  }
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < cleaned.size()) {
    while (i < cleaned.size() && is_space(cleaned[i])) ++i;
    std::size_t j = i;
    while (j < cleaned.size() && !is_space(cleaned[j])) ++j;
    if (j > i) {
      std::string tok = cleaned.substr(i, j - i);
      if (tok != "a" && tok != "an" && tok != "the") tokens.push_back(std::move(tok));
    }
    i = j;
  }
  return tokens;
}

std::string normalize_answer(std::string_view text) {
  std::string out;
  for (const auto& tok : normalized_tokens(text)) {
    if (!out.empty()) out.push_back(' ');
    out += tok;
  }
  return out;
}

bool exact_match(std::string_view gold, std::string_view candidate) {
  return normalize_answer(gold) == normalize_answer(candidate);
}

double overlap_f1(std::string_view gold, std::string_view candidate) {
  const auto g = normalized_tokens(gold);
  const auto c = normalized_tokens(candidate);
  if (g.empty() && c.empty()) return 1.0;
  if (g.empty() || c.empty()) return 0.0;
  std::unordered_map<std::string, int> counts;
  for (const auto& t : g) ++counts[t];
  int same = 0;
  for (const auto& t : c) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++same;
    }
  }
  if (same == 0) return 0.0;
  const double precision = static_cast<double>(same) / static_cast<double>(c.size());
  const double recall = static_cast<double>(same) / static_cast<double>(g.size());
  return 2.0 * precision * recall / (precision + recall);
}

double max_overlap_f1(std::span<const std::string> golds, std::string_view candidate) {
  double best = 0.0;
  for (const auto& g : golds) best = std::max(best, overlap_f1(g, candidate));
  return best;
}

bool max_exact_match(std::span<const std::string> golds, std::string_view candidate) {
  return std::any_of(golds.begin(), golds.end(), [&](const auto& g) { return exact_match(g, candidate); });
}

std::string question_type(std::span<const std::string> question_tokens) {
  if (question_tokens.empty()) return "other";
  std::string first = question_tokens.front();
  for (auto& ch : first) {
    if (ch >= 'A' && ch <= 'Z') ch = static_cast<char>(ch - 'A' + 'a');
  }
  for (const char* t : kQuestionTypes) {
    if (first == t) return first;
  }
  return "other";
}

EvalReport evaluate(const Predictions& predictions, std::span<const Example> examples) {
  EvalReport report;
  struct Sums {
    std::size_t n = 0;
    double em = 0.0;
    double f1 = 0.0;
  };
  std::map<std::string, Sums> buckets;
  double em_sum = 0.0;
  double f1_sum = 0.0;
  for (const auto& ex : examples) {
    ++report.total;
    if (ex.adversarial) ++report.adversarial;
    double em = 0.0;
    double f1 = 0.0;
    auto it = predictions.find(ex.id);
    if (it == predictions.end()) {
      ++report.missing;
    } else {
      em = max_exact_match(ex.gold_texts, it->second) ? 1.0 : 0.0;
      f1 = max_overlap_f1(ex.gold_texts, it->second);
    }
    em_sum += em;
    f1_sum += f1;
    auto& b = buckets[question_type(ex.question_tokens)];
    ++b.n;
    b.em += em;
    b.f1 += f1;
  }
  if (report.total > 0) {
    report.em = 100.0 * em_sum / static_cast<double>(report.total);
    report.f1 = 100.0 * f1_sum / static_cast<double>(report.total);
  }
  for (const auto& [type, s] : buckets) {
    report.by_type[type] = {s.n, 100.0 * s.em / static_cast<double>(s.n), 100.0 * s.f1 / static_cast<double>(s.n)};
  }
  return report;
}

std::string format_report(const EvalReport& r) {
  std::string out = fmt::format("examples={} EM={:.2f} F1={:.2f} missing={} adversarial={}\n", r.total, r.em, r.f1,
                                r.missing, r.adversarial);
  for (const auto& [type, b] : r.by_type) {
    out += fmt::format("  {:<6} n={:<6} EM={:.2f} F1={:.2f}\n", type, b.count, b.em, b.f1);
  }
  return out;
}

void write_predictions(const Predictions& predictions, const std::string& path) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [id, text] : predictions) j[id] = text;
  std::ofstream out(path);
  if (!out) throw DataError(fmt::format("cannot write predictions to {}", path));
  out << j.dump(1) << '\n';
}

Predictions read_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot read predictions from {}", path));
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(fmt::format("{}: malformed JSON at byte {}", path, e.byte));
  }
  if (!j.is_object()) throw DataError(fmt::format("{}: predictions must be a JSON object", path));
  Predictions p;
  for (auto it = j.begin(); it != j.end(); ++it) p[it.key()] = it.value().get<std::string>();
  return p;
}

}  // namespace qadistill
