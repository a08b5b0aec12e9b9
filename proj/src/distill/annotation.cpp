#include "qadistill/distill/annotation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <fmt/format.h>

#include "json.hpp"
#include "qadistill/decode_eval/metrics.hpp"
#include "qadistill/errors.hpp"
#include "qadistill/numerics/ops.hpp"

namespace qadistill {

std::optional<ConfusingAnswer> select_confusing(std::span<const MiningCandidate> candidates) {
  std::optional<ConfusingAnswer> best;
  for (const auto& c : candidates) {
    if (c.max_f1 > 0.0) continue;
    if (!best || c.confidence > best->confidence) best = ConfusingAnswer{c.span, c.confidence};
  }
  return best;
}

std::optional<ConfusingAnswer> mine_confusing(std::span<const std::vector<MiningCandidate>> members) {
  std::optional<ConfusingAnswer> best;
  for (const auto& list : members) {
    auto pick = select_confusing(list);
    if (pick && (!best || pick->confidence > best->confidence)) best = pick;
  }
  return best;
}

std::vector<MiningCandidate> mining_candidates(std::span<const double> start_dist, std::span<const double> end_dist,
                                               const Example& example, std::size_t top_k, std::size_t max_span_len) {
  auto spans = topk_spans(start_dist, end_dist, top_k, max_span_len);
  attach_text(spans, *example.passage);
  std::vector<MiningCandidate> out;
  out.reserve(spans.size());
  for (const auto& s : spans) out.push_back({s.span(), s.score, max_overlap_f1(example.gold_texts, s.text)});
  return out;
}

void validate(const TeacherAnnotation& a) {
  const std::size_t m = a.start_soft.size();
  auto check_sum = [&](std::span<const double> v, const std::string& what) {
    const double total = std::accumulate(v.begin(), v.end(), 0.0);
    if (std::abs(total - 1.0) > kSoftTargetTolerance) {
      throw DataError(fmt::format("{}: {} sums to {:.8f}", a.example_id, what, total));
    }
  };
  if (m == 0) throw DataError(fmt::format("{}: empty soft targets", a.example_id));
  if (a.end_soft.size() != m) throw DataError(fmt::format("{}: start and end targets differ in length", a.example_id));
  if (a.attention.rank() != 2 || a.attention.rows() != m) {
    throw DataError(fmt::format("{}: attention shape {} does not match {} passage tokens", a.example_id,
                                shape_string(a.attention.shape()), m));
  }
  if (!(a.tau > 0)) throw DataError(fmt::format("{}: tau must be positive", a.example_id));
  check_sum(a.start_soft, "start_soft");
  check_sum(a.end_soft, "end_soft");
  for (std::size_t j = 0; j < m; ++j) check_sum(a.attention.row(j), fmt::format("attention row {}", j));
  if (a.confusing) {
    const auto s = a.confusing->span;
    if (s.start < 0 || s.end < s.start || static_cast<std::size_t>(s.end) >= m) {
      throw DataError(fmt::format("{}: confusing span ({}, {}) out of range", a.example_id, s.start, s.end));
    }
  }
}

TeacherAnnotation annotate_member(const Prediction& pred, const Example& example, const DistillConfig& config) {
  TeacherAnnotation a;
  a.example_id = example.id;
  a.tau = config.tau;
  a.start_soft = softmax_temp(pred.start_logits, config.tau);
  a.end_soft = softmax_temp(pred.end_logits, config.tau);
  a.attention = pred.attention;
  if (example.labeled()) {
    auto candidates = mining_candidates(pred.start_dist, pred.end_dist, example, config.top_k, config.max_span_len);
    a.confusing = select_confusing(candidates);
  }
  return a;
}

TeacherAnnotation aggregate_ensemble(std::span<const TeacherAnnotation> members) {
  if (members.empty()) throw ConfigError("cannot aggregate an empty ensemble");
  const auto& first = members.front();
  TeacherAnnotation out;
  out.example_id = first.example_id;
  out.tau = first.tau;
  out.start_soft.assign(first.start_soft.size(), 0.0);
  out.end_soft.assign(first.end_soft.size(), 0.0);
  out.attention = Tensor(first.attention.shape());

  for (const auto& m : members) {
    if (m.example_id != first.example_id || m.tau != first.tau) {
      throw ShapeError(fmt::format("ensemble members disagree: {} at tau {} vs {} at tau {}", m.example_id, m.tau,
                                   first.example_id, first.tau));
    }
    if (m.start_soft.size() != out.start_soft.size() || m.end_soft.size() != out.end_soft.size() ||
        m.attention.shape() != out.attention.shape()) {
      throw ShapeError(fmt::format("ensemble member shapes disagree for {}", first.example_id));
    }
    for (std::size_t i = 0; i < out.start_soft.size(); ++i) out.start_soft[i] += m.start_soft[i];
    for (std::size_t i = 0; i < out.end_soft.size(); ++i) out.end_soft[i] += m.end_soft[i];
    for (std::size_t i = 0; i < out.attention.size(); ++i) out.attention[i] += m.attention[i];
    if (m.confusing && (!out.confusing || m.confusing->confidence > out.confusing->confidence)) {
      out.confusing = m.confusing;
    }
  }
  const double n = static_cast<double>(members.size());
  for (auto& v : out.start_soft) v /= n;
  for (auto& v : out.end_soft) v /= n;
  for (auto& v : out.attention.values()) v /= n;
  return out;
}

std::string to_jsonl_record(const TeacherAnnotation& a) {
  nlohmann::ordered_json j;
  j["example_id"] = a.example_id;
  j["tau"] = a.tau;
  j["start_soft"] = a.start_soft;
  j["end_soft"] = a.end_soft;
  nlohmann::ordered_json att = nlohmann::ordered_json::array();
  for (std::size_t r = 0; r < a.attention.rows(); ++r) {
    auto row = a.attention.row(r);
    att.push_back(std::vector<double>(row.begin(), row.end()));
  }
  j["attention"] = std::move(att);
  if (a.confusing) {
    j["confusing_span"] = {a.confusing->span.start, a.confusing->span.end};
    j["confusing_confidence"] = a.confusing->confidence;
  } else {
    j["confusing_span"] = nullptr;
    j["confusing_confidence"] = nullptr;
  }
  return j.dump();
}

TeacherAnnotation from_jsonl_record(const std::string& line) {
  TeacherAnnotation a;
  try {
    const auto j = nlohmann::json::parse(line);
    a.example_id = j.at("example_id").get<std::string>();
    a.tau = j.at("tau").get<double>();
    a.start_soft = j.at("start_soft").get<std::vector<double>>();
    a.end_soft = j.at("end_soft").get<std::vector<double>>();
    const auto rows = j.at("attention").get<std::vector<std::vector<double>>>();
    const std::size_t n = rows.empty() ? 0 : rows.front().size();
    std::vector<double> flat;
    for (const auto& r : rows) {
      if (r.size() != n) throw DataError(fmt::format("{}: ragged attention rows", a.example_id));
      flat.insert(flat.end(), r.begin(), r.end());
    }
    a.attention = Tensor({rows.size(), n}, std::move(flat));
    const auto& span = j.at("confusing_span");
    if (!span.is_null()) {
      const auto pair = span.get<std::vector<int>>();
      if (pair.size() != 2) throw DataError(fmt::format("{}: confusing_span needs two indices", a.example_id));
      a.confusing = ConfusingAnswer{{pair[0], pair[1]}, j.at("confusing_confidence").get<double>()};
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(fmt::format("bad distilled record: {}", e.what()));
  }
  validate(a);
  return a;
}

void write_distilled(const std::filesystem::path& path, std::vector<TeacherAnnotation> records) {
  std::sort(records.begin(), records.end(),
            [](const auto& x, const auto& y) { return x.example_id < y.example_id; });
  std::ofstream out(path);
  if (!out) throw DataError(fmt::format("cannot write {}", path.string()));
  for (const auto& r : records) out << to_jsonl_record(r) << '\n';
  if (!out) throw DataError(fmt::format("write failed for {}", path.string()));
}

std::vector<TeacherAnnotation> read_distilled(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open {}", path.string()));
  std::vector<TeacherAnnotation> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    try {
      out.push_back(from_jsonl_record(line));
    } catch (const DataError& e) {
      throw DataError(fmt::format("{}:{}: {}", path.string(), number, e.what()));
    }
  }
  return out;
}

}  // namespace qadistill
