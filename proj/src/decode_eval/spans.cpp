#include "qadistill/decode_eval/spans.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "qadistill/errors.hpp"

namespace qadistill {

bool span_precedes(const SpanPrediction& a, const SpanPrediction& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.start != b.start) return a.start < b.start;
  return a.end < b.end;
}

std::vector<SpanPrediction> topk_spans(std::span<const double> p1, std::span<const double> p2, std::size_t k,
                                       std::size_t max_span_len) {
  if (p1.size() != p2.size()) {
    throw ShapeError(fmt::format("topk_spans: start has {} positions, end has {}", p1.size(), p2.size()));
  }
  std::vector<SpanPrediction> candidates;
  if (k == 0 || max_span_len == 0) return candidates;
  const std::size_t m = p1.size();
  candidates.reserve(m * std::min(m, max_span_len));
  for (std::size_t s = 0; s < m; ++s) {
    if (!(p1[s] > 0.0)) continue;
    const std::size_t last = std::min(m, s + max_span_len);
    for (std::size_t e = s; e < last; ++e) {
      const double score = p1[s] * p2[e];
      if (score > 0.0) candidates.push_back({static_cast<int>(s), static_cast<int>(e), score, {}});
    }
  }
  const std::size_t keep = std::min(k, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                    span_precedes);
  candidates.resize(keep);
  return candidates;
}

void attach_text(std::vector<SpanPrediction>& spans, const Passage& passage) {
  for (auto& s : spans) s.text = span_text(passage, s.span());
}

}  // namespace qadistill
