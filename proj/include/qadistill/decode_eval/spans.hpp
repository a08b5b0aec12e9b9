#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "qadistill/corpus/example.hpp"

namespace qadistill {

inline constexpr std::size_t kDefaultMaxSpanLength = 15;

struct SpanPrediction {
  int start = 0;
  int end = 0;
  double score = 0.0;  // p1(start) * p2(end)
  std::string text;
  TokenSpan span() const { return {start, end}; }
};

// Ranking used everywhere spans are ordered: higher score first, then the
// earlier start, then the earlier end.
bool span_precedes(const SpanPrediction& a, const SpanPrediction& b);

// The k best spans with start <= end, end - start < max_span_len and a
// positive score, in span_precedes order. Returns fewer when fewer exist.
std::vector<SpanPrediction> topk_spans(std::span<const double> p1, std::span<const double> p2, std::size_t k,
                                       std::size_t max_span_len = kDefaultMaxSpanLength);

// Fills SpanPrediction::text from the passage offsets.
void attach_text(std::vector<SpanPrediction>& spans, const Passage& passage);

}  // namespace qadistill
