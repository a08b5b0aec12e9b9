#include "qadistill/corpus/example.hpp"

#include <fmt/format.h>

#include "qadistill/errors.hpp"

namespace qadistill {

std::string span_text(const Passage& passage, TokenSpan span) {
  const auto b = passage.offsets.at(static_cast<std::size_t>(span.start)).begin;
  const auto e = passage.offsets.at(static_cast<std::size_t>(span.end)).end;
  return passage.raw_context.substr(b, e - b);
}

void validate(const Example& ex) {
  if (ex.question_tokens.empty()) throw DataError(fmt::format("example {}: empty question", ex.id));
  if (!ex.passage || ex.passage->tokens.empty()) throw DataError(fmt::format("example {}: empty passage", ex.id));
  const Passage& p = *ex.passage;
  if (p.offsets.size() != p.tokens.size()) throw DataError(fmt::format("example {}: offsets/tokens differ", ex.id));
  for (std::size_t i = 0; i < p.offsets.size(); ++i) {
    const auto& o = p.offsets[i];
    if (o.begin >= o.end || o.end > p.raw_context.size() || (i > 0 && o.begin < p.offsets[i - 1].end)) {
      throw DataError(fmt::format("example {}: token offsets not strictly increasing at {}", ex.id, i));
    }
  }
  const auto m = static_cast<int>(p.tokens.size());
  for (const auto& s : ex.gold_spans) {
    if (s.start < 0 || s.start > s.end || s.end >= m) {
      throw DataError(fmt::format("example {}: gold span ({}, {}) outside passage of {} tokens", ex.id, s.start,
                                  s.end, m));
    }
  }
}

Example truncate_passage(const Example& example, std::size_t cap, bool* lost_gold) {
  if (lost_gold != nullptr) *lost_gold = false;
  if (example.passage_length() <= cap) return example;
  Example out = example;
  auto p = std::make_shared<Passage>(*example.passage);
  p->tokens.resize(cap);
  p->offsets.resize(cap);
  p->raw_context.resize(p->offsets.back().end);
  out.passage = std::move(p);
  out.gold_spans.clear();
  for (const auto& s : example.gold_spans) {
    if (static_cast<std::size_t>(s.end) < cap) {
      out.gold_spans.push_back(s);
    } else if (lost_gold != nullptr) {
      *lost_gold = true;
    }
  }
  return out;
}

}  // namespace qadistill
