#pragma once

#include <compare>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

namespace qadistill {

// Inclusive token range within a passage.
struct TokenSpan {
  int start = 0;
  int end = 0;
  int length() const { return end - start + 1; }
  friend auto operator<=>(const TokenSpan&, const TokenSpan&) = default;
};

// Half-open byte range [begin, end) into a raw string.
struct CharSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  friend bool operator==(const CharSpan&, const CharSpan&) = default;
};

struct Passage {
  std::string raw_context;
  std::vector<std::string> tokens;
  std::vector<CharSpan> offsets;
  std::size_t size() const { return tokens.size(); }
};

// One question against a passage. Questions of the same paragraph share the
// Passage object.
struct Example {
  std::string id;
  std::string question;
  std::vector<std::string> question_tokens;
  std::shared_ptr<const Passage> passage;
  std::vector<TokenSpan> gold_spans;
  // Answer strings exactly as annotated; used for evaluation.
  std::vector<std::string> gold_texts;
  bool adversarial = false;

  const std::vector<std::string>& passage_tokens() const { return passage->tokens; }
  std::size_t passage_length() const { return passage->tokens.size(); }
  std::size_t question_length() const { return question_tokens.size(); }
  // Examples from augmentation files may carry no answers.
  bool labeled() const { return !gold_spans.empty(); }
};

// Raw text covered by a token span, taken from the passage's character offsets.
std::string span_text(const Passage& passage, TokenSpan span);

// Throws DataError when an example breaks the structural invariants: empty
// question or passage, spans outside the passage, offsets not increasing.
void validate(const Example& example);

// Cuts the passage to at most `cap` tokens. Gold spans that no longer fit are
// removed; `lost_gold` reports whether any were.
Example truncate_passage(const Example& example, std::size_t cap, bool* lost_gold = nullptr);

}  // namespace qadistill
