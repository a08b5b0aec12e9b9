#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "qadistill/corpus/example.hpp"

namespace qadistill {

struct SquadLoadOptions {
  // Keep questions that carry no answers (augmentation files).
  bool allow_unlabeled = false;
};

struct SquadLoadResult {
  std::vector<Example> examples;
  std::size_t questions = 0;
  std::size_t dropped_answers = 0;     // offset outside context or text mismatch
  std::size_t skipped_questions = 0;   // no usable answer left
};

// Maps a character-offset answer onto the tokens it covers. A start offset
// inside a token selects that token. Returns false when the range is outside
// the passage or the covered text does not normalize to the answer text.
bool align_answer(const Passage& passage, std::size_t answer_start, const std::string& answer_text, TokenSpan* out);

Passage make_passage(std::string context);

// Throws DataError for unreadable files, malformed JSON (with byte offset) or
// a document that does not follow the SQuAD v1.1 layout.
SquadLoadResult load_squad_json(const std::string& path, const SquadLoadOptions& options = {});
SquadLoadResult parse_squad_json(const std::string& text, const SquadLoadOptions& options = {});

// Writes examples in SQuAD v1.1 layout; consecutive examples that share a
// Passage become one paragraph. Adversarial examples carry
// "is_adversarial": true on their question entry.
std::string to_squad_json(std::span<const Example> examples, const std::string& title = "corpus");
void write_squad_json(std::span<const Example> examples, const std::string& path, const std::string& title = "corpus");

}  // namespace qadistill
