#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "qadistill/corpus/example.hpp"

namespace qadistill {

struct TokenizedText {
  std::vector<std::string> tokens;
  std::vector<CharSpan> offsets;
};

// Characters peeled off the front and back of whitespace-delimited chunks.
// Anything else (including '%', '$', '-' and all non-ASCII bytes) stays
// attached to its chunk.
bool is_split_punctuation(char c);

// Splits on ASCII whitespace, then peels leading and trailing punctuation
// characters into single-character tokens. Case is preserved; offsets are
// byte positions into `text`.
TokenizedText tokenize(std::string_view text);

}  // namespace qadistill
