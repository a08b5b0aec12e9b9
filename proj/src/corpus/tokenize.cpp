#include "qadistill/corpus/tokenize.hpp"

#include <string_view>

namespace qadistill {
namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

}  // namespace

bool is_split_punctuation(char c) {
  constexpr std::string_view kPunct = ".,;:!?\"'()[]{}`";
  return kPunct.find(c) != std::string_view::npos;
}

TokenizedText tokenize(std::string_view text) {
  TokenizedText out;
  auto emit = [&](std::size_t b, std::size_t e) {
    out.tokens.emplace_back(text.substr(b, e - b));
    out.offsets.push_back({b, e});
  };
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    if (i == j) break;

    std::size_t lo = i;
    std::size_t hi = j;
    while (lo < hi && is_split_punctuation(text[lo])) {
      emit(lo, lo + 1);
      ++lo;
    }
    std::size_t tail = hi;
    while (tail > lo && is_split_punctuation(text[tail - 1])) --tail;
    if (lo < tail) emit(lo, tail);
    for (std::size_t k = tail; k < hi; ++k) emit(k, k + 1);
    i = j;
  }
  return out;
}

}  // namespace qadistill
