#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "qadistill/corpus/example.hpp"

namespace qadistill {

// Lowercased token <-> index. Index 0 is padding and 1 is the unknown word;
// every other entry is unique.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr std::size_t kDefaultCap = 5000;

  Vocabulary();
  // Entries beyond the reserved two, in index order.
  explicit Vocabulary(std::span<const std::string> words);

  // Most frequent lowercased tokens of questions and passages, ties broken
  // alphabetically, at most `cap` entries including the reserved ones.
  static Vocabulary build(std::span<const Example> examples, std::size_t cap = kDefaultCap);

  int index(std::string_view token) const;
  const std::string& word(int index) const { return words_.at(static_cast<std::size_t>(index)); }
  std::size_t size() const { return words_.size(); }
  std::vector<int> encode(std::span<const std::string> tokens) const;
  // Fraction of tokens that map to a known entry.
  double coverage(std::span<const std::string> tokens) const;

  // Non-reserved entries in index order.
  std::vector<std::string> entries() const;
  // FNV-1a over the entries, as 16 hex digits.
  std::string hash() const;

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

std::string lowercase_ascii(std::string_view s);

}  // namespace qadistill
