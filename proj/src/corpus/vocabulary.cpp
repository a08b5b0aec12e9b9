#include "qadistill/corpus/vocabulary.hpp"

#include <algorithm>
#include <cstdint>
#include <map>

#include <fmt/format.h>

#include "qadistill/errors.hpp"

namespace qadistill {

std::string lowercase_ascii(std::string_view s) {
  std::string out(s);
  for (auto& ch : out) {
    if (ch >= 'A' && ch <= 'Z') ch = static_cast<char>(ch - 'A' + 'a');
  }
  return out;
}

Vocabulary::Vocabulary() : words_{"<pad>", "<unk>"} {}

Vocabulary::Vocabulary(std::span<const std::string> words) : Vocabulary() {
  for (const auto& w : words) {
    if (w == "<pad>" || w == "<unk>") throw DataError(fmt::format("vocabulary entry '{}' is reserved", w));
    auto [it, inserted] = index_.emplace(w, static_cast<int>(words_.size()));
    if (!inserted) throw DataError(fmt::format("duplicate vocabulary entry '{}'", w));
    words_.push_back(w);
  }
}

Vocabulary Vocabulary::build(std::span<const Example> examples, std::size_t cap) {
  std::map<std::string, std::size_t> counts;
  std::map<const Passage*, bool> seen;
  for (const auto& ex : examples) {
    for (const auto& t : ex.question_tokens) ++counts[lowercase_ascii(t)];
    if (!seen.emplace(ex.passage.get(), true).second) continue;
    for (const auto& t : ex.passage_tokens()) ++counts[lowercase_ascii(t)];
  }
  counts.erase("<pad>");
  counts.erase("<unk>");
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  const std::size_t room = cap > 2 ? cap - 2 : 0;
  if (ranked.size() > room) ranked.resize(room);
  std::vector<std::string> words;
  words.reserve(ranked.size());
  for (auto& [w, n] : ranked) words.push_back(w);
  return Vocabulary(words);
}

int Vocabulary::index(std::string_view token) const {
  auto it = index_.find(lowercase_ascii(token));
  return it == index_.end() ? kUnk : it->second;
}

std::vector<int> Vocabulary::encode(std::span<const std::string> tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(index(t));
  return ids;
}

double Vocabulary::coverage(std::span<const std::string> tokens) const {
  if (tokens.empty()) return 1.0;
  std::size_t known = 0;
  for (const auto& t : tokens) known += index(t) != kUnk ? 1 : 0;
  return static_cast<double>(known) / static_cast<double>(tokens.size());
}

std::vector<std::string> Vocabulary::entries() const { return {words_.begin() + 2, words_.end()}; }

std::string Vocabulary::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (std::size_t i = 2; i < words_.size(); ++i) {
    for (unsigned char c : words_[i]) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    h ^= 0x0a;
    h *= 1099511628211ULL;
  }
  return fmt::format("{:016x}", h);
}

}  // namespace qadistill
