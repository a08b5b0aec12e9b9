#include "qadistill/corpus/synthetic.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include <fmt/format.h>

#include "qadistill/corpus/squad.hpp"
#include "qadistill/corpus/tokenize.hpp"
#include "qadistill/corpus/vocabulary.hpp"
#include "qadistill/decode_eval/metrics.hpp"
#include "qadistill/errors.hpp"

namespace qadistill {
namespace {

double uniform_unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::vector<std::string> numbers(int lo, int hi) {
  std::vector<std::string> out;
  for (int v = lo; v <= hi; ++v) out.push_back(std::to_string(v));
  return out;
}

bool is_number(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
    return std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == ',' || c == '%';
  });
}

const std::vector<std::string>& fallback_words() {
  static const std::vector<std::string> words{"stone", "river", "lamp", "window", "garden", "bridge", "candle", "mirror"};
  return words;
}

// Shifts the last letter of the word's stem ("'s" excluded) to another letter.
std::string perturb_word(const std::string& word, std::mt19937_64& rng) {
  std::string out = word;
  std::size_t stem_end = out.size();
  if (out.size() > 2 && out.compare(out.size() - 2, 2, "'s") == 0) stem_end -= 2;
  for (std::size_t i = stem_end; i-- > 0;) {
    const auto c = static_cast<unsigned char>(out[i]);
    if (!std::isalpha(c)) continue;
    const bool upper = std::isupper(c) != 0;
    const int original = std::tolower(c) - 'a';
    int replacement = static_cast<int>(uniform_below(rng, 25));
    if (replacement >= original) ++replacement;
    out[i] = static_cast<char>((upper ? 'A' : 'a') + replacement);
    break;
  }
  return out;
}

std::size_t alpha_count(std::string_view s) {
  return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](char c) { return std::isalpha(static_cast<unsigned char>(c)); }));
}

std::string fake_answer(const Example& ex, std::mt19937_64& rng) {
  std::set<std::string> golds;
  for (const auto& g : ex.gold_texts) golds.insert(normalize_answer(g));
  for (const auto& s : ex.gold_spans) golds.insert(normalize_answer(span_text(*ex.passage, s)));
  const std::string gold = ex.gold_texts.empty()
                               ? (ex.gold_spans.empty() ? std::string() : span_text(*ex.passage, ex.gold_spans.front()))
                               : ex.gold_texts.front();
  const std::string gold_norm = normalize_answer(gold);

  auto pick_from = [&](const std::vector<std::string>& pool) -> std::string {
    std::vector<std::string> options;
    for (const auto& v : pool) {
      if (!golds.contains(normalize_answer(v))) options.push_back(v);
    }
    if (options.empty()) return {};
    return options[uniform_below(rng, options.size())];
  };

  for (const auto& cat : attribute_catalogue()) {
    for (const auto& v : cat.values) {
      if (normalize_answer(v) == gold_norm) {
        if (auto f = pick_from(cat.values); !f.empty()) return f;
      }
    }
  }
  if (is_number(gold)) {
    if (auto f = pick_from(numbers(2, 99)); !f.empty()) return f;
  }
  if (!gold.empty() && std::isupper(static_cast<unsigned char>(gold.front()))) {
    if (auto f = pick_from(entity_names()); !f.empty()) return f;
  }
  return pick_from(fallback_words());
}

}  // namespace

std::size_t uniform_below(std::mt19937_64& rng, std::size_t n) {
  if (n == 0) throw std::invalid_argument("uniform_below(0)");
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return static_cast<std::size_t>(x % bound);
}

const std::vector<AttributeCategory>& attribute_catalogue() {
  static const std::vector<AttributeCategory> catalogue{
      {"color", {"red", "blue", "green", "yellow", "purple", "orange", "black", "white", "silver", "brown", "pink", "gray"}},
      {"city", {"Paris", "London", "Tokyo", "Berlin", "Madrid", "Rome", "Cairo", "Lima", "Oslo", "Dublin", "Vienna", "Prague"}},
      {"pet", {"cat", "dog", "horse", "parrot", "rabbit", "tiger", "eagle", "turtle", "wolf", "fox", "owl", "goat"}},
      {"fruit", {"apple", "banana", "cherry", "mango", "peach", "plum", "grape", "lemon", "melon", "pear", "kiwi", "fig"}},
      {"instrument", {"piano", "violin", "guitar", "flute", "drum", "cello", "harp", "trumpet", "banjo", "oboe", "organ", "tuba"}},
      {"sport", {"tennis", "soccer", "hockey", "golf", "rugby", "cricket", "boxing", "rowing", "skiing", "judo", "polo", "archery"}},
      {"job", {"doctor", "teacher", "pilot", "farmer", "lawyer", "baker", "nurse", "chef", "painter", "sailor", "miner", "judge"}},
      {"age", numbers(18, 89)},
  };
  return catalogue;
}

const std::vector<std::string>& entity_names() {
  static const std::vector<std::string> names{
      "Alice", "Bruno",  "Carla", "Dmitri", "Elena", "Farid",  "Greta", "Hiro",   "Ines",  "Jonas",  "Keiko", "Liam",
      "Marta", "Nadia",  "Oscar", "Priya",  "Quinn", "Rafael", "Sofia", "Tomas",  "Uma",   "Victor", "Wanda", "Xavier",
      "Yara",  "Zoran",  "Amara", "Boris",  "Chloe", "Diego",  "Emil",  "Fatima", "Gus",   "Hana",   "Igor",  "Jada",
      "Karl",  "Leila",  "Milo",  "Nora",   "Otto",  "Paula",  "Rosa",  "Sven",   "Tara",  "Ulric",  "Vera",  "Willa"};
  return names;
}

namespace {

const std::vector<std::string>& extended_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out = entity_names();
    std::set<std::string> seen(out.begin(), out.end());
    static const char* onsets[] = {"B", "D", "F", "G", "K", "L", "M", "N", "P", "R", "S", "T", "V", "Z"};
    static const char* vowels[] = {"a", "e", "i", "o", "u"};
    static const char* codas[] = {"la", "na", "ro", "ti", "ko", "ma", "ri", "sa", "no", "de"};
    for (const char* c : codas) {
      for (const char* o : onsets) {
        for (const char* v : vowels) {
          std::string name = std::string(o) + v + c;
          if (seen.insert(name).second) out.push_back(name);
        }
      }
    }
    return out;
  }();
  return names;
}

}  // namespace

std::vector<std::string> name_pool(std::size_t count) {
  const auto& all = extended_names();
  if (count > all.size()) throw ConfigError(fmt::format("name_pool must be at most {}", all.size()));
  return {all.begin(), all.begin() + static_cast<std::ptrdiff_t>(count)};
}

std::size_t max_name_pool() { return extended_names().size(); }

void validate(const SynthSpec& spec) {
  if (spec.num_passages == 0) throw ConfigError("synthetic corpus needs at least one passage");
  if (spec.name_pool == 0 || spec.name_pool > max_name_pool()) {
    throw ConfigError(fmt::format("name_pool must be in [1, {}]", max_name_pool()));
  }
  if (spec.entities_per_passage == 0 || spec.entities_per_passage > spec.name_pool) {
    throw ConfigError(fmt::format("entities_per_passage must be in [1, {}]", spec.name_pool));
  }
  if (spec.attribute_types == 0 || spec.attribute_types > attribute_catalogue().size()) {
    throw ConfigError(fmt::format("attribute_types must be in [1, {}]", attribute_catalogue().size()));
  }
  if (!(spec.distractor_rate >= 0.0 && spec.distractor_rate <= 1.0)) {
    throw ConfigError("distractor_rate must be in [0, 1]");
  }
  if (spec.entities_per_passage > 12) {
    throw ConfigError("entities_per_passage above 12 would exhaust a category's values");
  }
}

std::vector<Example> generate_synthetic(const SynthSpec& spec) {
  validate(spec);
  const auto& catalogue = attribute_catalogue();
  const auto names = name_pool(spec.name_pool);
  std::mt19937_64 rng(spec.seed);
  std::vector<Example> out;

  for (std::size_t pi = 0; pi < spec.num_passages; ++pi) {
    std::vector<std::size_t> pool(names.size());
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
    std::vector<std::size_t> entities;
    for (std::size_t e = 0; e < spec.entities_per_passage; ++e) {
      const std::size_t k = uniform_below(rng, pool.size());
      entities.push_back(pool[k]);
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(k));
    }

    const std::size_t primary = uniform_below(rng, spec.attribute_types);
    struct Fact {
      std::size_t entity;
      std::size_t category;
      std::string value;
    };
    std::vector<Fact> facts;
    std::vector<std::set<std::string>> used(catalogue.size());
    for (std::size_t e = 0; e < entities.size(); ++e) {
      std::size_t cat = primary;
      if (e > 0 && !(uniform_unit(rng) < spec.distractor_rate)) {
        const std::size_t span = spec.attribute_types > 1 ? spec.attribute_types : catalogue.size();
        cat = uniform_below(rng, span - 1);
        if (cat >= primary) ++cat;
      }
      const auto& values = catalogue[cat].values;
      std::string value;
      do {
        value = values[uniform_below(rng, values.size())];
      } while (used[cat].contains(value));
      used[cat].insert(value);
      facts.push_back({entities[e], cat, value});
    }

    std::vector<std::size_t> order(facts.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_below(rng, i)]);

    std::string context;
    std::vector<std::size_t> value_offset(facts.size());
    for (std::size_t i : order) {
      if (!context.empty()) context += ' ';
      const auto& f = facts[i];
      context += fmt::format("{}'s {} is ", names[f.entity], catalogue[f.category].attribute);
      value_offset[i] = context.size();
      context += f.value + ".";
    }
    auto passage = std::make_shared<const Passage>(make_passage(context));

    for (std::size_t qi = 0; qi < facts.size(); ++qi) {
      const auto& f = facts[qi];
      Example ex;
      ex.id = fmt::format("{}-{}-{:05d}-{}", spec.id_prefix, spec.seed, pi, qi);
      ex.question = fmt::format("What is {}'s {}?", names[f.entity], catalogue[f.category].attribute);
      ex.question_tokens = tokenize(ex.question).tokens;
      ex.passage = passage;
      for (std::size_t t = 0; t < passage->offsets.size(); ++t) {
        if (passage->offsets[t].begin == value_offset[qi]) {
          ex.gold_spans.push_back({static_cast<int>(t), static_cast<int>(t)});
          break;
        }
      }
      ex.gold_texts.push_back(f.value);
      out.push_back(std::move(ex));
    }
  }

  if (spec.adversarial) {
    std::mt19937_64 adv_rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
    for (auto& ex : out) ex = append_adversarial(ex, adv_rng());
  }
  return out;
}

Example append_adversarial(const Example& example, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  static const std::set<std::string> kWh{"what", "which", "who", "whom", "whose", "when", "where", "why", "how"};
  static const std::set<std::string> kAux{"is", "was", "are", "were", "does", "did", "do"};

  std::vector<std::string> content = example.question_tokens;
  while (!content.empty() && content.back().size() == 1 && is_split_punctuation(content.back()[0])) content.pop_back();
  if (!content.empty() && kWh.contains(lowercase_ascii(content.front()))) content.erase(content.begin());
  std::string verb = "is";
  if (!content.empty() && kAux.contains(lowercase_ascii(content.front()))) {
    verb = lowercase_ascii(content.front());
    content.erase(content.begin());
  }
  if (content.empty()) content.push_back("Someone");

  std::set<std::string> passage_words;
  for (const auto& t : example.passage_tokens()) passage_words.insert(lowercase_ascii(t));

  std::size_t target = content.size();
  for (std::size_t i = 0; i < content.size() && target == content.size(); ++i) {
    if (alpha_count(content[i]) >= 3 && passage_words.contains(lowercase_ascii(content[i]))) target = i;
  }
  for (std::size_t i = 0; i < content.size() && target == content.size(); ++i) {
    if (alpha_count(content[i]) >= 3) target = i;
  }
  if (target < content.size()) {
    std::string perturbed;
    do {
      perturbed = perturb_word(content[target], rng);
    } while (passage_words.contains(lowercase_ascii(perturbed)));
    content[target] = perturbed;
  }

  std::string sentence;
  for (const auto& t : content) sentence += t + " ";
  sentence += verb + " " + fake_answer(example, rng) + ".";

  auto passage = std::make_shared<Passage>(*example.passage);
  const std::size_t base = passage->raw_context.size() + 1;
  passage->raw_context += " " + sentence;
  auto extra = tokenize(sentence);
  for (std::size_t i = 0; i < extra.tokens.size(); ++i) {
    passage->tokens.push_back(extra.tokens[i]);
    passage->offsets.push_back({extra.offsets[i].begin + base, extra.offsets[i].end + base});
  }

  Example out = example;
  out.passage = std::move(passage);
  out.adversarial = true;
  return out;
}

}  // namespace qadistill
