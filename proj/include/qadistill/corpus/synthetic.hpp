#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qadistill/corpus/example.hpp"

namespace qadistill {

// Parameters of a templated fact corpus. Passages are sequences of
// "<Name>'s <attribute> is <value>." sentences and every fact is asked as
// "What is <Name>'s <attribute>?".
struct SynthSpec {
  std::uint64_t seed = 1;
  std::size_t num_passages = 100;
  std::size_t entities_per_passage = 4;
  // Attribute categories in play, taken from the front of the catalogue.
  std::size_t attribute_types = 4;
  // Chance that each further entity shares the first entity's attribute,
  // which plants a same-category confusing value in the passage.
  double distractor_rate = 1.0;
  // Distinct entity names to draw from; beyond the fixed list, names are
  // built from syllables.
  std::size_t name_pool = 48;
  // Append a conflicting sentence about a near-duplicate name to every example.
  bool adversarial = false;
  std::string id_prefix = "syn";
};

struct AttributeCategory {
  std::string attribute;
  std::vector<std::string> values;
};

const std::vector<AttributeCategory>& attribute_catalogue();
const std::vector<std::string>& entity_names();
// The first `count` names of the extended pool; entity_names() is its prefix.
std::vector<std::string> name_pool(std::size_t count);
std::size_t max_name_pool();

// Throws ConfigError for out-of-range fields.
void validate(const SynthSpec& spec);

// Pure function of the spec: equal specs give identical corpora.
std::vector<Example> generate_synthetic(const SynthSpec& spec);

// Appends a sentence restating the question about a perturbed (near-duplicate)
// subject with a fake answer of the gold answer's category. Gold spans are
// untouched; the returned example is flagged adversarial and owns a new
// Passage.
Example append_adversarial(const Example& example, std::uint64_t seed);

// Uniform integer in [0, n) from a 64-bit engine; identical on every platform.
std::size_t uniform_below(std::mt19937_64& rng, std::size_t n);

}  // namespace qadistill
