#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "qadistill/distill/losses.hpp"
#include "qadistill/reader/params.hpp"

namespace qadistill {

struct TrainConfig {
  std::uint64_t seed = 1;
  std::size_t epochs = 30;
  std::size_t warmup_epochs = 5;  // attention-only epochs when distill.stagewise
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 5.0;
  std::size_t vocab_cap = 5000;
  std::size_t max_passage_tokens = 400;
  // Augmented examples that do have gold answers also train CE and ANS.
  bool extra_hard_labels = true;
  ReaderConfig reader;  // vocab_size is filled from the vocabulary
  DistillConfig distill;

  void validate() const;
};

// Synthetic corpus sizes used by `gen`.
struct GenConfig {
  std::size_t train_passages = 500;
  std::size_t dev_passages = 100;
  std::size_t entities_per_passage = 4;
  std::size_t attribute_types = 4;
  double distractor_rate = 1.0;
  std::size_t name_pool = 48;
};

struct RunConfig {
  TrainConfig train;
  GenConfig gen;
};

// A settable configuration key shared by config files and CLI flags.
struct ConfigKey {
  std::string name;
  std::string help;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<nlohmann::json(const RunConfig&)> get;
};

const std::vector<ConfigKey>& config_keys();

// Throws ConfigError for unknown keys or unparsable values.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);

// `key = value` lines; `#` starts a comment.
void apply_config_text(RunConfig& config, const std::string& text, const std::string& origin = "config");
void apply_config_file(RunConfig& config, const std::filesystem::path& path);

nlohmann::json config_snapshot(const RunConfig& config);

}  // namespace qadistill
