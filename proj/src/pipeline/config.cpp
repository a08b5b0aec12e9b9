#include "qadistill/pipeline/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "qadistill/errors.hpp"

namespace qadistill {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) throw ConfigError(fmt::format("{}: cannot parse '{}'", key, text));
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError(fmt::format("{}: expected true or false, got '{}'", key, text));
}

template <typename Field>
ConfigKey make_key(std::string name, std::string help, Field field) {
  using T = std::remove_reference_t<decltype(field(std::declval<RunConfig&>()))>;
  ConfigKey k;
  k.name = name;
  k.help = std::move(help);
  k.set = [field, name](RunConfig& c, const std::string& v) {
    if constexpr (std::is_same_v<T, bool>) {
      field(c) = parse_bool(name, v);
    } else {
      field(c) = parse_number<T>(name, v);
    }
  };
  k.get = [field](const RunConfig& c) { return nlohmann::json(field(const_cast<RunConfig&>(c))); };
  return k;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw ConfigError("adam betas must be in [0, 1)");
  if (!(adam_eps > 0)) throw ConfigError("adam_eps must be positive");
  if (!(clip_norm > 0)) throw ConfigError("clip_norm must be positive");
  if (vocab_cap < 3) throw ConfigError("vocab_cap must be at least 3");
  if (max_passage_tokens == 0) throw ConfigError("max_passage_tokens must be positive");
  if (reader.embed_dim == 0 || reader.hidden == 0) throw ConfigError("embed_dim and hidden must be positive");
  if (!(reader.init_scale >= 0)) throw ConfigError("init_scale must be non-negative");
  distill.validate();
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    k.push_back(make_key("seed", "base random seed", [](RunConfig& c) -> auto& { return c.train.seed; }));
    k.push_back(make_key("epochs", "training epochs", [](RunConfig& c) -> auto& { return c.train.epochs; }));
    k.push_back(make_key("warmup_epochs", "attention-only epochs before the full objective (stagewise)",
                         [](RunConfig& c) -> auto& { return c.train.warmup_epochs; }));
    k.push_back(make_key("batch_size", "examples per update", [](RunConfig& c) -> auto& { return c.train.batch_size; }));
    k.push_back(make_key("learning_rate", "step size", [](RunConfig& c) -> auto& { return c.train.learning_rate; }));
    k.push_back(make_key("beta1", "first moment decay", [](RunConfig& c) -> auto& { return c.train.beta1; }));
    k.push_back(make_key("beta2", "second moment decay", [](RunConfig& c) -> auto& { return c.train.beta2; }));
    k.push_back(make_key("adam_eps", "moment denominator offset", [](RunConfig& c) -> auto& { return c.train.adam_eps; }));
    k.push_back(make_key("clip_norm", "global gradient norm cap", [](RunConfig& c) -> auto& { return c.train.clip_norm; }));
    k.push_back(make_key("vocab_cap", "vocabulary size cap", [](RunConfig& c) -> auto& { return c.train.vocab_cap; }));
    k.push_back(make_key("max_passage_tokens", "longer passages are left out of training and annotation",
                         [](RunConfig& c) -> auto& { return c.train.max_passage_tokens; }));
    k.push_back(make_key("extra_hard_labels", "augmented examples with answers also train CE and ANS",
                         [](RunConfig& c) -> auto& { return c.train.extra_hard_labels; }));
    k.push_back(make_key("embed_dim", "embedding width", [](RunConfig& c) -> auto& { return c.train.reader.embed_dim; }));
    k.push_back(make_key("hidden", "hidden width", [](RunConfig& c) -> auto& { return c.train.reader.hidden; }));
    k.push_back(make_key("window_radius", "neighbours on each side in the contextualizer",
                         [](RunConfig& c) -> auto& { return c.train.reader.window_radius; }));
    k.push_back(make_key("init_scale", "uniform initialization bound",
                         [](RunConfig& c) -> auto& { return c.train.reader.init_scale; }));
    k.push_back(make_key("tau", "distillation temperature", [](RunConfig& c) -> auto& { return c.train.distill.tau; }));
    {
      ConfigKey lam;
      lam.name = "lambda";
      lam.help = "KD weight (default tau^2)";
      lam.set = [](RunConfig& c, const std::string& v) { c.train.distill.lambda = parse_number<double>("lambda", v); };
      lam.get = [](const RunConfig& c) { return nlohmann::json(c.train.distill.kd_weight()); };
      k.push_back(std::move(lam));
    }
    k.push_back(make_key("gamma", "ANS weight", [](RunConfig& c) -> auto& { return c.train.distill.gamma; }));
    k.push_back(make_key("delta", "ATT weight", [](RunConfig& c) -> auto& { return c.train.distill.delta; }));
    k.push_back(make_key("top_k", "teacher candidates per member for mining",
                         [](RunConfig& c) -> auto& { return c.train.distill.top_k; }));
    k.push_back(make_key("ensemble_size", "teacher members", [](RunConfig& c) -> auto& { return c.train.distill.ensemble_size; }));
    k.push_back(make_key("margin", "ANS margin", [](RunConfig& c) -> auto& { return c.train.distill.margin; }));
    k.push_back(make_key("max_span_len", "longest decoded span in tokens",
                         [](RunConfig& c) -> auto& { return c.train.distill.max_span_len; }));
    k.push_back(make_key("use_kd", "vanilla KD term", [](RunConfig& c) -> auto& { return c.train.distill.use_kd; }));
    k.push_back(make_key("use_ans", "answer distillation term", [](RunConfig& c) -> auto& { return c.train.distill.use_ans; }));
    k.push_back(make_key("use_att", "attention distillation term", [](RunConfig& c) -> auto& { return c.train.distill.use_att; }));
    k.push_back(make_key("stagewise", "attention-only warm-up before the full objective",
                         [](RunConfig& c) -> auto& { return c.train.distill.stagewise; }));
    k.push_back(make_key("train_passages", "synthetic training passages",
                         [](RunConfig& c) -> auto& { return c.gen.train_passages; }));
    k.push_back(make_key("dev_passages", "synthetic dev passages", [](RunConfig& c) -> auto& { return c.gen.dev_passages; }));
    k.push_back(make_key("entities_per_passage", "facts per synthetic passage",
                         [](RunConfig& c) -> auto& { return c.gen.entities_per_passage; }));
    k.push_back(make_key("attribute_types", "attribute categories in play",
                         [](RunConfig& c) -> auto& { return c.gen.attribute_types; }));
    k.push_back(make_key("distractor_rate", "chance a further entity shares the first attribute",
                         [](RunConfig& c) -> auto& { return c.gen.distractor_rate; }));
    k.push_back(make_key("name_pool", "distinct entity names", [](RunConfig& c) -> auto& { return c.gen.name_pool; }));
    return k;
  }();
  return keys;
}

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  for (const auto& k : config_keys()) {
    if (k.name == key) {
      k.set(config, value);
      return;
    }
  }
  throw ConfigError(fmt::format("unknown configuration key '{}'", key));
}

void apply_config_text(RunConfig& config, const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(fmt::format("{}:{}: expected 'key = value'", origin, number));
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      set_config_value(config, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(fmt::format("{}:{}: {}", origin, number, e.what()));
    }
  }
}

void apply_config_file(RunConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config file {}", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  apply_config_text(config, buf.str(), path.string());
}

nlohmann::json config_snapshot(const RunConfig& config) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& k : config_keys()) j[k.name] = k.get(config);
  return j;
}

}  // namespace qadistill
