#include "qadistill/reader/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "qadistill/errors.hpp"

namespace qadistill {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

nlohmann::json config_json(const ReaderConfig& c) {
  return {{"vocab_size", c.vocab_size},
          {"embed_dim", c.embed_dim},
          {"hidden", c.hidden},
          {"window_radius", c.window_radius},
          {"init_scale", c.init_scale}};
}

ReaderConfig config_from_json(const nlohmann::json& j) {
  ReaderConfig c;
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.window_radius = j.at("window_radius").get<std::size_t>();
  c.init_scale = j.at("init_scale").get<double>();
  return c;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  const auto& p = ckpt.params;
  if (p.tensors().size() != ReaderParams::kSlotCount) throw ConfigError("cannot save uninitialized reader parameters");
  if (p.config().vocab_size != ckpt.vocab.size()) {
    throw ConfigError(fmt::format("reader vocabulary size {} does not match vocabulary ({} entries)",
                                  p.config().vocab_size, ckpt.vocab.size()));
  }
  nlohmann::json header;
  header["format_version"] = kCheckpointFormatVersion;
  header["names"] = ReaderParams::names();
  nlohmann::json shapes = nlohmann::json::array();
  for (const auto& t : p.tensors()) shapes.push_back(t.shape());
  header["shapes"] = shapes;
  header["config"] = config_json(p.config());
  header["vocab"] = ckpt.vocab.entries();
  header["meta"] = ckpt.meta;

  std::string out = header.dump() + "\n";
  for (const auto& t : p.tensors()) {
    for (double v : t.values()) {
      const float f = static_cast<float>(v);
      char bytes[sizeof f];
      std::memcpy(bytes, &f, sizeof f);
      out.append(bytes, sizeof f);
    }
  }
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes, const std::string& origin) {
  const auto newline = bytes.find('\n');
  if (newline == std::string::npos) throw DataError(fmt::format("{}: missing header line", origin));
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(0, newline));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(fmt::format("{}: bad header at byte {}: {}", origin, e.byte, e.what()));
  }

  Checkpoint ckpt;
  try {
    const int version = header.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion) {
      throw DataError(fmt::format("{}: format version {} is not supported (expected {})", origin, version,
                                  kCheckpointFormatVersion));
    }
    const auto names = header.at("names").get<std::vector<std::string>>();
    const auto shapes = header.at("shapes").get<std::vector<Shape>>();
    const ReaderConfig config = config_from_json(header.at("config"));
    const auto words = header.at("vocab").get<std::vector<std::string>>();
    ckpt.vocab = Vocabulary(words);
    if (header.contains("meta")) ckpt.meta = header.at("meta");

    const auto expected = ReaderParams::shapes(config);
    if (names.size() != ReaderParams::kSlotCount || shapes.size() != ReaderParams::kSlotCount) {
      throw DataError(fmt::format("{}: expected {} arrays, header lists {}", origin,
                                  static_cast<int>(ReaderParams::kSlotCount), names.size()));
    }
    ckpt.params = ReaderParams(config);
    std::size_t offset = newline + 1;
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] != ReaderParams::names()[i] || shapes[i] != expected[i]) {
        throw DataError(fmt::format("{}: array {} is {} {}, expected {} {}", origin, i, names[i],
                                    shape_string(shapes[i]), ReaderParams::names()[i], shape_string(expected[i])));
      }
      auto& t = ckpt.params[i];
      const std::size_t need = t.size() * sizeof(float);
      if (bytes.size() < offset + need) throw DataError(fmt::format("{}: truncated in array {}", origin, names[i]));
      for (std::size_t k = 0; k < t.size(); ++k) {
        float f;
        std::memcpy(&f, bytes.data() + offset + k * sizeof f, sizeof f);
        t[k] = f;
      }
      offset += need;
    }
    if (offset != bytes.size()) throw DataError(fmt::format("{}: {} trailing bytes", origin, bytes.size() - offset));
    if (config.vocab_size != ckpt.vocab.size()) {
      throw DataError(fmt::format("{}: vocabulary has {} entries but the reader expects {}", origin, ckpt.vocab.size(),
                                  config.vocab_size));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(fmt::format("{}: bad header: {}", origin, e.what()));
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(fmt::format("cannot write {}", path.string()));
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError(fmt::format("write failed for {}", path.string()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open {}", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str(), path.string());
}

}  // namespace qadistill
