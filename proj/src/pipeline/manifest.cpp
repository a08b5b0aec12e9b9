#include "qadistill/pipeline/manifest.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "qadistill/errors.hpp"

namespace qadistill {

std::string file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open {}", path.string()));
  std::uint64_t h = 1469598103934665603ULL;
  char buf[1 << 14];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
  }
  return fmt::format("{:016x}", h);
}

nlohmann::json history_json(const std::vector<EpochRecord>& history) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& e : history) {
    out.push_back({{"epoch", e.epoch},
                   {"phase", e.phase},
                   {"loss", e.loss},
                   {"ce", e.terms.ce},
                   {"kd", e.terms.kd},
                   {"ans", e.terms.ans},
                   {"att", e.terms.att},
                   {"dev_em", e.dev_em},
                   {"dev_f1", e.dev_f1},
                   {"seconds", e.seconds}});
  }
  return out;
}

nlohmann::json read_manifest(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  if (!std::filesystem::exists(path)) return {{"steps", nlohmann::json::array()}};
  std::ifstream in(path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

void append_manifest(const std::filesystem::path& dir, const ManifestEntry& entry) {
  nlohmann::json manifest = read_manifest(dir);
  nlohmann::json inputs = nlohmann::json::object();
  for (const auto& p : entry.inputs) inputs[p.string()] = file_hash(p);
  nlohmann::json outputs = nlohmann::json::array();
  for (const auto& p : entry.outputs) {
    if (!std::filesystem::exists(p)) throw DataError(fmt::format("manifest output {} does not exist", p.string()));
    outputs.push_back(p.string());
  }
  manifest["steps"].push_back({{"step", entry.step},
                               {"index", manifest["steps"].size()},
                               {"config", entry.config},
                               {"inputs", inputs},
                               {"outputs", outputs},
                               {"details", entry.details},
                               {"seconds", entry.seconds}});
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << '\n';
  if (!out) throw DataError(fmt::format("cannot write {}", (dir / "manifest.json").string()));
}

}  // namespace qadistill
