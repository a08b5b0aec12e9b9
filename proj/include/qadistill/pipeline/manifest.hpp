#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "qadistill/pipeline/trainer.hpp"

namespace qadistill {

// FNV-1a of a file's bytes as 16 hex digits.
std::string file_hash(const std::filesystem::path& path);

nlohmann::json history_json(const std::vector<EpochRecord>& history);

// One step of a run, appended to <dir>/manifest.json.
struct ManifestEntry {
  std::string step;
  nlohmann::json config = nlohmann::json::object();
  std::vector<std::filesystem::path> inputs;   // hashed on write
  std::vector<std::filesystem::path> outputs;  // must exist on write
  nlohmann::json details = nlohmann::json::object();
  double seconds = 0.0;
};

// Throws DataError when a referenced file is missing.
void append_manifest(const std::filesystem::path& dir, const ManifestEntry& entry);
nlohmann::json read_manifest(const std::filesystem::path& dir);

}  // namespace qadistill
