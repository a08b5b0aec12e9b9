#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "qadistill/corpus/vocabulary.hpp"
#include "qadistill/reader/params.hpp"

namespace qadistill {

inline constexpr int kCheckpointFormatVersion = 1;

// One JSON header line (format version, array names and shapes, reader config,
// vocabulary, free-form metadata) followed by every array as little-endian
// float32 in slot order. Values are rounded to float on save.
struct Checkpoint {
  ReaderParams params;
  Vocabulary vocab;
  nlohmann::json meta = nlohmann::json::object();
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes, const std::string& origin = "checkpoint");

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace qadistill
