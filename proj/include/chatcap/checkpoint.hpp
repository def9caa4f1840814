#pragma once

// Binary checkpoint container, little-endian:
//   "CHATCAPS" | u32 version | u64 header length | JSON header
//   | f64 parameter blocks in header order
//   | [f64 Adam first/second moment blocks, same order]
//   | u32 crc32 of everything before it
// The header carries the model config (with label schema), vocabulary,
// code version, training position and the run configuration echo.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "chatcap/embed.hpp"
#include "chatcap/model.hpp"
#include "chatcap/optim.hpp"

namespace chatcap {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TrainingPosition {
  std::int64_t step = 0;   // optimizer steps taken
  std::int64_t epoch = 0;  // completed epochs
  std::uint64_t seed = 0;
  double best_metric = -1.0;  // best validation utterance macro-F1 so far
  std::int64_t best_step = -1;
};

struct CheckpointContents {
  std::unique_ptr<DialogModel> model;
  Vocab vocab;
  TrainingPosition position;
  std::optional<AdamState> adam;
  std::string code_version;
  nlohmann::json run_config;
};

// Writes to a temporary sibling and renames, so an interrupted save never
// leaves a truncated file under `path`.
void save_checkpoint(const std::filesystem::path& path, const DialogModel& model, const Vocab& vocab,
                     const TrainingPosition& position, const AdamState* adam,
                     const nlohmann::json& run_config = nlohmann::json::object());

// Throws FormatError on a bad magic, unsupported version, checksum mismatch,
// truncation or a parameter list that does not match the configured model.
CheckpointContents load_checkpoint(const std::filesystem::path& path);

std::string code_version();

}  // namespace chatcap
