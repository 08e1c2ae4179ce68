#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "emtune/model.hpp"

namespace emtune {

inline constexpr std::uint16_t kCheckpointVersion = 1;

struct TrainingMetadata {
  std::string loss_mode;  // contrastive | noncontrastive | combined | cross-entropy | none
  std::uint64_t epoch = 0;
  std::uint64_t seed = 0;
  friend bool operator==(const TrainingMetadata&, const TrainingMetadata&) = default;
};

struct Checkpoint {
  std::uint16_t format_version = kCheckpointVersion;
  Encoder encoder;
  std::optional<Adapter> adapter;
  TrainingMetadata metadata;
  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

// Layout: "EMTN", u16 version, u32 metadata length, metadata JSON, then
// little-endian f64 arrays (encoder layers, then adapter layers; weight
// before bias).
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::string_view bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace emtune
