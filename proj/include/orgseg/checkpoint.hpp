#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "orgseg/unet.hpp"

namespace orgseg {

inline constexpr int kCheckpointFormatVersion = 1;

struct CheckpointMeta {
  std::string task = "main";  // "pretext" or "main"
  std::string encoder = "resnet50";
  std::string loss;
  std::string augmentation;  // empty for none
  std::uint64_t seed = 26;
  int epoch = 0;
  std::vector<std::string> frozen_names;
  ArchitectureSpec architecture;
};

struct TensorRecord {
  std::string name;
  std::vector<int> shape;
  std::vector<float> values;
};

/// Named tensors plus run metadata.
struct CheckpointBundle {
  std::vector<TensorRecord> tensors;
  CheckpointMeta meta;

  const TensorRecord* find(const std::string& name) const noexcept;
};

nlohmann::json to_json(const ArchitectureSpec& spec);
ArchitectureSpec architecture_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CheckpointMeta& meta);
CheckpointMeta meta_from_json(const nlohmann::json& j);

/// Snapshot of every model tensor (weights and buffers).
CheckpointBundle save_checkpoint(const UNet& model, CheckpointMeta meta);
/// Copies every bundle tensor into the model; names and shapes must match.
void restore_checkpoint(const CheckpointBundle& bundle, UNet& model);

/// Writes `meta.json`, `tensors.index.json` and `tensors.bin` into `dir`.
void write_checkpoint(const std::filesystem::path& dir, const CheckpointBundle& bundle);
/// Throws CorruptBundle or VersionMismatch.
CheckpointBundle load_checkpoint(const std::filesystem::path& dir);

enum class TransferScope { encoder_only, encoder_and_decoder };

/// Copies in-scope tensors bit-exactly; re-draws the head from `head_seed`.
void transfer_weights(const CheckpointBundle& from, UNet& to, TransferScope scope, std::uint64_t head_seed);

}  // namespace orgseg
