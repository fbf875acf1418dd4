#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "orgseg/augment.hpp"
#include "orgseg/checkpoint.hpp"
#include "orgseg/dataset.hpp"
#include "orgseg/splits.hpp"
#include "orgseg/unet.hpp"

namespace orgseg {

enum class Task { pretext, main };
std::string_view to_string(Task t) noexcept;

struct TrainConfig {
  int epochs = 50;
  int batch_size = 16;
  std::string optimizer = "adam";
  double learning_rate = 0.003;
  std::uint64_t seed = 26;
  std::string loss = "iou";
  Task task = Task::main;
  bool freeze_encoder = false;
  EncoderKind encoder = EncoderKind::resnet50;
  std::optional<AugmentationSpec> augmentation;
  /// One corruption per crop for the whole run instead of a fresh one per epoch.
  bool fixed_corruption = false;
  /// SSL main runs: "pretext" keeps the pretext decoder, "fresh" re-draws it.
  std::string decoder_init = "pretext";

  /// Throws ConfigValidationError naming the offending key.
  void validate() const;
  nlohmann::json to_json() const;
  /// Unknown keys are rejected with ConfigValidationError.
  static TrainConfig from_json(const nlohmann::json& j);
};

struct RunRecord {
  TrainConfig config;
  std::optional<int> fold;
  std::vector<double> train_losses;
  std::vector<double> val_losses;
  int best_epoch = -1;
  std::string checkpoint;  // directory, relative to the record
  double wall_seconds = 0.0;
  nlohmann::json info = nlohmann::json::object();     // scenario cell, budget, series
  nlohmann::json metrics = nlohmann::json::object();  // filled by evaluation

  nlohmann::json to_json() const;
  static RunRecord from_json(const nlohmann::json& j);
};

/// Called after every epoch; returning false ends training early.
using EpochCallback = std::function<bool(int epoch, UNet& model, double train_loss, double val_loss)>;

struct TrainOptions {
  std::optional<int> fold;
  EpochCallback on_epoch;
  std::ostream* log = nullptr;
};

struct TrainResult {
  CheckpointBundle best;
  RunRecord record;
};

/// Restoration pretraining: corrupt, forward, compare with the clean crop.
/// Ids must come from the pretext split. Keeps the best validation epoch
/// (training loss when `val_ids` is empty).
TrainResult train_pretext(const DatasetManifest& manifest, const CropSource& source,
                          const std::vector<std::string>& train_ids, const std::vector<std::string>& val_ids,
                          ArchitectureSpec spec, const TrainConfig& cfg, const TrainOptions& options = {});

/// Segmentation training on main-split ids. With a pretext checkpoint the
/// encoder is transferred and frozen (SSL); without one the model starts
/// from random weights (supervised).
TrainResult train_main(const DatasetManifest& manifest, const CropSource& source,
                       const std::vector<std::string>& train_ids, const std::vector<std::string>& val_ids,
                       const CheckpointBundle* pretext, ArchitectureSpec spec, const TrainConfig& cfg,
                       const TrainOptions& options = {});

/// Model forward in evaluation mode over `ids`, in batches; returns the
/// (B=1) outputs in id order.
std::vector<Image2D> predict(UNet& model, const CropSource& source, const std::vector<std::string>& ids,
                             int batch_size = 16);

}  // namespace orgseg
