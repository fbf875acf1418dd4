#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "orgseg/evaluate.hpp"
#include "orgseg/splits.hpp"
#include "orgseg/train.hpp"

namespace orgseg {

enum class ScenarioKind { S1_pretext_fractions = 1, S2_small_labels = 2, S3_200_to_1000 = 3, S4_supervised_fractions = 4 };

std::string_view to_string(ScenarioKind k) noexcept;
ScenarioKind scenario_from_case(int case_number);

/// A pretext run shared by every main-task cell that transfers from it.
struct PretextKey {
  std::string augmentation;
  std::string loss;
  double fraction = 1.0;

  std::string id() const;
  friend bool operator==(const PretextKey&, const PretextKey&) = default;
};

/// One cell of a scenario grid; each cell is trained once per fold.
struct ScenarioConfig {
  ScenarioKind scenario = ScenarioKind::S2_small_labels;
  std::string framework;  // "ssl" or "supervised"
  std::string series;
  EncoderKind encoder = EncoderKind::resnet50;
  bool freeze_encoder = false;
  std::string loss;
  std::optional<PretextKey> pretext;
  long label_budget = 114;
  std::optional<double> supervised_fraction;

  std::string id() const;
  nlohmann::json to_json() const;
};

struct SupervisedVariant {
  EncoderKind encoder = EncoderKind::resnet50;
  bool freeze_encoder = false;
};

/// Declarative grid for one of the four experiment cases.
struct ScenarioGrid {
  int case_number = 2;
  int folds = 5;
  long labels = 114;
  std::vector<double> pretext_fractions{0.1, 0.5, 1.0};
  std::vector<std::string> augmentations;
  std::vector<std::string> pretext_losses{"ssim", "ssim-l1"};
  std::vector<std::string> main_losses{"bce", "dice", "iou"};
  std::vector<long> budgets{200, 300, 400, 500, 600, 700, 800, 900, 1000};
  std::vector<double> supervised_fractions{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  std::vector<long> ssl_reference_budgets{114, 500, 1000};
  std::vector<SupervisedVariant> supervised;
  /// SSL setup used for curve series and reference lines in cases 3 and 4.
  std::string reference_augmentation = "blur";
  std::string reference_pretext_loss = "ssim-l1";
  std::string reference_main_loss = "iou";
  double reference_pretext_fraction = 1.0;
  nlohmann::json pretext_train = nlohmann::json::object();  // TrainConfig overrides
  nlohmann::json main_train = nlohmann::json::object();
  nlohmann::json architecture = nlohmann::json::object();  // ArchitectureSpec overrides
  std::optional<long> eval_limit;
  double threshold = 0.5;
  bool save_checkpoints = true;
  std::uint64_t seed = 26;

  /// Default grid for case 1..4.
  static ScenarioGrid defaults(int case_number);
  /// Overlays `j` on the defaults of its `case`; unknown keys are rejected.
  static ScenarioGrid from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  /// Throws ConfigValidationError.
  void validate() const;

  ArchitectureSpec architecture_spec() const;
  TrainConfig pretext_config(const PretextKey& key) const;
  TrainConfig main_config(const ScenarioConfig& cell) const;
};

std::vector<ScenarioConfig> expand_grid(const ScenarioGrid& grid);
/// Distinct pretext runs needed by `cells`, in first-use order.
std::vector<PretextKey> pretext_runs(const std::vector<ScenarioConfig>& cells);

struct ScenarioOptions {
  std::ostream* log = nullptr;
  /// Reuse finished runs found under the output directory.
  bool resume = true;
};

/// Trains every pretext run (fold = none) and every cell x fold, writing
///   <out>/pretext/<id>/{config.json,record.json,checkpoint/}
///   <out>/main/<cell>/fold<k>/{config.json,record.json,checkpoint/}
/// Main records carry the fold's metrics on the evaluation split.
std::vector<RunRecord> run_scenario(const ScenarioGrid& grid, const DatasetManifest& manifest,
                                    const CropSource& source, const std::filesystem::path& out_dir,
                                    const ScenarioOptions& options = {});

/// Every record.json below `dir`, sorted by path. Relative checkpoint paths
/// are resolved against the record's directory.
std::vector<RunRecord> collect_records(const std::filesystem::path& dir);

struct ReportOptions {
  int folds_expected = 5;
  /// Overlays need checkpoints plus these two.
  const CropSource* source = nullptr;
  const DatasetManifest* manifest = nullptr;
  int overlays_per_row = 1;
  double threshold = 0.5;
};

/// Tables per case (and per augmentation / framework for case 2), F1 curves
/// for cases 3 and 4, overlays from the best fold of each row.
ReportInputs build_report(const std::vector<RunRecord>& records, const ReportOptions& options = {});

}  // namespace orgseg
