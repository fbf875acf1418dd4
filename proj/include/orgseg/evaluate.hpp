#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "orgseg/dataset.hpp"
#include "orgseg/image.hpp"
#include "orgseg/unet.hpp"

namespace orgseg {

/// pixel >= threshold -> 1
Mask2D binarize(const Image2D& pred, double threshold = 0.5);

struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::uint64_t total() const noexcept { return tp + fp + fn + tn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) noexcept {
    tp += o.tp, fp += o.fp, fn += o.fn, tn += o.tn;
    return *this;
  }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// Throws DimensionMismatch.
ConfusionCounts confusion(const Mask2D& y, const Mask2D& y_hat);

struct Metrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double jaccard = 0.0;
};

/// Both masks empty (tp+fp+fn = 0) scores 1 everywhere; otherwise an
/// undefined ratio scores 0.
Metrics metrics(const ConfusionCounts& c);

enum class Averaging { macro, micro };

/// Macro: mean of per-image metrics. Micro: metrics of the pooled counts.
Metrics average(const std::vector<ConfusionCounts>& per_image, Averaging mode = Averaging::macro);

struct MetricsRecord {
  Metrics metrics;
  std::vector<ConfusionCounts> per_image;
  std::optional<int> fold;

  nlohmann::json to_json() const;
  static MetricsRecord from_json(const nlohmann::json& j);
};

MetricsRecord evaluate_masks(const std::vector<Mask2D>& truth, const std::vector<Mask2D>& pred,
                             std::optional<int> fold = {}, Averaging mode = Averaging::macro);

/// Predicts every id in evaluation mode and scores it against its mask.
MetricsRecord evaluate_model(UNet& model, const CropSource& source, const std::vector<std::string>& ids,
                             double threshold = 0.5, std::optional<int> fold = {},
                             Averaging mode = Averaging::macro);

/// Best, mean and sample standard deviation over folds.
struct Summary {
  double best = 0.0;
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
};

Summary summarize(const std::vector<double>& fold_scores);

struct ReportRow {
  std::string config_id;
  std::string framework;  // "ssl" or "supervised"
  std::string encoder;
  bool freeze_encoder = false;
  std::string loss;
  std::string augmentation;
  std::optional<double> pretext_fraction;
  std::optional<long> budget;
  int folds_expected = 5;
  std::vector<int> missing_folds;
  std::map<std::string, Summary> scores;  // keyed by metric name
};

inline const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names{"f1", "accuracy", "precision", "recall", "jaccard"};
  return names;
}
double metric_value(const Metrics& m, const std::string& name);

/// Fills `row.scores` from per-fold records and flags folds in [0, expected)
/// that have no record.
void aggregate(ReportRow& row, const std::vector<MetricsRecord>& folds);

struct CurveSeries {
  std::string name;
  std::vector<double> x;
  std::vector<std::vector<double>> per_fold;  // f1 per fold at each x
  std::vector<Summary> summary;               // over folds at each x
};

struct Baseline {
  double value = 0.0;
  std::string label;
};

struct Curve {
  std::string name;
  std::string x_label;
  std::vector<CurveSeries> series;
  std::vector<Baseline> baselines;  // horizontal reference lines, drawn dotted
};

struct Overlay {
  std::string name;
  Image2D input;
  Mask2D truth;
  Mask2D predicted;
};

struct ReportInputs {
  std::map<std::string, std::vector<ReportRow>> tables;
  std::vector<Curve> curves;
  std::vector<Overlay> overlays;
  Averaging averaging = Averaging::macro;
  std::vector<std::string> notes;
};

std::string table_csv(const std::vector<ReportRow>& rows);
nlohmann::json table_json(const std::vector<ReportRow>& rows);
nlohmann::json curve_json(const Curve& curve);

/// Writes tables/<name>.{csv,json}, curves/<name>.{json,png},
/// overlays/<name>.png and report.json. Throws IncompleteRuns after writing
/// when any row is missing folds.
void emit_report(const ReportInputs& inputs, const std::filesystem::path& out_dir);

/// input | true mask | predicted mask | overlay (TP green, FP red, FN blue)
void write_overlay_png(const std::filesystem::path& path, const Overlay& overlay);

}  // namespace orgseg
