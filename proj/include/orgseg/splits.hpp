#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "orgseg/dataset.hpp"

namespace orgseg {

enum class Split { pretext, main, evaluation };

std::string_view to_string(Split s) noexcept;
Split parse_split(std::string_view text);

struct ManifestEntry {
  std::string crop_id;
  CropInfo info;
  Split split = Split::pretext;
  std::optional<int> fold;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::uint64_t seed = 26;
  std::string created_from;  // hash of the generating config

  std::vector<std::string> ids(Split split) const;
  const ManifestEntry* find(std::string_view id) const;

  nlohmann::json to_json() const;
  static DatasetManifest from_json(const nlohmann::json& j);
};

/// Stable text form (sorted keys, two-space indent, trailing newline).
std::string manifest_text(const DatasetManifest& manifest);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& path);

/// 16 hex digits of FNV-1a over the compact dump of `config`.
std::string config_hash(const nlohmann::json& config);

/// Per source: seeded shuffle of windows, 40/40/20 into pretext/main/evaluation.
/// Every rotation of a window lands in that window's split.
DatasetManifest make_splits(const std::vector<CropInfo>& crops, std::uint64_t seed = 26,
                            std::string created_from = {});
DatasetManifest make_splits(const std::vector<CropRecord>& crops, std::uint64_t seed = 26,
                            std::string created_from = {});

struct PretextSubset {
  std::vector<std::string> train;
  std::vector<std::string> validate;
};

/// Sizes for a pool of n: m = floor(f*n) taken, floor(0.8*m) of them train.
/// Returns (train, validate).
std::pair<std::size_t, std::size_t> pretext_subset_sizes(std::size_t n, double fraction);

/// Prefix of one seeded permutation of the pretext split, so smaller
/// fractions nest inside larger ones. Throws FractionOutOfRange.
PretextSubset pretext_subset(const DatasetManifest& manifest, double fraction);

/// First n of a seeded permutation of the main split. Throws BudgetTooLarge.
std::vector<std::string> label_budget_subset(const DatasetManifest& manifest, std::size_t n);

/// Budget for a fraction of the main split, rounded to nearest.
std::size_t budget_for_fraction(const DatasetManifest& manifest, double fraction);

/// Seeded shuffle, then k contiguous folds; the first n mod k folds get the
/// extra item. Throws TooFewItems.
std::vector<std::vector<std::string>> make_folds(const std::vector<std::string>& ids, int k = 5,
                                                 std::uint64_t seed = 26);

struct FoldSplit {
  std::vector<std::string> train;
  std::vector<std::string> validate;
};

/// Fold i validates on folds[i] and trains on the others, in order.
FoldSplit fold_split(const std::vector<std::vector<std::string>>& folds, int i);

}  // namespace orgseg
