#include "orgseg/splits.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <tuple>

#include "orgseg/error.hpp"
#include "orgseg/fsutil.hpp"
#include "orgseg/rng.hpp"

namespace orgseg {
using nlohmann::json;

std::string_view to_string(Split s) noexcept {
  switch (s) {
    case Split::pretext: return "pretext";
    case Split::main: return "main";
    case Split::evaluation: return "evaluation";
  }
  return "?";
}

Split parse_split(std::string_view text) {
  if (text == "pretext") return Split::pretext;
  if (text == "main") return Split::main;
  if (text == "evaluation") return Split::evaluation;
  throw Error(ErrorKind::InvalidSpec, "unknown split " + std::string(text));
}

std::vector<std::string> DatasetManifest::ids(Split split) const {
  std::vector<std::string> out;
  for (const auto& e : entries)
    if (e.split == split) out.push_back(e.crop_id);
  return out;
}

const ManifestEntry* DatasetManifest::find(std::string_view id) const {
  for (const auto& e : entries)
    if (e.crop_id == id) return &e;
  return nullptr;
}

json DatasetManifest::to_json() const {
  json list = json::array();
  for (const auto& e : entries) {
    list.push_back(json{{"crop_id", e.crop_id},
                        {"source_id", e.info.source_id},
                        {"slice_index", e.info.slice_index},
                        {"window_x", e.info.window_x},
                        {"window_y", e.info.window_y},
                        {"rotation_deg", e.info.rotation_deg},
                        {"object_fraction", e.info.object_fraction},
                        {"split", to_string(e.split)},
                        {"fold", e.fold ? json(*e.fold) : json(nullptr)}});
  }
  return json{{"entries", list}, {"seed", seed}, {"created_from", created_from}};
}

DatasetManifest DatasetManifest::from_json(const json& j) {
  DatasetManifest m;
  try {
    m.seed = j.at("seed").get<std::uint64_t>();
    m.created_from = j.at("created_from").get<std::string>();
    for (const auto& e : j.at("entries")) {
      ManifestEntry entry;
      entry.crop_id = e.at("crop_id").get<std::string>();
      entry.info.source_id = e.at("source_id").get<std::string>();
      entry.info.slice_index = e.at("slice_index").get<int>();
      entry.info.window_x = e.at("window_x").get<int>();
      entry.info.window_y = e.at("window_y").get<int>();
      entry.info.rotation_deg = e.at("rotation_deg").get<int>();
      entry.info.object_fraction = e.at("object_fraction").get<double>();
      entry.split = parse_split(e.at("split").get<std::string>());
      if (!e.at("fold").is_null()) entry.fold = e.at("fold").get<int>();
      m.entries.push_back(std::move(entry));
    }
  } catch (const json::exception& ex) {
    throw Error(ErrorKind::InvalidSpec, std::string("manifest: ") + ex.what());
  }
  return m;
}

std::string manifest_text(const DatasetManifest& manifest) { return manifest.to_json().dump(2) + "\n"; }

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  write_file_atomic(path, manifest_text(manifest));
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  try {
    return DatasetManifest::from_json(json::parse(read_file(path)));
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::InvalidSpec, path.string() + ": " + e.what());
  }
}

std::string config_hash(const json& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(config.dump())));
  return buf;
}

DatasetManifest make_splits(const std::vector<CropInfo>& crops, std::uint64_t seed, std::string created_from) {
  if (crops.empty()) throw Error(ErrorKind::EmptyDataset, "no crops to split");

  // source -> window key -> rotations present; maps keep the order independent of input order
  std::map<std::string, std::map<std::tuple<int, int, int>, std::vector<CropInfo>>> by_source;
  for (const auto& c : crops) by_source[c.source_id][{c.slice_index, c.window_y, c.window_x}].push_back(c);

  DatasetManifest manifest;
  manifest.seed = seed;
  manifest.created_from = std::move(created_from);
  for (auto& [source, windows] : by_source) {
    std::vector<std::vector<CropInfo>*> order;
    for (auto& [key, rotations] : windows) {
      std::sort(rotations.begin(), rotations.end(),
                [](const CropInfo& a, const CropInfo& b) { return a.rotation_deg < b.rotation_deg; });
      order.push_back(&rotations);
    }
    Rng rng(derive_seed(seed, "splits", source));
    rng.shuffle(std::span(order));
    const auto n = static_cast<double>(order.size());
    const auto n_pre = static_cast<std::size_t>(std::llround(0.4 * n));
    const auto n_pre_main = static_cast<std::size_t>(std::llround(0.8 * n));
    for (std::size_t i = 0; i < order.size(); ++i) {
      const Split split = i < n_pre ? Split::pretext : (i < n_pre_main ? Split::main : Split::evaluation);
      for (const auto& info : *order[i]) manifest.entries.push_back({crop_id(info), info, split, std::nullopt});
    }
  }
  return manifest;
}

DatasetManifest make_splits(const std::vector<CropRecord>& crops, std::uint64_t seed, std::string created_from) {
  std::vector<CropInfo> infos;
  infos.reserve(crops.size());
  for (const auto& c : crops) infos.push_back(info_of(c));
  return make_splits(infos, seed, std::move(created_from));
}

namespace {

std::vector<std::string> permuted(std::vector<std::string> ids, std::uint64_t seed) {
  Rng rng(seed);
  rng.shuffle(std::span(ids));
  return ids;
}

}  // namespace

std::pair<std::size_t, std::size_t> pretext_subset_sizes(std::size_t n, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw Error(ErrorKind::FractionOutOfRange, "pretext fraction must be in (0, 1], got " + std::to_string(fraction));
  }
  // the small slack keeps 0.1 * 40631 = 4063.1 from rounding the wrong way on exact products
  const auto m = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
  const auto train = static_cast<std::size_t>(std::floor(0.8 * static_cast<double>(m) + 1e-9));
  return {train, m - train};
}

PretextSubset pretext_subset(const DatasetManifest& manifest, double fraction) {
  const auto pool = permuted(manifest.ids(Split::pretext), derive_seed(manifest.seed, "pretext-subset"));
  const auto [train, validate] = pretext_subset_sizes(pool.size(), fraction);
  PretextSubset out;
  out.train.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(train));
  out.validate.assign(pool.begin() + static_cast<std::ptrdiff_t>(train),
                      pool.begin() + static_cast<std::ptrdiff_t>(train + validate));
  return out;
}

std::vector<std::string> label_budget_subset(const DatasetManifest& manifest, std::size_t n) {
  auto pool = manifest.ids(Split::main);
  if (n > pool.size()) {
    throw Error(ErrorKind::BudgetTooLarge,
                "label budget " + std::to_string(n) + " exceeds main split of " + std::to_string(pool.size()));
  }
  pool = permuted(std::move(pool), derive_seed(manifest.seed, "label-budget"));
  pool.resize(n);
  return pool;
}

std::size_t budget_for_fraction(const DatasetManifest& manifest, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw Error(ErrorKind::FractionOutOfRange, "label fraction must be in (0, 1], got " + std::to_string(fraction));
  }
  return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(manifest.ids(Split::main).size())));
}

std::vector<std::vector<std::string>> make_folds(const std::vector<std::string>& ids, int k, std::uint64_t seed) {
  if (k < 2 || ids.size() < static_cast<std::size_t>(k)) {
    throw Error(ErrorKind::TooFewItems,
                std::to_string(ids.size()) + " items cannot make " + std::to_string(k) + " folds");
  }
  const auto pool = permuted(ids, derive_seed(seed, "folds"));
  const std::size_t base = pool.size() / k, extra = pool.size() % k;
  std::vector<std::vector<std::string>> folds(k);
  std::size_t pos = 0;
  for (int f = 0; f < k; ++f) {
    const std::size_t len = base + (static_cast<std::size_t>(f) < extra ? 1 : 0);
    folds[f].assign(pool.begin() + static_cast<std::ptrdiff_t>(pos), pool.begin() + static_cast<std::ptrdiff_t>(pos + len));
    pos += len;
  }
  return folds;
}

FoldSplit fold_split(const std::vector<std::vector<std::string>>& folds, int i) {
  if (i < 0 || i >= static_cast<int>(folds.size())) throw Error(ErrorKind::InvalidSpec, "fold index out of range");
  FoldSplit out;
  for (int f = 0; f < static_cast<int>(folds.size()); ++f) {
    auto& dst = f == i ? out.validate : out.train;
    dst.insert(dst.end(), folds[f].begin(), folds[f].end());
  }
  return out;
}

}  // namespace orgseg
