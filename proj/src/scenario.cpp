#include "orgseg/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <set>

#include "orgseg/config.hpp"
#include "orgseg/error.hpp"
#include "orgseg/fsutil.hpp"
#include "orgseg/losses.hpp"
#include "orgseg/rng.hpp"

namespace orgseg {
namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(ScenarioKind k) noexcept {
  switch (k) {
    case ScenarioKind::S1_pretext_fractions: return "S1_pretext_fractions";
    case ScenarioKind::S2_small_labels: return "S2_small_labels";
    case ScenarioKind::S3_200_to_1000: return "S3_200_to_1000";
    case ScenarioKind::S4_supervised_fractions: return "S4_supervised_fractions";
  }
  return "?";
}

ScenarioKind scenario_from_case(int case_number) {
  if (case_number < 1 || case_number > 4) {
    throw Error(ErrorKind::ConfigValidationError, "case: must be 1, 2, 3 or 4");
  }
  return static_cast<ScenarioKind>(case_number);
}

namespace {

std::string percent(double f) { return std::to_string(std::lround(f * 100.0)); }

std::string short_aug(const std::string& text) {
  const auto spec = AugmentationSpec::parse(text);
  switch (spec.kind) {
    case AugmentationKind::pixel_drop: return "pd" + percent(spec.drop_fraction);
    case AugmentationKind::gaussian_blur: return "blur";
    case AugmentationKind::sobel: return "sobel";
  }
  return "aug";
}

}  // namespace

std::string PretextKey::id() const { return short_aug(augmentation) + "-" + loss + "-p" + percent(fraction); }

std::string ScenarioConfig::id() const {
  std::string out = "c" + std::to_string(static_cast<int>(scenario)) + "-";
  if (framework == "ssl") {
    out += "ssl-" + pretext->id() + "-" + loss;
  } else {
    out += std::string("sup-") + std::string(to_string(encoder)) + (freeze_encoder ? "-freeze-" : "-nofreeze-") + loss;
  }
  out += supervised_fraction ? "-f" + percent(*supervised_fraction) : "-n" + std::to_string(label_budget);
  return out;
}

json ScenarioConfig::to_json() const {
  json j{{"cell", id()},
         {"case", static_cast<int>(scenario)},
         {"scenario", to_string(scenario)},
         {"framework", framework},
         {"series", series},
         {"encoder", to_string(encoder)},
         {"freeze_encoder", freeze_encoder},
         {"loss", loss},
         {"label_budget", label_budget},
         {"supervised_fraction", supervised_fraction ? json(*supervised_fraction) : json(nullptr)}};
  if (pretext) {
    j["augmentation"] = pretext->augmentation;
    j["pretext_loss"] = pretext->loss;
    j["pretext_fraction"] = pretext->fraction;
  } else {
    j["augmentation"] = "";
    j["pretext_loss"] = nullptr;
    j["pretext_fraction"] = nullptr;
  }
  return j;
}

ScenarioGrid ScenarioGrid::defaults(int case_number) {
  scenario_from_case(case_number);
  ScenarioGrid g;
  g.case_number = case_number;
  switch (case_number) {
    case 1:
      g.augmentations = {"pixel-drop:0.25", "pixel-drop:0.5", "pixel-drop:0.75", "blur", "sobel"};
      break;
    case 2:
      g.augmentations = {"pixel-drop:0.25", "blur"};
      g.supervised = {{EncoderKind::resnet50, true},
                      {EncoderKind::resnet50, false},
                      {EncoderKind::simple_cnn, true},
                      {EncoderKind::simple_cnn, false}};
      break;
    case 3:
      g.supervised = {{EncoderKind::resnet50, false}};
      break;
    case 4:
      g.supervised = {{EncoderKind::resnet50, false}, {EncoderKind::resnet50, true}};
      break;
  }
  return g;
}

json ScenarioGrid::to_json() const {
  json sup = json::array();
  for (const auto& v : supervised) sup.push_back(json{{"encoder", to_string(v.encoder)}, {"freeze_encoder", v.freeze_encoder}});
  return json{{"case", case_number},
              {"folds", folds},
              {"labels", labels},
              {"pretext_fractions", pretext_fractions},
              {"augmentations", augmentations},
              {"pretext_losses", pretext_losses},
              {"main_losses", main_losses},
              {"budgets", budgets},
              {"supervised_fractions", supervised_fractions},
              {"ssl_reference_budgets", ssl_reference_budgets},
              {"supervised", sup},
              {"reference_augmentation", reference_augmentation},
              {"reference_pretext_loss", reference_pretext_loss},
              {"reference_main_loss", reference_main_loss},
              {"reference_pretext_fraction", reference_pretext_fraction},
              {"pretext_train", pretext_train},
              {"main_train", main_train},
              {"architecture", architecture},
              {"eval_limit", eval_limit ? json(*eval_limit) : json(nullptr)},
              {"threshold", threshold},
              {"save_checkpoints", save_checkpoints},
              {"seed", seed}};
}

ScenarioGrid ScenarioGrid::from_json(const json& j) {
  if (!j.is_object() || !j.contains("case")) throw Error(ErrorKind::ConfigValidationError, "case: missing");
  int case_number = 0;
  try {
    case_number = j.at("case").get<int>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::ConfigValidationError, "case: must be an integer");
  }
  const json defaults = ScenarioGrid::defaults(case_number).to_json();
  for (const auto& [key, value] : j.items())
    if (!defaults.contains(key)) throw Error(ErrorKind::ConfigValidationError, key + ": unknown key");
  json full = defaults;
  for (const auto& [key, value] : j.items()) full[key] = value;

  ScenarioGrid g;
  const auto field = [&](const char* key, auto& out) {
    try {
      out = full.at(key).get<std::remove_reference_t<decltype(out)>>();
    } catch (const json::exception& e) {
      throw Error(ErrorKind::ConfigValidationError, std::string(key) + ": " + e.what());
    }
  };
  field("case", g.case_number);
  field("folds", g.folds);
  field("labels", g.labels);
  field("pretext_fractions", g.pretext_fractions);
  field("augmentations", g.augmentations);
  field("pretext_losses", g.pretext_losses);
  field("main_losses", g.main_losses);
  field("budgets", g.budgets);
  field("supervised_fractions", g.supervised_fractions);
  field("ssl_reference_budgets", g.ssl_reference_budgets);
  field("reference_augmentation", g.reference_augmentation);
  field("reference_pretext_loss", g.reference_pretext_loss);
  field("reference_main_loss", g.reference_main_loss);
  field("reference_pretext_fraction", g.reference_pretext_fraction);
  field("threshold", g.threshold);
  field("save_checkpoints", g.save_checkpoints);
  field("seed", g.seed);
  g.pretext_train = full.at("pretext_train");
  g.main_train = full.at("main_train");
  g.architecture = full.at("architecture");
  if (!full.at("eval_limit").is_null()) {
    long limit = 0;
    field("eval_limit", limit);
    g.eval_limit = limit;
  }
  try {
    for (const auto& v : full.at("supervised")) {
      g.supervised.push_back({parse_encoder(v.at("encoder").get<std::string>()), v.at("freeze_encoder").get<bool>()});
    }
  } catch (const std::exception& e) {
    throw Error(ErrorKind::ConfigValidationError, std::string("supervised: ") + e.what());
  }
  g.validate();
  return g;
}

ArchitectureSpec ScenarioGrid::architecture_spec() const {
  ArchitectureSpec spec;
  const json defaults{{"input_size", spec.input_size},
                      {"encoder_blocks", spec.encoder_blocks},
                      {"decoder_blocks", spec.decoder_blocks},
                      {"base_channels", spec.base_channels}};
  check_known_keys(architecture, defaults, "architecture.");
  const json a = merged(defaults, architecture);
  try {
    spec.input_size = a.at("input_size").get<int>();
    spec.encoder_blocks = a.at("encoder_blocks").get<int>();
    spec.decoder_blocks = a.at("decoder_blocks").get<int>();
    spec.base_channels = a.at("base_channels").get<int>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigValidationError, std::string("architecture: ") + e.what());
  }
  return spec;
}

namespace {

[[noreturn]] void bad_config(const std::string& key, const std::string& why) {
  throw Error(ErrorKind::ConfigValidationError, key + ": " + why);
}

TrainConfig config_with(const json& overrides, const char* prefix) {
  json base = TrainConfig{}.to_json();
  check_known_keys(overrides, base, prefix);
  return TrainConfig::from_json(merged(base, overrides));
}

}  // namespace

TrainConfig ScenarioGrid::pretext_config(const PretextKey& key) const {
  TrainConfig c = config_with(pretext_train, "pretext_train.");
  c.task = Task::pretext;
  c.loss = key.loss;
  c.augmentation = AugmentationSpec::parse(key.augmentation);
  c.encoder = EncoderKind::resnet50;
  c.freeze_encoder = false;
  c.seed = seed;
  return c;
}

TrainConfig ScenarioGrid::main_config(const ScenarioConfig& cell) const {
  TrainConfig c = config_with(main_train, "main_train.");
  c.task = Task::main;
  c.loss = cell.loss;
  c.encoder = cell.encoder;
  c.freeze_encoder = cell.freeze_encoder;
  c.augmentation.reset();
  c.seed = seed;
  return c;
}

void ScenarioGrid::validate() const {
  scenario_from_case(case_number);
  if (folds < 2) bad_config("folds", "must be >= 2");
  if (labels < 1) bad_config("labels", "must be >= 1");
  for (double f : pretext_fractions)
    if (!(f > 0.0 && f <= 1.0)) bad_config("pretext_fractions", "values must be in (0, 1]");
  for (const auto& a : augmentations) {
    try {
      AugmentationSpec::parse(a);
    } catch (const Error& e) {
      bad_config("augmentations", e.what());
    }
  }
  const auto loss_kind = [&](const std::string& key, const std::string& text) {
    try {
      return parse_loss(text);
    } catch (const Error& e) {
      bad_config(key, e.what());
    }
  };
  for (const auto& l : pretext_losses)
    if (!is_pretext_loss(loss_kind("pretext_losses", l))) bad_config("pretext_losses", l + " is not a restoration loss");
  for (const auto& l : main_losses)
    if (is_pretext_loss(loss_kind("main_losses", l))) bad_config("main_losses", l + " is not a segmentation loss");
  if (case_number == 3) {
    for (long b : budgets)
      if (b < 200 || b > 1000 || b % 100 != 0) bad_config("budgets", "case 3 budgets lie in 200..1000 step 100");
  }
  if (case_number == 4) {
    for (double f : supervised_fractions) {
      const double tenths = f * 10.0;
      if (std::abs(tenths - std::round(tenths)) > 1e-9 || tenths < 1.0 - 1e-9 || tenths > 10.0 + 1e-9) {
        bad_config("supervised_fractions", "case 4 fractions lie in 0.1..1.0 step 0.1");
      }
    }
  }
  if (!(reference_pretext_fraction > 0.0 && reference_pretext_fraction <= 1.0)) {
    bad_config("reference_pretext_fraction", "must be in (0, 1]");
  }
  try {
    AugmentationSpec::parse(reference_augmentation);
  } catch (const Error& e) {
    bad_config("reference_augmentation", e.what());
  }
  if (!is_pretext_loss(loss_kind("reference_pretext_loss", reference_pretext_loss))) bad_config("reference_pretext_loss", "not a restoration loss");
  if (is_pretext_loss(loss_kind("reference_main_loss", reference_main_loss))) bad_config("reference_main_loss", "not a segmentation loss");
  if (eval_limit && *eval_limit < 1) bad_config("eval_limit", "must be >= 1");
  if (!(threshold >= 0.0 && threshold <= 1.0)) bad_config("threshold", "must be in [0, 1]");
  try {
    architecture_spec().validate();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::ConfigValidationError) throw;
    bad_config("architecture", e.what());
  }
  config_with(pretext_train, "pretext_train.");
  config_with(main_train, "main_train.");
}

std::vector<ScenarioConfig> expand_grid(const ScenarioGrid& g) {
  g.validate();
  const ScenarioKind kind = scenario_from_case(g.case_number);
  std::vector<ScenarioConfig> cells;
  const auto ssl = [&](const std::string& series, const PretextKey& key, const std::string& loss, long budget) {
    ScenarioConfig c;
    c.scenario = kind;
    c.framework = "ssl";
    c.series = series;
    c.encoder = EncoderKind::resnet50;
    c.freeze_encoder = true;
    c.loss = loss;
    c.pretext = key;
    c.label_budget = budget;
    cells.push_back(std::move(c));
  };
  const auto sup = [&](const std::string& series, const SupervisedVariant& v, const std::string& loss, long budget,
                       std::optional<double> fraction) {
    ScenarioConfig c;
    c.scenario = kind;
    c.framework = "supervised";
    c.series = series;
    c.encoder = v.encoder;
    c.freeze_encoder = v.freeze_encoder;
    c.loss = loss;
    c.label_budget = budget;
    c.supervised_fraction = fraction;
    cells.push_back(std::move(c));
  };
  const auto sup_series = [](const SupervisedVariant& v, const std::string& loss) {
    return std::string("supervised-") + std::string(to_string(v.encoder)) + (v.freeze_encoder ? "-freeze-" : "-nofreeze-") + loss;
  };
  const PretextKey reference{g.reference_augmentation, g.reference_pretext_loss, g.reference_pretext_fraction};

  switch (kind) {
    case ScenarioKind::S1_pretext_fractions:
    case ScenarioKind::S2_small_labels:
      for (const auto& aug : g.augmentations)
        for (const auto& pl : g.pretext_losses)
          for (double f : g.pretext_fractions)
            for (const auto& ml : g.main_losses) ssl("ssl-" + short_aug(aug), PretextKey{aug, pl, f}, ml, g.labels);
      for (const auto& v : g.supervised)
        for (const auto& ml : g.main_losses) sup(sup_series(v, ml), v, ml, g.labels, std::nullopt);
      break;
    case ScenarioKind::S3_200_to_1000:
      for (const auto& v : g.supervised)
        for (long b : g.budgets) sup(sup_series(v, g.reference_main_loss), v, g.reference_main_loss, b, std::nullopt);
      for (double f : g.pretext_fractions) {
        const PretextKey key{g.reference_augmentation, g.reference_pretext_loss, f};
        for (long b : g.budgets) ssl("ssl-p" + percent(f), key, g.reference_main_loss, b);
      }
      ssl("ssl-baseline", reference, g.reference_main_loss, g.labels);
      break;
    case ScenarioKind::S4_supervised_fractions:
      for (const auto& v : g.supervised)
        for (const auto& ml : g.main_losses)
          for (double f : g.supervised_fractions) sup(sup_series(v, ml), v, ml, -1, f);
      for (long b : g.ssl_reference_budgets) ssl("ssl-reference", reference, g.reference_main_loss, b);
      break;
  }
  return cells;
}

std::vector<PretextKey> pretext_runs(const std::vector<ScenarioConfig>& cells) {
  std::vector<PretextKey> keys;
  for (const auto& c : cells)
    if (c.pretext && std::find(keys.begin(), keys.end(), *c.pretext) == keys.end()) keys.push_back(*c.pretext);
  return keys;
}

namespace {

std::vector<std::string> evaluation_ids(const DatasetManifest& manifest, std::uint64_t seed, std::optional<long> limit) {
  auto ids = manifest.ids(Split::evaluation);
  Rng rng(derive_seed(seed, "eval-order"));
  rng.shuffle(std::span(ids));
  if (limit && static_cast<std::size_t>(*limit) < ids.size()) ids.resize(static_cast<std::size_t>(*limit));
  return ids;
}

json run_config_json(const TrainConfig& cfg, const ArchitectureSpec& spec, const json& info) {
  return json{{"train", cfg.to_json()}, {"architecture", to_json(spec)}, {"info", info}};
}

/// Loads a finished run when resuming. Throws ConfigMismatch when the run on
/// disk was made with a different configuration.
std::optional<RunRecord> existing_run(const fs::path& dir, const json& config, bool resume) {
  if (!resume || !fs::exists(dir / "record.json") || !fs::exists(dir / "config.json")) return std::nullopt;
  const json on_disk = json::parse(read_file(dir / "config.json"));
  if (on_disk != config) {
    throw Error(ErrorKind::ConfigMismatch, "existing run in " + dir.string() + " was made with a different configuration");
  }
  return RunRecord::from_json(json::parse(read_file(dir / "record.json")));
}

void write_run(const fs::path& dir, const json& config, RunRecord& record, const CheckpointBundle* best) {
  fs::create_directories(dir);
  write_file_atomic(dir / "config.json", config.dump(2) + "\n");
  if (best) {
    write_checkpoint(dir / "checkpoint", *best);
    record.checkpoint = "checkpoint";
  } else {
    record.checkpoint.clear();
  }
  write_file_atomic(dir / "record.json", record.to_json().dump(2) + "\n");
}

}  // namespace

std::vector<RunRecord> run_scenario(const ScenarioGrid& grid, const DatasetManifest& manifest, const CropSource& source,
                                    const fs::path& out_dir, const ScenarioOptions& options) {
  const auto cells = expand_grid(grid);
  const ArchitectureSpec spec = grid.architecture_spec();
  fs::create_directories(out_dir);
  write_file_atomic(out_dir / "scenario.json", grid.to_json().dump(2) + "\n");
  const auto eval_ids = evaluation_ids(manifest, grid.seed, grid.eval_limit);
  if (eval_ids.empty()) throw Error(ErrorKind::EmptyDataset, "evaluation split is empty");

  std::vector<RunRecord> records;
  std::map<std::string, CheckpointBundle> pretext_bundles;
  for (const auto& key : pretext_runs(cells)) {
    const fs::path dir = out_dir / "pretext" / key.id();
    const TrainConfig cfg = grid.pretext_config(key);
    const json info{{"kind", "pretext"},
                    {"case", grid.case_number},
                    {"pretext_id", key.id()},
                    {"augmentation", key.augmentation},
                    {"pretext_loss", key.loss},
                    {"pretext_fraction", key.fraction}};
    const json config = run_config_json(cfg, spec, info);
    if (auto done = existing_run(dir, config, options.resume); done && fs::exists(dir / "checkpoint")) {
      pretext_bundles.emplace(key.id(), load_checkpoint(dir / "checkpoint"));
      records.push_back(std::move(*done));
      continue;
    }
    const auto subset = pretext_subset(manifest, key.fraction);
    if (options.log) *options.log << "pretext " << key.id() << ": " << subset.train.size() << " train / " << subset.validate.size() << " validate\n";
    TrainOptions topt;
    topt.log = options.log;
    TrainResult result = train_pretext(manifest, source, subset.train, subset.validate, spec, cfg, topt);
    result.record.info = info;
    write_run(dir, config, result.record, &result.best);
    pretext_bundles.emplace(key.id(), std::move(result.best));
    records.push_back(std::move(result.record));
  }

  for (const auto& cell : cells) {
    const long budget =
        cell.supervised_fraction ? static_cast<long>(budget_for_fraction(manifest, *cell.supervised_fraction)) : cell.label_budget;
    const auto labels = label_budget_subset(manifest, static_cast<std::size_t>(budget));
    const auto folds = make_folds(labels, grid.folds, grid.seed);
    const TrainConfig cfg = grid.main_config(cell);
    json info = cell.to_json();
    info["kind"] = "main";
    info["label_budget"] = budget;
    const CheckpointBundle* pretext = cell.pretext ? &pretext_bundles.at(cell.pretext->id()) : nullptr;
    for (int f = 0; f < grid.folds; ++f) {
      const fs::path dir = out_dir / "main" / cell.id() / ("fold" + std::to_string(f));
      const json config = run_config_json(cfg, spec, info);
      if (auto done = existing_run(dir, config, options.resume)) {
        records.push_back(std::move(*done));
        continue;
      }
      const FoldSplit split = fold_split(folds, f);
      TrainOptions topt;
      topt.fold = f;
      TrainResult result = train_main(manifest, source, split.train, split.validate, pretext, spec, cfg, topt);
      UNet model(result.best.meta.architecture, 0);
      restore_checkpoint(result.best, model);
      if (result.best.meta.architecture.freeze_encoder) model.freeze_encoder();
      const MetricsRecord m = evaluate_model(model, source, eval_ids, grid.threshold, f);
      result.record.info = info;
      result.record.metrics = m.to_json();
      if (options.log) {
        *options.log << cell.id() << " fold " << f << ": best epoch " << result.record.best_epoch << ", F1 "
                     << m.metrics.f1 << '\n';
      }
      write_run(dir, config, result.record, grid.save_checkpoints ? &result.best : nullptr);
      records.push_back(std::move(result.record));
    }
  }
  return records;
}

std::vector<RunRecord> collect_records(const fs::path& dir) {
  std::vector<fs::path> paths;
  if (fs::exists(dir)) {
    for (const auto& e : fs::recursive_directory_iterator(dir))
      if (e.is_regular_file() && e.path().filename() == "record.json") paths.push_back(e.path());
  }
  std::sort(paths.begin(), paths.end());
  std::vector<RunRecord> out;
  for (const auto& p : paths) {
    RunRecord r = RunRecord::from_json(json::parse(read_file(p)));
    if (!r.checkpoint.empty() && fs::path(r.checkpoint).is_relative()) r.checkpoint = (p.parent_path() / r.checkpoint).string();
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

struct CellGroup {
  json info;
  std::vector<const RunRecord*> runs;
};

ReportRow row_for(const CellGroup& g, int folds_expected) {
  ReportRow row;
  const json& i = g.info;
  row.config_id = i.at("cell").get<std::string>();
  row.framework = i.at("framework").get<std::string>();
  row.encoder = i.at("encoder").get<std::string>();
  row.freeze_encoder = i.at("freeze_encoder").get<bool>();
  row.loss = i.at("loss").get<std::string>();
  row.augmentation = i.at("augmentation").get<std::string>();
  if (!i.at("pretext_fraction").is_null()) row.pretext_fraction = i.at("pretext_fraction").get<double>();
  row.budget = i.at("label_budget").get<long>();
  row.folds_expected = folds_expected;
  std::vector<MetricsRecord> folds;
  for (const RunRecord* r : g.runs)
    if (!r->metrics.empty()) folds.push_back(MetricsRecord::from_json(r->metrics));
  aggregate(row, folds);
  return row;
}

std::string safe_name(std::string s) {
  for (char& c : s)
    if (c == ':' || c == '/' || c == ' ') c = '-';
  return s;
}

}  // namespace

ReportInputs build_report(const std::vector<RunRecord>& records, const ReportOptions& options) {
  // case -> cell id -> runs, cells kept in first-seen order
  std::map<int, std::vector<std::string>> order;
  std::map<int, std::map<std::string, CellGroup>> groups;
  for (const auto& r : records) {
    if (r.info.value("kind", "") != "main" || !r.info.contains("cell")) continue;
    const int c = r.info.at("case").get<int>();
    const auto id = r.info.at("cell").get<std::string>();
    auto& g = groups[c][id];
    if (g.runs.empty()) {
      g.info = r.info;
      order[c].push_back(id);
    }
    g.runs.push_back(&r);
  }

  ReportInputs out;
  out.notes = {
      "metrics are macro averages of per-image scores on the evaluation split",
      "folds partition the labelled training set; each fold validates on one part and trains on the rest",
  };
  std::map<std::string, int> table_case;
  for (const auto& [c, ids] : order) {
    std::vector<ReportRow> all;
    for (const auto& id : ids) all.push_back(row_for(groups[c][id], options.folds_expected));
    const std::string prefix = "case" + std::to_string(c);
    if (c == 2) {
      std::map<std::string, std::vector<ReportRow>> split;
      for (const auto& row : all) {
        const auto name = row.framework == "ssl" ? prefix + "_ssl_" + safe_name(row.augmentation) : prefix + "_supervised";
        split[name].push_back(row);
      }
      for (auto& [name, rows] : split) {
        table_case[name] = c;
        out.tables[name] = std::move(rows);
      }
    } else {
      const char* names[] = {"runs", "case1_pretext_fractions", "", "case3_budgets", "case4_supervised_fractions"};
      const std::string name = c >= 0 && c <= 4 ? names[c] : prefix;
      table_case[name] = c;
      out.tables[name] = all;
    }

    if (c == 3 || c == 4) {
      // series -> x -> row
      std::map<std::string, std::vector<const ReportRow*>> series;
      std::vector<const ReportRow*> references;
      std::map<std::string, std::string> series_of;
      for (const auto& id : ids) series_of[id] = groups[c][id].info.at("series").get<std::string>();
      for (const auto& [name, rows] : out.tables) {
        if (table_case[name] != c) continue;
        for (const auto& row : rows) {
          const auto& s = series_of[row.config_id];
          if (s == "ssl-baseline" || s == "ssl-reference") references.push_back(&row);
          else series[s].push_back(&row);
        }
      }
      const auto per_fold_f1 = [&](const std::string& id) {
        std::vector<double> v;
        for (const RunRecord* r : groups[c][id].runs)
          if (!r->metrics.empty()) v.push_back(r->metrics.at("f1").get<double>());
        return v;
      };
      const auto make_curve = [&](const std::string& name, const std::string& s, const std::vector<const ReportRow*>& rows) {
        Curve curve;
        curve.name = name;
        curve.x_label = c == 3 ? "training images" : "percent of main split";
        CurveSeries cs;
        cs.name = s;
        for (const ReportRow* row : rows) {
          const auto& info = groups[c][row->config_id].info;
          cs.x.push_back(c == 3 ? static_cast<double>(*row->budget)
                                : std::round(info.at("supervised_fraction").get<double>() * 100.0));
          cs.per_fold.push_back(per_fold_f1(row->config_id));
          cs.summary.push_back(row->scores.at("f1"));
        }
        curve.series.push_back(std::move(cs));
        for (const ReportRow* ref : references) {
          const Summary& f1 = ref->scores.at("f1");
          if (c == 3) curve.baselines.push_back({f1.best, "SSL " + std::to_string(*ref->budget) + " best"});
          else curve.baselines.push_back({f1.mean, "SSL-" + std::to_string(*ref->budget)});
        }
        return curve;
      };
      for (const auto& [s, rows] : series) out.curves.push_back(make_curve(prefix + "_" + s, s, rows));
    }
  }

  if (options.source && options.manifest) {
    const auto eval_ids = evaluation_ids(*options.manifest, options.manifest->seed, options.overlays_per_row);
    for (const auto& [name, rows] : out.tables) {
      for (const auto& row : rows) {
        const int c = table_case[name];
        const auto& g = groups[c][row.config_id];
        const RunRecord* best = nullptr;
        for (const RunRecord* r : g.runs) {
          if (r->metrics.empty() || r->checkpoint.empty() || !fs::exists(r->checkpoint)) continue;
          if (!best || r->metrics.at("f1").get<double>() > best->metrics.at("f1").get<double>()) best = r;
        }
        if (!best) continue;
        const CheckpointBundle bundle = load_checkpoint(best->checkpoint);
        UNet model(bundle.meta.architecture, 0);
        restore_checkpoint(bundle, model);
        const auto preds = predict(model, *options.source, eval_ids);
        for (std::size_t i = 0; i < eval_ids.size(); ++i) {
          const CropPair pair = fit_to(options.source->load(eval_ids[i]), model.spec().input_size);
          out.overlays.push_back({row.config_id + "_fold" + std::to_string(best->fold.value_or(0)) + "_" + std::to_string(i),
                                  pair.image, pair.mask, binarize(preds[i], options.threshold)});
        }
      }
    }
  }
  return out;
}

}  // namespace orgseg
