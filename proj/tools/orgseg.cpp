// Command-line entry point: orgseg <subcommand> [options]
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <memory>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "orgseg/checkpoint.hpp"
#include "orgseg/config.hpp"
#include "orgseg/dataset.hpp"
#include "orgseg/error.hpp"
#include "orgseg/evaluate.hpp"
#include "orgseg/fsutil.hpp"
#include "orgseg/imaging.hpp"
#include "orgseg/kernels.hpp"
#include "orgseg/scenario.hpp"
#include "orgseg/splits.hpp"
#include "orgseg/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace orgseg;

namespace {

struct Common {
  std::string workspace;
  std::uint64_t seed = 26;
  bool seed_given = false;
  std::string config_path;
  std::vector<std::string> sets;
  std::string kernels;
  bool quiet = false;

  fs::path path(const json& p) const {
    fs::path out(p.get<std::string>());
    return out.is_absolute() ? out : fs::path(workspace) / out;
  }
  std::ostream* log() const { return quiet ? nullptr : &std::cerr; }
};

/// defaults <- config file <- --set overrides <- explicit flags
json resolve(const json& defaults, const Common& common, const json& flags) {
  json cfg = defaults;
  if (!common.config_path.empty()) {
    json file;
    try {
      file = json::parse(read_file(common.path(common.config_path)));
    } catch (const json::parse_error& e) {
      throw Error(ErrorKind::ConfigValidationError, common.config_path + ": " + e.what());
    }
    check_known_keys(file, defaults);
    cfg = merged(cfg, file);
  }
  apply_overrides(cfg, common.sets);
  cfg = merged(cfg, flags);
  return cfg;
}

template <class T>
T get(const json& cfg, const char* key) {
  try {
    return cfg.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigValidationError, std::string(key) + ": " + e.what());
  }
}

json architecture_defaults() {
  const ArchitectureSpec spec;
  return json{{"input_size", spec.input_size},
              {"encoder_blocks", spec.encoder_blocks},
              {"decoder_blocks", spec.decoder_blocks},
              {"base_channels", spec.base_channels}};
}

ArchitectureSpec architecture_from(const json& a) {
  ArchitectureSpec spec;
  check_known_keys(a, architecture_defaults(), "architecture.");
  spec.input_size = get<int>(a, "input_size");
  spec.encoder_blocks = get<int>(a, "encoder_blocks");
  spec.decoder_blocks = get<int>(a, "decoder_blocks");
  spec.base_channels = get<int>(a, "base_channels");
  try {
    spec.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::ConfigValidationError, std::string("architecture: ") + e.what());
  }
  return spec;
}

TrainConfig train_config_from(const json& t) {
  check_known_keys(t, TrainConfig{}.to_json(), "train.");
  return TrainConfig::from_json(merged(TrainConfig{}.to_json(), t));
}

void write_resolved(const fs::path& path, const json& cfg) { write_file_atomic(path, cfg.dump(2) + "\n"); }

std::string percent(double f) { return std::to_string(std::lround(f * 100.0)); }

// ---------------------------------------------------------------------------

int cmd_synth(const Common& c, const json& flags) {
  const SynthParams d;
  const json defaults{{"n_stacks", d.n_stacks},         {"slices_per_stack", d.slices_per_stack},
                      {"width", d.width},               {"height", d.height},
                      {"min_blobs", d.min_blobs},       {"max_blobs", d.max_blobs},
                      {"min_radius_frac", d.min_radius_frac}, {"max_radius_frac", d.max_radius_frac},
                      {"noise_sigma", d.noise_sigma},   {"seed", d.seed},
                      {"out", "data/raw"}};
  json cfg = resolve(defaults, c, flags);
  if (c.seed_given) cfg["seed"] = c.seed;
  SynthParams p;
  p.n_stacks = get<int>(cfg, "n_stacks");
  p.slices_per_stack = get<int>(cfg, "slices_per_stack");
  p.width = get<int>(cfg, "width");
  p.height = get<int>(cfg, "height");
  p.min_blobs = get<int>(cfg, "min_blobs");
  p.max_blobs = get<int>(cfg, "max_blobs");
  p.min_radius_frac = get<double>(cfg, "min_radius_frac");
  p.max_radius_frac = get<double>(cfg, "max_radius_frac");
  p.noise_sigma = get<double>(cfg, "noise_sigma");
  p.seed = get<std::uint64_t>(cfg, "seed");
  if (p.n_stacks < 1 || p.slices_per_stack < 1 || p.width < 8 || p.height < 8 || p.min_blobs < 0 ||
      p.max_blobs < p.min_blobs) {
    throw Error(ErrorKind::ConfigValidationError, "synth: counts and sizes must be positive and ordered");
  }
  const fs::path out = c.path(cfg["out"]);
  const SynthDataset data = synthesize_dataset(p);
  for (std::size_t i = 0; i < data.images.size(); ++i) write_stack_layout(out, data.images[i], data.mask_slices(i));
  write_resolved(out / "synth.config.json", cfg);
  std::cout << "wrote " << data.images.size() << " stacks to " << out.string() << '\n';
  return 0;
}

int cmd_prepare(const Common& c, const json& flags) {
  const TilingParams d;
  const json defaults{{"raw", "data/raw"},   {"format", "raster_dir"}, {"window", d.window},
                      {"stride", d.stride},  {"resize", d.resize_to},  {"min_object_frac", d.min_object_fraction},
                      {"out", "data/crops"}};
  const json cfg = resolve(defaults, c, flags);
  TilingParams t;
  t.window = get<int>(cfg, "window");
  t.stride = get<int>(cfg, "stride");
  t.resize_to = get<int>(cfg, "resize");
  t.min_object_fraction = get<double>(cfg, "min_object_frac");
  if (t.window < 1 || t.stride < 1 || t.resize_to < 1) throw Error(ErrorKind::ConfigValidationError, "window, stride and resize must be >= 1");
  const auto format_text = get<std::string>(cfg, "format");
  StackFormat format;
  if (format_text == "raster_dir") format = StackFormat::raster_dir;
  else if (format_text == "stacked_raster") format = StackFormat::stacked_raster;
  else throw Error(ErrorKind::ConfigValidationError, "format: raster_dir or stacked_raster");

  const fs::path raw = c.path(cfg["raw"]);
  if (!fs::is_directory(raw / "stacks")) throw Error(ErrorKind::MissingFile, (raw / "stacks").string());
  std::vector<fs::path> sources;
  for (const auto& e : fs::directory_iterator(raw / "stacks")) {
    if (format == StackFormat::raster_dir ? e.is_directory() : e.is_regular_file()) sources.push_back(e.path());
  }
  std::sort(sources.begin(), sources.end());
  std::vector<CropRecord> crops;
  for (const auto& src : sources) {
    const RasterStack stack = load_stack(src, format);
    const auto masks = load_mask_stack(raw / "masks" / src.filename(), format);
    auto tiles = tile_stack(stack, masks, t);
    if (c.log()) *c.log() << stack.source_id << ": " << tiles.size() << " windows kept\n";
    crops.insert(crops.end(), std::make_move_iterator(tiles.begin()), std::make_move_iterator(tiles.end()));
  }
  if (crops.empty()) throw Error(ErrorKind::EmptyDataset, "no window passed the object-fraction filter");
  const fs::path out = c.path(cfg["out"]);
  CropStore::write(out, crops);
  write_resolved(out / "prepare.config.json", cfg);
  std::cout << crops.size() << " windows, " << 4 * crops.size() << " crops with rotations, in " << out.string() << '\n';
  return 0;
}

int cmd_split(const Common& c, const json& flags) {
  const json defaults{{"crops", "data/crops"}, {"out", "data/manifest.json"}, {"seed", 26}};
  json cfg = resolve(defaults, c, flags);
  if (c.seed_given) cfg["seed"] = c.seed;
  const CropStore store = CropStore::open(c.path(cfg["crops"]));
  // provenance: the seed and the crop index, not where files live
  const json origin{{"seed", cfg["seed"]},
                    {"crop_index", config_hash(json::parse(read_file(c.path(cfg["crops"]) / "index.json")))}};
  const DatasetManifest m = make_splits(store.infos(), get<std::uint64_t>(cfg, "seed"), config_hash(origin));
  const fs::path out = c.path(cfg["out"]);
  write_manifest(out, m);
  fs::path resolved = out;
  resolved.replace_extension(".config.json");
  write_resolved(resolved, cfg);
  std::cout << "pretext " << m.ids(Split::pretext).size() << ", main " << m.ids(Split::main).size() << ", evaluation "
            << m.ids(Split::evaluation).size() << " -> " << out.string() << '\n';
  return 0;
}

int cmd_pretrain(const Common& c, const json& flags) {
  TrainConfig td;
  td.task = Task::pretext;
  td.loss = "ssim-l1";
  td.augmentation = AugmentationSpec::parse("blur");
  json defaults{{"manifest", "data/manifest.json"}, {"crops", "data/crops"}, {"augmentation", "blur"},
                {"loss", "ssim-l1"},                {"pretext_fraction", 1.0},  {"train", td.to_json()},
                {"architecture", architecture_defaults()}, {"out", nullptr}};
  json cfg = resolve(defaults, c, flags);
  cfg["train"]["task"] = "pretext";
  cfg["train"]["loss"] = cfg["loss"];
  cfg["train"]["augmentation"] = cfg["augmentation"];
  if (c.seed_given) cfg["train"]["seed"] = c.seed;
  const TrainConfig tc = train_config_from(cfg["train"]);
  const ArchitectureSpec spec = architecture_from(cfg["architecture"]);
  const double fraction = get<double>(cfg, "pretext_fraction");
  if (cfg["out"].is_null()) {
    cfg["out"] = "runs/pretext/" + PretextKey{tc.augmentation->to_string(), tc.loss, fraction}.id();
  }

  const DatasetManifest manifest = read_manifest(c.path(cfg["manifest"]));
  const auto subset = pretext_subset(manifest, fraction);
  const CropStore store = CropStore::open(c.path(cfg["crops"]));
  TrainOptions opt;
  opt.log = c.log();
  TrainResult result = train_pretext(manifest, store, subset.train, subset.validate, spec, tc, opt);
  const fs::path out = c.path(cfg["out"]);
  write_resolved(out / "config.json", cfg);
  write_checkpoint(out / "checkpoint", result.best);
  result.record.checkpoint = "checkpoint";
  result.record.info = json{{"kind", "pretext"}, {"pretext_fraction", fraction}, {"train_count", subset.train.size()},
                            {"validate_count", subset.validate.size()}};
  write_file_atomic(out / "record.json", result.record.to_json().dump(2) + "\n");
  std::cout << "best epoch " << result.record.best_epoch << " -> " << (out / "checkpoint").string() << '\n';
  return 0;
}

int cmd_train(const Common& c, const json& flags) {
  json defaults{{"manifest", "data/manifest.json"},
                {"crops", "data/crops"},
                {"mode", "supervised"},
                {"pretext", nullptr},
                {"encoder", "resnet50"},
                {"freeze_encoder", false},
                {"loss", "iou"},
                {"labels", 114},
                {"folds", 5},
                {"fold", nullptr},
                {"train", TrainConfig{}.to_json()},
                {"architecture", architecture_defaults()},
                {"threshold", 0.5},
                {"eval_limit", nullptr},
                {"out", nullptr}};
  json cfg = resolve(defaults, c, flags);
  const auto mode = get<std::string>(cfg, "mode");
  if (mode != "ssl" && mode != "supervised") throw Error(ErrorKind::ConfigValidationError, "mode: ssl or supervised");
  if (mode == "ssl") {
    if (cfg["pretext"].is_null()) throw Error(ErrorKind::ConfigValidationError, "pretext: ssl mode needs a pretext checkpoint");
    cfg["freeze_encoder"] = true;
  }
  cfg["train"]["task"] = "main";
  cfg["train"]["loss"] = cfg["loss"];
  cfg["train"]["encoder"] = cfg["encoder"];
  cfg["train"]["freeze_encoder"] = cfg["freeze_encoder"];
  cfg["train"]["augmentation"] = nullptr;
  if (c.seed_given) cfg["train"]["seed"] = c.seed;
  const TrainConfig tc = train_config_from(cfg["train"]);
  const ArchitectureSpec spec = architecture_from(cfg["architecture"]);
  const long labels = get<long>(cfg, "labels");
  const int k = get<int>(cfg, "folds");
  if (labels < 1) throw Error(ErrorKind::ConfigValidationError, "labels: must be >= 1");
  if (cfg["out"].is_null()) {
    cfg["out"] = "runs/main/" + mode + "-" + std::string(to_string(tc.encoder)) + (tc.freeze_encoder ? "-freeze-" : "-nofreeze-") +
                 tc.loss + "-n" + std::to_string(labels);
  }

  const DatasetManifest manifest = read_manifest(c.path(cfg["manifest"]));
  const auto ids = label_budget_subset(manifest, static_cast<std::size_t>(labels));
  const auto folds = make_folds(ids, k, tc.seed);
  std::vector<int> which;
  if (cfg["fold"].is_null()) {
    for (int f = 0; f < k; ++f) which.push_back(f);
  } else {
    const int f = get<int>(cfg, "fold");
    if (f < 0 || f >= k) throw Error(ErrorKind::ConfigValidationError, "fold: out of range");
    which.push_back(f);
  }
  std::optional<CheckpointBundle> pretext;
  if (mode == "ssl") pretext = load_checkpoint(c.path(cfg["pretext"]));
  const CropStore store = CropStore::open(c.path(cfg["crops"]));
  auto eval_ids = manifest.ids(Split::evaluation);
  if (!cfg["eval_limit"].is_null() && static_cast<std::size_t>(get<long>(cfg, "eval_limit")) < eval_ids.size()) {
    eval_ids.resize(static_cast<std::size_t>(get<long>(cfg, "eval_limit")));
  }

  const fs::path out = c.path(cfg["out"]);
  write_resolved(out / "config.json", cfg);
  ReportRow row;
  row.config_id = out.filename().string();
  row.framework = mode;
  row.encoder = std::string(to_string(tc.encoder));
  row.freeze_encoder = tc.freeze_encoder;
  row.loss = tc.loss;
  row.augmentation = pretext ? pretext->meta.augmentation : "";
  row.budget = labels;
  row.folds_expected = k;
  std::vector<MetricsRecord> fold_metrics;
  for (int f : which) {
    const FoldSplit split = fold_split(folds, f);
    TrainOptions opt;
    opt.fold = f;
    opt.log = c.log();
    TrainResult result = train_main(manifest, store, split.train, split.validate, pretext ? &*pretext : nullptr, spec, tc, opt);
    UNet model(result.best.meta.architecture, 0);
    restore_checkpoint(result.best, model);
    if (result.best.meta.architecture.freeze_encoder) model.freeze_encoder();
    const MetricsRecord m = evaluate_model(model, store, eval_ids, get<double>(cfg, "threshold"), f);
    const fs::path dir = out / ("fold" + std::to_string(f));
    write_checkpoint(dir / "checkpoint", result.best);
    result.record.checkpoint = "checkpoint";
    result.record.metrics = m.to_json();
    result.record.info = json{{"kind", "main"},
                              {"case", 0},
                              {"cell", row.config_id},
                              {"framework", mode},
                              {"series", mode},
                              {"encoder", row.encoder},
                              {"freeze_encoder", row.freeze_encoder},
                              {"loss", row.loss},
                              {"augmentation", row.augmentation},
                              {"pretext_fraction", nullptr},
                              {"label_budget", labels},
                              {"supervised_fraction", nullptr}};
    write_file_atomic(dir / "record.json", result.record.to_json().dump(2) + "\n");
    std::cout << "fold " << f << ": F1 " << m.metrics.f1 << " (best epoch " << result.record.best_epoch << ")\n";
    fold_metrics.push_back(m);
  }
  aggregate(row, fold_metrics);
  write_file_atomic(out / "summary.json", table_json({row}).dump(2) + "\n");
  const Summary& f1 = row.scores.at("f1");
  std::cout << "F1 best " << f1.best << ", mean " << f1.mean << ", std " << f1.std << '\n';
  return 0;
}

int cmd_evaluate(const Common& c, const json& flags) {
  const json defaults{{"manifest", "data/manifest.json"}, {"crops", "data/crops"}, {"checkpoint", nullptr},
                      {"threshold", 0.5}, {"eval_limit", nullptr}, {"averaging", "macro"}, {"overlays", 0},
                      {"out", nullptr}};
  json cfg = resolve(defaults, c, flags);
  if (cfg["checkpoint"].is_null()) throw Error(ErrorKind::ConfigValidationError, "checkpoint: required");
  const auto averaging_text = get<std::string>(cfg, "averaging");
  if (averaging_text != "macro" && averaging_text != "micro") throw Error(ErrorKind::ConfigValidationError, "averaging: macro or micro");
  const Averaging averaging = averaging_text == "macro" ? Averaging::macro : Averaging::micro;
  const fs::path ckpt = c.path(cfg["checkpoint"]);
  if (cfg["out"].is_null()) cfg["out"] = (ckpt.parent_path() / "evaluation").string();

  const DatasetManifest manifest = read_manifest(c.path(cfg["manifest"]));
  const CropStore store = CropStore::open(c.path(cfg["crops"]));
  const CheckpointBundle bundle = load_checkpoint(ckpt);
  if (bundle.meta.task != "main") throw Error(ErrorKind::ConfigMismatch, "evaluate needs a segmentation checkpoint");
  UNet model(bundle.meta.architecture, 0);
  restore_checkpoint(bundle, model);
  auto ids = manifest.ids(Split::evaluation);
  if (!cfg["eval_limit"].is_null() && static_cast<std::size_t>(get<long>(cfg, "eval_limit")) < ids.size()) {
    ids.resize(static_cast<std::size_t>(get<long>(cfg, "eval_limit")));
  }
  const double threshold = get<double>(cfg, "threshold");
  const MetricsRecord m = evaluate_model(model, store, ids, threshold, std::nullopt, averaging);
  const fs::path out = c.path(cfg["out"]);
  write_resolved(out / "config.json", cfg);
  json result = m.to_json();
  result["averaging"] = averaging_text;
  result["images"] = ids.size();
  write_file_atomic(out / "metrics.json", result.dump(2) + "\n");
  const int overlays = std::min<int>(get<int>(cfg, "overlays"), static_cast<int>(ids.size()));
  if (overlays > 0) {
    fs::create_directories(out / "overlays");
    const std::vector<std::string> first(ids.begin(), ids.begin() + overlays);
    const auto preds = predict(model, store, first);
    for (int i = 0; i < overlays; ++i) {
      const CropPair pair = fit_to(store.load(first[i]), model.spec().input_size);
      write_overlay_png(out / "overlays" / ("overlay_" + std::to_string(i) + ".png"),
                        {"", pair.image, pair.mask, binarize(preds[i], threshold)});
    }
  }
  std::cout << "accuracy " << m.metrics.accuracy << " precision " << m.metrics.precision << " recall " << m.metrics.recall
            << " f1 " << m.metrics.f1 << " jaccard " << m.metrics.jaccard << '\n';
  return 0;
}

ReportOptions report_options(const Common& c, const json& cfg, std::optional<DatasetManifest>& manifest,
                             std::optional<CropStore>& store) {
  ReportOptions opt;
  opt.folds_expected = get<int>(cfg, "folds");
  opt.overlays_per_row = get<int>(cfg, "overlays");
  opt.threshold = get<double>(cfg, "threshold");
  const fs::path mpath = c.path(cfg["manifest"]), cpath = c.path(cfg["crops"]);
  if (opt.overlays_per_row > 0 && fs::exists(mpath) && fs::exists(cpath / "index.json")) {
    manifest = read_manifest(mpath);
    store = CropStore::open(cpath);
    opt.manifest = &*manifest;
    opt.source = &*store;
  }
  return opt;
}

int cmd_scenario(const Common& c, const json& flags, int case_number) {
  json grid_json = ScenarioGrid::defaults(case_number).to_json();
  Common for_grid = c;
  json cfg = resolve(grid_json, for_grid, json::object());
  cfg["case"] = case_number;
  if (c.seed_given) cfg["seed"] = c.seed;
  const ScenarioGrid grid = ScenarioGrid::from_json(cfg);
  const fs::path manifest_path = c.path(flags.value("manifest", json("data/manifest.json")));
  const fs::path crops = c.path(flags.value("crops", json("data/crops")));
  const fs::path out = c.path(flags.value("out", json("runs/scenarios/case" + std::to_string(case_number))));
  const fs::path report_dir = c.path(flags.value("report", json("reports/case" + std::to_string(case_number))));

  const auto cells = expand_grid(grid);
  std::cout << "case " << case_number << ": " << cells.size() << " cells x " << grid.folds << " folds, "
            << pretext_runs(cells).size() << " pretext runs\n";
  const DatasetManifest manifest = read_manifest(manifest_path);
  const CropStore store = CropStore::open(crops);
  ScenarioOptions opt;
  opt.log = c.log();
  const auto records = run_scenario(grid, manifest, store, out, opt);
  ReportOptions ropt;
  ropt.folds_expected = grid.folds;
  ropt.manifest = &manifest;
  ropt.source = &store;
  ropt.threshold = grid.threshold;
  ReportInputs inputs = build_report(records, ropt);
  emit_report(inputs, report_dir);
  std::cout << records.size() << " run records in " << out.string() << "; report in " << report_dir.string() << '\n';
  return 0;
}

int cmd_report(const Common& c, const json& flags) {
  const json defaults{{"runs", "runs/scenarios"}, {"out", "reports/all"}, {"folds", 5}, {"overlays", 1},
                      {"threshold", 0.5}, {"averaging", "macro"}, {"manifest", "data/manifest.json"}, {"crops", "data/crops"}};
  const json cfg = resolve(defaults, c, flags);
  if (get<std::string>(cfg, "averaging") != "macro") {
    throw Error(ErrorKind::ConfigValidationError, "averaging: run records store macro fold scores; use evaluate for micro");
  }
  const auto records = collect_records(c.path(cfg["runs"]));
  if (records.empty()) throw Error(ErrorKind::MissingFile, "no run records under " + c.path(cfg["runs"]).string());
  std::optional<DatasetManifest> manifest;
  std::optional<CropStore> store;
  const ReportOptions opt = report_options(c, cfg, manifest, store);
  ReportInputs inputs = build_report(records, opt);
  const fs::path out = c.path(cfg["out"]);
  write_resolved(out / "config.json", cfg);
  emit_report(inputs, out);
  std::cout << inputs.tables.size() << " tables, " << inputs.curves.size() << " curves, " << inputs.overlays.size()
            << " overlays -> " << out.string() << '\n';
  return 0;
}

const std::vector<std::string> kSubcommands{"synth", "prepare", "split", "pretrain", "train", "evaluate", "scenario", "report"};

}  // namespace

int main(int argc, char** argv) {
  if (argc > 1 && argv[1][0] != '-' &&
      std::find(kSubcommands.begin(), kSubcommands.end(), argv[1]) == kSubcommands.end()) {
    std::cerr << to_string(ErrorKind::UnknownSubcommand) << ": " << argv[1] << '\n';
    return 1;
  }

  CLI::App app{"Self-supervised organoid segmentation pipeline"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  const char* env_ws = std::getenv("ORGSEG_WORKSPACE");
  common.workspace = env_ws ? env_ws : ".";
  app.add_option("-w,--workspace", common.workspace, "Workspace root (default: $ORGSEG_WORKSPACE or .)");
  auto* seed_opt = app.add_option("--seed", common.seed, "Seed for all randomness")->capture_default_str();
  app.add_option("-c,--config", common.config_path, "JSON config file (relative to the workspace)");
  app.add_option("--set", common.sets, "key=value override (repeatable)");
  app.add_option("--kernels", common.kernels, "Kernel table: scalar or avx2");
  app.add_flag("-q,--quiet", common.quiet, "No progress output");

  std::map<std::string, json> flags;
  // collected after parsing so only flags given on the command line override the config
  std::vector<std::function<void()>> collect;
  const auto flag = [&](CLI::App* sub, const std::string& name, const std::string& key, auto type_tag, const std::string& help) {
    using T = decltype(type_tag);
    auto value = std::make_shared<T>();
    CLI::Option* opt = sub->add_option(name, *value, help);
    collect.push_back([&flags, sub, key, value, opt] {
      if (opt->count() > 0) flags[sub->get_name()][key] = *value;
    });
  };

  auto* synth = app.add_subcommand("synth", "Generate a synthetic organoid dataset");
  flag(synth, "--n-stacks", "n_stacks", int{}, "Number of stacks");
  flag(synth, "--slices", "slices_per_stack", int{}, "Slices per stack");
  flag(synth, "--width", "width", int{}, "Slice width");
  flag(synth, "--height", "height", int{}, "Slice height");
  flag(synth, "--out", "out", std::string{}, "Output directory");

  auto* prepare = app.add_subcommand("prepare", "Tile stacks into crops");
  flag(prepare, "--raw", "raw", std::string{}, "Raw dataset directory");
  flag(prepare, "--format", "format", std::string{}, "raster_dir or stacked_raster");
  flag(prepare, "--window", "window", int{}, "Window size (default 636)");
  flag(prepare, "--stride", "stride", int{}, "Window stride (default 60)");
  flag(prepare, "--resize", "resize", int{}, "Crop size after resizing (default 320)");
  flag(prepare, "--min-object-frac", "min_object_frac", double{}, "Minimum object fraction (default 0.05)");
  flag(prepare, "--out", "out", std::string{}, "Crop store directory");

  auto* split = app.add_subcommand("split", "Write the dataset manifest");
  flag(split, "--crops", "crops", std::string{}, "Crop store directory");
  flag(split, "--out", "out", std::string{}, "Manifest path");

  auto* pretrain = app.add_subcommand("pretrain", "Train the restoration pretext task");
  flag(pretrain, "--aug", "augmentation", std::string{}, "pixel-drop:<f>, blur or sobel");
  flag(pretrain, "--loss", "loss", std::string{}, "ssim or ssim-l1");
  flag(pretrain, "--pretext-frac", "pretext_fraction", double{}, "Fraction of the pretext split");
  flag(pretrain, "--manifest", "manifest", std::string{}, "Manifest path");
  flag(pretrain, "--crops", "crops", std::string{}, "Crop store directory");
  flag(pretrain, "--out", "out", std::string{}, "Run directory");

  auto* train = app.add_subcommand("train", "Train the segmentation task");
  flag(train, "--mode", "mode", std::string{}, "ssl or supervised");
  flag(train, "--encoder", "encoder", std::string{}, "resnet50 or cnn");
  flag(train, "--loss", "loss", std::string{}, "bce, dice or iou");
  flag(train, "--labels", "labels", long{}, "Label budget");
  flag(train, "--pretext", "pretext", std::string{}, "Pretext checkpoint directory (ssl)");
  flag(train, "--folds", "folds", int{}, "Number of folds");
  flag(train, "--fold", "fold", int{}, "Train only this fold");
  flag(train, "--manifest", "manifest", std::string{}, "Manifest path");
  flag(train, "--crops", "crops", std::string{}, "Crop store directory");
  flag(train, "--out", "out", std::string{}, "Run directory");
  bool freeze = false;
  train->add_flag("--freeze-encoder", freeze, "Freeze the encoder (supervised)");

  auto* evaluate = app.add_subcommand("evaluate", "Score a checkpoint on the evaluation split");
  flag(evaluate, "--checkpoint", "checkpoint", std::string{}, "Checkpoint directory");
  flag(evaluate, "--threshold", "threshold", double{}, "Binarization threshold");
  flag(evaluate, "--averaging", "averaging", std::string{}, "macro or micro");
  flag(evaluate, "--overlays", "overlays", int{}, "Number of overlay images");
  flag(evaluate, "--manifest", "manifest", std::string{}, "Manifest path");
  flag(evaluate, "--crops", "crops", std::string{}, "Crop store directory");
  flag(evaluate, "--out", "out", std::string{}, "Output directory");

  auto* scenario = app.add_subcommand("scenario", "Run an experiment case");
  int case_number = 0;
  scenario->add_option("--case", case_number, "Case 1, 2, 3 or 4")->required()->check(CLI::Range(1, 4));
  flag(scenario, "--manifest", "manifest", std::string{}, "Manifest path");
  flag(scenario, "--crops", "crops", std::string{}, "Crop store directory");
  flag(scenario, "--out", "out", std::string{}, "Runs directory");
  flag(scenario, "--report", "report", std::string{}, "Report directory");

  auto* report = app.add_subcommand("report", "Build tables, curves and overlays from run records");
  flag(report, "--runs", "runs", std::string{}, "Runs directory");
  flag(report, "--out", "out", std::string{}, "Report directory");
  flag(report, "--folds", "folds", int{}, "Expected folds per configuration");
  flag(report, "--overlays", "overlays", int{}, "Overlay images per row");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }
  common.seed_given = seed_opt->count() > 0;
  for (const auto& f : collect) f();
  if (freeze) flags["train"]["freeze_encoder"] = true;

  try {
    if (!common.kernels.empty() && !kernels::select(common.kernels)) {
      throw Error(ErrorKind::ConfigValidationError, "kernels: " + common.kernels + " is not available");
    }
    const auto flags_of = [&](CLI::App* sub) { return flags.count(sub->get_name()) ? flags[sub->get_name()] : json::object(); };
    if (*synth) return cmd_synth(common, flags_of(synth));
    if (*prepare) return cmd_prepare(common, flags_of(prepare));
    if (*split) return cmd_split(common, flags_of(split));
    if (*pretrain) return cmd_pretrain(common, flags_of(pretrain));
    if (*train) return cmd_train(common, flags_of(train));
    if (*evaluate) return cmd_evaluate(common, flags_of(evaluate));
    if (*scenario) return cmd_scenario(common, flags_of(scenario), case_number);
    if (*report) return cmd_report(common, flags_of(report));
  } catch (const Error& e) {
    std::cerr << e.what() << '\n';
    return is_validation_error(e.kind()) ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
