#include "orgseg/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <set>

#include "orgseg/error.hpp"
#include "orgseg/losses.hpp"
#include "orgseg/optim.hpp"
#include "orgseg/rng.hpp"

namespace orgseg {
using nlohmann::json;

std::string_view to_string(Task t) noexcept { return t == Task::pretext ? "pretext" : "main"; }

namespace {

[[noreturn]] void bad_key(const std::string& key, const std::string& why) {
  throw Error(ErrorKind::ConfigValidationError, key + ": " + why);
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) bad_key("epochs", "must be >= 1");
  if (batch_size < 1) bad_key("batch_size", "must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) bad_key("learning_rate", "must be > 0");
  if (optimizer != "adam") bad_key("optimizer", "only adam is supported");
  if (decoder_init != "pretext" && decoder_init != "fresh") bad_key("decoder_init", "pretext or fresh");
  try {
    parse_loss(loss);
  } catch (const Error& e) {
    bad_key("loss", e.what());
  }
}

json TrainConfig::to_json() const {
  return json{{"epochs", epochs},
              {"batch_size", batch_size},
              {"optimizer", optimizer},
              {"learning_rate", learning_rate},
              {"seed", seed},
              {"loss", loss},
              {"task", to_string(task)},
              {"freeze_encoder", freeze_encoder},
              {"encoder", to_string(encoder)},
              {"augmentation", augmentation ? json(augmentation->to_string()) : json(nullptr)},
              {"fixed_corruption", fixed_corruption},
              {"decoder_init", decoder_init}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  if (!j.is_object()) bad_key("<root>", "train config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "epochs") c.epochs = value.get<int>();
      else if (key == "batch_size") c.batch_size = value.get<int>();
      else if (key == "optimizer") c.optimizer = value.get<std::string>();
      else if (key == "learning_rate") c.learning_rate = value.get<double>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "loss") c.loss = value.get<std::string>();
      else if (key == "task") {
        const auto t = value.get<std::string>();
        if (t == "pretext") c.task = Task::pretext;
        else if (t == "main") c.task = Task::main;
        else bad_key(key, "pretext or main");
      } else if (key == "freeze_encoder") c.freeze_encoder = value.get<bool>();
      else if (key == "encoder") c.encoder = parse_encoder(value.get<std::string>());
      else if (key == "augmentation") {
        if (value.is_null()) c.augmentation.reset();
        else c.augmentation = AugmentationSpec::parse(value.get<std::string>());
      } else if (key == "fixed_corruption") c.fixed_corruption = value.get<bool>();
      else if (key == "decoder_init") c.decoder_init = value.get<std::string>();
      else bad_key(key, "unknown key");
    } catch (const json::exception& e) {
      bad_key(key, e.what());
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::ConfigValidationError) throw;
      bad_key(key, e.what());
    }
  }
  c.validate();
  return c;
}

json RunRecord::to_json() const {
  return json{{"config", config.to_json()},
              {"fold", fold ? json(*fold) : json(nullptr)},
              {"train_losses", train_losses},
              {"val_losses", val_losses},
              {"best_epoch", best_epoch},
              {"epochs_run", train_losses.size()},
              {"checkpoint", checkpoint},
              {"wall_seconds", wall_seconds},
              {"info", info},
              {"metrics", metrics}};
}

RunRecord RunRecord::from_json(const json& j) {
  RunRecord r;
  try {
    r.config = TrainConfig::from_json(j.at("config"));
    if (!j.at("fold").is_null()) r.fold = j.at("fold").get<int>();
    r.train_losses = j.at("train_losses").get<std::vector<double>>();
    r.val_losses = j.at("val_losses").get<std::vector<double>>();
    r.best_epoch = j.at("best_epoch").get<int>();
    r.checkpoint = j.at("checkpoint").get<std::string>();
    r.wall_seconds = j.at("wall_seconds").get<double>();
    r.info = j.value("info", json::object());
    r.metrics = j.value("metrics", json::object());
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidSpec, std::string("run record: ") + e.what());
  }
  return r;
}

namespace {

using Clock = std::chrono::steady_clock;

void require_split(const DatasetManifest& manifest, const std::vector<std::string>& ids, Split split,
                   const char* what) {
  std::map<std::string_view, Split> lookup;
  for (const auto& e : manifest.entries) lookup.emplace(e.crop_id, e.split);
  for (const auto& id : ids) {
    auto it = lookup.find(id);
    if (it == lookup.end()) throw Error(ErrorKind::ConfigMismatch, std::string(what) + " id not in manifest: " + id);
    if (it->second != split) {
      throw Error(ErrorKind::ConfigMismatch, std::string(what) + " id " + id + " belongs to the " +
                                                 std::string(to_string(it->second)) + " split");
    }
  }
}

/// Crops of one run, resized once to the model input.
class CropCache {
 public:
  CropCache(const CropSource& source, int size) : source_(source), size_(size) {}

  const CropPair& get(const std::string& id) {
    auto it = cache_.find(id);
    if (it == cache_.end()) it = cache_.emplace(id, fit_to(source_.load(id), size_)).first;
    return it->second;
  }

 private:
  const CropSource& source_;
  int size_;
  std::map<std::string, CropPair> cache_;
};

struct Sample {
  Image2D input;
  std::vector<double> target;
};

class Trainer {
 public:
  Trainer(UNet& model, const TrainConfig& cfg, const TrainOptions& options, CropCache& cache)
      : model_(model), cfg_(cfg), options_(options), cache_(cache), kind_(parse_loss(cfg.loss)),
        adam_(AdamConfig{cfg.learning_rate}) {}

  TrainResult run(const std::vector<std::string>& train_ids, const std::vector<std::string>& val_ids,
                  CheckpointMeta meta) {
    if (train_ids.empty()) throw Error(ErrorKind::EmptyDataset, "no training crops");
    const auto start = Clock::now();
    TrainResult result;
    result.record.config = cfg_;
    result.record.fold = options_.fold;
    double best = std::numeric_limits<double>::infinity();
    const std::uint64_t order_seed = derive_seed(cfg_.seed, "order", options_.fold.value_or(-1) + 1);

    for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
      std::vector<std::string> order = train_ids;
      Rng rng(derive_seed(order_seed, epoch));
      rng.shuffle(std::span(order));

      double sum = 0.0;
      for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(cfg_.batch_size)) {
        const std::size_t b1 = std::min(order.size(), b0 + static_cast<std::size_t>(cfg_.batch_size));
        sum += train_step(std::span(order).subspan(b0, b1 - b0), epoch) * static_cast<double>(b1 - b0);
      }
      const double train_loss = sum / static_cast<double>(order.size());
      const double val_loss = val_ids.empty() ? train_loss : evaluate_loss(val_ids);
      if (!std::isfinite(train_loss) || !std::isfinite(val_loss)) {
        throw Error(ErrorKind::Io, "non-finite loss at epoch " + std::to_string(epoch));
      }
      result.record.train_losses.push_back(train_loss);
      result.record.val_losses.push_back(val_loss);
      if (val_loss < best) {
        best = val_loss;
        result.record.best_epoch = epoch;
        meta.epoch = epoch;
        result.best = save_checkpoint(model_, meta);
      }
      if (options_.log) {
        *options_.log << to_string(cfg_.task) << (options_.fold ? " fold " + std::to_string(*options_.fold) : "")
                      << " epoch " << epoch << " train " << train_loss << " val " << val_loss << '\n';
      }
      if (options_.on_epoch && !options_.on_epoch(epoch, model_, train_loss, val_loss)) break;
    }
    result.record.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
    return result;
  }

 private:
  Sample sample(const std::string& id, std::uint64_t aug_seed) {
    const CropPair& pair = cache_.get(id);
    Sample s;
    if (cfg_.task == Task::pretext) {
      s.input = apply_augmentation(pair.image, *cfg_.augmentation, aug_seed);
      s.target = to_doubles(pair.image);
    } else {
      s.input = pair.image;
      s.target = to_doubles(pair.mask);
    }
    return s;
  }

  Tensor batch_input(const std::vector<Sample>& samples) const {
    const int size = model_.spec().input_size;
    Tensor x(static_cast<int>(samples.size()), 1, size, size);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      std::copy(samples[i].input.storage().begin(), samples[i].input.storage().end(), x.sample(static_cast<int>(i)));
    }
    return x;
  }

  double train_step(std::span<const std::string> ids, int epoch) {
    std::vector<Sample> samples;
    for (const auto& id : ids) {
      const int aug_epoch = cfg_.fixed_corruption ? 0 : epoch;
      samples.push_back(sample(id, derive_seed(cfg_.seed, "aug", aug_epoch, id)));
    }
    const Tensor x = batch_input(samples);
    model_.parameters().zero_grad();
    const Tensor y = model_.forward(x, true);
    const int size = model_.spec().input_size;
    Tensor dy(y.n(), 1, size, size);
    const double inv_b = 1.0 / static_cast<double>(samples.size());
    double total = 0.0;
    std::vector<double> pred(y.plane());
    for (int i = 0; i < y.n(); ++i) {
      std::copy(y.sample(i), y.sample(i) + y.plane(), pred.begin());
      const LossGrad lg = loss_with_grad(kind_, {samples[i].target, size, size}, {pred, size, size});
      total += lg.value;
      float* g = dy.sample(i);
      for (std::size_t p = 0; p < lg.grad.size(); ++p) g[p] = static_cast<float>(lg.grad[p] * inv_b);
    }
    model_.backward(dy);
    adam_.step(model_.parameters());
    return total * inv_b;
  }

  double evaluate_loss(const std::vector<std::string>& ids) {
    const int size = model_.spec().input_size;
    double total = 0.0;
    std::vector<double> pred(static_cast<std::size_t>(size) * size);
    for (std::size_t b0 = 0; b0 < ids.size(); b0 += static_cast<std::size_t>(cfg_.batch_size)) {
      const std::size_t b1 = std::min(ids.size(), b0 + static_cast<std::size_t>(cfg_.batch_size));
      std::vector<Sample> samples;
      for (std::size_t i = b0; i < b1; ++i) samples.push_back(sample(ids[i], derive_seed(cfg_.seed, "val-aug", ids[i])));
      const Tensor y = model_.forward(batch_input(samples), false);
      for (int i = 0; i < y.n(); ++i) {
        std::copy(y.sample(i), y.sample(i) + y.plane(), pred.begin());
        total += loss_value(kind_, {samples[i].target, size, size}, {pred, size, size});
      }
    }
    return total / static_cast<double>(ids.size());
  }

  UNet& model_;
  const TrainConfig& cfg_;
  const TrainOptions& options_;
  CropCache& cache_;
  LossKind kind_;
  Adam adam_;
};

std::uint64_t init_seed(const TrainConfig& cfg, const TrainOptions& options) {
  return derive_seed(cfg.seed, "init", options.fold.value_or(-1) + 1);
}

}  // namespace

TrainResult train_pretext(const DatasetManifest& manifest, const CropSource& source,
                          const std::vector<std::string>& train_ids, const std::vector<std::string>& val_ids,
                          ArchitectureSpec spec, const TrainConfig& cfg, const TrainOptions& options) {
  cfg.validate();
  if (cfg.task != Task::pretext) throw Error(ErrorKind::ConfigMismatch, "train_pretext needs task=pretext");
  if (!is_pretext_loss(parse_loss(cfg.loss))) {
    throw Error(ErrorKind::ConfigMismatch, "loss " + cfg.loss + " is not a restoration loss");
  }
  if (!cfg.augmentation) throw Error(ErrorKind::ConfigMismatch, "pretext training needs an augmentation");
  require_split(manifest, train_ids, Split::pretext, "pretext-train");
  require_split(manifest, val_ids, Split::pretext, "pretext-validate");

  spec.encoder = cfg.encoder;
  spec.head = HeadKind::restoration;
  spec.freeze_encoder = false;
  spec.validate();
  UNet model(spec, init_seed(cfg, options));
  CropCache cache(source, spec.input_size);
  Trainer trainer(model, cfg, options, cache);
  CheckpointMeta meta;
  meta.task = "pretext";
  meta.loss = cfg.loss;
  meta.augmentation = cfg.augmentation->to_string();
  meta.seed = cfg.seed;
  return trainer.run(train_ids, val_ids, meta);
}

TrainResult train_main(const DatasetManifest& manifest, const CropSource& source,
                       const std::vector<std::string>& train_ids, const std::vector<std::string>& val_ids,
                       const CheckpointBundle* pretext, ArchitectureSpec spec, const TrainConfig& cfg,
                       const TrainOptions& options) {
  cfg.validate();
  if (cfg.task != Task::main) throw Error(ErrorKind::ConfigMismatch, "train_main needs task=main");
  if (is_pretext_loss(parse_loss(cfg.loss))) {
    throw Error(ErrorKind::ConfigMismatch, "loss " + cfg.loss + " is not a segmentation loss");
  }
  require_split(manifest, train_ids, Split::main, "main-train");
  require_split(manifest, val_ids, Split::main, "main-validate");

  spec.encoder = cfg.encoder;
  spec.head = HeadKind::segmentation;
  spec.freeze_encoder = cfg.freeze_encoder;
  if (pretext) {
    if (pretext->meta.task != "pretext") throw Error(ErrorKind::ConfigMismatch, "checkpoint is not a pretext checkpoint");
    if (!cfg.freeze_encoder) throw Error(ErrorKind::ConfigMismatch, "SSL main training freezes the encoder");
    const ArchitectureSpec& from = pretext->meta.architecture;
    if (from.encoder != spec.encoder) throw Error(ErrorKind::ConfigMismatch, "pretext encoder differs from config");
    spec.encoder_blocks = from.encoder_blocks;
    spec.decoder_blocks = from.decoder_blocks;
    spec.base_channels = from.base_channels;
  }
  spec.validate();
  const std::uint64_t seed = init_seed(cfg, options);
  UNet model(spec, seed);
  if (pretext) {
    const auto scope = cfg.decoder_init == "fresh" ? TransferScope::encoder_only : TransferScope::encoder_and_decoder;
    transfer_weights(*pretext, model, scope, derive_seed(seed, "head"));
  }
  if (spec.freeze_encoder) model.freeze_encoder();

  CropCache cache(source, spec.input_size);
  Trainer trainer(model, cfg, options, cache);
  CheckpointMeta meta;
  meta.task = "main";
  meta.loss = cfg.loss;
  meta.augmentation = pretext ? pretext->meta.augmentation : "";
  meta.seed = cfg.seed;
  return trainer.run(train_ids, val_ids, meta);
}

std::vector<Image2D> predict(UNet& model, const CropSource& source, const std::vector<std::string>& ids,
                             int batch_size) {
  const int size = model.spec().input_size;
  std::vector<Image2D> out;
  out.reserve(ids.size());
  for (std::size_t b0 = 0; b0 < ids.size(); b0 += static_cast<std::size_t>(batch_size)) {
    const std::size_t b1 = std::min(ids.size(), b0 + static_cast<std::size_t>(batch_size));
    Tensor x(static_cast<int>(b1 - b0), 1, size, size);
    for (std::size_t i = b0; i < b1; ++i) {
      const CropPair pair = fit_to(source.load(ids[i]), size);
      std::copy(pair.image.storage().begin(), pair.image.storage().end(), x.sample(static_cast<int>(i - b0)));
    }
    const Tensor y = model.forward(x, false);
    for (int i = 0; i < y.n(); ++i) out.emplace_back(size, size, std::vector<float>(y.sample(i), y.sample(i) + y.plane()));
  }
  return out;
}

}  // namespace orgseg
