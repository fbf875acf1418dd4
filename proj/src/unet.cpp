#include "orgseg/unet.hpp"

#include <cmath>

#include "orgseg/error.hpp"
#include "orgseg/rng.hpp"

namespace orgseg {

EncoderKind parse_encoder(std::string_view text) {
  if (text == "resnet50") return EncoderKind::resnet50;
  if (text == "cnn" || text == "simple_cnn") return EncoderKind::simple_cnn;
  throw Error(ErrorKind::ConfigValidationError, "unknown encoder: " + std::string(text));
}

std::string_view to_string(EncoderKind kind) noexcept {
  return kind == EncoderKind::resnet50 ? "resnet50" : "cnn";
}

std::string_view to_string(HeadKind kind) noexcept {
  return kind == HeadKind::restoration ? "restoration" : "segmentation";
}

void ArchitectureSpec::validate() const {
  if (encoder_blocks != decoder_blocks) {
    throw Error(ErrorKind::InvalidSpec, "encoder_blocks must equal decoder_blocks");
  }
  if (encoder_blocks < 1 || encoder_blocks > 8) throw Error(ErrorKind::InvalidSpec, "encoder_blocks out of range");
  if (base_channels < 1) throw Error(ErrorKind::InvalidSpec, "base_channels must be >= 1");
  const int divisor = 1 << encoder_blocks;
  if (input_size < divisor || input_size % divisor != 0) {
    throw Error(ErrorKind::InvalidSpec, "input_size " + std::to_string(input_size) +
                                            " must be a positive multiple of " + std::to_string(divisor));
  }
}

struct UNet::Encoder {
  EncoderKind kind;
  std::unique_ptr<Conv2d> stem;
  std::vector<PreActBlock> res_levels;
  std::unique_ptr<PreActBlock> bottleneck;
  std::vector<PlainBlock> plain_levels;
  std::vector<MaxPool2> pools;

  Encoder(ParameterStore& store, const ArchitectureSpec& spec) : kind(spec.encoder) {
    const int levels = spec.encoder_blocks;
    if (kind == EncoderKind::resnet50) {
      stem = std::make_unique<Conv2d>(store, "encoder.stem", 1, spec.channels(0), 3, 1);
      res_levels.reserve(levels);
      for (int i = 0; i < levels; ++i) {
        const int in = i == 0 ? spec.channels(0) : spec.channels(i - 1);
        res_levels.emplace_back(store, "encoder.level" + std::to_string(i), in, spec.channels(i), i == 0 ? 1 : 2);
      }
      bottleneck = std::make_unique<PreActBlock>(store, "encoder.bottleneck", spec.channels(levels - 1),
                                                 spec.channels(levels), 2);
    } else {
      plain_levels.reserve(levels);
      for (int i = 0; i < levels; ++i) {
        const int in = i == 0 ? 1 : spec.channels(i - 1);
        plain_levels.emplace_back(store, "encoder.level" + std::to_string(i), in, spec.channels(i));
      }
      pools.resize(levels);
    }
  }

  int bottleneck_channels(const ArchitectureSpec& spec) const {
    return kind == EncoderKind::resnet50 ? spec.channels(spec.encoder_blocks)
                                         : spec.channels(spec.encoder_blocks - 1);
  }

  Tensor forward(const Tensor& x, bool training, bool cache, std::vector<Tensor>& taps) {
    taps.clear();
    if (kind == EncoderKind::resnet50) {
      Tensor h = stem->forward(x, cache);
      for (auto& level : res_levels) {
        h = level.forward(h, training, cache);
        taps.push_back(h);
      }
      return bottleneck->forward(h, training, cache);
    }
    Tensor h = x;
    for (std::size_t i = 0; i < plain_levels.size(); ++i) {
      h = plain_levels[i].forward(h, training, cache);
      taps.push_back(h);
      h = pools[i].forward(h, cache);
    }
    return h;
  }

  void backward(std::vector<Tensor>& d_taps, const Tensor& d_bottleneck) {
    const int levels = static_cast<int>(d_taps.size());
    if (kind == EncoderKind::resnet50) {
      Tensor g = bottleneck->backward(d_bottleneck, true);
      for (int i = levels - 1; i >= 0; --i) {
        g = add(g, d_taps[i]);
        g = res_levels[i].backward(g, true);
      }
      stem->backward(g, false);
      return;
    }
    Tensor g = pools[levels - 1].backward(d_bottleneck);
    for (int i = levels - 1; i >= 0; --i) {
      g = add(g, d_taps[i]);
      g = plain_levels[i].backward(g, i > 0);
      if (i > 0) g = pools[i - 1].backward(g);
    }
  }
};

struct UNet::Decoder {
  std::vector<Conv2d> merges;      // index j = level
  std::vector<PreActBlock> blocks;
  std::vector<int> up_channels;

  Decoder(ParameterStore& store, const ArchitectureSpec& spec, int bottleneck_channels) {
    const int levels = spec.decoder_blocks;
    merges.reserve(levels);
    blocks.reserve(levels);
    up_channels.resize(levels);
    // Created deepest level first so tensor order follows the data flow.
    std::vector<int> order;
    for (int j = levels - 1; j >= 0; --j) order.push_back(j);
    for (int j : order) up_channels[j] = j == levels - 1 ? bottleneck_channels : spec.channels(j + 1);
    for (int j : order) {
      const std::string name = "decoder.level" + std::to_string(j);
      merges.emplace_back(store, name + ".merge", up_channels[j] + spec.channels(j), spec.channels(j), 3, 1);
      blocks.emplace_back(store, name + ".block", spec.channels(j), spec.channels(j), 1);
    }
  }

  // merges/blocks are stored deepest-first: element k is level L-1-k.
  Tensor forward(const std::vector<Tensor>& taps, const Tensor& bottleneck, bool training, bool cache) {
    const int levels = static_cast<int>(taps.size());
    Tensor d = bottleneck;
    for (int k = 0; k < levels; ++k) {
      const int j = levels - 1 - k;
      Tensor u = upsample2x_nearest(d);
      Tensor cat = concat_channels(u, taps[j]);
      d = merges[k].forward(cat, cache);
      d = blocks[k].forward(d, training, cache);
    }
    return d;
  }

  Tensor backward(const Tensor& dy, std::vector<Tensor>& d_taps) {
    const int levels = static_cast<int>(merges.size());
    d_taps.assign(levels, Tensor());
    Tensor g = dy;
    for (int k = levels - 1; k >= 0; --k) {
      const int j = levels - 1 - k;
      g = blocks[k].backward(g, true);
      g = merges[k].backward(g, true);
      Tensor g_up;
      split_channels(g, up_channels[j], g_up, d_taps[j]);
      g = upsample2x_backward(g_up);
    }
    return g;
  }
};

UNet::UNet(const ArchitectureSpec& spec, std::uint64_t seed) : spec_(spec) {
  spec_.validate();
  encoder_ = std::make_unique<Encoder>(store_, spec_);
  decoder_ = std::make_unique<Decoder>(store_, spec_, encoder_->bottleneck_channels(spec_));
  head_ = std::make_unique<Conv2d>(store_, "head.conv", spec_.channels(0), 1, 1, 1);
  initialize(seed, "");
  if (spec_.freeze_encoder) freeze_encoder();
}

UNet::~UNet() = default;

void UNet::initialize(std::uint64_t seed, std::string_view prefix) {
  for (Parameter* p : store_.all()) {
    if (!prefix.empty() && !std::string_view(p->name).starts_with(prefix)) continue;
    const std::string_view name = p->name;
    if (name.ends_with(".weight")) {
      init_he_normal(*p, p->shape[1] * p->shape[2] * p->shape[3], seed);
      if (is_head_tensor(name)) {
        for (auto& v : p->value) v *= 0.1f;
      }
    } else if (name.ends_with(".gamma") || name.ends_with(".running_var")) {
      std::fill(p->value.begin(), p->value.end(), 1.0f);
    } else {
      std::fill(p->value.begin(), p->value.end(), 0.0f);
    }
    if (name == "head.conv.bias" && spec_.head == HeadKind::restoration) p->value[0] = 0.5f;
  }
}

Tensor UNet::forward(const Tensor& x, bool training) {
  if (x.c() != 1 || x.h() != spec_.input_size || x.w() != spec_.input_size) {
    throw Error(ErrorKind::ShapeMismatch, "expected (B,1," + std::to_string(spec_.input_size) + "," +
                                              std::to_string(spec_.input_size) + "), got " + x.shape_string());
  }
  std::vector<Tensor> taps;
  const bool enc_train = training && !encoder_frozen_;
  Tensor bottleneck = encoder_->forward(x, enc_train, enc_train, taps);
  tap_sizes_.clear();
  for (const auto& t : taps) tap_sizes_.push_back(t.h());
  Tensor d = decoder_->forward(taps, bottleneck, training, training);
  Tensor z = head_->forward(d, training);
  Tensor out(z.n(), z.c(), z.h(), z.w());
  auto src = z.values();
  auto dst = out.values();
  if (spec_.head == HeadKind::segmentation) {
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = 1.0f / (1.0f + std::exp(-src[i]));
  } else {
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = std::clamp(src[i], 0.0f, 1.0f);
  }
  if (training) output_ = out;
  return out;
}

void UNet::backward(const Tensor& dy) {
  if (!dy.same_shape(output_)) throw Error(ErrorKind::ShapeMismatch, "backward gradient shape");
  Tensor dz(dy.n(), dy.c(), dy.h(), dy.w());
  auto g = dy.values();
  auto out = output_.values();
  auto d = dz.values();
  if (spec_.head == HeadKind::segmentation) {
    for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] * out[i] * (1.0f - out[i]);
  } else {
    // Clamped pixels still pass gradient that points back into [0,1];
    // a plain clamp lets the whole head saturate and stop learning.
    for (std::size_t i = 0; i < g.size(); ++i) {
      const bool inside = out[i] > 0.0f && out[i] < 1.0f;
      const bool returning = (out[i] <= 0.0f && g[i] < 0.0f) || (out[i] >= 1.0f && g[i] > 0.0f);
      d[i] = inside || returning ? g[i] : 0.0f;
    }
  }
  Tensor gd = head_->backward(dz, true);
  std::vector<Tensor> d_taps;
  Tensor d_bottleneck = decoder_->backward(gd, d_taps);
  if (!encoder_frozen_) encoder_->backward(d_taps, d_bottleneck);
}

std::vector<std::string> UNet::freeze_encoder() {
  encoder_frozen_ = true;
  spec_.freeze_encoder = true;
  std::vector<std::string> names;
  for (Parameter* p : store_.all()) {
    if (is_encoder_tensor(p->name)) {
      p->frozen = true;
      names.push_back(p->name);
    }
  }
  return names;
}

std::vector<std::string> UNet::frozen_names() const {
  std::vector<std::string> names;
  for (const Parameter* p : store_.all())
    if (p->frozen) names.push_back(p->name);
  return names;
}

void UNet::reinit_head(std::uint64_t seed) { initialize(seed, "head."); }
void UNet::reinit_decoder(std::uint64_t seed) { initialize(seed, "decoder."); }

std::size_t UNet::parameter_count(std::string_view prefix) const {
  std::size_t n = 0;
  for (const Parameter* p : store_.all()) {
    if (p->buffer) continue;
    if (prefix.empty() || std::string_view(p->name).starts_with(prefix)) n += p->numel();
  }
  return n;
}

}  // namespace orgseg
