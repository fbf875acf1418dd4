#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "orgseg/layers.hpp"
#include "orgseg/tensor.hpp"

namespace orgseg {

enum class EncoderKind { resnet50, simple_cnn };
enum class HeadKind { restoration, segmentation };

EncoderKind parse_encoder(std::string_view text);
std::string_view to_string(EncoderKind kind) noexcept;
std::string_view to_string(HeadKind kind) noexcept;

struct ArchitectureSpec {
  EncoderKind encoder = EncoderKind::resnet50;
  int input_size = 320;
  int encoder_blocks = 4;
  int decoder_blocks = 4;
  int base_channels = 64;
  bool freeze_encoder = false;
  HeadKind head = HeadKind::segmentation;

  /// Throws InvalidSpec.
  void validate() const;
  int channels(int level) const noexcept { return base_channels << level; }
};

/// U-Net with a residual (pre-activation) or plain convolutional encoder.
///
/// Tensor naming: `encoder.*` (stem, levels, bottleneck), `decoder.*` and
/// `head.*`. Encoder level i works at input_size / 2^i and feeds the skip
/// connection of decoder level i; the bottleneck sits one halving below the
/// last encoder level.
class UNet {
 public:
  UNet(const ArchitectureSpec& spec, std::uint64_t seed);
  UNet(const UNet&) = delete;
  UNet& operator=(const UNet&) = delete;
  ~UNet();

  const ArchitectureSpec& spec() const noexcept { return spec_; }

  /// x: (B, 1, S, S) -> (B, 1, S, S). `training` uses batch statistics in
  /// trainable batch-norm layers and caches activations for backward().
  Tensor forward(const Tensor& x, bool training);
  /// dy: gradient with respect to the forward output. Accumulates grads.
  void backward(const Tensor& dy);

  /// Spatial sizes of the encoder skip taps from the last forward.
  const std::vector<int>& encoder_feature_sizes() const noexcept { return tap_sizes_; }

  ParameterStore& parameters() noexcept { return store_; }
  const ParameterStore& parameters() const noexcept { return store_; }

  /// Marks all encoder tensors frozen; returns their names.
  std::vector<std::string> freeze_encoder();
  bool encoder_frozen() const noexcept { return encoder_frozen_; }
  std::vector<std::string> frozen_names() const;

  /// Re-draws the head tensors from `seed`.
  void reinit_head(std::uint64_t seed);
  /// Re-draws the decoder tensors from `seed`.
  void reinit_decoder(std::uint64_t seed);

  std::size_t parameter_count(std::string_view prefix = {}) const;

  static bool is_encoder_tensor(std::string_view name) noexcept { return name.starts_with("encoder."); }
  static bool is_decoder_tensor(std::string_view name) noexcept { return name.starts_with("decoder."); }
  static bool is_head_tensor(std::string_view name) noexcept { return name.starts_with("head."); }

 private:
  struct Encoder;
  struct Decoder;

  void initialize(std::uint64_t seed, std::string_view prefix);

  ArchitectureSpec spec_;
  ParameterStore store_;
  std::unique_ptr<Encoder> encoder_;
  std::unique_ptr<Decoder> decoder_;
  std::unique_ptr<Conv2d> head_;
  bool encoder_frozen_ = false;
  std::vector<int> tap_sizes_;
  Tensor output_;  // head activation output, for backward
};

}  // namespace orgseg
