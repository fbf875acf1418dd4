#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "orgseg/tensor.hpp"

namespace orgseg {

/// A named model tensor. Buffers (batch-norm running statistics) are stored
/// and transferred like weights but never touched by the optimizer.
struct Parameter {
  std::string name;
  std::vector<int> shape;
  std::vector<float> value;
  std::vector<float> grad;
  bool buffer = false;
  bool frozen = false;

  bool trainable() const noexcept { return !buffer && !frozen; }
  std::size_t numel() const noexcept { return value.size(); }
};

/// Owns parameters in creation order with stable addresses.
class ParameterStore {
 public:
  Parameter& create(std::string name, std::vector<int> shape, float fill = 0.0f, bool buffer = false);
  Parameter* find(const std::string& name) noexcept;
  const Parameter* find(const std::string& name) const noexcept;

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  std::size_t size() const noexcept { return params_.size(); }
  void zero_grad();

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

/// He-normal init of a conv weight from a per-name seed.
void init_he_normal(Parameter& p, int fan_in, std::uint64_t seed);

class Conv2d {
 public:
  Conv2d(ParameterStore& store, const std::string& name, int in_channels, int out_channels,
         int kernel, int stride);

  Tensor forward(const Tensor& x, bool cache);
  /// Accumulates weight/bias gradients; returns dL/dx when `need_dx`.
  Tensor backward(const Tensor& dy, bool need_dx);

  Parameter& weight() noexcept { return *weight_; }
  Parameter& bias() noexcept { return *bias_; }

 private:
  int out_size(int in) const noexcept { return (in + 2 * pad_ - kernel_) / stride_ + 1; }

  Parameter* weight_;
  Parameter* bias_;
  int cin_, cout_, kernel_, stride_, pad_;
  Tensor input_;
};

class BatchNorm2d {
 public:
  BatchNorm2d(ParameterStore& store, const std::string& name, int channels);

  /// `training` normalizes with batch statistics and updates running ones.
  Tensor forward(const Tensor& x, bool training, bool cache);
  Tensor backward(const Tensor& dy);

  static constexpr float kMomentum = 0.1f;
  static constexpr float kEpsilon = 1e-5f;

 private:
  Parameter* gamma_;
  Parameter* beta_;
  Parameter* running_mean_;
  Parameter* running_var_;
  int channels_;
  bool used_batch_stats_ = false;
  Tensor x_hat_;
  std::vector<float> inv_std_;
};

class Relu {
 public:
  Tensor forward(const Tensor& x, bool cache);
  Tensor backward(const Tensor& dy) const;

 private:
  Tensor output_;
};

class MaxPool2 {
 public:
  Tensor forward(const Tensor& x, bool cache);
  Tensor backward(const Tensor& dy) const;

 private:
  int in_h_ = 0, in_w_ = 0;
  std::vector<std::uint32_t> argmax_;
};

/// Pre-activation residual unit: (BN -> ReLU -> 3x3 conv) x 2 plus shortcut.
/// The first conv carries the stride; the shortcut is identity when shapes
/// match and a 1x1 projection otherwise.
class PreActBlock {
 public:
  PreActBlock(ParameterStore& store, const std::string& name, int in_channels, int out_channels,
              int stride);

  Tensor forward(const Tensor& x, bool training, bool cache);
  Tensor backward(const Tensor& dy, bool need_dx);

 private:
  BatchNorm2d bn1_, bn2_;
  Relu relu1_, relu2_;
  Conv2d conv1_, conv2_;
  std::optional<Conv2d> projection_;
};

/// Plain unit: 3x3 conv -> BN -> ReLU.
class PlainBlock {
 public:
  PlainBlock(ParameterStore& store, const std::string& name, int in_channels, int out_channels);

  Tensor forward(const Tensor& x, bool training, bool cache);
  Tensor backward(const Tensor& dy, bool need_dx);

 private:
  Conv2d conv_;
  BatchNorm2d bn_;
  Relu relu_;
};

}  // namespace orgseg
