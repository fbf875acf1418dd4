#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace orgseg {

/// NCHW float tensor.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int n, int c, int h, int w, float fill = 0.0f)
      : n_(n), c_(c), h_(h), w_(w),
        data_(static_cast<std::size_t>(n) * c * h * w, fill) {}

  int n() const noexcept { return n_; }
  int c() const noexcept { return c_; }
  int h() const noexcept { return h_; }
  int w() const noexcept { return w_; }
  std::size_t plane() const noexcept { return static_cast<std::size_t>(h_) * w_; }
  std::size_t numel() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  bool same_shape(const Tensor& o) const noexcept {
    return n_ == o.n_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_;
  }

  float* data() noexcept { return data_.data(); }
  const float* data() const noexcept { return data_.data(); }
  float* sample(int n) noexcept { return data_.data() + static_cast<std::size_t>(n) * c_ * plane(); }
  const float* sample(int n) const noexcept {
    return data_.data() + static_cast<std::size_t>(n) * c_ * plane();
  }
  float* channel(int n, int c) noexcept { return sample(n) + static_cast<std::size_t>(c) * plane(); }
  const float* channel(int n, int c) const noexcept {
    return sample(n) + static_cast<std::size_t>(c) * plane();
  }
  std::span<float> values() noexcept { return data_; }
  std::span<const float> values() const noexcept { return data_; }

  std::string shape_string() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
  std::vector<float> data_;
};

/// out = a + b (same shapes).
Tensor add(const Tensor& a, const Tensor& b);
/// Channel concatenation [a, b].
Tensor concat_channels(const Tensor& a, const Tensor& b);
/// Inverse of concat_channels for gradients.
void split_channels(const Tensor& g, int c_first, Tensor& first, Tensor& second);
Tensor upsample2x_nearest(const Tensor& x);
/// Sums 2x2 blocks; the adjoint of upsample2x_nearest.
Tensor upsample2x_backward(const Tensor& dy);

}  // namespace orgseg
