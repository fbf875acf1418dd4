#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace orgseg {

/// Row-major 2-D pixel grid.
template <class T>
class Grid {
 public:
  using value_type = T;

  Grid() = default;
  Grid(int width, int height, T fill = T{})
      : width_(width), height_(height),
        pixels_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill) {}
  Grid(int width, int height, std::vector<T> pixels)
      : width_(width), height_(height), pixels_(std::move(pixels)) {}

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return pixels_.size(); }
  bool empty() const noexcept { return pixels_.empty(); }

  T& at(int x, int y) noexcept { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }
  const T& at(int x, int y) const noexcept {
    return pixels_[static_cast<std::size_t>(y) * width_ + x];
  }

  T* row(int y) noexcept { return pixels_.data() + static_cast<std::size_t>(y) * width_; }
  const T* row(int y) const noexcept {
    return pixels_.data() + static_cast<std::size_t>(y) * width_;
  }

  std::span<T> pixels() noexcept { return pixels_; }
  std::span<const T> pixels() const noexcept { return pixels_; }
  std::vector<T>& storage() noexcept { return pixels_; }
  const std::vector<T>& storage() const noexcept { return pixels_; }

  bool same_shape(const auto& other) const noexcept {
    return width_ == other.width() && height_ == other.height();
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> pixels_;
};

/// Single-channel image with values in [0, 1].
using Image2D = Grid<float>;
/// Binary mask, values exactly 0 or 1.
using Mask2D = Grid<std::uint8_t>;

struct RasterStack {
  std::string source_id;
  std::vector<Image2D> slices;

  int width() const noexcept { return slices.empty() ? 0 : slices.front().width(); }
  int height() const noexcept { return slices.empty() ? 0 : slices.front().height(); }
};

/// Converts a [0,1] image to a mask with pixel >= threshold -> 1.
Mask2D threshold_mask(const Image2D& img, float threshold = 0.5f);
Image2D mask_to_image(const Mask2D& mask);
std::size_t count_foreground(const Mask2D& mask) noexcept;

}  // namespace orgseg
