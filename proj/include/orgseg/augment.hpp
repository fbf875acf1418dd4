#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "orgseg/image.hpp"

namespace orgseg {

enum class AugmentationKind { pixel_drop, gaussian_blur, sobel };

/// Pretext-task corruption. Text form: `pixel-drop:<f>`, `blur`, `sobel`.
struct AugmentationSpec {
  AugmentationKind kind = AugmentationKind::gaussian_blur;
  double drop_fraction = 0.25;  // pixel_drop only

  static AugmentationSpec parse(std::string_view text);
  std::string to_string() const;
  friend bool operator==(const AugmentationSpec&, const AugmentationSpec&) = default;
};

/// Zeroes exactly round(fraction * W * H) distinct, uniformly chosen pixels.
Image2D pixel_drop(const Image2D& img, double fraction, std::uint64_t seed);

/// 5x5 Gaussian (sigma 1, reflect border), bilinear 2x down then back up.
Image2D gaussian_blur_halfres(const Image2D& img);

/// Sobel gradient magnitude divided by its bound 4*sqrt(2).
Image2D sobel_filter(const Image2D& img);

Image2D apply_augmentation(const Image2D& img, const AugmentationSpec& spec, std::uint64_t seed);

/// Index reflection without repeating the edge sample (d c b | a b c d | c b a).
constexpr int reflect_index(int i, int n) noexcept {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return i;
}

}  // namespace orgseg
