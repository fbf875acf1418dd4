#include "orgseg/augment.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <numeric>
#include <vector>

#include "orgseg/error.hpp"
#include "orgseg/imaging.hpp"
#include "orgseg/rng.hpp"

namespace orgseg {

AugmentationSpec AugmentationSpec::parse(std::string_view text) {
  AugmentationSpec spec;
  if (text == "blur") {
    spec.kind = AugmentationKind::gaussian_blur;
    return spec;
  }
  if (text == "sobel") {
    spec.kind = AugmentationKind::sobel;
    return spec;
  }
  constexpr std::string_view prefix = "pixel-drop:";
  if (text.starts_with(prefix)) {
    const std::string num(text.substr(prefix.size()));
    double f = 0.0;
    std::size_t used = 0;
    try {
      f = std::stod(num, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != num.size() || num.empty()) {
      throw Error(ErrorKind::ConfigValidationError, "bad pixel-drop fraction: " + std::string(text));
    }
    if (!(f > 0.0 && f < 1.0)) {
      throw Error(ErrorKind::FractionOutOfRange, "pixel-drop fraction must be in (0,1): " + num);
    }
    spec.kind = AugmentationKind::pixel_drop;
    spec.drop_fraction = f;
    return spec;
  }
  throw Error(ErrorKind::ConfigValidationError, "unknown augmentation: " + std::string(text));
}

std::string AugmentationSpec::to_string() const {
  switch (kind) {
    case AugmentationKind::gaussian_blur: return "blur";
    case AugmentationKind::sobel: return "sobel";
    case AugmentationKind::pixel_drop: {
      std::array<char, 32> buf{};
      auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), drop_fraction);
      return "pixel-drop:" + std::string(buf.data(), end);
    }
  }
  return "blur";
}

Image2D pixel_drop(const Image2D& img, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw Error(ErrorKind::FractionOutOfRange, "pixel drop fraction " + std::to_string(fraction));
  }
  Image2D out = img;
  const std::size_t n = img.size();
  const auto count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  std::vector<std::uint32_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0u);
  Rng rng(seed);
  // Partial Fisher-Yates: the first `count` slots become a uniform sample.
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + rng.below(n - i);
    std::swap(idx[i], idx[j]);
    out.pixels()[idx[i]] = 0.0f;
  }
  return out;
}

namespace {

Image2D gaussian5(const Image2D& img) {
  std::array<double, 5> k{};
  double sum = 0.0;
  for (int i = 0; i < 5; ++i) {
    k[i] = std::exp(-0.5 * (i - 2) * (i - 2));
    sum += k[i];
  }
  for (auto& v : k) v /= sum;
  const int w = img.width();
  const int h = img.height();
  Grid<double> tmp(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -2; i <= 2; ++i) acc += k[i + 2] * img.at(reflect_index(x + i, w), y);
      tmp.at(x, y) = acc;
    }
  }
  Image2D out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -2; i <= 2; ++i) acc += k[i + 2] * tmp.at(x, reflect_index(y + i, h));
      out.at(x, y) = static_cast<float>(acc);
    }
  }
  return out;
}

}  // namespace

Image2D gaussian_blur_halfres(const Image2D& img) {
  if (img.width() % 2 != 0 || img.height() % 2 != 0) {
    throw Error(ErrorKind::OddDimensions,
                std::to_string(img.width()) + "x" + std::to_string(img.height()));
  }
  const Image2D smooth = gaussian5(img);
  const Image2D half = resize_bilinear(smooth, img.width() / 2, img.height() / 2);
  Image2D out = resize_bilinear(half, img.width(), img.height());
  for (auto& v : out.pixels()) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

Image2D sobel_filter(const Image2D& img) {
  const int w = img.width();
  const int h = img.height();
  if (w < 3 || h < 3) {
    throw Error(ErrorKind::ImageTooSmall, std::to_string(w) + "x" + std::to_string(h));
  }
  const double inv_bound = 1.0 / (4.0 * std::sqrt(2.0));
  Image2D out(w, h);
  for (int y = 0; y < h; ++y) {
    const int ym = reflect_index(y - 1, h);
    const int yp = reflect_index(y + 1, h);
    for (int x = 0; x < w; ++x) {
      const int xm = reflect_index(x - 1, w);
      const int xp = reflect_index(x + 1, w);
      const double gx = (img.at(xp, ym) + 2.0 * img.at(xp, y) + img.at(xp, yp)) -
                        (img.at(xm, ym) + 2.0 * img.at(xm, y) + img.at(xm, yp));
      const double gy = (img.at(xm, yp) + 2.0 * img.at(x, yp) + img.at(xp, yp)) -
                        (img.at(xm, ym) + 2.0 * img.at(x, ym) + img.at(xp, ym));
      out.at(x, y) = static_cast<float>(std::min(1.0, std::sqrt(gx * gx + gy * gy) * inv_bound));
    }
  }
  return out;
}

Image2D apply_augmentation(const Image2D& img, const AugmentationSpec& spec, std::uint64_t seed) {
  switch (spec.kind) {
    case AugmentationKind::pixel_drop: return pixel_drop(img, spec.drop_fraction, seed);
    case AugmentationKind::gaussian_blur: return gaussian_blur_halfres(img);
    case AugmentationKind::sobel: return sobel_filter(img);
  }
  return img;
}

}  // namespace orgseg
