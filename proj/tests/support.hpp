#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "orgseg/dataset.hpp"
#include "orgseg/image.hpp"
#include "orgseg/imaging.hpp"
#include "orgseg/losses.hpp"
#include "orgseg/rng.hpp"

namespace testsupport {

inline orgseg::Image2D random_image(int w, int h, std::uint64_t seed) {
  orgseg::Rng rng(seed);
  orgseg::Image2D img(w, h);
  for (auto& v : img.pixels()) v = static_cast<float>(rng.uniform());
  return img;
}

inline orgseg::Mask2D random_mask(int w, int h, std::uint64_t seed, double p = 0.5) {
  orgseg::Rng rng(seed);
  orgseg::Mask2D m(w, h);
  for (auto& v : m.pixels()) v = rng.uniform() < p ? 1 : 0;
  return m;
}

/// Four rotations of `windows[i]` windows for source i, on a 2-slice grid.
inline std::vector<orgseg::CropInfo> grid_infos(const std::vector<int>& windows) {
  std::vector<orgseg::CropInfo> out;
  for (std::size_t s = 0; s < windows.size(); ++s)
    for (int w = 0; w < windows[s]; ++w)
      for (int rot : {0, 90, 180, 270}) {
        orgseg::CropInfo c;
        c.source_id = "src" + std::to_string(s);
        c.slice_index = w % 2;
        c.window_x = 60 * (w / 2 % 10);
        c.window_y = 60 * (w / 20);
        c.rotation_deg = rot;
        c.object_fraction = 0.1;
        out.push_back(c);
      }
  return out;
}

/// Tiled, rotation-enriched crops from the blob generator.
inline std::vector<orgseg::CropRecord> synthetic_crops(int stacks, int slices, int side, int window, int stride,
                                                       int resize, std::uint64_t seed = 26) {
  orgseg::SynthParams p;
  p.n_stacks = stacks;
  p.slices_per_stack = slices;
  p.width = p.height = side;
  p.seed = seed;
  const auto data = orgseg::synthesize_dataset(p);
  std::vector<orgseg::CropRecord> crops;
  for (std::size_t s = 0; s < data.images.size(); ++s) {
    auto part = orgseg::tile_stack(data.images[s], data.mask_slices(s), {window, stride, resize, 0.05});
    crops.insert(crops.end(), part.begin(), part.end());
  }
  return orgseg::rotate_enrich(crops);
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("orgseg_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::string out;
  if (FILE* f = std::fopen(p.string().c_str(), "rb")) {
    char buf[65536];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) out.append(buf, n);
    std::fclose(f);
  }
  return out;
}

/// Max |analytic - central difference| over max |central difference|.
inline double loss_grad_rel_error(orgseg::LossKind kind, const std::vector<double>& target,
                                  std::vector<double> pred, int w, int h, double step = 1e-4,
                                  const orgseg::LossParams& params = {}) {
  using orgseg::PlaneView;
  const auto analytic = orgseg::loss_with_grad(kind, PlaneView{target, w, h}, PlaneView{pred, w, h}, params).grad;
  double worst = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double keep = pred[i];
    pred[i] = keep + step;
    const double up = orgseg::loss_value(kind, PlaneView{target, w, h}, PlaneView{pred, w, h}, params);
    pred[i] = keep - step;
    const double down = orgseg::loss_value(kind, PlaneView{target, w, h}, PlaneView{pred, w, h}, params);
    pred[i] = keep;
    const double numeric = (up - down) / (2.0 * step);
    worst = std::max(worst, std::abs(numeric - analytic[i]));
    scale = std::max(scale, std::abs(numeric));
  }
  return worst / std::max(scale, 1e-12);
}

}  // namespace testsupport
