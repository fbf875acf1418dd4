#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "orgseg/image.hpp"

namespace orgseg {

enum class StackFormat { raster_dir, stacked_raster };

/// One resized image/mask pair with the provenance of its source window.
struct CropRecord {
  Image2D image;
  Mask2D mask;
  std::string source_id;
  int slice_index = 0;
  int window_x = 0;  // origin at source resolution
  int window_y = 0;
  int rotation_deg = 0;
  double object_fraction = 0.0;  // measured before resizing
};

struct TilingParams {
  int window = 636;
  int stride = 60;
  int resize_to = 320;
  double min_object_fraction = 0.05;
};

/// Loads a stack. `raster_dir` expects `slice_<k>.{png,pgm}` files (sorted by
/// k); `stacked_raster` expects one multi-image PGM file.
RasterStack load_stack(const std::filesystem::path& path, StackFormat format);
/// Loads a mask stack and binarizes it at 0.5.
std::vector<Mask2D> load_mask_stack(const std::filesystem::path& path, StackFormat format);

/// Writes `stacks/<id>/slice_<k>.png` and the mirrored `masks/<id>/slice_<k>.png`.
void write_stack_layout(const std::filesystem::path& root, const RasterStack& stack,
                        const std::vector<Mask2D>& masks);

/// Full-window origins (i*stride, j*stride) for a width x height slice.
std::vector<std::pair<int, int>> window_origins(int width, int height, int window, int stride);

std::vector<CropRecord> tile_stack(const RasterStack& stack, const std::vector<Mask2D>& masks,
                                   const TilingParams& params = {});

/// Clockwise rotation by a multiple of 90 degrees; lossless.
template <class T>
Grid<T> rotate90(const Grid<T>& in, int degrees);

/// Returns every crop at rotations 0, 90, 180, 270 (in that order per crop).
std::vector<CropRecord> rotate_enrich(const std::vector<CropRecord>& crops);

/// Corner-aligned bilinear resampling.
Image2D resize_bilinear(const Image2D& img, int out_w, int out_h);
/// Corner-aligned nearest-neighbour resampling; output stays binary.
Mask2D resize_nearest(const Mask2D& mask, int out_w, int out_h);

struct SynthParams {
  int n_stacks = 10;
  int slices_per_stack = 4;
  int width = 640;
  int height = 640;
  int min_blobs = 3;
  int max_blobs = 12;
  /// Blob semi-axes as a fraction of min(width, height).
  double min_radius_frac = 0.03;
  double max_radius_frac = 0.09;
  double noise_sigma = 0.03;
  std::uint64_t seed = 26;
};

struct SynthDataset {
  std::vector<RasterStack> images;
  std::vector<RasterStack> masks;  // values exactly 0 or 1

  std::vector<Mask2D> mask_slices(std::size_t stack) const;
};

/// Generates brightfield-like organoid images (soft-edged elliptical blobs
/// with a darker rim on a noisy, unevenly lit background) and exact masks.
SynthDataset synthesize_dataset(const SynthParams& params);

}  // namespace orgseg
