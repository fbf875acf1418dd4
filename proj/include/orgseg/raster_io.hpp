#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "orgseg/image.hpp"

namespace orgseg::io {

/// Decoded single-channel raster: integer samples plus the format's maximum.
struct RawRaster {
  int width = 0;
  int height = 0;
  std::uint32_t max_value = 255;
  std::vector<std::uint16_t> samples;

  Image2D normalized() const;
};

/// Reads an 8/16-bit grayscale PNG or a binary PGM (first image only).
RawRaster read_raster(const std::filesystem::path& path);

/// Reads every image of a multi-image binary PGM file.
std::vector<RawRaster> read_pgm_sequence(const std::filesystem::path& path);

void write_png_gray8(const std::filesystem::path& path, const Image2D& img);
void write_png_gray16(const std::filesystem::path& path, const Image2D& img);
void write_png_mask(const std::filesystem::path& path, const Mask2D& mask);
/// `rgb` is interleaved 8-bit RGB, width*height*3 bytes.
void write_png_rgb(const std::filesystem::path& path, int width, int height,
                   const std::vector<std::uint8_t>& rgb);
void write_pgm(const std::filesystem::path& path, const Image2D& img, std::uint32_t max_value = 255);
/// Writes all slices back to back into one PGM file.
void write_pgm_sequence(const std::filesystem::path& path, const std::vector<Image2D>& slices,
                        std::uint32_t max_value = 255);

}  // namespace orgseg::io
