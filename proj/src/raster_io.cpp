#include "orgseg/raster_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include "orgseg/error.hpp"

namespace orgseg::io {
namespace fs = std::filesystem;

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const fs::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) {
    if (mode[0] == 'r') throw Error(ErrorKind::MissingFile, path.string());
    throw Error(ErrorKind::Io, "cannot open for writing: " + path.string());
  }
  return f;
}

bool has_png_signature(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  unsigned char sig[8] = {};
  in.read(reinterpret_cast<char*>(sig), 8);
  return in.gcount() == 8 && png_sig_cmp(sig, 0, 8) == 0;
}

RawRaster read_png(const fs::path& path) {
  FilePtr file = open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorKind::Io, "libpng initialisation failed");
  }
  RawRaster out;
  std::vector<png_bytep> rows;
  std::vector<std::uint8_t> buffer;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorKind::CorruptRaster, path.string());
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  const png_uint_32 width = png_get_image_width(png, info);
  const png_uint_32 height = png_get_image_height(png, info);
  const int color_type = png_get_color_type(png, info);
  int bit_depth = png_get_bit_depth(png, info);
  if (color_type != PNG_COLOR_TYPE_GRAY) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorKind::CorruptRaster, "not a single-channel grayscale PNG: " + path.string());
  }
  if (bit_depth < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
  }
  if (bit_depth == 16) png_set_swap(png);  // host little-endian 16-bit samples
  png_read_update_info(png, info);
  bit_depth = png_get_bit_depth(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  buffer.resize(rowbytes * height);
  rows.resize(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = buffer.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  out.width = static_cast<int>(width);
  out.height = static_cast<int>(height);
  out.samples.resize(static_cast<std::size_t>(width) * height);
  if (bit_depth == 16) {
    out.max_value = 65535;
    for (std::size_t i = 0; i < out.samples.size(); ++i) {
      out.samples[i] = static_cast<std::uint16_t>(buffer[2 * i] | (buffer[2 * i + 1] << 8));
    }
  } else {
    out.max_value = 255;
    std::copy(buffer.begin(), buffer.begin() + out.samples.size(), out.samples.begin());
  }
  return out;
}

// Skips whitespace and '#' comments in a PNM header.
bool skip_pnm_space(std::istream& in) {
  while (true) {
    int c = in.peek();
    if (c == EOF) return false;
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      return true;
    }
  }
}

bool read_pgm_one(std::istream& in, RawRaster& out, const fs::path& path) {
  if (!skip_pnm_space(in)) return false;
  char magic[2];
  in.read(magic, 2);
  if (in.gcount() != 2 || magic[0] != 'P' || magic[1] != '5') {
    throw Error(ErrorKind::CorruptRaster, "not a binary PGM: " + path.string());
  }
  long w = 0, h = 0, maxval = 0;
  if (!skip_pnm_space(in) || !(in >> w) || !skip_pnm_space(in) || !(in >> h) ||
      !skip_pnm_space(in) || !(in >> maxval)) {
    throw Error(ErrorKind::CorruptRaster, "bad PGM header: " + path.string());
  }
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) {
    throw Error(ErrorKind::CorruptRaster, "bad PGM header values: " + path.string());
  }
  in.get();  // single whitespace before raster
  out.width = static_cast<int>(w);
  out.height = static_cast<int>(h);
  out.max_value = static_cast<std::uint32_t>(maxval);
  const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  out.samples.resize(n);
  if (maxval < 256) {
    std::vector<std::uint8_t> raw(n);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) {
      throw Error(ErrorKind::CorruptRaster, "truncated PGM: " + path.string());
    }
    std::copy(raw.begin(), raw.end(), out.samples.begin());
  } else {
    std::vector<std::uint8_t> raw(2 * n);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(2 * n));
    if (static_cast<std::size_t>(in.gcount()) != 2 * n) {
      throw Error(ErrorKind::CorruptRaster, "truncated PGM: " + path.string());
    }
    for (std::size_t i = 0; i < n; ++i) {
      out.samples[i] = static_cast<std::uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);
    }
  }
  for (auto s : out.samples) {
    if (s > out.max_value) throw Error(ErrorKind::CorruptRaster, "sample exceeds maxval: " + path.string());
  }
  return true;
}

template <class Fn>
void write_png_impl(const fs::path& path, int width, int height, int color_type, int bit_depth,
                    Fn&& fill_row) {
  FilePtr file = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorKind::Io, "libpng initialisation failed");
  }
  const int channels = color_type == PNG_COLOR_TYPE_RGB ? 3 : 1;
  std::vector<std::uint8_t> row(static_cast<std::size_t>(width) * channels * (bit_depth / 8));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorKind::Io, "PNG write failed: " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
               bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) {
    fill_row(y, row.data());
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

std::uint16_t quantize(float v, std::uint32_t max_value) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint16_t>(std::lround(c * static_cast<float>(max_value)));
}

}  // namespace

Image2D RawRaster::normalized() const {
  Image2D img(width, height);
  const float inv = 1.0f / static_cast<float>(max_value);
  auto px = img.pixels();
  for (std::size_t i = 0; i < samples.size(); ++i) px[i] = static_cast<float>(samples[i]) * inv;
  return img;
}

RawRaster read_raster(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorKind::MissingFile, path.string());
  if (has_png_signature(path)) return read_png(path);
  std::ifstream in(path, std::ios::binary);
  RawRaster out;
  if (!read_pgm_one(in, out, path)) throw Error(ErrorKind::CorruptRaster, "empty file: " + path.string());
  return out;
}

std::vector<RawRaster> read_pgm_sequence(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorKind::MissingFile, path.string());
  std::ifstream in(path, std::ios::binary);
  std::vector<RawRaster> out;
  RawRaster r;
  while (read_pgm_one(in, r, path)) out.push_back(std::move(r));
  if (out.empty()) throw Error(ErrorKind::CorruptRaster, "no images in " + path.string());
  return out;
}

void write_png_gray8(const fs::path& path, const Image2D& img) {
  write_png_impl(path, img.width(), img.height(), PNG_COLOR_TYPE_GRAY, 8,
                 [&](int y, std::uint8_t* row) {
                   const float* src = img.row(y);
                   for (int x = 0; x < img.width(); ++x) {
                     row[x] = static_cast<std::uint8_t>(quantize(src[x], 255));
                   }
                 });
}

void write_png_gray16(const fs::path& path, const Image2D& img) {
  write_png_impl(path, img.width(), img.height(), PNG_COLOR_TYPE_GRAY, 16,
                 [&](int y, std::uint8_t* row) {
                   const float* src = img.row(y);
                   for (int x = 0; x < img.width(); ++x) {
                     const std::uint16_t v = quantize(src[x], 65535);
                     row[2 * x] = static_cast<std::uint8_t>(v >> 8);  // PNG is big-endian
                     row[2 * x + 1] = static_cast<std::uint8_t>(v & 0xff);
                   }
                 });
}

void write_png_mask(const fs::path& path, const Mask2D& mask) {
  write_png_impl(path, mask.width(), mask.height(), PNG_COLOR_TYPE_GRAY, 8,
                 [&](int y, std::uint8_t* row) {
                   const std::uint8_t* src = mask.row(y);
                   for (int x = 0; x < mask.width(); ++x) row[x] = src[x] ? 255 : 0;
                 });
}

void write_png_rgb(const fs::path& path, int width, int height, const std::vector<std::uint8_t>& rgb) {
  write_png_impl(path, width, height, PNG_COLOR_TYPE_RGB, 8, [&](int y, std::uint8_t* row) {
    std::copy_n(rgb.data() + static_cast<std::size_t>(y) * width * 3, width * 3, row);
  });
}

namespace {
void append_pgm(std::ostream& out, const Image2D& img, std::uint32_t max_value) {
  out << "P5\n" << img.width() << ' ' << img.height() << '\n' << max_value << '\n';
  for (float v : img.pixels()) {
    const std::uint16_t q = quantize(v, max_value);
    if (max_value < 256) {
      out.put(static_cast<char>(q));
    } else {
      out.put(static_cast<char>(q >> 8));
      out.put(static_cast<char>(q & 0xff));
    }
  }
}
}  // namespace

void write_pgm(const fs::path& path, const Image2D& img, std::uint32_t max_value) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot open for writing: " + path.string());
  append_pgm(out, img, max_value);
}

void write_pgm_sequence(const fs::path& path, const std::vector<Image2D>& slices,
                        std::uint32_t max_value) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot open for writing: " + path.string());
  for (const auto& s : slices) append_pgm(out, s, max_value);
}

}  // namespace orgseg::io
