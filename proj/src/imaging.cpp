#include "orgseg/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <regex>

#include "orgseg/error.hpp"
#include "orgseg/raster_io.hpp"
#include "orgseg/rng.hpp"

namespace orgseg {
namespace fs = std::filesystem;

Mask2D threshold_mask(const Image2D& img, float threshold) {
  Mask2D out(img.width(), img.height());
  auto src = img.pixels();
  auto dst = out.pixels();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] >= threshold ? 1 : 0;
  return out;
}

Image2D mask_to_image(const Mask2D& mask) {
  Image2D out(mask.width(), mask.height());
  auto src = mask.pixels();
  auto dst = out.pixels();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] ? 1.0f : 0.0f;
  return out;
}

std::size_t count_foreground(const Mask2D& mask) noexcept {
  std::size_t n = 0;
  for (auto v : mask.pixels()) n += v != 0;
  return n;
}

namespace {

std::vector<fs::path> slice_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorKind::MissingFile, dir.string());
  static const std::regex pattern(R"(slice_(\d+)\.(png|pgm))");
  std::vector<std::pair<long, fs::path>> found;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (entry.is_regular_file() && std::regex_match(name, m, pattern)) {
      found.emplace_back(std::stol(m[1].str()), entry.path());
    }
  }
  if (found.empty()) throw Error(ErrorKind::MissingFile, "no slice_<k> rasters in " + dir.string());
  std::sort(found.begin(), found.end());
  std::vector<fs::path> out;
  for (auto& [k, p] : found) out.push_back(std::move(p));
  return out;
}

std::vector<io::RawRaster> read_stack_rasters(const fs::path& path, StackFormat format) {
  std::vector<io::RawRaster> rasters;
  if (format == StackFormat::raster_dir) {
    for (const auto& f : slice_files(path)) rasters.push_back(io::read_raster(f));
  } else {
    rasters = io::read_pgm_sequence(path);
  }
  for (const auto& r : rasters) {
    if (r.width != rasters.front().width || r.height != rasters.front().height) {
      throw Error(ErrorKind::InconsistentDimensions,
                  path.string() + ": " + std::to_string(r.width) + "x" + std::to_string(r.height) +
                      " vs " + std::to_string(rasters.front().width) + "x" +
                      std::to_string(rasters.front().height));
    }
  }
  return rasters;
}

}  // namespace

RasterStack load_stack(const fs::path& path, StackFormat format) {
  RasterStack stack;
  stack.source_id = format == StackFormat::raster_dir ? path.filename().string() : path.stem().string();
  if (stack.source_id.empty()) stack.source_id = path.parent_path().filename().string();
  for (auto& r : read_stack_rasters(path, format)) stack.slices.push_back(r.normalized());
  return stack;
}

std::vector<Mask2D> load_mask_stack(const fs::path& path, StackFormat format) {
  std::vector<Mask2D> masks;
  for (auto& r : read_stack_rasters(path, format)) masks.push_back(threshold_mask(r.normalized()));
  return masks;
}

void write_stack_layout(const fs::path& root, const RasterStack& stack,
                        const std::vector<Mask2D>& masks) {
  const fs::path img_dir = root / "stacks" / stack.source_id;
  const fs::path mask_dir = root / "masks" / stack.source_id;
  fs::create_directories(img_dir);
  fs::create_directories(mask_dir);
  for (std::size_t k = 0; k < stack.slices.size(); ++k) {
    const std::string name = "slice_" + std::to_string(k) + ".png";
    io::write_png_gray16(img_dir / name, stack.slices[k]);
    if (k < masks.size()) io::write_png_mask(mask_dir / name, masks[k]);
  }
}

std::vector<std::pair<int, int>> window_origins(int width, int height, int window, int stride) {
  std::vector<std::pair<int, int>> out;
  if (window > width || window > height || stride <= 0) return out;
  for (int y = 0; y + window <= height; y += stride) {
    for (int x = 0; x + window <= width; x += stride) out.emplace_back(x, y);
  }
  return out;
}

namespace {

template <class T>
Grid<T> extract(const Grid<T>& src, int x0, int y0, int w, int h) {
  Grid<T> out(w, h);
  for (int y = 0; y < h; ++y) std::copy_n(src.row(y0 + y) + x0, w, out.row(y));
  return out;
}

}  // namespace

std::vector<CropRecord> tile_stack(const RasterStack& stack, const std::vector<Mask2D>& masks,
                                   const TilingParams& params) {
  if (params.window <= 0 || params.stride <= 0 || params.resize_to <= 0) {
    throw Error(ErrorKind::InvalidSpec, "tiling window, stride and resize target must be positive");
  }
  if (masks.size() != stack.slices.size()) {
    throw Error(ErrorKind::MisalignedMasks, stack.source_id + ": " + std::to_string(masks.size()) +
                                                " masks for " + std::to_string(stack.slices.size()) +
                                                " slices");
  }
  for (std::size_t k = 0; k < masks.size(); ++k) {
    if (!masks[k].same_shape(stack.slices[k])) {
      throw Error(ErrorKind::MisalignedMasks, stack.source_id + " slice " + std::to_string(k));
    }
  }
  if (params.window > std::min(stack.width(), stack.height())) {
    throw Error(ErrorKind::WindowLargerThanImage,
                std::to_string(params.window) + " > min(" + std::to_string(stack.width()) + ", " +
                    std::to_string(stack.height()) + ")");
  }
  const auto origins = window_origins(stack.width(), stack.height(), params.window, params.stride);
  const double total = static_cast<double>(params.window) * params.window;
  std::vector<CropRecord> out;
  for (std::size_t k = 0; k < stack.slices.size(); ++k) {
    const Mask2D& mask = masks[k];
    for (const auto& [x0, y0] : origins) {
      std::size_t fg = 0;
      for (int y = 0; y < params.window; ++y) {
        const std::uint8_t* r = mask.row(y0 + y) + x0;
        for (int x = 0; x < params.window; ++x) fg += r[x] != 0;
      }
      const double fraction = static_cast<double>(fg) / total;
      if (fraction < params.min_object_fraction) continue;
      CropRecord rec;
      rec.source_id = stack.source_id;
      rec.slice_index = static_cast<int>(k);
      rec.window_x = x0;
      rec.window_y = y0;
      rec.object_fraction = fraction;
      Image2D win = extract(stack.slices[k], x0, y0, params.window, params.window);
      Mask2D mwin = extract(mask, x0, y0, params.window, params.window);
      if (params.window == params.resize_to) {
        rec.image = std::move(win);
        rec.mask = std::move(mwin);
      } else {
        rec.image = resize_bilinear(win, params.resize_to, params.resize_to);
        rec.mask = resize_nearest(mwin, params.resize_to, params.resize_to);
      }
      out.push_back(std::move(rec));
    }
  }
  return out;
}

template <class T>
Grid<T> rotate90(const Grid<T>& in, int degrees) {
  const int turns = ((degrees / 90) % 4 + 4) % 4;
  if (degrees % 90 != 0) throw Error(ErrorKind::InvalidSpec, "rotation must be a multiple of 90");
  const int w = in.width();
  const int h = in.height();
  switch (turns) {
    case 0:
      return in;
    case 1: {
      Grid<T> out(h, w);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) out.at(h - 1 - y, x) = in.at(x, y);
      return out;
    }
    case 2: {
      Grid<T> out(w, h);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) out.at(w - 1 - x, h - 1 - y) = in.at(x, y);
      return out;
    }
    default: {
      Grid<T> out(h, w);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) out.at(y, w - 1 - x) = in.at(x, y);
      return out;
    }
  }
}

template Grid<float> rotate90(const Grid<float>&, int);
template Grid<std::uint8_t> rotate90(const Grid<std::uint8_t>&, int);

std::vector<CropRecord> rotate_enrich(const std::vector<CropRecord>& crops) {
  std::vector<CropRecord> out;
  out.reserve(crops.size() * 4);
  for (const auto& c : crops) {
    if (c.image.width() != c.image.height()) {
      throw Error(ErrorKind::NonSquareCrop, c.source_id + " " + std::to_string(c.image.width()) +
                                                "x" + std::to_string(c.image.height()));
    }
  }
  for (const auto& c : crops) {
    for (int r : {0, 90, 180, 270}) {
      CropRecord rc = c;
      rc.image = rotate90(c.image, r);
      rc.mask = rotate90(c.mask, r);
      rc.rotation_deg = (c.rotation_deg + r) % 360;
      out.push_back(std::move(rc));
    }
  }
  return out;
}

namespace {
double source_coord(int dst, int out_n, int in_n) {
  if (out_n <= 1) return 0.0;
  return static_cast<double>(dst) * static_cast<double>(in_n - 1) / static_cast<double>(out_n - 1);
}
}  // namespace

Image2D resize_bilinear(const Image2D& img, int out_w, int out_h) {
  if (out_w <= 0 || out_h <= 0) throw Error(ErrorKind::InvalidSpec, "resize target must be positive");
  Image2D out(out_w, out_h);
  const int w = img.width();
  const int h = img.height();
  std::vector<int> x0(out_w), x1(out_w);
  std::vector<float> fx(out_w);
  for (int x = 0; x < out_w; ++x) {
    const double sx = source_coord(x, out_w, w);
    x0[x] = std::min(static_cast<int>(sx), w - 1);
    x1[x] = std::min(x0[x] + 1, w - 1);
    fx[x] = static_cast<float>(sx - x0[x]);
  }
  for (int y = 0; y < out_h; ++y) {
    const double sy = source_coord(y, out_h, h);
    const int y0 = std::min(static_cast<int>(sy), h - 1);
    const int y1 = std::min(y0 + 1, h - 1);
    const float fy = static_cast<float>(sy - y0);
    const float* r0 = img.row(y0);
    const float* r1 = img.row(y1);
    float* dst = out.row(y);
    for (int x = 0; x < out_w; ++x) {
      const float top = r0[x0[x]] + (r0[x1[x]] - r0[x0[x]]) * fx[x];
      const float bot = r1[x0[x]] + (r1[x1[x]] - r1[x0[x]]) * fx[x];
      dst[x] = top + (bot - top) * fy;
    }
  }
  return out;
}

Mask2D resize_nearest(const Mask2D& mask, int out_w, int out_h) {
  if (out_w <= 0 || out_h <= 0) throw Error(ErrorKind::InvalidSpec, "resize target must be positive");
  Mask2D out(out_w, out_h);
  for (int y = 0; y < out_h; ++y) {
    const int sy = static_cast<int>(std::lround(source_coord(y, out_h, mask.height())));
    for (int x = 0; x < out_w; ++x) {
      const int sx = static_cast<int>(std::lround(source_coord(x, out_w, mask.width())));
      out.at(x, y) = mask.at(sx, sy) >= 1 ? 1 : 0;
    }
  }
  return out;
}

std::vector<Mask2D> SynthDataset::mask_slices(std::size_t stack) const {
  std::vector<Mask2D> out;
  for (const auto& s : masks.at(stack).slices) out.push_back(threshold_mask(s));
  return out;
}

namespace {

struct Blob {
  double cx, cy, a, b, cos_t, sin_t;
  double depth;       // interior darkening
  double rim_depth;   // extra darkening at the boundary
  double texture_phase;
};

}  // namespace

SynthDataset synthesize_dataset(const SynthParams& p) {
  if (p.n_stacks <= 0 || p.slices_per_stack <= 0 || p.width <= 0 || p.height <= 0 ||
      p.min_blobs < 0 || p.max_blobs < p.min_blobs) {
    throw Error(ErrorKind::InvalidSpec, "invalid synthetic dataset parameters");
  }
  SynthDataset out;
  const double base = std::min(p.width, p.height);
  for (int s = 0; s < p.n_stacks; ++s) {
    Rng rng(derive_seed(p.seed, "synth-stack", static_cast<std::uint64_t>(s)));
    const int n_blobs = static_cast<int>(rng.between(p.min_blobs, p.max_blobs));
    std::vector<Blob> blobs;
    for (int i = 0; i < n_blobs; ++i) {
      Blob b{};
      b.cx = rng.uniform(0.0, p.width);
      b.cy = rng.uniform(0.0, p.height);
      b.a = base * rng.uniform(p.min_radius_frac, p.max_radius_frac);
      b.b = b.a * rng.uniform(0.6, 1.0);
      const double theta = rng.uniform(0.0, 3.141592653589793);
      b.cos_t = std::cos(theta);
      b.sin_t = std::sin(theta);
      const bool ring = rng.uniform() < 0.4;
      b.depth = ring ? rng.uniform(0.05, 0.12) : rng.uniform(0.18, 0.32);
      b.rim_depth = rng.uniform(0.15, 0.3);
      b.texture_phase = rng.uniform(0.0, 6.283185307179586);
      blobs.push_back(b);
    }
    const double bg = rng.uniform(0.55, 0.7);
    const double gx = rng.uniform(-0.08, 0.08);
    const double gy = rng.uniform(-0.08, 0.08);

    Image2D mask_img(p.width, p.height, 0.0f);
    for (const auto& b : blobs) {
      const int x0 = std::max(0, static_cast<int>(std::floor(b.cx - b.a - 1)));
      const int x1 = std::min(p.width - 1, static_cast<int>(std::ceil(b.cx + b.a + 1)));
      const int y0 = std::max(0, static_cast<int>(std::floor(b.cy - b.a - 1)));
      const int y1 = std::min(p.height - 1, static_cast<int>(std::ceil(b.cy + b.a + 1)));
      for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
          const double dx = x + 0.5 - b.cx;
          const double dy = y + 0.5 - b.cy;
          const double u = (dx * b.cos_t + dy * b.sin_t) / b.a;
          const double v = (-dx * b.sin_t + dy * b.cos_t) / b.b;
          if (u * u + v * v <= 1.0) mask_img.at(x, y) = 1.0f;
        }
      }
    }

    RasterStack images;
    RasterStack masks;
    images.source_id = masks.source_id = "synth_" + std::to_string(s);
    const double mid = 0.5 * (p.slices_per_stack - 1);
    for (int k = 0; k < p.slices_per_stack; ++k) {
      Rng noise(derive_seed(p.seed, "synth-noise", static_cast<std::uint64_t>(s),
                            static_cast<std::uint64_t>(k)));
      const double softness = 1.0 + 0.75 * std::abs(k - mid);  // defocus away from the mid plane
      Image2D img(p.width, p.height);
      for (int y = 0; y < p.height; ++y) {
        for (int x = 0; x < p.width; ++x) {
          const double nx = static_cast<double>(x) / p.width - 0.5;
          const double ny = static_cast<double>(y) / p.height - 0.5;
          img.at(x, y) = static_cast<float>(bg + gx * nx + gy * ny - 0.05 * (nx * nx + ny * ny));
        }
      }
      for (const auto& b : blobs) {
        const double reach = b.a + 4.0 * softness + 2.0;
        const int x0 = std::max(0, static_cast<int>(std::floor(b.cx - reach)));
        const int x1 = std::min(p.width - 1, static_cast<int>(std::ceil(b.cx + reach)));
        const int y0 = std::max(0, static_cast<int>(std::floor(b.cy - reach)));
        const int y1 = std::min(p.height - 1, static_cast<int>(std::ceil(b.cy + reach)));
        const double r_eff = b.b;
        for (int y = y0; y <= y1; ++y) {
          for (int x = x0; x <= x1; ++x) {
            const double dx = x + 0.5 - b.cx;
            const double dy = y + 0.5 - b.cy;
            const double u = (dx * b.cos_t + dy * b.sin_t) / b.a;
            const double v = (-dx * b.sin_t + dy * b.cos_t) / b.b;
            const double d = std::sqrt(u * u + v * v);
            const double edge_px = (1.0 - d) * r_eff;  // signed distance-ish, positive inside
            const double inside = 1.0 / (1.0 + std::exp(-edge_px / softness));
            const double rim_pos = (edge_px - 2.0) / (1.5 + softness);
            const double rim = std::exp(-rim_pos * rim_pos);
            const double texture = 0.03 * std::sin(6.0 * u + b.texture_phase) * std::cos(5.0 * v);
            const double darken = inside * (b.depth + texture) + b.rim_depth * rim;
            img.at(x, y) = static_cast<float>(img.at(x, y) - darken);
          }
        }
      }
      for (auto& v : img.pixels()) {
        v = static_cast<float>(std::clamp(v + p.noise_sigma * noise.normal(), 0.0, 1.0));
      }
      images.slices.push_back(std::move(img));
      masks.slices.push_back(mask_img);
    }
    out.images.push_back(std::move(images));
    out.masks.push_back(std::move(masks));
  }
  return out;
}

}  // namespace orgseg
