#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "orgseg/image.hpp"
#include "orgseg/imaging.hpp"

namespace orgseg {

/// Crop provenance without pixels.
struct CropInfo {
  std::string source_id;
  int slice_index = 0;
  int window_x = 0;
  int window_y = 0;
  int rotation_deg = 0;
  double object_fraction = 0.0;

  friend bool operator==(const CropInfo&, const CropInfo&) = default;
};

CropInfo info_of(const CropRecord& crop);

/// `<source>/s<slice>/x<wx>_y<wy>/r<rot>`
std::string crop_id(const CropInfo& info);
/// The rotation-free part of a crop id, shared by all rotations of a window.
std::string window_key(const CropInfo& info);
/// Parses a crop id back into (window key, rotation). Throws InvalidSpec.
std::pair<std::string, int> split_crop_id(std::string_view id);

struct CropPair {
  Image2D image;
  Mask2D mask;
};

/// Anything that can hand out crops by id.
class CropSource {
 public:
  virtual ~CropSource() = default;
  virtual CropPair load(const std::string& id) const = 0;
};

/// Crops kept in memory, keyed by crop id.
class MemoryCropSource final : public CropSource {
 public:
  MemoryCropSource() = default;
  explicit MemoryCropSource(const std::vector<CropRecord>& crops);
  void add(const CropRecord& crop);
  CropPair load(const std::string& id) const override;
  std::size_t size() const noexcept { return crops_.size(); }

 private:
  std::map<std::string, CropPair> crops_;
};

/// On-disk crop store holding unrotated windows only:
///   index.json   window records (key, provenance, size, byte offsets)
///   images.f32   little-endian float32 pixels, window after window
///   masks.u8     one byte per mask pixel
/// Rotated variants are produced on load.
class CropStore final : public CropSource {
 public:
  /// Writes the rotation-0 crops of `crops`; other rotations are dropped.
  static void write(const std::filesystem::path& dir, const std::vector<CropRecord>& crops);
  static CropStore open(const std::filesystem::path& dir);

  /// Every crop id the store can produce (all four rotations per window).
  std::vector<CropInfo> infos() const;
  CropPair load(const std::string& id) const override;
  std::size_t window_count() const noexcept { return windows_.size(); }
  int crop_size() const noexcept { return size_; }

 private:
  struct Window {
    CropInfo info;
    std::uint64_t index = 0;
  };

  std::filesystem::path dir_;
  int size_ = 0;
  std::map<std::string, Window> windows_;
  std::vector<std::string> order_;
};

/// Resizes a crop to `size` when needed: bilinear image, nearest mask.
CropPair fit_to(CropPair pair, int size);

}  // namespace orgseg
