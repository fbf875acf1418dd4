#include "orgseg/dataset.hpp"

#include <bit>
#include <charconv>
#include <cstring>

#include "json.hpp"

#include "orgseg/error.hpp"
#include "orgseg/fsutil.hpp"

namespace orgseg {
namespace fs = std::filesystem;
using nlohmann::json;

CropInfo info_of(const CropRecord& crop) {
  return {crop.source_id, crop.slice_index, crop.window_x, crop.window_y, crop.rotation_deg, crop.object_fraction};
}

std::string window_key(const CropInfo& info) {
  return info.source_id + "/s" + std::to_string(info.slice_index) + "/x" + std::to_string(info.window_x) + "_y" +
         std::to_string(info.window_y);
}

std::string crop_id(const CropInfo& info) { return window_key(info) + "/r" + std::to_string(info.rotation_deg); }

std::pair<std::string, int> split_crop_id(std::string_view id) {
  const auto slash = id.rfind("/r");
  if (slash == std::string_view::npos) throw Error(ErrorKind::InvalidSpec, "bad crop id " + std::string(id));
  int rot = -1;
  const auto digits = id.substr(slash + 2);
  const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), rot);
  if (ec != std::errc{} || ptr != digits.data() + digits.size() || (rot != 0 && rot != 90 && rot != 180 && rot != 270)) {
    throw Error(ErrorKind::InvalidSpec, "bad crop id " + std::string(id));
  }
  return {std::string(id.substr(0, slash)), rot};
}

MemoryCropSource::MemoryCropSource(const std::vector<CropRecord>& crops) {
  for (const auto& c : crops) add(c);
}

void MemoryCropSource::add(const CropRecord& crop) { crops_[crop_id(info_of(crop))] = {crop.image, crop.mask}; }

CropPair MemoryCropSource::load(const std::string& id) const {
  auto it = crops_.find(id);
  if (it == crops_.end()) throw Error(ErrorKind::MissingFile, "unknown crop " + id);
  return it->second;
}

void CropStore::write(const fs::path& dir, const std::vector<CropRecord>& crops) {
  std::string images, masks;
  json windows = json::array();
  int size = 0;
  std::uint64_t index = 0;
  for (const auto& c : crops) {
    if (c.rotation_deg != 0) continue;
    if (c.image.width() != c.image.height()) throw Error(ErrorKind::NonSquareCrop, window_key(info_of(c)));
    if (size == 0) size = c.image.width();
    if (c.image.width() != size || !c.mask.same_shape(c.image)) {
      throw Error(ErrorKind::InconsistentDimensions, "crop store needs equal crop sizes");
    }
    for (float v : c.image.storage()) {
      const auto bits = std::bit_cast<std::uint32_t>(v);
      for (int b = 0; b < 4; ++b) images.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
    }
    masks.append(reinterpret_cast<const char*>(c.mask.storage().data()), c.mask.size());
    windows.push_back(json{{"source_id", c.source_id},
                           {"slice_index", c.slice_index},
                           {"window_x", c.window_x},
                           {"window_y", c.window_y},
                           {"object_fraction", c.object_fraction},
                           {"index", index++}});
  }
  if (windows.empty()) throw Error(ErrorKind::EmptyDataset, "no crops to store");
  write_file_atomic(dir / "images.f32", images);
  write_file_atomic(dir / "masks.u8", masks);
  write_file_atomic(dir / "index.json", json{{"crop_size", size}, {"windows", windows}}.dump(2) + "\n");
}

CropStore CropStore::open(const fs::path& dir) {
  CropStore store;
  store.dir_ = dir;
  json index;
  try {
    index = json::parse(read_file(dir / "index.json"));
    store.size_ = index.at("crop_size").get<int>();
    for (const auto& w : index.at("windows")) {
      Window win;
      win.info.source_id = w.at("source_id").get<std::string>();
      win.info.slice_index = w.at("slice_index").get<int>();
      win.info.window_x = w.at("window_x").get<int>();
      win.info.window_y = w.at("window_y").get<int>();
      win.info.object_fraction = w.at("object_fraction").get<double>();
      win.index = w.at("index").get<std::uint64_t>();
      const auto key = window_key(win.info);
      store.order_.push_back(key);
      store.windows_.emplace(key, std::move(win));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::CorruptRaster, (dir / "index.json").string() + ": " + e.what());
  }
  const auto px = static_cast<std::uintmax_t>(store.size_) * store.size_;
  if (fs::file_size(dir / "images.f32") != 4 * px * store.windows_.size() ||
      fs::file_size(dir / "masks.u8") != px * store.windows_.size()) {
    throw Error(ErrorKind::CorruptRaster, "crop store payload does not match index in " + dir.string());
  }
  return store;
}

std::vector<CropInfo> CropStore::infos() const {
  std::vector<CropInfo> out;
  out.reserve(order_.size() * 4);
  for (const auto& key : order_) {
    for (int rot : {0, 90, 180, 270}) {
      CropInfo info = windows_.at(key).info;
      info.rotation_deg = rot;
      out.push_back(std::move(info));
    }
  }
  return out;
}

CropPair CropStore::load(const std::string& id) const {
  const auto [key, rot] = split_crop_id(id);
  auto it = windows_.find(key);
  if (it == windows_.end()) throw Error(ErrorKind::MissingFile, "unknown crop " + id);
  const auto px = static_cast<std::size_t>(size_) * size_;

  std::ifstream img_in(dir_ / "images.f32", std::ios::binary);
  std::ifstream mask_in(dir_ / "masks.u8", std::ios::binary);
  if (!img_in || !mask_in) throw Error(ErrorKind::MissingFile, "crop store payload in " + dir_.string());
  std::vector<unsigned char> raw(px * 4);
  img_in.seekg(static_cast<std::streamoff>(it->second.index * px * 4));
  img_in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  std::vector<std::uint8_t> mask(px);
  mask_in.seekg(static_cast<std::streamoff>(it->second.index * px));
  mask_in.read(reinterpret_cast<char*>(mask.data()), static_cast<std::streamsize>(px));
  if (!img_in || !mask_in) throw Error(ErrorKind::CorruptRaster, "short read for crop " + id);

  std::vector<float> pixels(px);
  for (std::size_t i = 0; i < px; ++i) {
    const std::uint32_t bits = raw[4 * i] | (raw[4 * i + 1] << 8) | (raw[4 * i + 2] << 16) |
                               (static_cast<std::uint32_t>(raw[4 * i + 3]) << 24);
    pixels[i] = std::bit_cast<float>(bits);
  }
  CropPair pair{Image2D(size_, size_, std::move(pixels)), Mask2D(size_, size_, std::move(mask))};
  if (rot != 0) {
    pair.image = rotate90(pair.image, rot);
    pair.mask = rotate90(pair.mask, rot);
  }
  return pair;
}

CropPair fit_to(CropPair pair, int size) {
  if (pair.image.width() != size || pair.image.height() != size) {
    pair.image = resize_bilinear(pair.image, size, size);
    pair.mask = resize_nearest(pair.mask, size, size);
  }
  return pair;
}

}  // namespace orgseg
