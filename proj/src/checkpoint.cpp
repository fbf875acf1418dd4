#include "orgseg/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "orgseg/error.hpp"
#include "orgseg/fsutil.hpp"

namespace orgseg {
namespace fs = std::filesystem;
using nlohmann::json;

const TensorRecord* CheckpointBundle::find(const std::string& name) const noexcept {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

json to_json(const ArchitectureSpec& spec) {
  return json{{"encoder", to_string(spec.encoder)},
              {"input_size", spec.input_size},
              {"encoder_blocks", spec.encoder_blocks},
              {"decoder_blocks", spec.decoder_blocks},
              {"base_channels", spec.base_channels},
              {"freeze_encoder", spec.freeze_encoder},
              {"head", to_string(spec.head)}};
}

ArchitectureSpec architecture_from_json(const json& j) {
  ArchitectureSpec spec;
  spec.encoder = parse_encoder(j.at("encoder").get<std::string>());
  spec.input_size = j.at("input_size").get<int>();
  spec.encoder_blocks = j.at("encoder_blocks").get<int>();
  spec.decoder_blocks = j.at("decoder_blocks").get<int>();
  spec.base_channels = j.at("base_channels").get<int>();
  spec.freeze_encoder = j.at("freeze_encoder").get<bool>();
  const auto head = j.at("head").get<std::string>();
  if (head == "restoration") spec.head = HeadKind::restoration;
  else if (head == "segmentation") spec.head = HeadKind::segmentation;
  else throw Error(ErrorKind::CorruptBundle, "unknown head " + head);
  return spec;
}

json to_json(const CheckpointMeta& meta) {
  return json{{"format_version", kCheckpointFormatVersion},
              {"task", meta.task},
              {"encoder", meta.encoder},
              {"loss", meta.loss},
              {"augmentation", meta.augmentation},
              {"seed", meta.seed},
              {"epoch", meta.epoch},
              {"frozen_names", meta.frozen_names},
              {"architecture", to_json(meta.architecture)}};
}

CheckpointMeta meta_from_json(const json& j) {
  CheckpointMeta meta;
  meta.task = j.at("task").get<std::string>();
  meta.encoder = j.at("encoder").get<std::string>();
  meta.loss = j.at("loss").get<std::string>();
  meta.augmentation = j.at("augmentation").get<std::string>();
  meta.seed = j.at("seed").get<std::uint64_t>();
  meta.epoch = j.at("epoch").get<int>();
  meta.frozen_names = j.at("frozen_names").get<std::vector<std::string>>();
  meta.architecture = architecture_from_json(j.at("architecture"));
  return meta;
}

CheckpointBundle save_checkpoint(const UNet& model, CheckpointMeta meta) {
  CheckpointBundle bundle;
  for (const Parameter* p : model.parameters().all()) {
    bundle.tensors.push_back({p->name, p->shape, p->value});
  }
  meta.frozen_names = model.frozen_names();
  meta.architecture = model.spec();
  meta.encoder = std::string(to_string(model.spec().encoder));
  bundle.meta = std::move(meta);
  return bundle;
}

void restore_checkpoint(const CheckpointBundle& bundle, UNet& model) {
  for (Parameter* p : model.parameters().all()) {
    const TensorRecord* t = bundle.find(p->name);
    if (!t) throw Error(ErrorKind::MissingTensor, p->name);
    if (t->shape != p->shape) throw Error(ErrorKind::ShapeMismatch, p->name);
    p->value = t->values;
  }
}

namespace {

void put_f32_le(std::string& out, float v) {
  std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

float get_f32_le(const unsigned char* p) {
  const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                             (static_cast<std::uint32_t>(p[2]) << 16) |
                             (static_cast<std::uint32_t>(p[3]) << 24);
  return std::bit_cast<float>(bits);
}

json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::CorruptBundle, "missing " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::CorruptBundle, path.string() + ": " + e.what());
  }
}

}  // namespace

void write_checkpoint(const fs::path& dir, const CheckpointBundle& bundle) {
  fs::create_directories(dir);
  std::string blob;
  json index = json::array();
  std::uint64_t offset = 0;
  for (const auto& t : bundle.tensors) {
    const std::uint64_t length = static_cast<std::uint64_t>(t.values.size()) * 4;
    index.push_back(json{{"name", t.name}, {"dtype", "f32"}, {"shape", t.shape}, {"offset", offset}, {"length", length}});
    for (float v : t.values) put_f32_le(blob, v);
    offset += length;
  }
  json index_doc{{"format_version", kCheckpointFormatVersion}, {"tensors", index}};
  write_file_atomic(dir / "tensors.bin", blob);
  write_file_atomic(dir / "tensors.index.json", index_doc.dump(2) + "\n");
  write_file_atomic(dir / "meta.json", to_json(bundle.meta).dump(2) + "\n");
}

CheckpointBundle load_checkpoint(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorKind::CorruptBundle, "not a checkpoint directory: " + dir.string());
  const json meta = read_json(dir / "meta.json");
  const json index = read_json(dir / "tensors.index.json");
  const auto version_of = [](const json& j) { return j.contains("format_version") ? j["format_version"].get<int>() : -1; };
  if (version_of(meta) != kCheckpointFormatVersion || version_of(index) != kCheckpointFormatVersion) {
    throw Error(ErrorKind::VersionMismatch, dir.string());
  }
  std::ifstream in(dir / "tensors.bin", std::ios::binary);
  if (!in) throw Error(ErrorKind::CorruptBundle, "missing tensors.bin in " + dir.string());
  const std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  CheckpointBundle bundle;
  try {
    bundle.meta = meta_from_json(meta);
    std::uint64_t expected_offset = 0;
    for (const auto& entry : index.at("tensors")) {
      TensorRecord t;
      t.name = entry.at("name").get<std::string>();
      if (entry.at("dtype").get<std::string>() != "f32") throw Error(ErrorKind::CorruptBundle, t.name + ": dtype");
      t.shape = entry.at("shape").get<std::vector<int>>();
      const auto offset = entry.at("offset").get<std::uint64_t>();
      const auto length = entry.at("length").get<std::uint64_t>();
      std::uint64_t count = 1;
      for (int d : t.shape) {
        if (d < 0) throw Error(ErrorKind::CorruptBundle, t.name + ": negative dimension");
        count *= static_cast<std::uint64_t>(d);
      }
      if (length != count * 4 || offset != expected_offset || offset + length > blob.size()) {
        throw Error(ErrorKind::CorruptBundle, t.name + ": offset/length inconsistent with shape or file size");
      }
      if (bundle.find(t.name)) throw Error(ErrorKind::CorruptBundle, "duplicate tensor " + t.name);
      t.values.resize(count);
      const auto* base = reinterpret_cast<const unsigned char*>(blob.data()) + offset;
      for (std::uint64_t i = 0; i < count; ++i) t.values[i] = get_f32_le(base + 4 * i);
      expected_offset = offset + length;
      bundle.tensors.push_back(std::move(t));
    }
    if (expected_offset != blob.size()) throw Error(ErrorKind::CorruptBundle, "trailing bytes in tensors.bin");
  } catch (const json::exception& e) {
    throw Error(ErrorKind::CorruptBundle, dir.string() + ": " + e.what());
  }
  for (const auto& name : bundle.meta.frozen_names) {
    if (!bundle.find(name)) throw Error(ErrorKind::CorruptBundle, "frozen name without tensor: " + name);
  }
  return bundle;
}

void transfer_weights(const CheckpointBundle& from, UNet& to, TransferScope scope, std::uint64_t head_seed) {
  auto in_scope = [scope](const std::string& name) {
    if (UNet::is_encoder_tensor(name)) return true;
    return scope == TransferScope::encoder_and_decoder && UNet::is_decoder_tensor(name);
  };
  // Validate everything before touching the model.
  for (const Parameter* p : to.parameters().all()) {
    if (!in_scope(p->name)) continue;
    const TensorRecord* t = from.find(p->name);
    if (!t) throw Error(ErrorKind::MissingTensor, p->name);
    if (t->shape != p->shape) throw Error(ErrorKind::ShapeMismatch, p->name);
  }
  for (Parameter* p : to.parameters().all()) {
    if (in_scope(p->name)) p->value = from.find(p->name)->values;
  }
  to.reinit_head(head_seed);
}

}  // namespace orgseg
