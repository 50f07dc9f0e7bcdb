#include "ppmae/models/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace ppmae::models {

namespace {

constexpr const char* kFormat = "ppmae-checkpoint";

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

}  // namespace

Checkpoint make_checkpoint(const Model& model, const CheckpointMeta& meta) {
  Checkpoint c;
  c.model = model.kind();
  c.config = model.config_json();
  c.meta = meta;
  for (const auto& p : model.params().items()) {
    c.tensors.push_back({p.name, p.tensor.shape(), {p.tensor.values().begin(), p.tensor.values().end()}});
  }
  return c;
}

void save_checkpoint(const Model& model, const CheckpointMeta& meta, const std::filesystem::path& path) {
  write_checkpoint(make_checkpoint(model, meta), path);
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  nlohmann::json header;
  header["format"] = kFormat;
  header["version"] = kCheckpointVersion;
  header["model"] = ckpt.model;
  header["config"] = ckpt.config;
  header["seed"] = ckpt.meta.seed;
  header["epoch"] = ckpt.meta.epoch;
  header["extra"] = ckpt.meta.extra;
  nlohmann::json list = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& t : ckpt.tensors) {
    if (t.values.size() != nx::numel(t.shape)) throw CheckpointError("tensor " + t.name + ": size does not match shape");
    list.push_back({{"name", t.name}, {"shape", t.shape}, {"dtype", "f64le"}, {"offset", offset}});
    offset += 8 * t.values.size();
  }
  header["tensors"] = list;
  const std::string text = header.dump();
  std::string blob;
  blob.reserve(8 + text.size() + offset);
  put_u64(blob, text.size());
  blob += text;
  for (const auto& t : ckpt.tensors) {
    for (double v : t.values) put_u64(blob, std::bit_cast<std::uint64_t>(v));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw CheckpointError("short write to " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());
  if (blob.size() < 8) throw CheckpointError(path.string() + ": truncated checkpoint");
  const std::uint64_t hlen = get_u64(bytes);
  if (hlen > blob.size() - 8) throw CheckpointError(path.string() + ": header length exceeds file size");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(blob.substr(8, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path.string() + ": malformed header: " + e.what());
  }
  if (header.value("format", "") != kFormat) throw CheckpointError(path.string() + ": not a ppmae checkpoint");
  if (header.value("version", -1) != kCheckpointVersion) {
    throw CheckpointError(path.string() + ": unsupported checkpoint version " + header.value("version", nlohmann::json()).dump() +
                          " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint c;
  try {
    c.model = header.at("model").get<std::string>();
    c.config = header.at("config");
    c.meta.seed = header.at("seed").get<std::uint64_t>();
    c.meta.epoch = header.at("epoch").get<std::size_t>();
    c.meta.extra = header.at("extra");
    const std::size_t base = 8 + hlen;
    for (const auto& t : header.at("tensors")) {
      StoredTensor st;
      st.name = t.at("name").get<std::string>();
      st.shape = t.at("shape").get<nx::Shape>();
      if (t.at("dtype").get<std::string>() != "f64le") throw CheckpointError("tensor " + st.name + ": unknown dtype");
      const auto off = t.at("offset").get<std::uint64_t>();
      const std::size_t n = nx::numel(st.shape);
      if (base + off + 8 * n > blob.size()) throw CheckpointError("tensor " + st.name + ": payload out of range");
      st.values.resize(n);
      for (std::size_t i = 0; i < n; ++i) st.values[i] = std::bit_cast<double>(get_u64(bytes + base + off + 8 * i));
      c.tensors.push_back(std::move(st));
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path.string() + ": malformed header: " + e.what());
  }
  return c;
}

void load_state(Model& model, const Checkpoint& ckpt) {
  if (ckpt.model != model.kind()) {
    throw CheckpointError("checkpoint holds a " + ckpt.model + " model, expected " + model.kind());
  }
  const auto& params = model.params().items();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& want = params[i];
    if (i >= ckpt.tensors.size()) throw CheckpointError("parameter " + want.name + " missing from checkpoint");
    const auto& got = ckpt.tensors[i];
    if (got.name != want.name) {
      throw CheckpointError("parameter " + want.name + " mismatched: checkpoint has " + got.name + " at position " +
                            std::to_string(i));
    }
    if (got.shape != want.tensor.shape()) {
      throw CheckpointError("parameter " + want.name + " mismatched: shape " + nx::to_string(got.shape) +
                            " in checkpoint, " + nx::to_string(want.tensor.shape()) + " in model");
    }
  }
  if (ckpt.tensors.size() != params.size()) {
    throw CheckpointError("checkpoint has unexpected extra parameter " + ckpt.tensors[params.size()].name);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto dst = nx::Tensor(params[i].tensor).mutable_values();
    std::copy(ckpt.tensors[i].values.begin(), ckpt.tensors[i].values.end(), dst.begin());
  }
}

std::unique_ptr<FusionClassifier> make_fusion(const Checkpoint& ckpt) {
  FusionConfig cfg;
  try {
    cfg = FusionConfig::from_json(ckpt.config);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("invalid fusion config in checkpoint: ") + e.what());
  }
  auto model = std::make_unique<FusionClassifier>(cfg, ckpt.meta.seed);
  load_state(*model, ckpt);
  return model;
}

std::unique_ptr<PPMAE> make_ppmae(const Checkpoint& ckpt) {
  PPMAEConfig cfg;
  try {
    cfg = PPMAEConfig::from_json(ckpt.config);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("invalid ppmae config in checkpoint: ") + e.what());
  }
  auto model = std::make_unique<PPMAE>(cfg, ckpt.meta.seed);
  load_state(*model, ckpt);
  return model;
}

}  // namespace ppmae::models
