#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "ppmae/models/fusion.hpp"
#include "ppmae/models/ppmae.hpp"

namespace ppmae::models {

// File layout: u64 little-endian header length, canonical JSON header
// (format, version, model, config, seed, epoch, extra, tensors with name,
// shape, dtype and payload offset), then little-endian f64 values in
// tensor order.
inline constexpr int kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CheckpointMeta {
  std::uint64_t seed = 0;
  std::size_t epoch = 0;
  nlohmann::json extra = nlohmann::json::object();
};

struct StoredTensor {
  std::string name;
  nx::Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  std::string model;
  nlohmann::json config;
  CheckpointMeta meta;
  std::vector<StoredTensor> tensors;
};

Checkpoint make_checkpoint(const Model& model, const CheckpointMeta& meta);
void save_checkpoint(const Model& model, const CheckpointMeta& meta, const std::filesystem::path& path);
void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Copies stored values into `model`; names and shapes must match in order.
void load_state(Model& model, const Checkpoint& ckpt);

std::unique_ptr<FusionClassifier> make_fusion(const Checkpoint& ckpt);
std::unique_ptr<PPMAE> make_ppmae(const Checkpoint& ckpt);

}  // namespace ppmae::models
