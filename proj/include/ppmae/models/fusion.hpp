#pragma once

#include <string>
#include <vector>

#include "ppmae/models/model.hpp"

namespace ppmae::models {

// Residual CNN: stride-2 3x3 stem, 2x2 max pool, one stage per width (stages
// after the first halve the resolution), global average pooling, then a
// ReLU projection to feature_dim.
struct EncoderConfig {
  std::size_t in_channels = 2;
  std::vector<std::size_t> widths{16, 32, 64};
  std::size_t blocks_per_stage = 1;
  std::size_t feature_dim = 128;

  void validate() const;
  nlohmann::json to_json() const;
  static EncoderConfig from_json(const nlohmann::json& j);
  bool operator==(const EncoderConfig&) const = default;
};

class ResidualEncoder {
 public:
  ResidualEncoder(const EncoderConfig& config, ParamStore& store, const std::string& prefix, std::uint64_t seed);
  // x: [B, in_channels, H, W] in [0, 1] -> [B, feature_dim].
  nx::Tensor forward(const nx::Tensor& x) const;
  const EncoderConfig& config() const { return config_; }

 private:
  struct Block {
    nx::Tensor w1, b1, w2, b2, proj_w, proj_b;  // proj_* undefined for identity shortcuts
    std::size_t stride = 1;
  };
  EncoderConfig config_;
  nx::Tensor stem_w_, stem_b_;
  std::vector<Block> blocks_;
  nx::Tensor out_w_, out_b_;
};

enum class FusionKind { early, late };

std::string to_string(FusionKind kind);
FusionKind parse_fusion_kind(const std::string& s);

struct FusionConfig {
  FusionKind kind = FusionKind::late;
  EncoderConfig encoder{3, {16, 32, 64}, 1, 128};
  std::size_t image_h = 64;
  std::size_t image_w = 64;
  std::size_t num_classes = 4;

  // Early fusion stacks the pair as 2 channels; late fusion feeds each
  // image replicated to 3 channels through one shared encoder.
  static FusionConfig desk(FusionKind kind);
  static FusionConfig paper(FusionKind kind);
  void validate() const;
  nlohmann::json to_json() const;
  static FusionConfig from_json(const nlohmann::json& j);
  bool operator==(const FusionConfig&) const = default;
};

class FusionClassifier : public Model {
 public:
  FusionClassifier(const FusionConfig& config, std::uint64_t seed);

  std::string kind() const override;
  nlohmann::json config_json() const override { return config_.to_json(); }
  const FusionConfig& config() const { return config_; }

  // t0, t1: [B, 1, H, W]. Early: the 2-channel input; late: [2B, 3, H, W]
  // with the t0 batch first.
  nx::Tensor fused_input(const nx::Tensor& t0, const nx::Tensor& t1) const;
  // Early: [B, D]; late: [B, 2D] with the t0 features first.
  nx::Tensor features(const nx::Tensor& t0, const nx::Tensor& t1) const;
  nx::Tensor logits(const nx::Tensor& t0, const nx::Tensor& t1) const;

 private:
  FusionConfig config_;
  ResidualEncoder encoder_;
  nx::Tensor fc1_w_, fc1_b_, fc2_w_, fc2_b_;  // early: two layers; late: fc1 only
};

}  // namespace ppmae::models
