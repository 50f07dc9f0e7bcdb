#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ppmae/models/model.hpp"
#include "ppmae/patchwork/patchwork.hpp"

namespace ppmae::models {

struct PPMAEConfig {
  std::size_t image_h = 64;
  std::size_t image_w = 64;
  std::size_t patch = 8;
  std::size_t enc_dim = 64;
  std::size_t enc_depth = 2;
  std::size_t enc_heads = 4;
  std::size_t dec_dim = 64;
  std::size_t dec_depth = 2;
  std::size_t dec_heads = 4;
  std::size_t mlp_ratio = 2;
  double mask_ratio = 0.75;

  static PPMAEConfig paper();
  void validate() const;
  std::size_t grid_rows() const { return image_h / patch; }
  std::size_t grid_cols() const { return image_w / patch; }
  std::size_t num_patches() const { return grid_rows() * grid_cols(); }
  std::size_t patch_dim() const { return patch * patch; }
  nlohmann::json to_json() const;
  static PPMAEConfig from_json(const nlohmann::json& j);
  bool operator==(const PPMAEConfig&) const = default;
};

// Fixed 2-D sin-cos table [rows * cols, dim]; the first half of each row
// encodes the grid column, the second half the grid row. dim % 4 == 0.
std::vector<double> sincos_position_table(std::size_t rows, std::size_t cols, std::size_t dim);

// Pre-norm transformer block: x + attn(ln(x)), then x + mlp(ln(x)).
struct TransformerBlock {
  nx::Tensor ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo, ln2_g, ln2_b, fc1_w, fc1_b, fc2_w, fc2_b;
  std::size_t heads = 1;

  TransformerBlock(ParamStore& store, const std::string& prefix, std::size_t dim, std::size_t heads,
                   std::size_t hidden, Rng& rng);
  nx::Tensor forward(const nx::Tensor& x) const;  // [B, T, dim]
};

class PPMAE : public Model {
 public:
  PPMAE(const PPMAEConfig& config, std::uint64_t seed);

  std::string kind() const override { return "ppmae"; }
  nlohmann::json config_json() const override { return config_.to_json(); }
  const PPMAEConfig& config() const { return config_; }

  // t0: [B, H, W]; one plan per batch row, all with the same visible count.
  // Returns predicted t1 patches [B, |masked|, p*p] in plan.masked order.
  nx::Tensor predict(const nx::Tensor& t0, std::span<const patch::MaskPlan> plans) const;
  // Single image; an empty matrix when the plan masks nothing.
  patch::PatchMatrix predict(const data::GrayImage& t0, const patch::MaskPlan& plan) const;

 private:
  void check_plans(std::span<const patch::MaskPlan> plans, std::size_t batch) const;

  PPMAEConfig config_;
  std::vector<double> enc_pos_, dec_pos_;
  nx::Tensor embed_w_, embed_b_, enc_norm_g_, enc_norm_b_;
  nx::Tensor dec_embed_w_, dec_embed_b_, mask_token_, dec_norm_g_, dec_norm_b_, pred_w_, pred_b_;
  std::vector<TransformerBlock> enc_blocks_, dec_blocks_;
};

// images: [B, H, W] -> the masked patches of each row per its plan, [B, |masked|, p*p].
nx::Tensor masked_patches(const nx::Tensor& images, std::span<const patch::MaskPlan> plans, std::size_t p);

// MSE between predictions and the follow-up scan's masked patches.
nx::Tensor ppmae_loss(const nx::Tensor& predicted, const nx::Tensor& t1, std::span<const patch::MaskPlan> plans,
                      std::size_t p);
// Standard masked-autoencoder objective: the targets are the input's own masked patches.
nx::Tensor mae_loss(const nx::Tensor& predicted, const nx::Tensor& t0, std::span<const patch::MaskPlan> plans,
                    std::size_t p);

struct ReconstructOptions {
  std::size_t out_h = 0;  // 0 keeps t0's size
  std::size_t out_w = 0;
  // Masks drawn per image; a patch masked in several draws averages their predictions.
  std::size_t samples = 1;
};

// Resizes t0 to the model size, predicts the masked patches of one or more
// seeded plans, composites them with t0's visible patches and resizes the
// mosaic to the requested size. Output pixels lie in [0, 1].
data::GrayImage reconstruct_future(const PPMAE& model, const data::GrayImage& t0, std::uint64_t seed,
                                   const ReconstructOptions& options = {});

}  // namespace ppmae::models
