#include "ppmae/models/ppmae.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ppmae/numerics/losses.hpp"
#include "ppmae/numerics/ops.hpp"

namespace ppmae::models {

namespace {

constexpr double kInitStd = 0.02;

void check_heads(std::size_t dim, std::size_t heads, const char* which) {
  if (dim == 0 || heads == 0 || dim % heads != 0) {
    throw std::invalid_argument(std::string("ppmae: ") + which + " dim must be a positive multiple of its heads");
  }
  if (dim % 4 != 0) throw std::invalid_argument(std::string("ppmae: ") + which + " dim must be divisible by 4");
}

// Rows of a [N, dim] table picked per batch row: [B, count, dim].
nx::Tensor gather_table(const std::vector<double>& table, std::size_t dim,
                        std::span<const patch::MaskPlan> plans, bool visible) {
  const std::size_t count = visible ? plans.front().visible.size() : plans.front().masked.size();
  std::vector<double> out;
  out.reserve(plans.size() * count * dim);
  for (const auto& plan : plans) {
    for (std::size_t k : visible ? plan.visible : plan.masked) {
      out.insert(out.end(), table.begin() + static_cast<long>(k * dim), table.begin() + static_cast<long>((k + 1) * dim));
    }
  }
  return nx::Tensor({plans.size(), count, dim}, std::move(out));
}

nx::Tensor gather_patch_rows(const nx::Tensor& images, std::span<const patch::MaskPlan> plans, std::size_t p,
                             bool visible) {
  const auto grid = patch::patchify(images, p);  // [B, N, P]
  const std::size_t B = grid.size(0), N = grid.size(1), P = grid.size(2);
  const std::size_t count = visible ? plans.front().visible.size() : plans.front().masked.size();
  std::vector<std::size_t> rows;
  rows.reserve(B * count);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t k : visible ? plans[b].visible : plans[b].masked) rows.push_back(b * N + k);
  }
  return nx::reshape(nx::gather_rows(nx::reshape(grid, {B * N, P}), rows), {B, count, P});
}

void check_plan_batch(std::span<const patch::MaskPlan> plans, std::size_t batch, std::size_t total) {
  if (plans.size() != batch) {
    throw std::invalid_argument("ppmae: " + std::to_string(plans.size()) + " mask plans for a batch of " +
                                std::to_string(batch));
  }
  for (const auto& plan : plans) {
    if (plan.total != total) {
      throw std::invalid_argument("ppmae: mask plan covers " + std::to_string(plan.total) + " patches, grid has " +
                                  std::to_string(total));
    }
    if (plan.visible.size() != plans.front().visible.size()) {
      throw std::invalid_argument("ppmae: mask plans in one batch must share the visible count");
    }
  }
}

}  // namespace

PPMAEConfig PPMAEConfig::paper() {
  PPMAEConfig c;
  c.image_h = 224;
  c.image_w = 224;
  c.patch = 16;
  c.enc_dim = 1024;
  c.enc_depth = 24;
  c.enc_heads = 16;
  c.dec_dim = 512;
  c.dec_depth = 8;
  c.dec_heads = 16;
  c.mlp_ratio = 4;
  return c;
}

void PPMAEConfig::validate() const {
  if (patch == 0 || image_h == 0 || image_w == 0 || image_h % patch != 0 || image_w % patch != 0) {
    throw std::invalid_argument("ppmae: patch size " + std::to_string(patch) + " must divide image " +
                                std::to_string(image_h) + "x" + std::to_string(image_w));
  }
  check_heads(enc_dim, enc_heads, "encoder");
  check_heads(dec_dim, dec_heads, "decoder");
  if (enc_depth == 0 || dec_depth == 0 || mlp_ratio == 0) {
    throw std::invalid_argument("ppmae: depths and mlp_ratio must be positive");
  }
  if (!(mask_ratio >= 0.0 && mask_ratio < 1.0)) throw std::invalid_argument("ppmae: mask_ratio must lie in [0, 1)");
}

nlohmann::json PPMAEConfig::to_json() const {
  return {{"image_h", image_h},     {"image_w", image_w},     {"patch", patch},         {"enc_dim", enc_dim},
          {"enc_depth", enc_depth}, {"enc_heads", enc_heads}, {"dec_dim", dec_dim},     {"dec_depth", dec_depth},
          {"dec_heads", dec_heads}, {"mlp_ratio", mlp_ratio}, {"mask_ratio", mask_ratio}};
}

PPMAEConfig PPMAEConfig::from_json(const nlohmann::json& j) {
  PPMAEConfig c;
  c.image_h = j.at("image_h").get<std::size_t>();
  c.image_w = j.at("image_w").get<std::size_t>();
  c.patch = j.at("patch").get<std::size_t>();
  c.enc_dim = j.at("enc_dim").get<std::size_t>();
  c.enc_depth = j.at("enc_depth").get<std::size_t>();
  c.enc_heads = j.at("enc_heads").get<std::size_t>();
  c.dec_dim = j.at("dec_dim").get<std::size_t>();
  c.dec_depth = j.at("dec_depth").get<std::size_t>();
  c.dec_heads = j.at("dec_heads").get<std::size_t>();
  c.mlp_ratio = j.at("mlp_ratio").get<std::size_t>();
  c.mask_ratio = j.at("mask_ratio").get<double>();
  c.validate();
  return c;
}

std::vector<double> sincos_position_table(std::size_t rows, std::size_t cols, std::size_t dim) {
  if (dim % 4 != 0) throw std::invalid_argument("sincos_position_table: dim must be divisible by 4");
  const std::size_t quarter = dim / 4;
  std::vector<double> table(rows * cols * dim);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      double* row = table.data() + (r * cols + c) * dim;
      for (std::size_t half = 0; half < 2; ++half) {
        const double pos = static_cast<double>(half == 0 ? c : r);
        double* out = row + half * 2 * quarter;
        for (std::size_t i = 0; i < quarter; ++i) {
          const double omega = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(quarter));
          out[i] = std::sin(pos * omega);
          out[quarter + i] = std::cos(pos * omega);
        }
      }
    }
  }
  return table;
}

TransformerBlock::TransformerBlock(ParamStore& store, const std::string& prefix, std::size_t dim, std::size_t h,
                                   std::size_t hidden, Rng& rng)
    : heads(h) {
  const std::string p = prefix + ".";
  ln1_g = store.add(p + "ln1.gamma", init::ones({dim}));
  ln1_b = store.add(p + "ln1.beta", init::zeros({dim}));
  wq = store.add(p + "attn.q.weight", init::truncated_normal({dim, dim}, kInitStd, rng));
  bq = store.add(p + "attn.q.bias", init::zeros({dim}));
  wk = store.add(p + "attn.k.weight", init::truncated_normal({dim, dim}, kInitStd, rng));
  bk = store.add(p + "attn.k.bias", init::zeros({dim}));
  wv = store.add(p + "attn.v.weight", init::truncated_normal({dim, dim}, kInitStd, rng));
  bv = store.add(p + "attn.v.bias", init::zeros({dim}));
  wo = store.add(p + "attn.out.weight", init::truncated_normal({dim, dim}, kInitStd, rng));
  bo = store.add(p + "attn.out.bias", init::zeros({dim}));
  ln2_g = store.add(p + "ln2.gamma", init::ones({dim}));
  ln2_b = store.add(p + "ln2.beta", init::zeros({dim}));
  fc1_w = store.add(p + "mlp.fc1.weight", init::truncated_normal({dim, hidden}, kInitStd, rng));
  fc1_b = store.add(p + "mlp.fc1.bias", init::zeros({hidden}));
  fc2_w = store.add(p + "mlp.fc2.weight", init::truncated_normal({hidden, dim}, kInitStd, rng));
  fc2_b = store.add(p + "mlp.fc2.bias", init::zeros({dim}));
}

nx::Tensor TransformerBlock::forward(const nx::Tensor& x) const {
  const std::size_t B = x.size(0), T = x.size(1), D = x.size(2), dh = D / heads;
  const auto split = [&](const nx::Tensor& t) {
    return nx::reshape(nx::permute(nx::reshape(t, {B, T, heads, dh}), {0, 2, 1, 3}), {B * heads, T, dh});
  };
  const auto a = nx::layer_norm(x, ln1_g, ln1_b);
  const auto q = split(nx::linear(a, wq, bq));
  const auto k = split(nx::linear(a, wk, bk));
  const auto v = split(nx::linear(a, wv, bv));
  const auto scores = nx::scale(nx::matmul(q, nx::transpose(k, 1, 2)), 1.0 / std::sqrt(static_cast<double>(dh)));
  auto o = nx::matmul(nx::softmax(scores, 2), v);
  o = nx::reshape(nx::permute(nx::reshape(o, {B, heads, T, dh}), {0, 2, 1, 3}), {B, T, D});
  const auto y = nx::add(x, nx::linear(o, wo, bo));
  const auto m = nx::linear(nx::gelu(nx::linear(nx::layer_norm(y, ln2_g, ln2_b), fc1_w, fc1_b)), fc2_w, fc2_b);
  return nx::add(y, m);
}

namespace {

const PPMAEConfig& validated(const PPMAEConfig& c) {
  c.validate();
  return c;
}

}  // namespace

PPMAE::PPMAE(const PPMAEConfig& config, std::uint64_t seed) : config_(validated(config)) {
  Rng rng(hash_seed({seed, 0x70706d6165ULL}));
  const auto& c = config_;
  const std::size_t P = c.patch_dim();
  enc_pos_ = sincos_position_table(c.grid_rows(), c.grid_cols(), c.enc_dim);
  dec_pos_ = sincos_position_table(c.grid_rows(), c.grid_cols(), c.dec_dim);
  embed_w_ = params_.add("encoder.embed.weight", init::truncated_normal({P, c.enc_dim}, kInitStd, rng));
  embed_b_ = params_.add("encoder.embed.bias", init::zeros({c.enc_dim}));
  for (std::size_t i = 0; i < c.enc_depth; ++i) {
    enc_blocks_.emplace_back(params_, "encoder.block" + std::to_string(i), c.enc_dim, c.enc_heads,
                             c.enc_dim * c.mlp_ratio, rng);
  }
  enc_norm_g_ = params_.add("encoder.norm.gamma", init::ones({c.enc_dim}));
  enc_norm_b_ = params_.add("encoder.norm.beta", init::zeros({c.enc_dim}));
  dec_embed_w_ = params_.add("decoder.embed.weight", init::truncated_normal({c.enc_dim, c.dec_dim}, kInitStd, rng));
  dec_embed_b_ = params_.add("decoder.embed.bias", init::zeros({c.dec_dim}));
  mask_token_ = params_.add("decoder.mask_token", init::truncated_normal({c.dec_dim}, kInitStd, rng));
  for (std::size_t i = 0; i < c.dec_depth; ++i) {
    dec_blocks_.emplace_back(params_, "decoder.block" + std::to_string(i), c.dec_dim, c.dec_heads,
                             c.dec_dim * c.mlp_ratio, rng);
  }
  dec_norm_g_ = params_.add("decoder.norm.gamma", init::ones({c.dec_dim}));
  dec_norm_b_ = params_.add("decoder.norm.beta", init::zeros({c.dec_dim}));
  pred_w_ = params_.add("decoder.pred.weight", init::truncated_normal({c.dec_dim, P}, kInitStd, rng));
  pred_b_ = params_.add("decoder.pred.bias", init::zeros({P}));
}

void PPMAE::check_plans(std::span<const patch::MaskPlan> plans, std::size_t batch) const {
  check_plan_batch(plans, batch, config_.num_patches());
  if (plans.front().visible.empty()) throw std::invalid_argument("ppmae: the mask plan leaves no visible patch");
  if (plans.front().masked.empty()) throw std::invalid_argument("ppmae: the mask plan masks no patch");
}

nx::Tensor PPMAE::predict(const nx::Tensor& t0, std::span<const patch::MaskPlan> plans) const {
  const auto& c = config_;
  if (t0.dim() != 3 || t0.size(1) != c.image_h || t0.size(2) != c.image_w) {
    throw nx::ShapeError("ppmae: expected [B, " + std::to_string(c.image_h) + ", " + std::to_string(c.image_w) +
                         "], got " + nx::to_string(t0.shape()));
  }
  const std::size_t B = t0.size(0);
  check_plans(plans, B);
  const std::size_t V = plans.front().visible.size(), M = plans.front().masked.size();

  auto x = nx::linear(gather_patch_rows(t0, plans, c.patch, true), embed_w_, embed_b_);
  x = nx::add(x, gather_table(enc_pos_, c.enc_dim, plans, true));
  for (const auto& blk : enc_blocks_) x = blk.forward(x);
  x = nx::layer_norm(x, enc_norm_g_, enc_norm_b_);

  auto vis = nx::add(nx::linear(x, dec_embed_w_, dec_embed_b_), gather_table(dec_pos_, c.dec_dim, plans, true));
  auto queries = nx::broadcast_to(nx::reshape(mask_token_, {1, 1, c.dec_dim}), {B, M, c.dec_dim});
  queries = nx::add(queries, gather_table(dec_pos_, c.dec_dim, plans, false));
  auto y = nx::concat({vis, queries}, 1);
  for (const auto& blk : dec_blocks_) y = blk.forward(y);
  y = nx::layer_norm(y, dec_norm_g_, dec_norm_b_);
  return nx::linear(nx::slice(y, 1, V, V + M), pred_w_, pred_b_);
}

patch::PatchMatrix PPMAE::predict(const data::GrayImage& t0, const patch::MaskPlan& plan) const {
  patch::PatchMatrix out;
  out.cols = config_.patch_dim();
  check_plan_batch(std::span(&plan, 1), 1, config_.num_patches());
  if (plan.masked.empty()) return out;
  nx::NoGradGuard guard;
  const auto pred = predict(stack_images({&t0}, false), std::span(&plan, 1));
  out.rows = plan.masked.size();
  out.data.assign(pred.values().begin(), pred.values().end());
  return out;
}

nx::Tensor masked_patches(const nx::Tensor& images, std::span<const patch::MaskPlan> plans, std::size_t p) {
  if (images.dim() != 3) throw nx::ShapeError("masked_patches: expected [B, H, W]");
  const std::size_t total = (images.size(1) / p) * (images.size(2) / p);
  check_plan_batch(plans, images.size(0), total);
  if (plans.front().masked.empty()) throw std::invalid_argument("masked_patches: the plan masks no patch");
  return gather_patch_rows(images, plans, p, false);
}

nx::Tensor ppmae_loss(const nx::Tensor& predicted, const nx::Tensor& t1, std::span<const patch::MaskPlan> plans,
                      std::size_t p) {
  return nx::mse_loss(predicted, masked_patches(t1, plans, p));
}

nx::Tensor mae_loss(const nx::Tensor& predicted, const nx::Tensor& t0, std::span<const patch::MaskPlan> plans,
                    std::size_t p) {
  return nx::mse_loss(predicted, masked_patches(t0, plans, p));
}

data::GrayImage reconstruct_future(const PPMAE& model, const data::GrayImage& t0, std::uint64_t seed,
                                   const ReconstructOptions& options) {
  const auto& c = model.config();
  if (options.samples == 0) throw std::invalid_argument("reconstruct_future: samples must be positive");
  const auto input = data::resize_bilinear(t0, c.image_h, c.image_w);
  const auto grid = patch::patchify(input, c.patch);
  const std::size_t N = grid.count(), P = grid.patch_len();
  std::vector<double> acc(N * P, 0.0);
  std::vector<std::size_t> hits(N, 0);
  for (std::size_t s = 0; s < options.samples; ++s) {
    const auto plan = patch::sample_mask(N, c.mask_ratio, hash_seed({seed, s}));
    const auto pred = model.predict(input, plan);
    for (std::size_t k = 0; k < plan.masked.size(); ++k) {
      const auto row = pred.row(k);
      double* dst = acc.data() + plan.masked[k] * P;
      for (std::size_t j = 0; j < P; ++j) dst[j] += row[j];
      ++hits[plan.masked[k]];
    }
  }
  patch::MaskPlan merged;
  merged.total = N;
  patch::PatchMatrix averaged;
  averaged.cols = P;
  for (std::size_t k = 0; k < N; ++k) {
    if (hits[k] == 0) {
      merged.visible.push_back(k);
      continue;
    }
    merged.masked.push_back(k);
    for (std::size_t j = 0; j < P; ++j) averaged.data.push_back(acc[k * P + j] / static_cast<double>(hits[k]));
  }
  averaged.rows = merged.masked.size();
  const auto mosaic = patch::composite(grid, averaged, merged);
  const std::size_t oh = options.out_h ? options.out_h : t0.height;
  const std::size_t ow = options.out_w ? options.out_w : t0.width;
  auto out = data::resize_bilinear(mosaic, oh, ow);
  for (auto& px : out.pixels) px = std::clamp(px, 0.0, 1.0);
  return out;
}

}  // namespace ppmae::models
