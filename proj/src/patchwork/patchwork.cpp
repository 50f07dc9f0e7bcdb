#include "ppmae/patchwork/patchwork.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ppmae/numerics/ops.hpp"
#include "ppmae/util/rng.hpp"

namespace ppmae::patch {

namespace {

void check_divisible(std::size_t h, std::size_t w, std::size_t p) {
  if (p == 0 || h % p != 0 || w % p != 0) {
    throw PatchError("patch size " + std::to_string(p) + " does not divide image " + std::to_string(h) + "x" +
                     std::to_string(w));
  }
}

}  // namespace

PatchGrid patchify(const GrayImage& img, std::size_t p) {
  check_divisible(img.height, img.width, p);
  PatchGrid g;
  g.patch = p;
  g.rows = img.height / p;
  g.cols = img.width / p;
  g.data.resize(img.pixels.size());
  std::size_t o = 0;
  for (std::size_t gr = 0; gr < g.rows; ++gr) {
    for (std::size_t gc = 0; gc < g.cols; ++gc) {
      for (std::size_t y = 0; y < p; ++y) {
        for (std::size_t x = 0; x < p; ++x) g.data[o++] = img.at(gr * p + y, gc * p + x);
      }
    }
  }
  return g;
}

GrayImage unpatchify(const PatchGrid& g) {
  if (g.data.size() != g.count() * g.patch_len()) throw PatchError("unpatchify: grid data size mismatch");
  const std::size_t p = g.patch;
  GrayImage img(g.rows * p, g.cols * p);
  std::size_t o = 0;
  for (std::size_t gr = 0; gr < g.rows; ++gr) {
    for (std::size_t gc = 0; gc < g.cols; ++gc) {
      for (std::size_t y = 0; y < p; ++y) {
        for (std::size_t x = 0; x < p; ++x) img.at(gr * p + y, gc * p + x) = g.data[o++];
      }
    }
  }
  return img;
}

MaskPlan sample_mask(std::size_t total, double ratio, std::uint64_t seed) {
  if (total == 0) throw PatchError("sample_mask: need at least one patch");
  if (!(ratio >= 0.0 && ratio < 1.0)) throw PatchError("sample_mask: ratio must lie in [0, 1)");
  const auto keep = static_cast<std::size_t>(std::floor(static_cast<double>(total) * (1.0 - ratio)));
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(hash_seed({seed, 0x6d61736bULL}));
  rng.shuffle(order);
  MaskPlan plan;
  plan.total = total;
  plan.ratio = ratio;
  plan.seed = seed;
  plan.visible.assign(order.begin(), order.begin() + static_cast<long>(keep));
  plan.masked.assign(order.begin() + static_cast<long>(keep), order.end());
  std::sort(plan.visible.begin(), plan.visible.end());
  std::sort(plan.masked.begin(), plan.masked.end());
  return plan;
}

GrayImage composite(const PatchGrid& t0, const PatchMatrix& predicted, const MaskPlan& plan) {
  if (plan.total != t0.count()) {
    throw PatchError("composite: plan covers " + std::to_string(plan.total) + " patches, grid has " +
                     std::to_string(t0.count()));
  }
  if (predicted.rows != plan.masked.size()) {
    throw PatchError("composite: " + std::to_string(predicted.rows) + " predictions for " +
                     std::to_string(plan.masked.size()) + " masked patches");
  }
  if (predicted.rows > 0 && predicted.cols != t0.patch_len()) {
    throw PatchError("composite: prediction length " + std::to_string(predicted.cols) + " != " +
                     std::to_string(t0.patch_len()));
  }
  PatchGrid out = t0;
  for (std::size_t k = 0; k < plan.masked.size(); ++k) {
    const auto src = predicted.row(k);
    double* dst = out.data.data() + plan.masked[k] * out.patch_len();
    for (std::size_t j = 0; j < src.size(); ++j) dst[j] = std::clamp(src[j], 0.0, 1.0);
  }
  return unpatchify(out);
}

PatchMatrix gather_patches(const PatchGrid& grid, std::span<const std::size_t> indices) {
  PatchMatrix m;
  m.rows = indices.size();
  m.cols = grid.patch_len();
  m.data.reserve(m.rows * m.cols);
  for (std::size_t k : indices) {
    if (k >= grid.count()) {
      throw std::out_of_range("gather_patches: index " + std::to_string(k) + " >= " + std::to_string(grid.count()));
    }
    const auto row = grid.at(k);
    m.data.insert(m.data.end(), row.begin(), row.end());
  }
  return m;
}

nx::Tensor patchify(const nx::Tensor& images, std::size_t p) {
  if (images.dim() != 3) throw nx::ShapeError("patchify: expected [B, H, W], got " + nx::to_string(images.shape()));
  const std::size_t B = images.size(0), H = images.size(1), W = images.size(2);
  check_divisible(H, W, p);
  const std::size_t R = H / p, C = W / p;
  auto t = nx::reshape(images, {B, R, p, C, p});
  t = nx::permute(t, {0, 1, 3, 2, 4});
  return nx::reshape(t, {B, R * C, p * p});
}

nx::Tensor unpatchify(const nx::Tensor& patches, std::size_t p, std::size_t height, std::size_t width) {
  check_divisible(height, width, p);
  const std::size_t R = height / p, C = width / p;
  if (patches.dim() != 3 || patches.size(1) != R * C || patches.size(2) != p * p) {
    throw nx::ShapeError("unpatchify: patches " + nx::to_string(patches.shape()) + " do not tile " +
                         std::to_string(height) + "x" + std::to_string(width));
  }
  const std::size_t B = patches.size(0);
  auto t = nx::reshape(patches, {B, R, C, p, p});
  t = nx::permute(t, {0, 1, 3, 2, 4});
  return nx::reshape(t, {B, height, width});
}

}  // namespace ppmae::patch
