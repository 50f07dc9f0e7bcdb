#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "ppmae/dataio/image.hpp"
#include "ppmae/numerics/tensor.hpp"

namespace ppmae::patch {

using data::GrayImage;

// Non-overlapping p×p patches in row-major grid order, pixels row-major
// within a patch.
struct PatchGrid {
  std::size_t patch = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // count() * patch_len()

  std::size_t count() const { return rows * cols; }
  std::size_t patch_len() const { return patch * patch; }
  std::span<const double> at(std::size_t k) const { return {data.data() + k * patch_len(), patch_len()}; }
  bool operator==(const PatchGrid&) const = default;
};

// Dense rows of patch vectors; rows may be zero.
struct PatchMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  std::span<const double> row(std::size_t k) const { return {data.data() + k * cols, cols}; }
  bool operator==(const PatchMatrix&) const = default;
};

struct MaskPlan {
  std::size_t total = 0;
  std::vector<std::size_t> visible;  // sorted
  std::vector<std::size_t> masked;   // sorted
  double ratio = 0.0;
  std::uint64_t seed = 0;
};

class PatchError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

PatchGrid patchify(const GrayImage& img, std::size_t p);
GrayImage unpatchify(const PatchGrid& grid);

// Keeps floor(total * (1 - ratio)) patches chosen by a seeded shuffle.
MaskPlan sample_mask(std::size_t total, double ratio, std::uint64_t seed);

// t0 patches at visible indices, clamped predictions at masked indices.
// `predicted` rows follow plan.masked order.
GrayImage composite(const PatchGrid& t0, const PatchMatrix& predicted, const MaskPlan& plan);

PatchMatrix gather_patches(const PatchGrid& grid, std::span<const std::size_t> indices);

// Differentiable counterparts on [B, H, W] tensors.
nx::Tensor patchify(const nx::Tensor& images, std::size_t p);    // -> [B, N, p*p]
nx::Tensor unpatchify(const nx::Tensor& patches, std::size_t p, std::size_t height, std::size_t width);

}  // namespace ppmae::patch
