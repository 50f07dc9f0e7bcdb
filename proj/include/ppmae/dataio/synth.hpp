#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ppmae/dataio/manifest.hpp"

namespace ppmae::data {

// Geometry and appearance of synthetic longitudinal B-scan pairs. Lengths
// are in pixels at (height, width).
struct SynthConfig {
  std::size_t height = 64;
  std::size_t width = 160;
  double band_thickness = 30.0;
  // Range of the band's top row at the image's center column.
  double band_top_min = 10.0;
  double band_top_max = 20.0;
  // Maximum absolute rise of the band across the full width.
  double tilt = 6.0;
  // Maximum absolute extra vertical offset of t1 relative to t0.
  double depth_jitter = 3.0;
  // Vertical semi-axis of the smaller pocket state; horizontal = aspect * vertical.
  double pocket_radius = 5.0;
  double pocket_aspect = 4.0;
  // Area ratio between the larger and the smaller pocket state (> 1).
  double growth_factor = 2.0;
  // Additive Gaussian noise standard deviation, in [0, 1).
  double noise = 0.1;
  // Pocket fill brightening per activity step at t0 (worsening pockets are darkest).
  double activity_cue = 0.15;
  // Relative weights of classes 0..3.
  std::array<double, 4> class_balance{1.0, 1.0, 1.0, 1.0};
  std::size_t pairs_per_patient = 2;
  std::string id_prefix = "S";
  std::uint64_t seed = 0;

  void validate() const;
};

// Geometry that produced one rendered pair, for tests and diagnostics.
struct SynthTruth {
  int label = 1;
  double band_top_t0 = 0.0;  // at the center column
  double band_top_t1 = 0.0;
  double slope = 0.0;  // rows per column
  double pocket_col = 0.0;
  double pocket_ry_t0 = 0.0;
  double pocket_ry_t1 = 0.0;
};

// Class per pair index: largest-remainder counts from the balance, then a
// seeded shuffle.
std::vector<int> synth_class_plan(const SynthConfig& config, std::size_t n_pairs);

// Renders pair `index` of a dataset of `n_pairs`; pixels are 8-bit quantized.
PairSample render_pair(const SynthConfig& config, std::size_t index, std::size_t n_pairs,
                       SynthTruth* truth = nullptr);

std::vector<PairSample> generate_samples(const SynthConfig& config, std::size_t n_pairs);

// Writes images under out_dir/images and returns the (unsaved) manifest.
Manifest generate_synthetic(const SynthConfig& config, std::size_t n_pairs, const std::filesystem::path& out_dir);

}  // namespace ppmae::data
