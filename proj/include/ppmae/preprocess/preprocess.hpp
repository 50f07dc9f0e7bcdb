#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "ppmae/dataio/image.hpp"
#include "ppmae/dataio/manifest.hpp"

namespace ppmae::prep {

using data::GrayImage;

// Row of the retina's upper boundary, one entry per image column.
struct SurfaceProfile {
  std::vector<std::size_t> rows;
  bool operator==(const SurfaceProfile&) const = default;
};

class SurfaceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Per column, the first row (top-down) whose 3-row centered moving average
// exceeds `threshold`. Columns without a crossing copy the nearest detected
// column (left wins ties); the profile is then median-filtered across
// columns with edge replication.
SurfaceProfile detect_surface(const GrayImage& img, double threshold, std::size_t smooth_window);

// Elementwise median; an even count averages the two central values,
// rounding half up.
SurfaceProfile fuse_surfaces(std::span<const SurfaceProfile> profiles);

// Shifts each column up by its surface row and zero-fills the vacated rows.
GrayImage flatten(const GrayImage& img, const SurfaceProfile& surface);

// Keeps the top `keep_rows` rows, resizes bilinearly and clamps to [0, 1].
GrayImage crop_and_resize(const GrayImage& img, std::size_t keep_rows, std::size_t out_h, std::size_t out_w);

struct PreprocessParams {
  // One detector run per threshold; the runs are fused by median.
  std::vector<double> thresholds{0.35, 0.45};
  std::size_t smooth_window = 5;
  // Defaults to 80% of the image height.
  std::optional<std::size_t> keep_rows;
  std::size_t out_h = 64;
  std::size_t out_w = 64;
  bool flatten = true;

  void validate() const;
};

// Surface estimate for one image; the zero profile when no detector run
// finds the retina (e.g. a corrupted scan).
SurfaceProfile estimate_surface(const GrayImage& img, const PreprocessParams& params);

GrayImage preprocess_image(const GrayImage& img, const PreprocessParams& params);

// Both images processed independently; labels and ids unchanged.
data::PairSample preprocess_pair(const data::PairSample& sample, const PreprocessParams& params);

}  // namespace ppmae::prep
