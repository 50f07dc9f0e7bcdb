#pragma once

#include <utility>

#include "json.hpp"
#include "ppmae/dataio/image.hpp"
#include "ppmae/util/rng.hpp"

namespace ppmae::train {

using data::GrayImage;

// One draw per pair: geometric and photometric parameters are shared by
// both scans so their registration survives.
struct AugmentSpec {
  double hflip_prob = 0.0;
  double vflip_prob = 0.0;
  double rotation_deg = 0.0;  // angle uniform in [-rotation_deg, rotation_deg]
  double brightness = 0.0;    // additive shift uniform in [-brightness, brightness]
  double contrast = 0.0;      // gain uniform in [1 - contrast, 1 + contrast] about 0.5
  double blur_prob = 0.0;
  double blur_sigma_min = 0.0;
  double blur_sigma_max = 0.0;
  // Resized crop: kept area fraction uniform in [min, max], aspect preserved.
  double crop_scale_min = 1.0;
  double crop_scale_max = 1.0;
  // Reserved; enabling it is a validation error.
  bool perspective = false;

  static AugmentSpec classifier_default();
  static AugmentSpec ppmae_default();
  void validate() const;
  nlohmann::json to_json() const;
  static AugmentSpec from_json(const nlohmann::json& j);
  bool operator==(const AugmentSpec&) const = default;
};

std::pair<GrayImage, GrayImage> augment_pair(const GrayImage& t0, const GrayImage& t1, const AugmentSpec& spec,
                                             Rng& rng);

GrayImage flip_horizontal(const GrayImage& img);
GrayImage flip_vertical(const GrayImage& img);
// Rotation about the image center, bilinear, zero outside the source.
GrayImage rotate(const GrayImage& img, double degrees);
// Separable Gaussian with edge replication; radius ceil(3 sigma).
GrayImage gaussian_blur(const GrayImage& img, double sigma);

}  // namespace ppmae::train
