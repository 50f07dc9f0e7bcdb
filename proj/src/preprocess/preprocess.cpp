#include "ppmae/preprocess/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ppmae::prep {

SurfaceProfile detect_surface(const GrayImage& img, double threshold, std::size_t smooth_window) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw std::invalid_argument("detect_surface: threshold must lie in (0, 1)");
  if (smooth_window == 0 || smooth_window % 2 == 0) {
    throw std::invalid_argument("detect_surface: smooth_window must be odd and >= 1");
  }
  const std::size_t H = img.height, W = img.width;
  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::vector<std::size_t> raw(W, kNone);
  for (std::size_t c = 0; c < W; ++c) {
    for (std::size_t r = 0; r < H; ++r) {
      const std::size_t lo = r == 0 ? 0 : r - 1;
      const std::size_t hi = std::min(r + 1, H - 1);
      double acc = 0.0;
      for (std::size_t k = lo; k <= hi; ++k) acc += img.at(k, c);
      if (acc / static_cast<double>(hi - lo + 1) > threshold) {
        raw[c] = r;
        break;
      }
    }
  }
  if (std::all_of(raw.begin(), raw.end(), [](auto v) { return v == kNone; })) {
    throw SurfaceError("detect_surface: no column crosses threshold " + std::to_string(threshold));
  }
  std::vector<std::size_t> filled(W);
  for (std::size_t c = 0; c < W; ++c) {
    if (raw[c] != kNone) {
      filled[c] = raw[c];
      continue;
    }
    for (std::size_t d = 1;; ++d) {
      if (c >= d && raw[c - d] != kNone) {
        filled[c] = raw[c - d];
        break;
      }
      if (c + d < W && raw[c + d] != kNone) {
        filled[c] = raw[c + d];
        break;
      }
    }
  }
  SurfaceProfile out;
  out.rows.resize(W);
  const long half = static_cast<long>(smooth_window / 2);
  std::vector<std::size_t> window(smooth_window);
  for (long c = 0; c < static_cast<long>(W); ++c) {
    for (long k = -half; k <= half; ++k) {
      const long at = std::clamp(c + k, 0L, static_cast<long>(W) - 1);
      window[static_cast<std::size_t>(k + half)] = filled[static_cast<std::size_t>(at)];
    }
    std::nth_element(window.begin(), window.begin() + half, window.end());
    out.rows[static_cast<std::size_t>(c)] = window[static_cast<std::size_t>(half)];
  }
  return out;
}

SurfaceProfile fuse_surfaces(std::span<const SurfaceProfile> profiles) {
  if (profiles.empty()) throw std::invalid_argument("fuse_surfaces: need at least one profile");
  const std::size_t W = profiles.front().rows.size();
  for (const auto& p : profiles) {
    if (p.rows.size() != W) throw std::invalid_argument("fuse_surfaces: profile lengths differ");
  }
  SurfaceProfile out;
  out.rows.resize(W);
  std::vector<std::size_t> column(profiles.size());
  const std::size_t n = profiles.size();
  for (std::size_t c = 0; c < W; ++c) {
    for (std::size_t k = 0; k < n; ++k) column[k] = profiles[k].rows[c];
    std::sort(column.begin(), column.end());
    out.rows[c] = n % 2 == 1 ? column[n / 2] : (column[n / 2 - 1] + column[n / 2] + 1) / 2;
  }
  return out;
}

GrayImage flatten(const GrayImage& img, const SurfaceProfile& surface) {
  if (surface.rows.size() != img.width) {
    throw std::invalid_argument("flatten: profile length " + std::to_string(surface.rows.size()) +
                                " does not match image width " + std::to_string(img.width));
  }
  GrayImage out(img.height, img.width, 0.0);
  for (std::size_t c = 0; c < img.width; ++c) {
    const std::size_t shift = surface.rows[c];
    for (std::size_t r = 0; r + shift < img.height; ++r) out.at(r, c) = img.at(r + shift, c);
  }
  return out;
}

GrayImage crop_and_resize(const GrayImage& img, std::size_t keep_rows, std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0) throw std::invalid_argument("crop_and_resize: output dimensions must be positive");
  if (keep_rows == 0 || keep_rows > img.height) {
    throw std::invalid_argument("crop_and_resize: keep_rows " + std::to_string(keep_rows) + " invalid for height " +
                                std::to_string(img.height));
  }
  GrayImage top(keep_rows, img.width,
                std::vector<double>(img.pixels.begin(), img.pixels.begin() + static_cast<long>(keep_rows * img.width)));
  GrayImage out = data::resize_bilinear(top, out_h, out_w);
  for (auto& p : out.pixels) p = std::clamp(p, 0.0, 1.0);
  return out;
}

void PreprocessParams::validate() const {
  if (thresholds.empty()) throw std::invalid_argument("preprocess: at least one threshold is required");
  for (double t : thresholds) {
    if (!(t > 0.0 && t < 1.0)) throw std::invalid_argument("preprocess: thresholds must lie in (0, 1)");
  }
  if (smooth_window == 0 || smooth_window % 2 == 0) {
    throw std::invalid_argument("preprocess: smooth_window must be odd and >= 1");
  }
  if (out_h == 0 || out_w == 0) throw std::invalid_argument("preprocess: output dimensions must be positive");
  if (keep_rows && *keep_rows == 0) throw std::invalid_argument("preprocess: keep_rows must be positive");
}

SurfaceProfile estimate_surface(const GrayImage& img, const PreprocessParams& params) {
  std::vector<SurfaceProfile> runs;
  for (double t : params.thresholds) {
    try {
      runs.push_back(detect_surface(img, t, params.smooth_window));
    } catch (const SurfaceError&) {
    }
  }
  if (runs.empty()) return SurfaceProfile{std::vector<std::size_t>(img.width, 0)};
  return fuse_surfaces(runs);
}

GrayImage preprocess_image(const GrayImage& img, const PreprocessParams& params) {
  params.validate();
  const GrayImage flat = params.flatten ? flatten(img, estimate_surface(img, params)) : img;
  const std::size_t keep =
      std::min(img.height, params.keep_rows.value_or(static_cast<std::size_t>(std::lround(0.8 * img.height))));
  return crop_and_resize(flat, std::max<std::size_t>(keep, 1), params.out_h, params.out_w);
}

data::PairSample preprocess_pair(const data::PairSample& sample, const PreprocessParams& params) {
  if (!sample.image_t0.same_size(sample.image_t1)) {
    throw std::invalid_argument("preprocess_pair: case " + sample.case_id + " has mismatched t0/t1 dimensions");
  }
  data::PairSample out = sample;
  out.image_t0 = preprocess_image(sample.image_t0, params);
  out.image_t1 = preprocess_image(sample.image_t1, params);
  return out;
}

}  // namespace ppmae::prep
