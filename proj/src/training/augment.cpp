#include "ppmae/training/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ppmae::train {

namespace {

void check_prob(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument(std::string("augment: ") + name + " must lie in [0, 1]");
}

double sample_bilinear(const GrayImage& img, double y, double x) {
  if (y < -0.5 || x < -0.5 || y > img.height - 0.5 || x > img.width - 0.5) return 0.0;
  y = std::clamp(y, 0.0, static_cast<double>(img.height - 1));
  x = std::clamp(x, 0.0, static_cast<double>(img.width - 1));
  const auto y0 = static_cast<std::size_t>(y), x0 = static_cast<std::size_t>(x);
  const std::size_t y1 = std::min(y0 + 1, img.height - 1), x1 = std::min(x0 + 1, img.width - 1);
  const double wy = y - y0, wx = x - x0;
  const double top = img.at(y0, x0) * (1 - wx) + img.at(y0, x1) * wx;
  const double bot = img.at(y1, x0) * (1 - wx) + img.at(y1, x1) * wx;
  return top * (1 - wy) + bot * wy;
}

struct Draw {
  bool hflip = false, vflip = false, blur = false;
  double angle = 0.0, shift = 0.0, gain = 1.0, sigma = 0.0;
  double crop_scale = 1.0, crop_y = 0.0, crop_x = 0.0;
};

GrayImage crop_resize(const GrayImage& img, const Draw& d) {
  const double side = std::sqrt(d.crop_scale);
  const double ch = side * img.height, cw = side * img.width;
  const double top = d.crop_y * (img.height - ch), left = d.crop_x * (img.width - cw);
  GrayImage out(img.height, img.width);
  for (std::size_t r = 0; r < img.height; ++r) {
    for (std::size_t c = 0; c < img.width; ++c) {
      const double y = top + (r + 0.5) * ch / img.height - 0.5;
      const double x = left + (c + 0.5) * cw / img.width - 0.5;
      out.at(r, c) = sample_bilinear(img, y, x);
    }
  }
  return out;
}

GrayImage apply(const GrayImage& src, const Draw& d) {
  GrayImage img = src;
  if (d.hflip) img = flip_horizontal(img);
  if (d.vflip) img = flip_vertical(img);
  if (d.angle != 0.0) img = rotate(img, d.angle);
  if (d.crop_scale < 1.0) img = crop_resize(img, d);
  if (d.gain != 1.0 || d.shift != 0.0) {
    for (auto& p : img.pixels) p = (p - 0.5) * d.gain + 0.5 + d.shift;
  }
  if (d.blur) img = gaussian_blur(img, d.sigma);
  for (auto& p : img.pixels) p = std::clamp(p, 0.0, 1.0);
  return img;
}

}  // namespace

AugmentSpec AugmentSpec::classifier_default() {
  AugmentSpec s;
  s.hflip_prob = 0.5;
  s.vflip_prob = 0.0;
  s.rotation_deg = 5.0;
  s.brightness = 0.05;
  s.contrast = 0.1;
  s.blur_prob = 0.2;
  s.blur_sigma_min = 0.1;
  s.blur_sigma_max = 1.0;
  return s;
}

AugmentSpec AugmentSpec::ppmae_default() {
  AugmentSpec s;
  s.hflip_prob = 0.5;
  s.crop_scale_min = 0.8;
  s.crop_scale_max = 1.0;
  return s;
}

void AugmentSpec::validate() const {
  check_prob(hflip_prob, "hflip_prob");
  check_prob(vflip_prob, "vflip_prob");
  check_prob(blur_prob, "blur_prob");
  if (rotation_deg < 0.0 || rotation_deg > 180.0) throw std::invalid_argument("augment: rotation_deg must lie in [0, 180]");
  if (brightness < 0.0 || contrast < 0.0 || contrast >= 1.0) {
    throw std::invalid_argument("augment: brightness must be >= 0 and contrast in [0, 1)");
  }
  if (blur_sigma_min < 0.0 || blur_sigma_min > blur_sigma_max) {
    throw std::invalid_argument("augment: blur sigma range must satisfy 0 <= min <= max");
  }
  if (blur_prob > 0.0 && blur_sigma_max <= 0.0) throw std::invalid_argument("augment: blur enabled with zero sigma");
  if (!(crop_scale_min > 0.0 && crop_scale_min <= crop_scale_max && crop_scale_max <= 1.0)) {
    throw std::invalid_argument("augment: crop scale range must satisfy 0 < min <= max <= 1");
  }
  if (perspective) throw std::invalid_argument("augment: perspective warping is not supported");
}

nlohmann::json AugmentSpec::to_json() const {
  return {{"hflip_prob", hflip_prob},         {"vflip_prob", vflip_prob},
          {"rotation_deg", rotation_deg},     {"brightness", brightness},
          {"contrast", contrast},             {"blur_prob", blur_prob},
          {"blur_sigma_min", blur_sigma_min}, {"blur_sigma_max", blur_sigma_max},
          {"crop_scale_min", crop_scale_min}, {"crop_scale_max", crop_scale_max},
          {"perspective", perspective}};
}

AugmentSpec AugmentSpec::from_json(const nlohmann::json& j) {
  AugmentSpec s;
  for (const auto& [key, value] : j.items()) {
    if (key == "hflip_prob") s.hflip_prob = value.get<double>();
    else if (key == "vflip_prob") s.vflip_prob = value.get<double>();
    else if (key == "rotation_deg") s.rotation_deg = value.get<double>();
    else if (key == "brightness") s.brightness = value.get<double>();
    else if (key == "contrast") s.contrast = value.get<double>();
    else if (key == "blur_prob") s.blur_prob = value.get<double>();
    else if (key == "blur_sigma_min") s.blur_sigma_min = value.get<double>();
    else if (key == "blur_sigma_max") s.blur_sigma_max = value.get<double>();
    else if (key == "crop_scale_min") s.crop_scale_min = value.get<double>();
    else if (key == "crop_scale_max") s.crop_scale_max = value.get<double>();
    else if (key == "perspective") s.perspective = value.get<bool>();
    else throw std::invalid_argument("augment: unknown key '" + key + "'");
  }
  s.validate();
  return s;
}

GrayImage flip_horizontal(const GrayImage& img) {
  GrayImage out(img.height, img.width);
  for (std::size_t r = 0; r < img.height; ++r) {
    for (std::size_t c = 0; c < img.width; ++c) out.at(r, c) = img.at(r, img.width - 1 - c);
  }
  return out;
}

GrayImage flip_vertical(const GrayImage& img) {
  GrayImage out(img.height, img.width);
  for (std::size_t r = 0; r < img.height; ++r) {
    for (std::size_t c = 0; c < img.width; ++c) out.at(r, c) = img.at(img.height - 1 - r, c);
  }
  return out;
}

GrayImage rotate(const GrayImage& img, double degrees) {
  if (degrees == 0.0) return img;
  const double t = degrees * std::numbers::pi / 180.0, cs = std::cos(t), sn = std::sin(t);
  const double cy = 0.5 * (img.height - 1.0), cx = 0.5 * (img.width - 1.0);
  GrayImage out(img.height, img.width);
  for (std::size_t r = 0; r < img.height; ++r) {
    for (std::size_t c = 0; c < img.width; ++c) {
      const double dy = r - cy, dx = c - cx;
      out.at(r, c) = sample_bilinear(img, cy + cs * dy - sn * dx, cx + sn * dy + cs * dx);
    }
  }
  return out;
}

GrayImage gaussian_blur(const GrayImage& img, double sigma) {
  if (sigma <= 0.0) return img;
  const long radius = static_cast<long>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double total = 0.0;
  for (long i = -radius; i <= radius; ++i) total += k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& w : k) w /= total;
  const long H = static_cast<long>(img.height), W = static_cast<long>(img.width);
  GrayImage tmp(img.height, img.width), out(img.height, img.width);
  for (long r = 0; r < H; ++r) {
    for (long c = 0; c < W; ++c) {
      double s = 0.0;
      for (long i = -radius; i <= radius; ++i) s += k[i + radius] * img.at(r, std::clamp(c + i, 0L, W - 1));
      tmp.at(r, c) = s;
    }
  }
  for (long r = 0; r < H; ++r) {
    for (long c = 0; c < W; ++c) {
      double s = 0.0;
      for (long i = -radius; i <= radius; ++i) s += k[i + radius] * tmp.at(std::clamp(r + i, 0L, H - 1), c);
      out.at(r, c) = s;
    }
  }
  return out;
}

std::pair<GrayImage, GrayImage> augment_pair(const GrayImage& t0, const GrayImage& t1, const AugmentSpec& spec,
                                             Rng& rng) {
  spec.validate();
  if (!t0.same_size(t1)) throw std::invalid_argument("augment_pair: t0 and t1 differ in size");
  Draw d;
  d.hflip = spec.hflip_prob > 0.0 && rng.bernoulli(spec.hflip_prob);
  d.vflip = spec.vflip_prob > 0.0 && rng.bernoulli(spec.vflip_prob);
  if (spec.rotation_deg > 0.0) d.angle = rng.uniform(-spec.rotation_deg, spec.rotation_deg);
  if (spec.crop_scale_min < 1.0) {
    d.crop_scale = rng.uniform(spec.crop_scale_min, spec.crop_scale_max);
    d.crop_y = rng.uniform();
    d.crop_x = rng.uniform();
  }
  if (spec.brightness > 0.0) d.shift = rng.uniform(-spec.brightness, spec.brightness);
  if (spec.contrast > 0.0) d.gain = rng.uniform(1.0 - spec.contrast, 1.0 + spec.contrast);
  if (spec.blur_prob > 0.0 && rng.bernoulli(spec.blur_prob)) {
    d.blur = true;
    d.sigma = rng.uniform(spec.blur_sigma_min, spec.blur_sigma_max);
  }
  return {apply(t0, d), apply(t1, d)};
}

}  // namespace ppmae::train
