#pragma once

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <vector>

namespace ppmae::data {

// Single-channel image, row-major, pixels in [0, 1].
struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;

  GrayImage() = default;
  GrayImage(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), pixels(h * w, fill) {}
  GrayImage(std::size_t h, std::size_t w, std::vector<double> px);

  double& at(std::size_t r, std::size_t c) { return pixels[r * width + c]; }
  double at(std::size_t r, std::size_t c) const { return pixels[r * width + c]; }
  bool same_size(const GrayImage& o) const { return height == o.height && width == o.width; }
  bool operator==(const GrayImage&) const = default;
};

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// 8-bit grayscale PGM (P5/P2) or PNG, scaled by 1/255.
GrayImage load_image(const std::filesystem::path& path);

// Writes binary PGM (P5, maxval 255); pixels are clamped and rounded.
void save_pgm(const GrayImage& img, const std::filesystem::path& path);
void save_png(const GrayImage& img, const std::filesystem::path& path);

// Rounds every pixel to the nearest 1/255 step.
GrayImage quantize8(const GrayImage& img);

// Bilinear resampling with pixel-center alignment; edges clamp.
GrayImage resize_bilinear(const GrayImage& img, std::size_t out_h, std::size_t out_w);

}  // namespace ppmae::data
