#include "ppmae/models/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ppmae::models {

nx::Tensor ParamStore::add(std::string name, nx::Tensor tensor) {
  if (!tensor.defined() || !tensor.requires_grad()) throw std::invalid_argument("parameter " + name + " must be tracked");
  for (const auto& it : items_) {
    if (it.name == name) throw std::invalid_argument("duplicate parameter name " + name);
  }
  items_.push_back({std::move(name), tensor});
  return tensor;
}

std::vector<nx::Tensor> ParamStore::tensors() const {
  std::vector<nx::Tensor> out;
  out.reserve(items_.size());
  for (const auto& it : items_) out.push_back(it.tensor);
  return out;
}

const nx::Tensor& ParamStore::get(const std::string& name) const {
  for (const auto& it : items_) {
    if (it.name == name) return it.tensor;
  }
  throw std::out_of_range("no parameter named " + name);
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& it : items_) n += it.tensor.numel();
  return n;
}

void Model::copy_state_from(const Model& other) {
  const auto& mine = params_.items();
  const auto& theirs = other.params().items();
  if (mine.size() != theirs.size()) {
    throw std::invalid_argument("copy_state_from: parameter counts differ (" + std::to_string(mine.size()) + " vs " +
                                std::to_string(theirs.size()) + ")");
  }
  for (std::size_t i = 0; i < mine.size(); ++i) {
    if (mine[i].name != theirs[i].name || mine[i].tensor.shape() != theirs[i].tensor.shape()) {
      throw std::invalid_argument("copy_state_from: parameter " + mine[i].name + " does not match " + theirs[i].name);
    }
    auto dst = nx::Tensor(mine[i].tensor).mutable_values();
    const auto src = theirs[i].tensor.values();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

namespace init {

nx::Tensor zeros(const nx::Shape& shape) { return nx::Tensor::zeros(shape, true); }

nx::Tensor ones(const nx::Shape& shape) { return nx::Tensor::full(shape, 1.0, true); }

nx::Tensor fan_in_normal(const nx::Shape& shape, std::size_t fan_in, double gain, Rng& rng) {
  const double std = std::sqrt(gain / static_cast<double>(fan_in));
  std::vector<double> v(nx::numel(shape));
  for (auto& x : v) x = std * rng.normal();
  return nx::Tensor(shape, std::move(v), true);
}

nx::Tensor truncated_normal(const nx::Shape& shape, double std, Rng& rng) {
  std::vector<double> v(nx::numel(shape));
  for (auto& x : v) {
    double z;
    do {
      z = rng.normal();
    } while (std::abs(z) > 2.0);
    x = std * z;
  }
  return nx::Tensor(shape, std::move(v), true);
}

}  // namespace init

nx::Tensor stack_images(const std::vector<const data::GrayImage*>& images, bool channel_axis) {
  if (images.empty()) throw std::invalid_argument("stack_images: empty batch");
  const std::size_t h = images.front()->height, w = images.front()->width;
  std::vector<double> v;
  v.reserve(images.size() * h * w);
  for (const auto* img : images) {
    if (img->height != h || img->width != w) throw nx::ShapeError("stack_images: images differ in size");
    v.insert(v.end(), img->pixels.begin(), img->pixels.end());
  }
  nx::Shape shape = channel_axis ? nx::Shape{images.size(), 1, h, w} : nx::Shape{images.size(), h, w};
  return nx::Tensor(std::move(shape), std::move(v));
}

}  // namespace ppmae::models
