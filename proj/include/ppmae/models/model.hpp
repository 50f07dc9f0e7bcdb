#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "ppmae/dataio/image.hpp"
#include "ppmae/numerics/tensor.hpp"
#include "ppmae/util/rng.hpp"

namespace ppmae::models {

struct NamedTensor {
  std::string name;
  nx::Tensor tensor;
};

// Ordered, uniquely named trainable leaves. The order is the checkpoint order.
class ParamStore {
 public:
  nx::Tensor add(std::string name, nx::Tensor tensor);
  const std::vector<NamedTensor>& items() const { return items_; }
  std::vector<nx::Tensor> tensors() const;
  const nx::Tensor& get(const std::string& name) const;
  std::size_t scalar_count() const;

 private:
  std::vector<NamedTensor> items_;
};

class Model {
 public:
  virtual ~Model() = default;
  virtual std::string kind() const = 0;
  virtual nlohmann::json config_json() const = 0;

  const ParamStore& params() const { return params_; }
  std::vector<nx::Tensor> parameters() const { return params_.tensors(); }
  // Copies values from a model with the same parameter names and shapes.
  void copy_state_from(const Model& other);

 protected:
  ParamStore params_;
};

namespace init {

nx::Tensor zeros(const nx::Shape& shape);
nx::Tensor ones(const nx::Shape& shape);
// Normal with std sqrt(gain / fan_in).
nx::Tensor fan_in_normal(const nx::Shape& shape, std::size_t fan_in, double gain, Rng& rng);
// Normal(0, std) redrawn outside two standard deviations.
nx::Tensor truncated_normal(const nx::Shape& shape, double std, Rng& rng);

}  // namespace init

// Stacks equally sized images into [B, H, W] (or [B, 1, H, W] with a channel axis).
nx::Tensor stack_images(const std::vector<const data::GrayImage*>& images, bool channel_axis);

}  // namespace ppmae::models
