#pragma once

#include <cstdint>
#include <vector>

#include "ppmae/numerics/tensor.hpp"

namespace ppmae::nx {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Adam with decoupled weight decay and no learning-rate schedule.
class AdamW {
 public:
  AdamW(AdamWConfig config, std::vector<Tensor> params);

  // Applies one update from the parameters' accumulated grads. Parameters
  // without a grad buffer are skipped.
  void step();
  void zero_grad();

  std::uint64_t step_count() const { return steps_; }
  const AdamWConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }

 private:
  AdamWConfig config_;
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> first_moment_;
  std::vector<std::vector<double>> second_moment_;
  std::uint64_t steps_ = 0;
};

}  // namespace ppmae::nx
