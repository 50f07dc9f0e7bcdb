#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ppmae/numerics/tensor.hpp"

namespace ppmae::nx {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Denominator floor for the relative error of near-zero components.
  double floor = 1e-6;
  // 0 checks every component; otherwise a seeded subset per input.
  std::size_t max_components_per_input = 0;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  std::string name;
  std::size_t components = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  bool passed = false;
};

using Objective = std::function<Tensor(const std::vector<Tensor>&)>;

// Compares reverse-mode gradients of `f` against central differences,
// component by component. Non-scalar outputs are contracted with a fixed
// random weight tensor first. `inputs` must be tracked leaves.
GradCheckResult check_gradients(const std::string& name, const Objective& f,
                                std::vector<Tensor> inputs, const GradCheckOptions& options = {});

// Randomized checks of every differentiable primitive and both losses.
std::vector<GradCheckResult> primitive_gradcheck_suite(std::uint64_t seed = 7);

}  // namespace ppmae::nx
