#pragma once

#include <cstdint>
#include <vector>

#include "ppmae/numerics/gradcheck.hpp"

namespace ppmae::models {

// Finite-difference checks of the full early-fusion, late-fusion and PPMAE
// graphs at toy size (16x16 inputs, PPMAE patch 4), covering every
// parameter and both input images.
std::vector<nx::GradCheckResult> model_gradcheck_suite(std::uint64_t seed = 7);

}  // namespace ppmae::models
