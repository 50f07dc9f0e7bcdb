#pragma once

#include <span>

#include "ppmae/numerics/tensor.hpp"

namespace ppmae::nx {

// Mean of squared elementwise differences; shapes must match exactly.
Tensor mse_loss(const Tensor& pred, const Tensor& target);

// Mean over the batch of -log softmax(logits)[label]; logits: [B, K].
// d/dlogits = (softmax - onehot) / B.
Tensor cross_entropy_loss(const Tensor& logits, std::span<const int> labels);

}  // namespace ppmae::nx
