#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ppmae/numerics/tensor.hpp"

namespace ppmae::nx {

// Elementwise arithmetic with numpy-style (right-aligned) broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor broadcast_to(const Tensor& a, const Shape& shape);

Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor square(const Tensor& a);
Tensor relu(const Tensor& a);
// Exact (erf-based) GELU.
Tensor gelu(const Tensor& a);

// a: [..., M, K]; b: [K, N] or [..., K, N] with identical leading dims.
Tensor matmul(const Tensor& a, const Tensor& b);
// x: [..., in], weight: [in, out], bias: [out] (may be undefined).
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

// x: [B, C, H, W], weight: [O, C, kh, kw], bias: [O] (may be undefined).
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              Conv2dOptions options = {});
// x: [B, C, H, W]; no padding.
Tensor max_pool2d(const Tensor& x, std::size_t kernel, std::size_t stride);

Tensor sum(const Tensor& a);
Tensor sum(const Tensor& a, int axis, bool keepdim = false);
Tensor mean(const Tensor& a);
Tensor mean(const Tensor& a, int axis, bool keepdim = false);

Tensor softmax(const Tensor& a, int axis);
// Normalizes over the last axis; gamma/beta: [last].
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

Tensor reshape(const Tensor& a, const Shape& shape);
Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes);
Tensor transpose(const Tensor& a, int axis0, int axis1);
Tensor concat(const std::vector<Tensor>& parts, int axis);
// Half-open range [begin, end) along `axis`.
Tensor slice(const Tensor& a, int axis, std::size_t begin, std::size_t end);
// Rows of `a` (along axis 0) at `indices`, in order; repeats allowed.
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> indices);

}  // namespace ppmae::nx
