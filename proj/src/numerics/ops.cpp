#include "ppmae/numerics/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace ppmae::nx {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

using detail::make_result;

std::string mismatch(const char* kind, const Shape& a, const Shape& b) {
  return std::string(kind) + ": incompatible shapes " + to_string(a) + " and " + to_string(b);
}

std::size_t normalize_axis(int axis, std::size_t rank, const char* kind) {
  const int r = static_cast<int>(rank);
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    throw ShapeError(std::string(kind) + ": axis " + std::to_string(axis) + " out of range for rank " +
                     std::to_string(rank));
  }
  return static_cast<std::size_t>(axis);
}

// Splits a shape around `axis` into (outer, extent, inner) products.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.extent = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

struct BroadcastPlan {
  Shape out;
  std::vector<std::size_t> stride_a, stride_b;
  bool same = false;
};

std::vector<std::size_t> aligned_strides(const Shape& s, std::size_t rank) {
  std::vector<std::size_t> st(rank, 0);
  const std::size_t lead = rank - s.size();
  std::size_t acc = 1;
  for (std::size_t i = s.size(); i-- > 0;) {
    st[lead + i] = s[i] == 1 ? 0 : acc;
    acc *= s[i];
  }
  return st;
}

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b, const char* kind) {
  BroadcastPlan p;
  if (a == b) {
    p.out = a;
    p.same = true;
    return p;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  p.out.resize(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i + a.size() < rank ? 1 : a[i + a.size() - rank];
    const std::size_t db = i + b.size() < rank ? 1 : b[i + b.size() - rank];
    if (da != db && da != 1 && db != 1) throw ShapeError(mismatch(kind, a, b));
    p.out[i] = std::max(da, db);
  }
  p.stride_a = aligned_strides(a, rank);
  p.stride_b = aligned_strides(b, rank);
  return p;
}

template <class F>
void for_each_broadcast(const BroadcastPlan& p, F&& f) {
  const std::size_t n = numel(p.out);
  const std::size_t rank = p.out.size();
  if (rank == 0) {
    f(std::size_t{0}, std::size_t{0}, std::size_t{0});
    return;
  }
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t i = 0; i < n; ++i) {
    f(i, ia, ib);
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      ia += p.stride_a[d];
      ib += p.stride_b[d];
      if (idx[d] < p.out[d]) break;
      ia -= p.stride_a[d] * p.out[d];
      ib -= p.stride_b[d] * p.out[d];
      idx[d] = 0;
    }
  }
}

// fwd(x, y) -> z; dx(x, y, g) and dy(x, y, g) give the input contributions.
template <class Fwd, class Dx, class Dy>
Tensor binary(const char* kind, const Tensor& a, const Tensor& b, Fwd fwd, Dx dx, Dy dy) {
  auto plan = std::make_shared<BroadcastPlan>(plan_broadcast(a.shape(), b.shape(), kind));
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  std::vector<double> out(numel(plan->out));
  if (plan->same) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
  } else {
    for_each_broadcast(*plan, [&](std::size_t i, std::size_t ia, std::size_t ib) {
      out[i] = fwd(av[ia], bv[ib]);
    });
  }
  return make_result(kind, plan->out, std::move(out), {a, b}, [plan, dx, dy](Node& self) {
    Node& na = *self.inputs[0];
    Node& nb = *self.inputs[1];
    const auto& g = self.grad;
    if (plan->same) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (na.tracked) na.grad[i] += dx(na.value[i], nb.value[i], g[i]);
        if (nb.tracked) nb.grad[i] += dy(na.value[i], nb.value[i], g[i]);
      }
      return;
    }
    for_each_broadcast(*plan, [&](std::size_t i, std::size_t ia, std::size_t ib) {
      if (na.tracked) na.grad[ia] += dx(na.value[ia], nb.value[ib], g[i]);
      if (nb.tracked) nb.grad[ib] += dy(na.value[ia], nb.value[ib], g[i]);
    });
  });
}

// fwd(x) -> y; d(x, y) -> dy/dx.
template <class Fwd, class D>
Tensor unary(const char* kind, const Tensor& a, Fwd fwd, D d) {
  const auto& av = a.node()->value;
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  return make_result(kind, a.shape(), std::move(out), {a}, [d](Node& self) {
    Node& in = *self.inputs[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      in.grad[i] += self.grad[i] * d(in.value[i], self.value[i]);
    }
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double g) { return g; }, [](double, double, double g) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double g) { return g; }, [](double, double, double g) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y, double g) { return g * y; },
      [](double x, double, double g) { return g * x; });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      "scale", a, [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Tensor broadcast_to(const Tensor& a, const Shape& shape) {
  auto plan = std::make_shared<BroadcastPlan>(plan_broadcast(a.shape(), shape, "broadcast"));
  if (plan->out != shape) throw ShapeError(mismatch("broadcast", a.shape(), shape));
  if (plan->same) return reshape(a, shape);
  const auto& av = a.node()->value;
  std::vector<double> out(numel(shape));
  for_each_broadcast(*plan, [&](std::size_t i, std::size_t ia, std::size_t) { out[i] = av[ia]; });
  return make_result("broadcast", shape, std::move(out), {a}, [plan](Node& self) {
    Node& in = *self.inputs[0];
    for_each_broadcast(*plan, [&](std::size_t i, std::size_t ia, std::size_t) {
      in.grad[ia] += self.grad[i];
    });
  });
}

Tensor exp(const Tensor& a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary(
      "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor square(const Tensor& a) {
  return unary(
      "square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor relu(const Tensor& a) {
  return unary(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& a) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return unary(
      "gelu", a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
      [](double x, double) {
        const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
        return cdf + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
      });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.dim() < 2 || b.dim() < 2) throw ShapeError(mismatch("matmul", a.shape(), b.shape()));
  const std::size_t m = a.shape()[a.dim() - 2];
  const std::size_t k = a.shape()[a.dim() - 1];
  const std::size_t kb = b.shape()[b.dim() - 2];
  const std::size_t n = b.shape()[b.dim() - 1];
  if (k != kb) throw ShapeError(mismatch("matmul", a.shape(), b.shape()));

  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  out_shape.push_back(n);

  if (b.dim() == 2) {
    const std::size_t rows = a.numel() / k;
    std::vector<double> out(rows * n);
    MatMap(out.data(), rows, n).noalias() =
        ConstMatMap(a.values().data(), rows, k) * ConstMatMap(b.values().data(), k, n);
    return make_result("matmul", out_shape, std::move(out), {a, b}, [rows, k, n](Node& self) {
      Node& na = *self.inputs[0];
      Node& nb = *self.inputs[1];
      ConstMatMap g(self.grad.data(), rows, n);
      if (na.tracked) {
        MatMap(na.grad.data(), rows, k).noalias() += g * ConstMatMap(nb.value.data(), k, n).transpose();
      }
      if (nb.tracked) {
        MatMap(nb.grad.data(), k, n).noalias() += ConstMatMap(na.value.data(), rows, k).transpose() * g;
      }
    });
  }

  if (a.dim() != b.dim() ||
      !std::equal(a.shape().begin(), a.shape().end() - 2, b.shape().begin())) {
    throw ShapeError(mismatch("matmul", a.shape(), b.shape()));
  }
  const std::size_t batch = a.numel() / (m * k);
  std::vector<double> out(batch * m * n);
  const double* ap = a.values().data();
  const double* bp = b.values().data();
  for (std::size_t i = 0; i < batch; ++i) {
    MatMap(out.data() + i * m * n, m, n).noalias() =
        ConstMatMap(ap + i * m * k, m, k) * ConstMatMap(bp + i * k * n, k, n);
  }
  return make_result("matmul", out_shape, std::move(out), {a, b}, [batch, m, k, n](Node& self) {
    Node& na = *self.inputs[0];
    Node& nb = *self.inputs[1];
    for (std::size_t i = 0; i < batch; ++i) {
      ConstMatMap g(self.grad.data() + i * m * n, m, n);
      if (na.tracked) {
        MatMap(na.grad.data() + i * m * k, m, k).noalias() +=
            g * ConstMatMap(nb.value.data() + i * k * n, k, n).transpose();
      }
      if (nb.tracked) {
        MatMap(nb.grad.data() + i * k * n, k, n).noalias() +=
            ConstMatMap(na.value.data() + i * m * k, m, k).transpose() * g;
      }
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (weight.dim() != 2 || x.dim() < 1 || x.shape().back() != weight.shape()[0]) {
    throw ShapeError(mismatch("linear", x.shape(), weight.shape()));
  }
  const std::size_t in = weight.shape()[0];
  const std::size_t out_dim = weight.shape()[1];
  const bool has_bias = bias.defined();
  if (has_bias && (bias.dim() != 1 || bias.shape()[0] != out_dim)) {
    throw ShapeError(mismatch("linear", weight.shape(), bias.shape()));
  }
  const std::size_t rows = x.numel() / in;
  Shape out_shape = x.shape();
  out_shape.back() = out_dim;
  std::vector<double> out(rows * out_dim);
  MatMap o(out.data(), rows, out_dim);
  o.noalias() = ConstMatMap(x.values().data(), rows, in) * ConstMatMap(weight.values().data(), in, out_dim);
  if (has_bias) {
    o.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.values().data(), out_dim);
  }
  std::vector<Tensor> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return make_result("linear", out_shape, std::move(out), std::move(inputs),
                     [rows, in, out_dim, has_bias](Node& self) {
                       Node& nx_ = *self.inputs[0];
                       Node& nw = *self.inputs[1];
                       ConstMatMap g(self.grad.data(), rows, out_dim);
                       if (nx_.tracked) {
                         MatMap(nx_.grad.data(), rows, in).noalias() +=
                             g * ConstMatMap(nw.value.data(), in, out_dim).transpose();
                       }
                       if (nw.tracked) {
                         MatMap(nw.grad.data(), in, out_dim).noalias() +=
                             ConstMatMap(nx_.value.data(), rows, in).transpose() * g;
                       }
                       if (has_bias && self.inputs[2]->tracked) {
                         Eigen::Map<Eigen::RowVectorXd>(self.inputs[2]->grad.data(), out_dim) +=
                             g.colwise().sum();
                       }
                     });
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, Conv2dOptions opt) {
  if (x.dim() != 4 || weight.dim() != 4 || x.shape()[1] != weight.shape()[1]) {
    throw ShapeError(mismatch("conv2d", x.shape(), weight.shape()));
  }
  if (opt.stride == 0) throw ShapeError("conv2d: stride must be positive");
  const std::size_t B = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  const std::size_t O = weight.shape()[0], KH = weight.shape()[2], KW = weight.shape()[3];
  const std::size_t P = opt.padding, S = opt.stride;
  if (H + 2 * P < KH || W + 2 * P < KW) throw ShapeError(mismatch("conv2d", x.shape(), weight.shape()));
  const std::size_t Ho = (H + 2 * P - KH) / S + 1;
  const std::size_t Wo = (W + 2 * P - KW) / S + 1;
  const bool has_bias = bias.defined();
  if (has_bias && (bias.dim() != 1 || bias.shape()[0] != O)) {
    throw ShapeError(mismatch("conv2d", weight.shape(), bias.shape()));
  }

  const std::size_t ckk = C * KH * KW;
  const std::size_t spatial = Ho * Wo;
  const std::size_t ncols = B * spatial;
  auto cols = std::make_shared<std::vector<double>>(ckk * ncols, 0.0);
  const double* xp = x.values().data();
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t i = 0; i < KH; ++i) {
      for (std::size_t j = 0; j < KW; ++j) {
        double* row = cols->data() + ((c * KH + i) * KW + j) * ncols;
        for (std::size_t b = 0; b < B; ++b) {
          const double* plane = xp + (b * C + c) * H * W;
          for (std::size_t oh = 0; oh < Ho; ++oh) {
            const long ih = static_cast<long>(oh * S + i) - static_cast<long>(P);
            double* dst = row + b * spatial + oh * Wo;
            if (ih < 0 || ih >= static_cast<long>(H)) continue;
            for (std::size_t ow = 0; ow < Wo; ++ow) {
              const long iw = static_cast<long>(ow * S + j) - static_cast<long>(P);
              if (iw >= 0 && iw < static_cast<long>(W)) dst[ow] = plane[ih * W + iw];
            }
          }
        }
      }
    }
  }

  RowMat prod = ConstMatMap(weight.values().data(), O, ckk) * ConstMatMap(cols->data(), ckk, ncols);
  std::vector<double> out(B * O * spatial);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t o = 0; o < O; ++o) {
      const double bo = has_bias ? bias.values()[o] : 0.0;
      const double* src = prod.data() + o * ncols + b * spatial;
      double* dst = out.data() + (b * O + o) * spatial;
      for (std::size_t s = 0; s < spatial; ++s) dst[s] = src[s] + bo;
    }
  }

  std::vector<Tensor> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return make_result(
      "conv2d", Shape{B, O, Ho, Wo}, std::move(out), std::move(inputs),
      [=](Node& self) {
        Node& nxn = *self.inputs[0];
        Node& nw = *self.inputs[1];
        RowMat g(O, ncols);
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t o = 0; o < O; ++o) {
            const double* src = self.grad.data() + (b * O + o) * spatial;
            std::copy(src, src + spatial, g.data() + o * ncols + b * spatial);
          }
        }
        if (nw.tracked) {
          MatMap(nw.grad.data(), O, ckk).noalias() += g * ConstMatMap(cols->data(), ckk, ncols).transpose();
        }
        if (has_bias && self.inputs[2]->tracked) {
          Eigen::Map<Eigen::VectorXd>(self.inputs[2]->grad.data(), O) += g.rowwise().sum();
        }
        if (!nxn.tracked) return;
        RowMat dcols = ConstMatMap(nw.value.data(), O, ckk).transpose() * g;
        for (std::size_t c = 0; c < C; ++c) {
          for (std::size_t i = 0; i < KH; ++i) {
            for (std::size_t j = 0; j < KW; ++j) {
              const double* row = dcols.data() + ((c * KH + i) * KW + j) * ncols;
              for (std::size_t b = 0; b < B; ++b) {
                double* plane = nxn.grad.data() + (b * C + c) * H * W;
                for (std::size_t oh = 0; oh < Ho; ++oh) {
                  const long ih = static_cast<long>(oh * S + i) - static_cast<long>(P);
                  if (ih < 0 || ih >= static_cast<long>(H)) continue;
                  const double* src = row + b * spatial + oh * Wo;
                  for (std::size_t ow = 0; ow < Wo; ++ow) {
                    const long iw = static_cast<long>(ow * S + j) - static_cast<long>(P);
                    if (iw >= 0 && iw < static_cast<long>(W)) plane[ih * W + iw] += src[ow];
                  }
                }
              }
            }
          }
        }
      });
}

Tensor max_pool2d(const Tensor& x, std::size_t kernel, std::size_t stride) {
  if (x.dim() != 4 || kernel == 0 || stride == 0 || x.shape()[2] < kernel || x.shape()[3] < kernel) {
    throw ShapeError("max_pool2d: invalid input " + to_string(x.shape()) + " for kernel " +
                     std::to_string(kernel));
  }
  const std::size_t B = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  const std::size_t Ho = (H - kernel) / stride + 1;
  const std::size_t Wo = (W - kernel) / stride + 1;
  std::vector<double> out(B * C * Ho * Wo);
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  const auto& xv = x.values();
  for (std::size_t p = 0; p < B * C; ++p) {
    for (std::size_t oh = 0; oh < Ho; ++oh) {
      for (std::size_t ow = 0; ow < Wo; ++ow) {
        std::size_t best = p * H * W + oh * stride * W + ow * stride;
        for (std::size_t i = 0; i < kernel; ++i) {
          for (std::size_t j = 0; j < kernel; ++j) {
            const std::size_t at = p * H * W + (oh * stride + i) * W + ow * stride + j;
            if (xv[at] > xv[best]) best = at;
          }
        }
        const std::size_t o = (p * Ho + oh) * Wo + ow;
        out[o] = xv[best];
        (*argmax)[o] = best;
      }
    }
  }
  return make_result("max_pool2d", Shape{B, C, Ho, Wo}, std::move(out), {x}, [argmax](Node& self) {
    Node& in = *self.inputs[0];
    for (std::size_t o = 0; o < self.grad.size(); ++o) in.grad[(*argmax)[o]] += self.grad[o];
  });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return make_result("sum", Shape{}, {s}, {a}, [](Node& self) {
    Node& in = *self.inputs[0];
    for (auto& g : in.grad) g += self.grad[0];
  });
}

Tensor sum(const Tensor& a, int axis, bool keepdim) {
  const std::size_t ax = normalize_axis(axis, a.dim(), "sum");
  const AxisSplit sp = split_at(a.shape(), ax);
  std::vector<double> out(sp.outer * sp.inner, 0.0);
  const auto& av = a.values();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t e = 0; e < sp.extent; ++e) {
      const double* src = av.data() + (o * sp.extent + e) * sp.inner;
      double* dst = out.data() + o * sp.inner;
      for (std::size_t i = 0; i < sp.inner; ++i) dst[i] += src[i];
    }
  }
  Shape shape = a.shape();
  if (keepdim) {
    shape[ax] = 1;
  } else {
    shape.erase(shape.begin() + static_cast<long>(ax));
  }
  return make_result("sum", shape, std::move(out), {a}, [sp](Node& self) {
    Node& in = *self.inputs[0];
    for (std::size_t o = 0; o < sp.outer; ++o) {
      for (std::size_t e = 0; e < sp.extent; ++e) {
        double* dst = in.grad.data() + (o * sp.extent + e) * sp.inner;
        const double* src = self.grad.data() + o * sp.inner;
        for (std::size_t i = 0; i < sp.inner; ++i) dst[i] += src[i];
      }
    }
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor mean(const Tensor& a, int axis, bool keepdim) {
  const std::size_t ax = normalize_axis(axis, a.dim(), "mean");
  return scale(sum(a, axis, keepdim), 1.0 / static_cast<double>(a.shape()[ax]));
}

Tensor softmax(const Tensor& a, int axis) {
  const std::size_t ax = normalize_axis(axis, a.dim(), "softmax");
  const AxisSplit sp = split_at(a.shape(), ax);
  const auto& av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t i = 0; i < sp.inner; ++i) {
      const std::size_t base = o * sp.extent * sp.inner + i;
      double mx = av[base];
      for (std::size_t e = 1; e < sp.extent; ++e) mx = std::max(mx, av[base + e * sp.inner]);
      double z = 0.0;
      for (std::size_t e = 0; e < sp.extent; ++e) {
        const double v = std::exp(av[base + e * sp.inner] - mx);
        out[base + e * sp.inner] = v;
        z += v;
      }
      for (std::size_t e = 0; e < sp.extent; ++e) out[base + e * sp.inner] /= z;
    }
  }
  return make_result("softmax", a.shape(), std::move(out), {a}, [sp](Node& self) {
    Node& in = *self.inputs[0];
    const auto& y = self.value;
    const auto& g = self.grad;
    for (std::size_t o = 0; o < sp.outer; ++o) {
      for (std::size_t i = 0; i < sp.inner; ++i) {
        const std::size_t base = o * sp.extent * sp.inner + i;
        double dot = 0.0;
        for (std::size_t e = 0; e < sp.extent; ++e) dot += g[base + e * sp.inner] * y[base + e * sp.inner];
        for (std::size_t e = 0; e < sp.extent; ++e) {
          const std::size_t k = base + e * sp.inner;
          in.grad[k] += y[k] * (g[k] - dot);
        }
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.dim() < 1 || gamma.shape() != Shape{x.shape().back()} || beta.shape() != gamma.shape()) {
    throw ShapeError(mismatch("layer_norm", x.shape(), gamma.shape()));
  }
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.numel() / n;
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto rstd = std::make_shared<std::vector<double>>(rows);
  std::vector<double> out(x.numel());
  const auto& xv = x.values();
  const auto& gv = gamma.values();
  const auto& bv = beta.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = xv.data() + r * n;
    double mu = 0.0;
    for (std::size_t i = 0; i < n; ++i) mu += src[i];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (src[i] - mu) * (src[i] - mu);
    var /= static_cast<double>(n);
    const double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::size_t i = 0; i < n; ++i) {
      const double h = (src[i] - mu) * rs;
      (*xhat)[r * n + i] = h;
      out[r * n + i] = h * gv[i] + bv[i];
    }
  }
  return make_result("layer_norm", x.shape(), std::move(out), {x, gamma, beta},
                     [n, rows, xhat, rstd](Node& self) {
                       Node& nxn = *self.inputs[0];
                       Node& ng = *self.inputs[1];
                       Node& nb = *self.inputs[2];
                       const auto& g = self.grad;
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* h = xhat->data() + r * n;
                         const double* gr = g.data() + r * n;
                         if (ng.tracked || nb.tracked) {
                           for (std::size_t i = 0; i < n; ++i) {
                             if (ng.tracked) ng.grad[i] += gr[i] * h[i];
                             if (nb.tracked) nb.grad[i] += gr[i];
                           }
                         }
                         if (!nxn.tracked) continue;
                         double s1 = 0.0, s2 = 0.0;
                         for (std::size_t i = 0; i < n; ++i) {
                           const double dh = gr[i] * ng.value[i];
                           s1 += dh;
                           s2 += dh * h[i];
                         }
                         const double inv_n = 1.0 / static_cast<double>(n);
                         for (std::size_t i = 0; i < n; ++i) {
                           const double dh = gr[i] * ng.value[i];
                           nxn.grad[r * n + i] += (*rstd)[r] * (dh - inv_n * s1 - h[i] * inv_n * s2);
                         }
                       }
                     });
}

Tensor reshape(const Tensor& a, const Shape& shape) {
  if (numel(shape) != a.numel()) throw ShapeError(mismatch("reshape", a.shape(), shape));
  std::vector<double> out(a.values().begin(), a.values().end());
  return make_result("reshape", shape, std::move(out), {a}, [](Node& self) {
    Node& in = *self.inputs[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) in.grad[i] += self.grad[i];
  });
}

Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes) {
  const std::size_t rank = a.dim();
  if (axes.size() != rank) throw ShapeError("permute: axis list does not match rank of " + to_string(a.shape()));
  std::vector<bool> seen(rank, false);
  for (auto ax : axes) {
    if (ax >= rank || seen[ax]) throw ShapeError("permute: invalid axis list for " + to_string(a.shape()));
    seen[ax] = true;
  }
  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_strides[i - 1] = in_strides[i] * a.shape()[i];
  Shape out_shape(rank);
  auto strides = std::make_shared<std::vector<std::size_t>>(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    out_shape[i] = a.shape()[axes[i]];
    (*strides)[i] = in_strides[axes[i]];
  }
  // Visits output elements in order, yielding the matching input offset.
  auto walk = [out_shape, strides](auto&& f) {
    const std::size_t n = numel(out_shape);
    const std::size_t r = out_shape.size();
    std::vector<std::size_t> idx(r, 0);
    std::size_t off = 0;
    for (std::size_t i = 0; i < n; ++i) {
      f(i, off);
      for (std::size_t d = r; d-- > 0;) {
        ++idx[d];
        off += (*strides)[d];
        if (idx[d] < out_shape[d]) break;
        off -= (*strides)[d] * out_shape[d];
        idx[d] = 0;
      }
    }
  };
  const auto& av = a.values();
  std::vector<double> out(av.size());
  walk([&](std::size_t i, std::size_t off) { out[i] = av[off]; });
  return make_result("permute", out_shape, std::move(out), {a}, [walk](Node& self) {
    Node& in = *self.inputs[0];
    walk([&](std::size_t i, std::size_t off) { in.grad[off] += self.grad[i]; });
  });
}

Tensor transpose(const Tensor& a, int axis0, int axis1) {
  const std::size_t d0 = normalize_axis(axis0, a.dim(), "transpose");
  const std::size_t d1 = normalize_axis(axis1, a.dim(), "transpose");
  std::vector<std::size_t> axes(a.dim());
  std::iota(axes.begin(), axes.end(), std::size_t{0});
  std::swap(axes[d0], axes[d1]);
  return permute(a, axes);
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts.front().shape();
  const std::size_t ax = normalize_axis(axis, first.size(), "concat");
  Shape out_shape = first;
  out_shape[ax] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == ax || s[i] == first[i];
    if (!ok) throw ShapeError(mismatch("concat", first, s));
    out_shape[ax] += s[ax];
  }
  const AxisSplit sp = split_at(out_shape, ax);
  auto extents = std::make_shared<std::vector<std::size_t>>();
  for (const auto& p : parts) extents->push_back(p.shape()[ax]);
  std::vector<double> out(numel(out_shape));
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const std::size_t chunk = (*extents)[k] * sp.inner;
    const auto& pv = parts[k].values();
    for (std::size_t o = 0; o < sp.outer; ++o) {
      std::copy(pv.data() + o * chunk, pv.data() + (o + 1) * chunk,
                out.data() + o * sp.extent * sp.inner + offset);
    }
    offset += chunk;
  }
  return make_result("concat", out_shape, std::move(out), parts, [sp, extents](Node& self) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < self.inputs.size(); ++k) {
      Node& in = *self.inputs[k];
      const std::size_t chunk = (*extents)[k] * sp.inner;
      if (in.tracked) {
        for (std::size_t o = 0; o < sp.outer; ++o) {
          const double* src = self.grad.data() + o * sp.extent * sp.inner + offset;
          double* dst = in.grad.data() + o * chunk;
          for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
        }
      }
      offset += chunk;
    }
  });
}

Tensor slice(const Tensor& a, int axis, std::size_t begin, std::size_t end) {
  const std::size_t ax = normalize_axis(axis, a.dim(), "slice");
  if (begin >= end || end > a.shape()[ax]) {
    throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") invalid for axis " + std::to_string(ax) + " of " + to_string(a.shape()));
  }
  const AxisSplit sp = split_at(a.shape(), ax);
  Shape out_shape = a.shape();
  out_shape[ax] = end - begin;
  const std::size_t chunk = (end - begin) * sp.inner;
  const std::size_t skip = begin * sp.inner;
  std::vector<double> out(sp.outer * chunk);
  const auto& av = a.values();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    const double* src = av.data() + o * sp.extent * sp.inner + skip;
    std::copy(src, src + chunk, out.data() + o * chunk);
  }
  return make_result("slice", out_shape, std::move(out), {a}, [sp, chunk, skip](Node& self) {
    Node& in = *self.inputs[0];
    for (std::size_t o = 0; o < sp.outer; ++o) {
      double* dst = in.grad.data() + o * sp.extent * sp.inner + skip;
      const double* src = self.grad.data() + o * chunk;
      for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
    }
  });
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> indices) {
  if (a.dim() < 1 || indices.empty()) {
    throw ShapeError("gather_rows: need a tensor of rank >= 1 and at least one index");
  }
  const std::size_t rows = a.shape()[0];
  const std::size_t width = a.numel() / rows;
  auto idx = std::make_shared<std::vector<std::size_t>>(indices.begin(), indices.end());
  for (auto i : *idx) {
    if (i >= rows) {
      throw ShapeError("gather_rows: index " + std::to_string(i) + " out of range for " + to_string(a.shape()));
    }
  }
  Shape out_shape = a.shape();
  out_shape[0] = idx->size();
  std::vector<double> out(idx->size() * width);
  const auto& av = a.values();
  for (std::size_t r = 0; r < idx->size(); ++r) {
    std::copy_n(av.data() + (*idx)[r] * width, width, out.data() + r * width);
  }
  return make_result("gather_rows", out_shape, std::move(out), {a}, [idx, width](Node& self) {
    Node& in = *self.inputs[0];
    for (std::size_t r = 0; r < idx->size(); ++r) {
      double* dst = in.grad.data() + (*idx)[r] * width;
      const double* src = self.grad.data() + r * width;
      for (std::size_t i = 0; i < width; ++i) dst[i] += src[i];
    }
  });
}

}  // namespace ppmae::nx
