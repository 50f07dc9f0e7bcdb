#include "ppmae/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ppmae/numerics/losses.hpp"
#include "ppmae/numerics/ops.hpp"
#include "ppmae/util/rng.hpp"

namespace ppmae::nx {

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v), true);
}

// Values bounded away from zero so relu's kink is never straddled.
Tensor away_from_zero(Rng& rng, Shape shape) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.05, 1.0);
  return Tensor(std::move(shape), std::move(v), true);
}

// Distinct values spaced far wider than the probe step (max-pool ties).
Tensor distinct_values(Rng& rng, Shape shape) {
  const std::size_t n = numel(shape);
  std::vector<double> v(n);
  std::iota(v.begin(), v.end(), 0.0);
  rng.shuffle(v);
  for (auto& x : v) x = x * 0.01 - 0.5;
  return Tensor(std::move(shape), std::move(v), true);
}

std::size_t extent(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }

}  // namespace

GradCheckResult check_gradients(const std::string& name, const Objective& f, std::vector<Tensor> inputs,
                                const GradCheckOptions& options) {
  GradCheckResult result;
  result.name = name;

  Tensor projection;
  auto scalarize = [&](const Tensor& out) {
    if (out.numel() == 1) return out;
    if (!projection.defined()) {
      Rng prng(hash_seed({options.seed, 0x70726f6aULL}));
      std::vector<double> w(out.numel());
      for (auto& x : w) x = prng.normal();
      projection = Tensor(out.shape(), std::move(w));
    }
    return sum(mul(out, projection));
  };

  for (auto& in : inputs) in.zero_grad();
  Tensor loss = scalarize(f(inputs));
  backward(loss);

  Rng rng(hash_seed({options.seed, 0x73616d70ULL}));
  double worst = 0.0;
  double worst_abs = 0.0;
  for (auto& in : inputs) {
    std::vector<double> analytic(in.grad().begin(), in.grad().end());
    if (analytic.empty()) analytic.assign(in.numel(), 0.0);
    std::vector<std::size_t> picks(in.numel());
    std::iota(picks.begin(), picks.end(), std::size_t{0});
    if (options.max_components_per_input > 0 && picks.size() > options.max_components_per_input) {
      rng.shuffle(picks);
      picks.resize(options.max_components_per_input);
      std::sort(picks.begin(), picks.end());
    }
    auto values = in.mutable_values();
    for (std::size_t i : picks) {
      const double saved = values[i];
      double plus, minus;
      {
        NoGradGuard guard;
        values[i] = saved + options.step;
        plus = scalarize(f(inputs)).item();
        values[i] = saved - options.step;
        minus = scalarize(f(inputs)).item();
      }
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * options.step);
      const double abs_err = std::abs(numeric - analytic[i]);
      const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), options.floor});
      worst = std::max(worst, abs_err / denom);
      worst_abs = std::max(worst_abs, abs_err);
      ++result.components;
    }
  }
  result.max_rel_error = worst;
  result.max_abs_error = worst_abs;
  result.passed = worst <= options.tolerance;
  return result;
}

std::vector<GradCheckResult> primitive_gradcheck_suite(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<GradCheckResult> results;
  GradCheckOptions opt;
  opt.seed = seed;
  auto run = [&](const std::string& name, const Objective& f, std::vector<Tensor> in) {
    results.push_back(check_gradients(name, f, std::move(in), opt));
  };

  {
    const std::size_t a = extent(rng, 1, 4), b = extent(rng, 2, 8), c = extent(rng, 2, 8);
    run("add", [](auto& v) { return add(v[0], v[1]); },
        {random_tensor(rng, {a, b, c}), random_tensor(rng, {a, b, c})});
    run("add(broadcast)", [](auto& v) { return add(v[0], v[1]); },
        {random_tensor(rng, {a, b, c}), random_tensor(rng, {b, 1})});
    run("sub", [](auto& v) { return sub(v[0], v[1]); },
        {random_tensor(rng, {a, b, c}), random_tensor(rng, {c})});
    run("mul", [](auto& v) { return mul(v[0], v[1]); },
        {random_tensor(rng, {a, b, c}), random_tensor(rng, {a, 1, c})});
    run("scale", [](auto& v) { return scale(v[0], -1.7); }, {random_tensor(rng, {a, b})});
    run("broadcast", [a, b, c](auto& v) { return broadcast_to(v[0], Shape{a, b, c}); },
        {random_tensor(rng, {b, 1})});
    run("exp", [](auto& v) { return exp(v[0]); }, {random_tensor(rng, {a, b, c})});
    run("log", [](auto& v) { return log(v[0]); }, {random_tensor(rng, {a, b, c}, 0.2, 2.0)});
    run("square", [](auto& v) { return square(v[0]); }, {random_tensor(rng, {a, b, c})});
    run("relu", [](auto& v) { return relu(v[0]); }, {away_from_zero(rng, {a, b, c})});
    run("gelu", [](auto& v) { return gelu(v[0]); }, {random_tensor(rng, {a, b, c}, -3.0, 3.0)});
  }
  {
    const std::size_t m = extent(rng, 2, 8), k = extent(rng, 2, 8), n = extent(rng, 2, 8);
    const std::size_t bt = extent(rng, 2, 4);
    run("matmul", [](auto& v) { return matmul(v[0], v[1]); },
        {random_tensor(rng, {m, k}), random_tensor(rng, {k, n})});
    run("matmul(batched)", [](auto& v) { return matmul(v[0], v[1]); },
        {random_tensor(rng, {bt, m, k}), random_tensor(rng, {bt, k, n})});
    run("linear", [](auto& v) { return linear(v[0], v[1], v[2]); },
        {random_tensor(rng, {bt, m, k}), random_tensor(rng, {k, n}), random_tensor(rng, {n})});
  }
  {
    const std::size_t b = extent(rng, 1, 3), c = extent(rng, 1, 3), h = extent(rng, 5, 8),
                      w = extent(rng, 5, 8), o = extent(rng, 1, 4);
    run("conv2d", [](auto& v) { return conv2d(v[0], v[1], v[2], {1, 1}); },
        {random_tensor(rng, {b, c, h, w}), random_tensor(rng, {o, c, 3, 3}), random_tensor(rng, {o})});
    run("conv2d(stride2)", [](auto& v) { return conv2d(v[0], v[1], Tensor{}, {2, 1}); },
        {random_tensor(rng, {b, c, h, w}), random_tensor(rng, {o, c, 3, 3})});
    run("max_pool2d", [](auto& v) { return max_pool2d(v[0], 2, 2); }, {distinct_values(rng, {b, c, h, w})});
  }
  {
    const std::size_t a = extent(rng, 2, 4), b = extent(rng, 2, 8), c = extent(rng, 2, 8);
    run("sum", [](auto& v) { return sum(v[0]); }, {random_tensor(rng, {a, b, c})});
    run("sum(axis)", [](auto& v) { return sum(v[0], 1); }, {random_tensor(rng, {a, b, c})});
    run("mean", [](auto& v) { return mean(v[0]); }, {random_tensor(rng, {a, b, c})});
    run("mean(axis)", [](auto& v) { return mean(v[0], -1, true); }, {random_tensor(rng, {a, b, c})});
    run("softmax(last)", [](auto& v) { return softmax(v[0], -1); }, {random_tensor(rng, {a, b, c}, -2, 2)});
    run("softmax(middle)", [](auto& v) { return softmax(v[0], 1); }, {random_tensor(rng, {a, b, c}, -2, 2)});
    run("layer_norm", [](auto& v) { return layer_norm(v[0], v[1], v[2]); },
        {random_tensor(rng, {a, b, c}), random_tensor(rng, {c}), random_tensor(rng, {c})});
    run("reshape", [a, b, c](auto& v) { return reshape(v[0], Shape{b, a * c}); },
        {random_tensor(rng, {a, b, c})});
    run("permute", [](auto& v) { return permute(v[0], {2, 0, 1}); }, {random_tensor(rng, {a, b, c})});
    run("transpose", [](auto& v) { return transpose(v[0], -1, -2); }, {random_tensor(rng, {a, b, c})});
    run("concat", [](auto& v) { return concat({v[0], v[1]}, 1); },
        {random_tensor(rng, {a, b, c}), random_tensor(rng, {a, 3, c})});
    run("slice", [b](auto& v) { return slice(v[0], 1, 1, b); }, {random_tensor(rng, {a, b, c})});
    run("gather_rows", [](auto& v) {
          const std::vector<std::size_t> idx{1, 0, 1};
          return gather_rows(v[0], idx);
        },
        {random_tensor(rng, {a, b, c})});
  }
  {
    const std::size_t b = extent(rng, 2, 4), k = 4;
    run("mse_loss", [](auto& v) { return mse_loss(v[0], v[1]); },
        {random_tensor(rng, {b, 8}), random_tensor(rng, {b, 8})});
    std::vector<int> labels(b);
    for (auto& l : labels) l = static_cast<int>(rng.below(k));
    run("cross_entropy_loss", [labels](auto& v) { return cross_entropy_loss(v[0], labels); },
        {random_tensor(rng, {b, k}, -2, 2)});
  }
  return results;
}

}  // namespace ppmae::nx
