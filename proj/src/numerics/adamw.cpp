#include "ppmae/numerics/adamw.hpp"

#include <cmath>
#include <string>

namespace ppmae::nx {

AdamW::AdamW(AdamWConfig config, std::vector<Tensor> params)
    : config_(config), params_(std::move(params)) {
  if (!(config_.lr > 0.0)) throw std::invalid_argument("AdamW: learning rate must be positive");
  first_moment_.reserve(params_.size());
  second_moment_.reserve(params_.size());
  for (const auto& p : params_) {
    if (!p.requires_grad()) throw std::invalid_argument("AdamW: parameter is not tracked");
    first_moment_.emplace_back(p.numel(), 0.0);
    second_moment_.emplace_back(p.numel(), 0.0);
  }
}

void AdamW::step() {
  for (std::size_t k = 0; k < params_.size(); ++k) {
    const auto g = params_[k].grad();
    if (g.empty()) continue;
    if (g.size() != first_moment_[k].size()) {
      throw ShapeError("AdamW: grad of size " + std::to_string(g.size()) + " for parameter " +
                       to_string(params_[k].shape()));
    }
    for (double v : g) {
      if (!std::isfinite(v)) throw NumericError("AdamW: non-finite gradient");
    }
  }
  ++steps_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  const double decay = 1.0 - config_.lr * config_.weight_decay;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    const auto g = params_[k].grad();
    if (g.empty()) continue;
    auto w = params_[k].mutable_values();
    auto& m = first_moment_[k];
    auto& v = second_moment_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] = w[i] * decay - config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace ppmae::nx
