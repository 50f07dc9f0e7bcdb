#include "ppmae/numerics/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ppmae::nx {

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("mse_loss: incompatible shapes " + to_string(pred.shape()) + " and " +
                     to_string(target.shape()));
  }
  const auto& p = pred.values();
  const auto& t = target.values();
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = p[i] - t[i];
    acc += d * d;
  }
  const double n = static_cast<double>(p.size());
  return detail::make_result("mse_loss", Shape{}, {acc / n}, {pred, target}, [n](Node& self) {
    Node& np = *self.inputs[0];
    Node& nt = *self.inputs[1];
    const double g = self.grad[0] * 2.0 / n;
    for (std::size_t i = 0; i < np.value.size(); ++i) {
      const double d = np.value[i] - nt.value[i];
      if (np.tracked) np.grad[i] += g * d;
      if (nt.tracked) nt.grad[i] -= g * d;
    }
  });
}

Tensor cross_entropy_loss(const Tensor& logits, std::span<const int> labels) {
  if (logits.dim() != 2 || logits.shape()[0] != labels.size()) {
    throw ShapeError("cross_entropy_loss: logits " + to_string(logits.shape()) + " vs " +
                     std::to_string(labels.size()) + " labels");
  }
  const std::size_t B = logits.shape()[0];
  const std::size_t K = logits.shape()[1];
  for (std::size_t b = 0; b < B; ++b) {
    if (labels[b] < 0 || static_cast<std::size_t>(labels[b]) >= K) {
      throw std::out_of_range("cross_entropy_loss: label " + std::to_string(labels[b]) + " at row " +
                              std::to_string(b) + " outside [0, " + std::to_string(K) + ")");
    }
  }
  auto probs = std::make_shared<std::vector<double>>(B * K);
  auto lab = std::make_shared<std::vector<int>>(labels.begin(), labels.end());
  const auto& z = logits.values();
  double loss = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    const double* row = z.data() + b * K;
    const double mx = *std::max_element(row, row + K);
    double s = 0.0;
    for (std::size_t k = 0; k < K; ++k) s += std::exp(row[k] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t k = 0; k < K; ++k) (*probs)[b * K + k] = std::exp(row[k] - lse);
    loss += lse - row[(*lab)[b]];
  }
  loss /= static_cast<double>(B);
  return detail::make_result("cross_entropy_loss", Shape{}, {loss}, {logits},
                             [B, K, probs, lab](Node& self) {
                               Node& in = *self.inputs[0];
                               const double g = self.grad[0] / static_cast<double>(B);
                               for (std::size_t b = 0; b < B; ++b) {
                                 for (std::size_t k = 0; k < K; ++k) {
                                   const double onehot = static_cast<int>(k) == (*lab)[b] ? 1.0 : 0.0;
                                   in.grad[b * K + k] += g * ((*probs)[b * K + k] - onehot);
                                 }
                               }
                             });
}

}  // namespace ppmae::nx
