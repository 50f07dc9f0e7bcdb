#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "ppmae/dataio/image.hpp"

namespace ppmae::metrics {

// counts[t * classes + p]: rows are true classes, columns predictions.
struct ConfusionMatrix {
  std::size_t classes = 0;
  std::vector<std::uint64_t> counts;

  std::uint64_t at(std::size_t t, std::size_t p) const { return counts[t * classes + p]; }
  std::uint64_t total() const;
  std::uint64_t row_sum(std::size_t t) const;
  std::uint64_t col_sum(std::size_t p) const;
};

// Degenerate-denominator conventions append a message here when non-null.
using Warnings = std::vector<std::string>;

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> pred, std::size_t classes);

// Mean per-class F1 over classes present in the truth or the predictions.
double macro_f1(const ConfusionMatrix& cm, Warnings* warnings = nullptr);
// Gorodkin's K-category correlation; 0 when a radicand factor vanishes.
double rk_correlation(const ConfusionMatrix& cm, Warnings* warnings = nullptr);
// Mean one-vs-rest TN/(TN+FP) over classes with TN+FP > 0; 0 when none.
double macro_specificity(const ConfusionMatrix& cm, Warnings* warnings = nullptr);
// Quadratic weighted kappa; 1 when both weighted sums are 0.
double qwk(std::span<const int> truth, std::span<const int> pred, std::size_t classes);
double mean_metric(double f1, double rk, double specificity, double kappa);
double image_mse(const data::GrayImage& a, const data::GrayImage& b);

struct ClassStats {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double specificity = 0.0;
  std::uint64_t support = 0;
};

std::vector<ClassStats> per_class(const ConfusionMatrix& cm);

struct Report {
  int task = 1;
  std::size_t n = 0;
  double f1 = 0.0;
  double rk = 0.0;
  double specificity = 0.0;
  std::optional<double> qwk;
  std::optional<double> mean;
  std::vector<ClassStats> classes;
  Warnings warnings;
};

// Task 1 scores 4 classes; task 2 scores 3 and adds QWK and the mean metric.
Report evaluate(int task, std::span<const int> truth, std::span<const int> pred);
nlohmann::json to_json(const Report& report);

}  // namespace ppmae::metrics
