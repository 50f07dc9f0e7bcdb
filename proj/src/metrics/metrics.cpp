#include "ppmae/metrics/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace ppmae::metrics {

namespace {

void check_labels(std::span<const int> labels, std::size_t classes, const char* which) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw std::out_of_range(std::string(which) + " label " + std::to_string(labels[i]) + " at position " +
                              std::to_string(i) + " outside [0, " + std::to_string(classes) + ")");
    }
  }
}

void warn(Warnings* w, std::string msg) {
  if (w) w->push_back(std::move(msg));
}

}  // namespace

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t s = 0;
  for (auto c : counts) s += c;
  return s;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t t) const {
  std::uint64_t s = 0;
  for (std::size_t p = 0; p < classes; ++p) s += at(t, p);
  return s;
}

std::uint64_t ConfusionMatrix::col_sum(std::size_t p) const {
  std::uint64_t s = 0;
  for (std::size_t t = 0; t < classes; ++t) s += at(t, p);
  return s;
}

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> pred, std::size_t classes) {
  if (classes == 0) throw std::invalid_argument("confusion: need at least one class");
  if (truth.size() != pred.size()) {
    throw std::invalid_argument("confusion: " + std::to_string(truth.size()) + " true labels vs " +
                                std::to_string(pred.size()) + " predictions");
  }
  check_labels(truth, classes, "true");
  check_labels(pred, classes, "predicted");
  ConfusionMatrix cm{classes, std::vector<std::uint64_t>(classes * classes, 0)};
  for (std::size_t i = 0; i < truth.size(); ++i) ++cm.counts[static_cast<std::size_t>(truth[i]) * classes + pred[i]];
  return cm;
}

std::vector<ClassStats> per_class(const ConfusionMatrix& cm) {
  const std::uint64_t n = cm.total();
  std::vector<ClassStats> out(cm.classes);
  for (std::size_t k = 0; k < cm.classes; ++k) {
    const double tp = static_cast<double>(cm.at(k, k));
    const double fn = static_cast<double>(cm.row_sum(k)) - tp;
    const double fp = static_cast<double>(cm.col_sum(k)) - tp;
    const double tn = static_cast<double>(n) - tp - fn - fp;
    auto& s = out[k];
    s.support = cm.row_sum(k);
    s.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    s.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    s.f1 = s.precision + s.recall > 0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    s.specificity = tn + fp > 0 ? tn / (tn + fp) : 0.0;
  }
  return out;
}

double macro_f1(const ConfusionMatrix& cm, Warnings* warnings) {
  if (cm.total() == 0) throw std::invalid_argument("macro_f1: empty confusion matrix");
  const auto stats = per_class(cm);
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t k = 0; k < cm.classes; ++k) {
    if (cm.row_sum(k) == 0 && cm.col_sum(k) == 0) continue;
    const double tp = static_cast<double>(cm.at(k, k));
    if (tp == 0.0) warn(warnings, "f1: class " + std::to_string(k) + " has no true positives; its F1 is 0");
    sum += stats[k].f1;
    ++used;
  }
  return sum / static_cast<double>(used);
}

double rk_correlation(const ConfusionMatrix& cm, Warnings* warnings) {
  const double s = static_cast<double>(cm.total());
  double c = 0.0, pt = 0.0, pp = 0.0, tt = 0.0;
  for (std::size_t k = 0; k < cm.classes; ++k) {
    const double t = static_cast<double>(cm.row_sum(k)), p = static_cast<double>(cm.col_sum(k));
    c += static_cast<double>(cm.at(k, k));
    pt += p * t;
    pp += p * p;
    tt += t * t;
  }
  const double a = s * s - pp, b = s * s - tt;
  if (a == 0.0 || b == 0.0) {
    warn(warnings, "rk: degenerate marginals (a single class in truth or predictions); Rk set to 0");
    return 0.0;
  }
  return (c * s - pt) / std::sqrt(a * b);
}

double macro_specificity(const ConfusionMatrix& cm, Warnings* warnings) {
  const auto stats = per_class(cm);
  const std::uint64_t n = cm.total();
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t k = 0; k < cm.classes; ++k) {
    if (n - cm.row_sum(k) == 0) continue;
    sum += stats[k].specificity;
    ++used;
  }
  if (used == 0) {
    warn(warnings, "specificity: no class has negatives; specificity set to 0");
    return 0.0;
  }
  return sum / static_cast<double>(used);
}

double qwk(std::span<const int> truth, std::span<const int> pred, std::size_t classes) {
  if (classes < 2) throw std::invalid_argument("qwk: need at least two classes");
  const auto cm = confusion(truth, pred, classes);
  const double n = static_cast<double>(cm.total());
  const double span = static_cast<double>((classes - 1) * (classes - 1));
  double wo = 0.0, we = 0.0;
  for (std::size_t i = 0; i < classes; ++i) {
    for (std::size_t j = 0; j < classes; ++j) {
      const double d = static_cast<double>(i) - static_cast<double>(j);
      const double w = d * d / span;
      wo += w * static_cast<double>(cm.at(i, j));
      if (n > 0) we += w * static_cast<double>(cm.row_sum(i)) * static_cast<double>(cm.col_sum(j)) / n;
    }
  }
  if (we == 0.0 && wo == 0.0) return 1.0;
  return 1.0 - wo / we;
}

double mean_metric(double f1, double rk, double specificity, double kappa) {
  for (double v : {f1, rk, specificity, kappa}) {
    if (!std::isfinite(v)) throw std::invalid_argument("mean_metric: non-finite input");
  }
  return (f1 + rk + specificity + kappa) / 4.0;
}

double image_mse(const data::GrayImage& a, const data::GrayImage& b) {
  if (!a.same_size(b)) {
    throw std::invalid_argument("image_mse: " + std::to_string(a.height) + "x" + std::to_string(a.width) + " vs " +
                                std::to_string(b.height) + "x" + std::to_string(b.width));
  }
  if (a.pixels.empty()) throw std::invalid_argument("image_mse: empty images");
  double s = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = a.pixels[i] - b.pixels[i];
    s += d * d;
  }
  return s / static_cast<double>(a.pixels.size());
}

Report evaluate(int task, std::span<const int> truth, std::span<const int> pred) {
  if (task != 1 && task != 2) throw std::invalid_argument("evaluate: task must be 1 or 2");
  const std::size_t K = task == 1 ? 4 : 3;
  Report r;
  r.task = task;
  r.n = truth.size();
  const auto cm = confusion(truth, pred, K);
  r.f1 = macro_f1(cm, &r.warnings);
  r.rk = rk_correlation(cm, &r.warnings);
  r.specificity = macro_specificity(cm, &r.warnings);
  r.classes = per_class(cm);
  if (task == 2) {
    r.qwk = qwk(truth, pred, K);
    r.mean = mean_metric(r.f1, r.rk, r.specificity, *r.qwk);
  }
  return r;
}

nlohmann::json to_json(const Report& r) {
  nlohmann::json j;
  j["task"] = r.task;
  j["n"] = r.n;
  j["f1"] = r.f1;
  j["rk"] = r.rk;
  j["specificity"] = r.specificity;
  if (r.qwk) j["qwk"] = *r.qwk;
  if (r.mean) j["mean"] = *r.mean;
  nlohmann::json pc = nlohmann::json::object();
  for (std::size_t k = 0; k < r.classes.size(); ++k) {
    const auto& s = r.classes[k];
    pc[std::to_string(k)] = {{"precision", s.precision},
                             {"recall", s.recall},
                             {"f1", s.f1},
                             {"specificity", s.specificity},
                             {"support", s.support}};
  }
  j["per_class"] = pc;
  j["averaging"] = "macro (assumed; F1 and specificity are unweighted class means)";
  j["warnings"] = r.warnings;
  return j;
}

}  // namespace ppmae::metrics
