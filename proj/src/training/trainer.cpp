#include "ppmae/training/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

#include "ppmae/metrics/metrics.hpp"
#include "ppmae/numerics/adamw.hpp"
#include "ppmae/numerics/losses.hpp"
#include "ppmae/numerics/ops.hpp"
#include "ppmae/util/parallel.hpp"

namespace ppmae::train {

namespace {

constexpr std::uint64_t kShuffleTag = 0x73687566ULL;
constexpr std::uint64_t kAugmentTag = 0x61756748ULL;
constexpr std::uint64_t kMaskTag = 0x6d61736bULL;
constexpr std::uint64_t kValTag = 0x76616cULL;

struct PairBatch {
  nx::Tensor t0, t1;
  std::vector<int> labels;
};

// Augmented images for `idx`, drawn from per-sample streams (seed, epoch, index).
std::vector<std::pair<GrayImage, GrayImage>> augmented(const std::vector<const GrayImage*>& t0,
                                                       const std::vector<const GrayImage*>& t1,
                                                       const std::vector<std::size_t>& idx, const AugmentSpec& spec,
                                                       std::uint64_t seed, std::size_t epoch) {
  std::vector<std::pair<GrayImage, GrayImage>> out(idx.size());
  parallel_for(idx.size(), [&](std::size_t i) {
    Rng rng(hash_seed({seed, kAugmentTag, epoch, idx[i]}));
    out[i] = augment_pair(*t0[idx[i]], *t1[idx[i]], spec, rng);
  });
  return out;
}

nx::Tensor stack(const std::vector<std::pair<GrayImage, GrayImage>>& pairs, bool first, bool channel_axis) {
  std::vector<const GrayImage*> ptrs;
  for (const auto& p : pairs) ptrs.push_back(first ? &p.first : &p.second);
  return models::stack_images(ptrs, channel_axis);
}

std::vector<double> softmax_row(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double s = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) s += p[k] = std::exp(logits[k] - m);
  for (auto& v : p) v /= s;
  return p;
}

void check_finite(double loss, std::size_t epoch) {
  if (!std::isfinite(loss)) throw nx::NumericError("training diverged: non-finite loss in epoch " + std::to_string(epoch));
}

std::vector<std::vector<double>> snapshot(const models::Model& m) {
  std::vector<std::vector<double>> s;
  for (const auto& p : m.params().items()) s.emplace_back(p.tensor.values().begin(), p.tensor.values().end());
  return s;
}

void restore(models::Model& m, const std::vector<std::vector<double>>& s) {
  const auto& items = m.params().items();
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto dst = nx::Tensor(items[i].tensor).mutable_values();
    std::copy(s[i].begin(), s[i].end(), dst.begin());
  }
}

std::unique_ptr<models::FusionClassifier> clone(const models::FusionClassifier& m) {
  auto out = std::make_unique<models::FusionClassifier>(m.config(), 0);
  out->copy_state_from(m);
  return out;
}

// Mean training loss of one epoch over shuffled batches.
template <typename StepFn>
double run_epoch(const std::vector<std::size_t>& train_idx, std::size_t batch, std::uint64_t seed, std::size_t epoch,
                 StepFn&& step) {
  std::vector<std::size_t> order = train_idx;
  Rng rng(hash_seed({seed, kShuffleTag, epoch}));
  rng.shuffle(order);
  double total = 0.0;
  std::size_t seen = 0;
  for (std::size_t start = 0; start < order.size(); start += batch) {
    const std::vector<std::size_t> idx(order.begin() + static_cast<long>(start),
                                       order.begin() + static_cast<long>(std::min(order.size(), start + batch)));
    const double loss = step(idx);
    check_finite(loss, epoch);
    total += loss * static_cast<double>(idx.size());
    seen += idx.size();
  }
  return seen ? total / static_cast<double>(seen) : 0.0;
}

std::string fmt(std::optional<double> v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", *v);
  return buf;
}

}  // namespace

std::string to_string(Task task) {
  switch (task) {
    case Task::fusion_early:
      return "fusion-early";
    case Task::fusion_late:
      return "fusion-late";
    case Task::ppmae:
      return "ppmae";
    case Task::finetune_task2:
      return "finetune-task2";
  }
  return "fusion-late";
}

Task parse_task(const std::string& s) {
  if (s == "fusion-early") return Task::fusion_early;
  if (s == "fusion-late") return Task::fusion_late;
  if (s == "ppmae") return Task::ppmae;
  if (s == "finetune-task2") return Task::finetune_task2;
  throw std::invalid_argument("unknown training task '" + s +
                              "' (expected fusion-early, fusion-late, ppmae or finetune-task2)");
}

TrainConfig TrainConfig::desk(Task task) {
  TrainConfig c;
  c.task = task;
  switch (task) {
    case Task::fusion_early:
    case Task::fusion_late:
      c.lr = 1e-3;
      c.epochs = 30;
      c.augment = AugmentSpec::classifier_default();
      break;
    case Task::ppmae:
      // Validation loss plateaus until content-dependent prediction sets in,
      // which took 90 to 145 epochs on three-class pairs.
      c.lr = 1e-3;
      c.epochs = 200;
      c.augment = AugmentSpec::ppmae_default();
      break;
    case Task::finetune_task2:
      c.lr = 1e-5;
      c.epochs = 1;
      c.split = 1.0;
      c.augment = AugmentSpec::classifier_default();
      break;
  }
  return c;
}

TrainConfig TrainConfig::paper(Task task) {
  TrainConfig c = desk(task);
  c.batch = 128;
  switch (task) {
    case Task::fusion_early:
    case Task::fusion_late:
      c.lr = 1e-4;
      c.epochs = 150;
      break;
    case Task::ppmae:
      c.lr = 1e-5;
      c.epochs = 100;
      break;
    case Task::finetune_task2:
      c.lr = 1e-5;
      c.epochs = 1;
      break;
  }
  return c;
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("train: lr must be > 0");
  if (weight_decay < 0.0) throw std::invalid_argument("train: weight_decay must be >= 0");
  if (batch == 0) throw std::invalid_argument("train: batch must be >= 1");
  if (epochs == 0 && task != Task::finetune_task2) throw std::invalid_argument("train: epochs must be >= 1");
  if (!(split > 0.0 && split <= 1.0)) throw std::invalid_argument("train: split must lie in (0, 1]");
  if (k_folds < 2) throw std::invalid_argument("train: k_folds must be >= 2");
  augment.validate();
}

nlohmann::json TrainConfig::to_json() const {
  return {{"task", to_string(task)}, {"lr", lr},         {"weight_decay", weight_decay},
          {"batch", batch},          {"epochs", epochs}, {"split", split},
          {"augment", augment.to_json()}, {"k_folds", k_folds}, {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c = desk(parse_task(j.value("task", std::string("fusion-late"))));
  for (const auto& [key, value] : j.items()) {
    if (key == "task") continue;
    if (key == "lr") c.lr = value.get<double>();
    else if (key == "weight_decay") c.weight_decay = value.get<double>();
    else if (key == "batch") c.batch = value.get<std::size_t>();
    else if (key == "epochs") c.epochs = value.get<std::size_t>();
    else if (key == "split") c.split = value.get<double>();
    else if (key == "augment") c.augment = AugmentSpec::from_json(value);
    else if (key == "k_folds") c.k_folds = value.get<int>();
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else throw std::invalid_argument("train: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

std::string format_log(const std::vector<LogRow>& rows) {
  std::string out = "epoch,split,loss,f1,rk,spec,qwk,mse\n";
  for (const auto& r : rows) {
    out += std::to_string(r.epoch) + "," + r.split + "," + fmt(r.loss) + "," + fmt(r.f1) + "," + fmt(r.rk) + "," +
           fmt(r.spec) + "," + fmt(r.qwk) + "," + fmt(r.mse) + "\n";
  }
  return out;
}

void write_log(const std::vector<LogRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write log " + path.string());
  out << format_log(rows);
}

FusionFit train_fusion(const TrainConfig& cfg, const models::FusionConfig& model_cfg,
                       const std::vector<data::PairSample>& samples, int fold) {
  cfg.validate();
  model_cfg.validate();
  std::vector<std::size_t> train_idx, val_idx;
  std::vector<const GrayImage*> t0, t1;
  std::vector<int> labels;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (!s.label_task1) throw std::invalid_argument("train_fusion: case " + s.case_id + " has no Task-1 label");
    if (!s.fold) throw std::invalid_argument("train_fusion: case " + s.case_id + " has no fold");
    if (s.image_t0.height != model_cfg.image_h || s.image_t0.width != model_cfg.image_w) {
      throw std::invalid_argument("train_fusion: case " + s.case_id + " is " + std::to_string(s.image_t0.height) +
                                  "x" + std::to_string(s.image_t0.width) + ", model expects " +
                                  std::to_string(model_cfg.image_h) + "x" + std::to_string(model_cfg.image_w));
    }
    (*s.fold == fold ? val_idx : train_idx).push_back(i);
    t0.push_back(&s.image_t0);
    t1.push_back(&s.image_t1);
    labels.push_back(*s.label_task1);
  }
  if (val_idx.empty()) throw std::invalid_argument("train_fusion: fold " + std::to_string(fold) + " is empty");

  nx::FiniteCheckScope unchecked(false);
  FusionFit fit;
  const std::uint64_t seed = hash_seed({cfg.seed, static_cast<std::uint64_t>(fold)});
  fit.model = std::make_unique<models::FusionClassifier>(model_cfg, seed);
  auto& model = *fit.model;
  nx::AdamW opt({cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay}, model.parameters());
  std::vector<std::vector<double>> best = snapshot(model);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double train_loss = run_epoch(train_idx, cfg.batch, seed, epoch, [&](const std::vector<std::size_t>& idx) {
      const auto pairs = augmented(t0, t1, idx, cfg.augment, seed, epoch);
      std::vector<int> y;
      for (auto i : idx) y.push_back(labels[i]);
      opt.zero_grad();
      const auto loss = nx::cross_entropy_loss(model.logits(stack(pairs, true, true), stack(pairs, false, true)), y);
      const double v = loss.item();
      nx::backward(loss);
      opt.step();
      return v;
    });
    fit.log.push_back({epoch, "train", train_loss, {}, {}, {}, {}, {}});

    std::vector<int> truth, pred;
    double val_loss = 0.0;
    {
      nx::NoGradGuard guard;
      for (std::size_t start = 0; start < val_idx.size(); start += cfg.batch) {
        std::vector<const GrayImage*> a, b;
        std::vector<int> y;
        for (std::size_t k = start; k < std::min(val_idx.size(), start + cfg.batch); ++k) {
          a.push_back(t0[val_idx[k]]);
          b.push_back(t1[val_idx[k]]);
          y.push_back(labels[val_idx[k]]);
        }
        const auto logits = model.logits(models::stack_images(a, true), models::stack_images(b, true));
        val_loss += nx::cross_entropy_loss(logits, y).item() * static_cast<double>(y.size());
        const std::size_t K = logits.size(1);
        for (std::size_t r = 0; r < y.size(); ++r) {
          pred.push_back(argmax(softmax_row(logits.values().subspan(r * K, K))));
          truth.push_back(y[r]);
        }
      }
    }
    const auto cm = metrics::confusion(truth, pred, model_cfg.num_classes);
    const double f1 = metrics::macro_f1(cm);
    fit.log.push_back({epoch, "val", val_loss / static_cast<double>(val_idx.size()), f1,
                       metrics::rk_correlation(cm), metrics::macro_specificity(cm), {}, {}});
    if (f1 > fit.best_f1) {
      fit.best_f1 = f1;
      fit.best_epoch = epoch;
      best = snapshot(model);
    }
  }
  restore(model, best);
  return fit;
}

namespace {

// Patient-grouped split: a seeded shuffle of patients, the first share trains.
void split_patients(const std::vector<data::PairSample>& samples, double share, std::uint64_t seed,
                    std::vector<std::size_t>& train_idx, std::vector<std::size_t>& val_idx) {
  std::vector<std::string> patients;
  std::set<std::string> seen;
  for (const auto& s : samples) {
    if (seen.insert(s.patient_id).second) patients.push_back(s.patient_id);
  }
  Rng rng(hash_seed({seed, 0x73706c6974ULL}));
  rng.shuffle(patients);
  const auto n_train = static_cast<std::size_t>(std::llround(share * static_cast<double>(patients.size())));
  std::set<std::string> train_set(patients.begin(), patients.begin() + static_cast<long>(std::min(n_train, patients.size())));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    (train_set.count(samples[i].patient_id) ? train_idx : val_idx).push_back(i);
  }
}

std::vector<patch::MaskPlan> fixed_plans(const std::vector<std::size_t>& idx, const models::PPMAEConfig& c,
                                         std::uint64_t seed) {
  std::vector<patch::MaskPlan> plans;
  for (auto i : idx) plans.push_back(patch::sample_mask(c.num_patches(), c.mask_ratio, hash_seed({seed, kValTag, i})));
  return plans;
}

}  // namespace

MaskedMse evaluate_ppmae(const models::PPMAE& model, const std::vector<data::PairSample>& samples,
                         const std::vector<std::size_t>& indices, std::uint64_t seed) {
  const auto& c = model.config();
  MaskedMse out;
  if (indices.empty()) return out;
  nx::NoGradGuard guard;
  nx::FiniteCheckScope unchecked(false);
  double total = 0.0, copy = 0.0;
  const std::size_t chunk = 32;
  for (std::size_t start = 0; start < indices.size(); start += chunk) {
    const std::vector<std::size_t> idx(indices.begin() + static_cast<long>(start),
                                       indices.begin() + static_cast<long>(std::min(indices.size(), start + chunk)));
    std::vector<GrayImage> a, b;
    for (auto i : idx) {
      a.push_back(data::resize_bilinear(samples[i].image_t0, c.image_h, c.image_w));
      b.push_back(data::resize_bilinear(samples[i].image_t1, c.image_h, c.image_w));
    }
    std::vector<const GrayImage*> pa, pb;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      pa.push_back(&a[k]);
      pb.push_back(&b[k]);
    }
    const auto plans = fixed_plans(idx, c, seed);
    const auto x0 = models::stack_images(pa, false), x1 = models::stack_images(pb, false);
    const double w = static_cast<double>(idx.size());
    total += models::ppmae_loss(model.predict(x0, plans), x1, plans, c.patch).item() * w;
    copy += models::ppmae_loss(models::masked_patches(x0, plans, c.patch), x1, plans, c.patch).item() * w;
  }
  out.model = total / static_cast<double>(indices.size());
  out.copy_t0 = copy / static_cast<double>(indices.size());
  return out;
}

PPMAEFit train_ppmae(const TrainConfig& cfg, const models::PPMAEConfig& model_cfg,
                     const std::vector<data::PairSample>& samples) {
  cfg.validate();
  model_cfg.validate();
  if (samples.empty()) throw std::invalid_argument("train_ppmae: no samples");
  PPMAEFit fit;
  split_patients(samples, cfg.split, cfg.seed, fit.train_indices, fit.val_indices);
  if (fit.train_indices.empty()) throw std::invalid_argument("train_ppmae: the split leaves no training samples");

  std::vector<GrayImage> r0(samples.size()), r1(samples.size());
  parallel_for(samples.size(), [&](std::size_t i) {
    r0[i] = data::resize_bilinear(samples[i].image_t0, model_cfg.image_h, model_cfg.image_w);
    r1[i] = data::resize_bilinear(samples[i].image_t1, model_cfg.image_h, model_cfg.image_w);
  });
  std::vector<const GrayImage*> t0, t1;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    t0.push_back(&r0[i]);
    t1.push_back(&r1[i]);
  }

  nx::FiniteCheckScope unchecked(false);
  fit.model = std::make_unique<models::PPMAE>(model_cfg, cfg.seed);
  auto& model = *fit.model;
  nx::AdamW opt({cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay}, model.parameters());
  std::vector<std::vector<double>> best = snapshot(model);
  fit.best_val_mse = std::numeric_limits<double>::infinity();
  const std::size_t N = model_cfg.num_patches();

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double train_loss =
        run_epoch(fit.train_indices, cfg.batch, cfg.seed, epoch, [&](const std::vector<std::size_t>& idx) {
          const auto pairs = augmented(t0, t1, idx, cfg.augment, cfg.seed, epoch);
          std::vector<patch::MaskPlan> plans;
          for (auto i : idx) {
            plans.push_back(patch::sample_mask(N, model_cfg.mask_ratio, hash_seed({cfg.seed, kMaskTag, epoch, i})));
          }
          opt.zero_grad();
          const auto loss =
              models::ppmae_loss(model.predict(stack(pairs, true, false), plans), stack(pairs, false, false), plans,
                                 model_cfg.patch);
          const double v = loss.item();
          nx::backward(loss);
          opt.step();
          return v;
        });
    fit.log.push_back({epoch, "train", train_loss, {}, {}, {}, {}, train_loss});
    if (fit.val_indices.empty()) {
      fit.best_epoch = epoch;
      fit.best_val_mse = train_loss;
      best = snapshot(model);
      continue;
    }
    const auto val = evaluate_ppmae(model, samples, fit.val_indices, cfg.seed);
    fit.copy_baseline_mse = val.copy_t0;
    fit.log.push_back({epoch, "val", val.model, {}, {}, {}, {}, val.model});
    if (val.model < fit.best_val_mse) {
      fit.best_val_mse = val.model;
      fit.best_epoch = epoch;
      best = snapshot(model);
    }
  }
  restore(model, best);
  return fit;
}

int argmax(const std::vector<double>& probs) {
  if (probs.empty()) throw std::invalid_argument("argmax: empty vector");
  std::size_t best = 0;
  for (std::size_t k = 1; k < probs.size(); ++k) {
    if (probs[k] > probs[best]) best = k;
  }
  return static_cast<int>(best);
}

std::vector<std::vector<double>> ensemble_predict(const std::vector<const models::FusionClassifier*>& models,
                                                  const std::vector<const GrayImage*>& t0,
                                                  const std::vector<const GrayImage*>& t1, EnsembleMode mode) {
  if (models.empty()) throw std::invalid_argument("ensemble_predict: need at least one model");
  if (t0.size() != t1.size() || t0.empty()) throw std::invalid_argument("ensemble_predict: need matching, non-empty t0/t1");
  const auto& ref = models.front()->config();
  for (const auto* m : models) {
    const auto& c = m->config();
    if (c.kind != ref.kind || c.num_classes != ref.num_classes || c.image_h != ref.image_h || c.image_w != ref.image_w) {
      throw std::invalid_argument("ensemble_predict: architecture mismatch between ensemble members (" +
                                  models.front()->kind() + " vs " + m->kind() + ")");
    }
  }
  const std::size_t B = t0.size(), K = ref.num_classes;
  std::vector<std::vector<double>> out(B, std::vector<double>(K, 0.0));
  nx::NoGradGuard guard;
  const auto a = models::stack_images(t0, true), b = models::stack_images(t1, true);
  for (const auto* m : models) {
    const auto logits = m->logits(a, b);
    for (std::size_t r = 0; r < B; ++r) {
      const auto p = softmax_row(logits.values().subspan(r * K, K));
      if (mode == EnsembleMode::mean_softmax) {
        for (std::size_t k = 0; k < K; ++k) out[r][k] += p[k];
      } else {
        out[r][static_cast<std::size_t>(argmax(p))] += 1.0;
      }
    }
  }
  for (auto& row : out) {
    for (auto& v : row) v /= static_cast<double>(models.size());
  }
  return out;
}

std::vector<int> predict_task1(const std::vector<const models::FusionClassifier*>& models,
                               const std::vector<data::PairSample>& samples) {
  std::vector<int> out;
  const std::size_t chunk = 32;
  for (std::size_t start = 0; start < samples.size(); start += chunk) {
    std::vector<const GrayImage*> a, b;
    for (std::size_t i = start; i < std::min(samples.size(), start + chunk); ++i) {
      a.push_back(&samples[i].image_t0);
      b.push_back(&samples[i].image_t1);
    }
    for (const auto& p : ensemble_predict(models, a, b)) out.push_back(argmax(p));
  }
  return out;
}

std::vector<double> task2_probabilities(const models::PPMAE& ppmae,
                                        const std::vector<const models::FusionClassifier*>& classifiers,
                                        const GrayImage& t0, std::uint64_t seed, const Task2Options& options) {
  const auto future = models::reconstruct_future(ppmae, t0, seed, {t0.height, t0.width, options.mask_samples});
  auto p = ensemble_predict(classifiers, {&t0}, {&future}, options.mode).front();
  if (p.size() < 3) throw std::invalid_argument("task2: classifiers need at least three classes");
  p.resize(3);
  const double s = p[0] + p[1] + p[2];
  if (!(s > 0.0)) return {1.0 / 3, 1.0 / 3, 1.0 / 3};
  for (auto& v : p) v /= s;
  return p;
}

int predict_task2(const models::PPMAE& ppmae, const std::vector<const models::FusionClassifier*>& classifiers,
                  const GrayImage& t0, std::uint64_t seed, const Task2Options& options) {
  return argmax(task2_probabilities(ppmae, classifiers, t0, seed, options));
}

std::uint64_t reconstruction_seed(std::uint64_t seed, const std::string& case_id) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : case_id) h = (h ^ ch) * 0x100000001b3ULL;
  return hash_seed({seed, 0x72656373ULL, h});
}

std::vector<std::unique_ptr<models::FusionClassifier>> finetune_task2(
    const std::vector<const models::FusionClassifier*>& classifiers, const models::PPMAE& ppmae,
    const std::vector<data::PairSample>& samples, const TrainConfig& cfg) {
  cfg.validate();
  if (classifiers.empty()) throw std::invalid_argument("finetune_task2: no classifiers given");
  std::vector<std::size_t> labeled;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].label_task2) labeled.push_back(i);
  }
  if (labeled.empty()) throw std::invalid_argument("finetune_task2: no sample carries a Task-2 label");

  std::vector<std::unique_ptr<models::FusionClassifier>> out;
  for (const auto* c : classifiers) out.push_back(clone(*c));
  if (cfg.epochs == 0) return out;

  std::vector<GrayImage> futures(samples.size());
  parallel_for(labeled.size(), [&](std::size_t k) {
    const auto& s = samples[labeled[k]];
    futures[labeled[k]] = models::reconstruct_future(ppmae, s.image_t0, reconstruction_seed(cfg.seed, s.case_id),
                                                     {s.image_t0.height, s.image_t0.width, 1});
  });
  std::vector<const GrayImage*> t0(samples.size()), t1(samples.size());
  for (auto i : labeled) {
    t0[i] = &samples[i].image_t0;
    t1[i] = &futures[i];
  }

  nx::FiniteCheckScope unchecked(false);
  for (std::size_t m = 0; m < out.size(); ++m) {
    auto& model = *out[m];
    const std::uint64_t seed = hash_seed({cfg.seed, 0x66696e65ULL, m});
    nx::AdamW opt({cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay}, model.parameters());
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
      run_epoch(labeled, cfg.batch, seed, epoch, [&](const std::vector<std::size_t>& idx) {
        const auto pairs = augmented(t0, t1, idx, cfg.augment, seed, epoch);
        std::vector<int> y;
        for (auto i : idx) y.push_back(*samples[i].label_task2);
        opt.zero_grad();
        const auto logits = model.logits(stack(pairs, true, true), stack(pairs, false, true));
        const auto loss = nx::cross_entropy_loss(nx::slice(logits, 1, 0, 3), y);
        const double v = loss.item();
        nx::backward(loss);
        opt.step();
        return v;
      });
    }
  }
  return out;
}

}  // namespace ppmae::train
