#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ppmae/dataio/manifest.hpp"
#include "ppmae/models/fusion.hpp"
#include "ppmae/models/ppmae.hpp"
#include "ppmae/training/augment.hpp"

namespace ppmae::train {

enum class Task { fusion_early, fusion_late, ppmae, finetune_task2 };

std::string to_string(Task task);
Task parse_task(const std::string& s);

struct TrainConfig {
  Task task = Task::fusion_late;
  double lr = 1e-3;
  double weight_decay = 0.01;
  std::size_t batch = 16;
  std::size_t epochs = 30;
  // Training share of the PPMAE train/validation split; 1 disables validation.
  double split = 0.75;
  AugmentSpec augment;
  int k_folds = 4;
  std::uint64_t seed = 0;

  static TrainConfig desk(Task task);
  static TrainConfig paper(Task task);
  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

// One CSV row; absent values are written as empty cells.
struct LogRow {
  std::size_t epoch = 0;
  std::string split;
  double loss = 0.0;
  std::optional<double> f1, rk, spec, qwk, mse;
};

void write_log(const std::vector<LogRow>& rows, const std::filesystem::path& path);
std::string format_log(const std::vector<LogRow>& rows);

struct FusionFit {
  std::unique_ptr<models::FusionClassifier> model;  // best validation macro-F1
  std::vector<LogRow> log;
  std::size_t best_epoch = 0;
  double best_f1 = -1.0;
};

// Trains on samples whose fold differs from `fold` and validates on the
// rest. Samples need Task-1 labels and fold assignments.
FusionFit train_fusion(const TrainConfig& cfg, const models::FusionConfig& model_cfg,
                       const std::vector<data::PairSample>& samples, int fold);

struct PPMAEFit {
  std::unique_ptr<models::PPMAE> model;  // best validation MSE (last epoch without validation)
  std::vector<LogRow> log;
  std::size_t best_epoch = 0;
  double best_val_mse = 0.0;
  double copy_baseline_mse = 0.0;  // t0's own patches as the prediction, same masks
  std::vector<std::size_t> train_indices, val_indices;
};

// Patient-grouped split by cfg.split; images are resized to the model size.
PPMAEFit train_ppmae(const TrainConfig& cfg, const models::PPMAEConfig& model_cfg,
                     const std::vector<data::PairSample>& samples);

struct MaskedMse {
  double model = 0.0;
  double copy_t0 = 0.0;
};

// Masked-patch MSE against t1 on fixed per-sample masks seeded by (seed, index).
MaskedMse evaluate_ppmae(const models::PPMAE& model, const std::vector<data::PairSample>& samples,
                         const std::vector<std::size_t>& indices, std::uint64_t seed);

enum class EnsembleMode { mean_softmax, vote };

// Per-pair class probabilities [B][K] averaged over the models.
std::vector<std::vector<double>> ensemble_predict(const std::vector<const models::FusionClassifier*>& models,
                                                  const std::vector<const GrayImage*>& t0,
                                                  const std::vector<const GrayImage*>& t1,
                                                  EnsembleMode mode = EnsembleMode::mean_softmax);

// Index of the largest entry; ties go to the lowest index.
int argmax(const std::vector<double>& probs);

std::vector<int> predict_task1(const std::vector<const models::FusionClassifier*>& models,
                               const std::vector<data::PairSample>& samples);

struct Task2Options {
  std::size_t mask_samples = 1;
  EnsembleMode mode = EnsembleMode::mean_softmax;
};

// Probabilities over classes 0..2 after dropping the "other" class.
std::vector<double> task2_probabilities(const models::PPMAE& ppmae,
                                        const std::vector<const models::FusionClassifier*>& classifiers,
                                        const GrayImage& t0, std::uint64_t seed, const Task2Options& options = {});
int predict_task2(const models::PPMAE& ppmae, const std::vector<const models::FusionClassifier*>& classifiers,
                  const GrayImage& t0, std::uint64_t seed, const Task2Options& options = {});

// Seed for a sample's reconstruction mask, shared by fine-tuning and prediction.
std::uint64_t reconstruction_seed(std::uint64_t seed, const std::string& case_id);

// Fine-tunes copies of the classifiers on (t0, reconstructed t1) with
// cross-entropy over the first three logits, on every labeled sample.
std::vector<std::unique_ptr<models::FusionClassifier>> finetune_task2(
    const std::vector<const models::FusionClassifier*>& classifiers, const models::PPMAE& ppmae,
    const std::vector<data::PairSample>& samples, const TrainConfig& cfg);

}  // namespace ppmae::train
