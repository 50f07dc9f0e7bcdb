#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"
#include "ppmae/dataio/synth.hpp"
#include "ppmae/models/fusion.hpp"
#include "ppmae/models/ppmae.hpp"
#include "ppmae/preprocess/preprocess.hpp"
#include "ppmae/training/trainer.hpp"

namespace ppmae::cli {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Task2Settings {
  std::size_t mask_samples = 1;
  train::EnsembleMode ensemble = train::EnsembleMode::mean_softmax;
  bool finetune = true;
};

// Everything one run needs. A single run seed drives every stage.
struct RunConfig {
  std::string preset = "desk_scale";
  std::uint64_t seed = 0;
  data::SynthConfig synth;
  prep::PreprocessParams preprocess;
  models::FusionConfig fusion;
  models::PPMAEConfig ppmae;
  train::TrainConfig classifier_train;
  train::TrainConfig ppmae_train;
  train::TrainConfig finetune_train;
  Task2Settings task2;
  // Resolved against the config file's directory.
  std::optional<std::filesystem::path> manifest;
  std::optional<std::filesystem::path> checkpoints;

  static RunConfig desk_scale();
  static RunConfig paper_scale();
  static RunConfig preset_named(const std::string& name);

  // Applies `seed` to every stage.
  void set_seed(std::uint64_t s);
  void validate() const;
  nlohmann::json to_json() const;
};

// Overlays `doc` on the preset it names (default desk_scale). Unknown keys
// are errors that name the full key path.
RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

nlohmann::json synth_to_json(const data::SynthConfig& c);
data::SynthConfig synth_from_json(const nlohmann::json& j);
nlohmann::json preprocess_to_json(const prep::PreprocessParams& p);
prep::PreprocessParams preprocess_from_json(const nlohmann::json& j);

}  // namespace ppmae::cli
