#include "ppmae/cli/run_config.hpp"

#include <fstream>

namespace ppmae::cli {

namespace {

using nlohmann::json;

// Recursively overlays `patch` on `base`; every key in `patch` must exist in
// `base`. Arrays and scalars replace wholesale.
void overlay(json& base, const json& patch, const std::string& path) {
  if (!patch.is_object()) throw ConfigError("config: '" + path + "' must be an object");
  for (const auto& [key, value] : patch.items()) {
    const std::string at = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) throw ConfigError("config: unknown key '" + at + "'");
    auto& slot = base[key];
    if (slot.is_object() && value.is_object()) {
      overlay(slot, value, at);
    } else if (slot.is_object() != value.is_object()) {
      throw ConfigError("config: '" + at + "' has the wrong type");
    } else {
      slot = value;
    }
  }
}

json train_section(const train::TrainConfig& c) {
  json j = c.to_json();
  j.erase("task");
  j.erase("seed");
  return j;
}

train::TrainConfig train_from(const json& j, train::Task task) {
  json full = j;
  full["task"] = train::to_string(task);
  return train::TrainConfig::from_json(full);
}

std::string ensemble_name(train::EnsembleMode m) { return m == train::EnsembleMode::vote ? "vote" : "mean_softmax"; }

train::EnsembleMode parse_ensemble(const std::string& s) {
  if (s == "mean_softmax") return train::EnsembleMode::mean_softmax;
  if (s == "vote") return train::EnsembleMode::vote;
  throw ConfigError("config: task2.ensemble must be 'mean_softmax' or 'vote', got '" + s + "'");
}

train::Task classifier_task(models::FusionKind k) {
  return k == models::FusionKind::early ? train::Task::fusion_early : train::Task::fusion_late;
}

}  // namespace

json synth_to_json(const data::SynthConfig& c) {
  return {{"height", c.height},
          {"width", c.width},
          {"band_thickness", c.band_thickness},
          {"band_top_min", c.band_top_min},
          {"band_top_max", c.band_top_max},
          {"tilt", c.tilt},
          {"depth_jitter", c.depth_jitter},
          {"pocket_radius", c.pocket_radius},
          {"pocket_aspect", c.pocket_aspect},
          {"growth_factor", c.growth_factor},
          {"noise", c.noise},
          {"activity_cue", c.activity_cue},
          {"class_balance", c.class_balance},
          {"pairs_per_patient", c.pairs_per_patient},
          {"id_prefix", c.id_prefix}};
}

data::SynthConfig synth_from_json(const json& j) {
  data::SynthConfig c;
  c.height = j.at("height").get<std::size_t>();
  c.width = j.at("width").get<std::size_t>();
  c.band_thickness = j.at("band_thickness").get<double>();
  c.band_top_min = j.at("band_top_min").get<double>();
  c.band_top_max = j.at("band_top_max").get<double>();
  c.tilt = j.at("tilt").get<double>();
  c.depth_jitter = j.at("depth_jitter").get<double>();
  c.pocket_radius = j.at("pocket_radius").get<double>();
  c.pocket_aspect = j.at("pocket_aspect").get<double>();
  c.growth_factor = j.at("growth_factor").get<double>();
  c.noise = j.at("noise").get<double>();
  c.activity_cue = j.at("activity_cue").get<double>();
  c.class_balance = j.at("class_balance").get<std::array<double, 4>>();
  c.pairs_per_patient = j.at("pairs_per_patient").get<std::size_t>();
  c.id_prefix = j.at("id_prefix").get<std::string>();
  return c;
}

json preprocess_to_json(const prep::PreprocessParams& p) {
  return {{"thresholds", p.thresholds},
          {"smooth_window", p.smooth_window},
          {"keep_rows", p.keep_rows ? json(*p.keep_rows) : json(nullptr)},
          {"out_h", p.out_h},
          {"out_w", p.out_w},
          {"flatten", p.flatten}};
}

prep::PreprocessParams preprocess_from_json(const json& j) {
  prep::PreprocessParams p;
  p.thresholds = j.at("thresholds").get<std::vector<double>>();
  p.smooth_window = j.at("smooth_window").get<std::size_t>();
  if (!j.at("keep_rows").is_null()) p.keep_rows = j.at("keep_rows").get<std::size_t>();
  p.out_h = j.at("out_h").get<std::size_t>();
  p.out_w = j.at("out_w").get<std::size_t>();
  p.flatten = j.at("flatten").get<bool>();
  return p;
}

RunConfig RunConfig::desk_scale() {
  RunConfig c;
  c.preset = "desk_scale";
  c.fusion = models::FusionConfig::desk(models::FusionKind::late);
  c.classifier_train = train::TrainConfig::desk(train::Task::fusion_late);
  c.ppmae_train = train::TrainConfig::desk(train::Task::ppmae);
  c.finetune_train = train::TrainConfig::desk(train::Task::finetune_task2);
  return c;
}

RunConfig RunConfig::paper_scale() {
  RunConfig c;
  c.preset = "paper_scale";
  // Four times the desk geometry in every direction.
  auto& s = c.synth;
  s.height = 256;
  s.width = 640;
  s.band_thickness *= 4.0;
  s.band_top_min *= 4.0;
  s.band_top_max *= 4.0;
  s.tilt *= 4.0;
  s.depth_jitter *= 4.0;
  s.pocket_radius *= 4.0;
  c.preprocess.out_h = 200;
  c.preprocess.out_w = 512;
  c.fusion = models::FusionConfig::paper(models::FusionKind::late);
  c.ppmae = models::PPMAEConfig::paper();
  c.classifier_train = train::TrainConfig::paper(train::Task::fusion_late);
  c.ppmae_train = train::TrainConfig::paper(train::Task::ppmae);
  c.finetune_train = train::TrainConfig::paper(train::Task::finetune_task2);
  return c;
}

RunConfig RunConfig::preset_named(const std::string& name) {
  if (name == "desk_scale") return desk_scale();
  if (name == "paper_scale") return paper_scale();
  throw ConfigError("config: unknown preset '" + name + "' (expected desk_scale or paper_scale)");
}

void RunConfig::set_seed(std::uint64_t s) {
  seed = s;
  synth.seed = s;
  classifier_train.seed = s;
  ppmae_train.seed = s;
  finetune_train.seed = s;
}

void RunConfig::validate() const {
  try {
    synth.validate();
    preprocess.validate();
    fusion.validate();
    ppmae.validate();
    classifier_train.validate();
    ppmae_train.validate();
    finetune_train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (fusion.image_h != preprocess.out_h || fusion.image_w != preprocess.out_w) {
    throw ConfigError("config: fusion input " + std::to_string(fusion.image_h) + "x" + std::to_string(fusion.image_w) +
                      " differs from preprocess output " + std::to_string(preprocess.out_h) + "x" +
                      std::to_string(preprocess.out_w));
  }
  if (classifier_train.task != classifier_task(fusion.kind)) {
    throw ConfigError("config: classifier_train task does not match fusion.kind");
  }
  if (task2.mask_samples == 0) throw ConfigError("config: task2.mask_samples must be >= 1");
  for (const auto& p : {manifest, checkpoints}) {
    if (p && !std::filesystem::exists(*p)) throw ConfigError("config: path does not exist: " + p->string());
  }
}

json RunConfig::to_json() const {
  return {{"preset", preset},
          {"seed", seed},
          {"synth", synth_to_json(synth)},
          {"preprocess", preprocess_to_json(preprocess)},
          {"fusion", fusion.to_json()},
          {"ppmae", ppmae.to_json()},
          {"classifier_train", train_section(classifier_train)},
          {"ppmae_train", train_section(ppmae_train)},
          {"finetune_train", train_section(finetune_train)},
          {"task2",
           {{"mask_samples", task2.mask_samples},
            {"ensemble", ensemble_name(task2.ensemble)},
            {"finetune", task2.finetune}}},
          {"paths",
           {{"manifest", manifest ? json(manifest->string()) : json(nullptr)},
            {"checkpoints", checkpoints ? json(checkpoints->string()) : json(nullptr)}}}};
}

RunConfig parse_run_config(const json& doc, const std::filesystem::path& base_dir) {
  if (!doc.is_object()) throw ConfigError("config: top level must be a JSON object");
  const std::string preset = doc.contains("preset") ? doc.at("preset").get<std::string>() : "desk_scale";
  const RunConfig base = RunConfig::preset_named(preset);
  json merged = base.to_json();
  overlay(merged, doc, "");

  RunConfig c;
  try {
    c.preset = preset;
    c.synth = synth_from_json(merged.at("synth"));
    c.preprocess = preprocess_from_json(merged.at("preprocess"));
    c.fusion = models::FusionConfig::from_json(merged.at("fusion"));
    c.ppmae = models::PPMAEConfig::from_json(merged.at("ppmae"));
    c.classifier_train = train_from(merged.at("classifier_train"), classifier_task(c.fusion.kind));
    c.ppmae_train = train_from(merged.at("ppmae_train"), train::Task::ppmae);
    c.finetune_train = train_from(merged.at("finetune_train"), train::Task::finetune_task2);
    const auto& t2 = merged.at("task2");
    c.task2.mask_samples = t2.at("mask_samples").get<std::size_t>();
    c.task2.ensemble = parse_ensemble(t2.at("ensemble").get<std::string>());
    c.task2.finetune = t2.at("finetune").get<bool>();
    for (auto [key, slot] : {std::pair{"manifest", &c.manifest}, std::pair{"checkpoints", &c.checkpoints}}) {
      const auto& v = merged.at("paths").at(key);
      if (!v.is_null()) {
        const std::filesystem::path p = v.get<std::string>();
        *slot = p.is_absolute() || base_dir.empty() ? p : base_dir / p;
      }
    }
    c.set_seed(merged.at("seed").get<std::uint64_t>());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return parse_run_config(doc, path.parent_path());
}

}  // namespace ppmae::cli
