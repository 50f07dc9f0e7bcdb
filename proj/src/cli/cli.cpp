#include "ppmae/cli/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <regex>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "ppmae/cli/run_config.hpp"
#include "ppmae/dataio/image.hpp"
#include "ppmae/metrics/metrics.hpp"
#include "ppmae/models/checkpoint.hpp"
#include "ppmae/models/model_gradcheck.hpp"
#include "ppmae/numerics/gradcheck.hpp"
#include "ppmae/util/parallel.hpp"

namespace ppmae::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class CommandError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config;
  int task = 1;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool force = false;
  std::string manifest;
  std::string checkpoints;
  std::string predictions;
  std::size_t n = 64;
};

RunConfig resolve_config(const Options& o) {
  RunConfig c = o.config.empty() ? RunConfig::desk_scale() : load_run_config(o.config);
  if (o.seed) c.set_seed(*o.seed);
  if (!o.manifest.empty()) c.manifest = fs::path(o.manifest);
  if (!o.checkpoints.empty()) c.checkpoints = fs::path(o.checkpoints);
  c.validate();
  return c;
}

void require_empty_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_directory(dir)) throw CommandError("output path is not a directory: " + dir.string());
  if (!force && fs::exists(dir) && !fs::is_empty(dir)) {
    throw CommandError("output directory " + dir.string() + " is not empty (pass --force to write into it)");
  }
  fs::create_directories(dir);
}

void require_new_file(const fs::path& path, bool force) {
  if (!force && fs::exists(path)) throw CommandError("output file " + path.string() + " exists (pass --force to overwrite)");
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

fs::path require_manifest(const RunConfig& c) {
  if (!c.manifest) throw CommandError("no manifest given (use --manifest or paths.manifest in the config)");
  return *c.manifest;
}

fs::path require_checkpoints(const RunConfig& c) {
  if (!c.checkpoints) throw CommandError("no checkpoint directory given (use --checkpoints or paths.checkpoints)");
  if (!fs::is_directory(*c.checkpoints)) throw CommandError("checkpoint directory not found: " + c.checkpoints->string());
  return *c.checkpoints;
}

std::vector<data::PairSample> load_samples(const fs::path& manifest_path) {
  return data::load_pairs(data::load_manifest(manifest_path));
}

// Fold checkpoints named <prefix><k>.ckpt, ordered by k.
std::vector<fs::path> fold_checkpoints(const fs::path& dir, const std::string& prefix) {
  const std::regex pattern(prefix + "([0-9]+)\\.ckpt");
  std::map<int, fs::path> found;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, pattern)) found[std::stoi(m[1].str())] = entry.path();
  }
  std::vector<fs::path> out;
  for (auto& [k, p] : found) out.push_back(p);
  return out;
}

std::vector<std::unique_ptr<models::FusionClassifier>> load_classifiers(const std::vector<fs::path>& paths) {
  std::vector<std::unique_ptr<models::FusionClassifier>> out;
  for (const auto& p : paths) out.push_back(models::make_fusion(models::read_checkpoint(p)));
  return out;
}

std::vector<const models::FusionClassifier*> raw(const std::vector<std::unique_ptr<models::FusionClassifier>>& v) {
  std::vector<const models::FusionClassifier*> out;
  for (const auto& m : v) out.push_back(m.get());
  return out;
}

void check_sizes(const std::vector<data::PairSample>& samples, std::size_t h, std::size_t w) {
  for (const auto& s : samples) {
    if (s.image_t0.height != h || s.image_t0.width != w) {
      throw CommandError("case " + s.case_id + " is " + std::to_string(s.image_t0.height) + "x" +
                         std::to_string(s.image_t0.width) + " but the classifier expects " + std::to_string(h) + "x" +
                         std::to_string(w) + " (run `ppmae preprocess` first)");
    }
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CommandError("cannot write " + path.string());
  out << text;
  if (!out) throw CommandError("short write to " + path.string());
}

int cmd_gen_synth(const Options& o, std::ostream& out) {
  if (o.out.empty()) throw CommandError("gen-synth needs --out <dir>");
  if (o.n == 0) throw CommandError("gen-synth needs --n >= 1");
  const RunConfig c = resolve_config(o);
  const fs::path dir = o.out;
  require_empty_dir(dir, o.force);
  auto manifest = data::generate_synthetic(c.synth, o.n, dir);
  std::set<std::string> patients;
  for (const auto& r : manifest.rows) patients.insert(r.patient_id);
  if (patients.size() >= static_cast<std::size_t>(c.classifier_train.k_folds)) {
    data::split_folds(manifest, c.classifier_train.k_folds, c.seed);
  }
  data::write_manifest(manifest, dir / "manifest.csv");
  out << "wrote " << manifest.rows.size() << " pairs to " << (dir / "manifest.csv").string() << "\n";
  return 0;
}

int cmd_preprocess(const Options& o, std::ostream& out) {
  if (o.out.empty()) throw CommandError("preprocess needs --out <dir>");
  const RunConfig c = resolve_config(o);
  const fs::path dir = o.out;
  const auto in = data::load_manifest(require_manifest(c));
  require_empty_dir(dir, o.force);
  fs::create_directories(dir / "images");
  data::Manifest result;
  result.source_dir = dir;
  result.rows = in.rows;
  parallel_for(in.rows.size(), [&](std::size_t i) {
    const auto processed = prep::preprocess_pair(data::load_pair(in, in.rows[i]), c.preprocess);
    auto& r = result.rows[i];
    r.image_t0 = fs::path("images") / (r.case_id + "_t0.pgm");
    r.image_t1 = fs::path("images") / (r.case_id + "_t1.pgm");
    data::save_pgm(processed.image_t0, dir / r.image_t0);
    data::save_pgm(processed.image_t1, dir / r.image_t1);
  });
  data::write_manifest(result, dir / "manifest.csv");
  out << "preprocessed " << result.rows.size() << " pairs into " << (dir / "manifest.csv").string() << "\n";
  return 0;
}

// Side-by-side strip t0 | t1 | reconstruction for visual inspection.
data::GrayImage strip(const data::GrayImage& a, const data::GrayImage& b, const data::GrayImage& c) {
  const std::size_t gap = 2;
  data::GrayImage s(a.height, 3 * a.width + 2 * gap, 1.0);
  const data::GrayImage* parts[3] = {&a, &b, &c};
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t r = 0; r < a.height; ++r) {
      for (std::size_t col = 0; col < a.width; ++col) s.at(r, k * (a.width + gap) + col) = parts[k]->at(r, col);
    }
  }
  return s;
}

int train_task1(const Options& o, const RunConfig& c, std::ostream& out) {
  auto samples = load_samples(require_manifest(c));
  check_sizes(samples, c.fusion.image_h, c.fusion.image_w);
  const bool have_folds = std::all_of(samples.begin(), samples.end(), [](const auto& s) { return s.fold.has_value(); });
  if (!have_folds) data::split_folds(samples, c.classifier_train.k_folds, c.seed);
  std::set<int> folds;
  for (const auto& s : samples) folds.insert(*s.fold);
  if (folds.size() < 2) throw CommandError("task 1 training needs at least two folds in the manifest");

  const fs::path dir = o.out;
  fs::create_directories(dir);
  for (int f : folds) {
    const auto path = dir / ("fold" + std::to_string(f) + ".ckpt");
    require_new_file(path, o.force);
  }
  json summary = {{"task", 1}, {"model", c.fusion.to_json()}, {"seed", c.seed}, {"folds", json::array()}};
  for (int f : folds) {
    const auto fit = train::train_fusion(c.classifier_train, c.fusion, samples, f);
    models::CheckpointMeta meta{c.seed, fit.best_epoch, {{"task", 1}, {"fold", f}, {"best_val_f1", fit.best_f1}}};
    models::save_checkpoint(*fit.model, meta, dir / ("fold" + std::to_string(f) + ".ckpt"));
    train::write_log(fit.log, dir / ("fold" + std::to_string(f) + "_log.csv"));
    summary["folds"].push_back({{"fold", f}, {"best_epoch", fit.best_epoch}, {"best_val_f1", fit.best_f1}});
    out << "fold " << f << ": best epoch " << fit.best_epoch << ", validation macro-F1 " << std::fixed
        << std::setprecision(4) << fit.best_f1 << "\n";
  }
  write_text(dir / "train_task1.json", summary.dump(2) + "\n");
  return 0;
}

int train_task2(const Options& o, const RunConfig& c, std::ostream& out) {
  const auto samples = load_samples(require_manifest(c));
  const auto ckpt_dir = require_checkpoints(c);
  const auto classifier_paths = fold_checkpoints(ckpt_dir, "fold");
  if (classifier_paths.empty()) {
    throw CommandError("no fold<k>.ckpt files in " + ckpt_dir.string() + " (run `ppmae train --task 1` first)");
  }
  const auto classifiers = load_classifiers(classifier_paths);
  for (const auto& m : classifiers) check_sizes(samples, m->config().image_h, m->config().image_w);

  const fs::path dir = o.out;
  fs::create_directories(dir);
  require_new_file(dir / "ppmae.ckpt", o.force);

  const auto fit = train::train_ppmae(c.ppmae_train, c.ppmae, samples);
  models::CheckpointMeta meta{c.seed,
                              fit.best_epoch,
                              {{"task", 2}, {"best_val_mse", fit.best_val_mse}, {"copy_t0_mse", fit.copy_baseline_mse}}};
  models::save_checkpoint(*fit.model, meta, dir / "ppmae.ckpt");
  train::write_log(fit.log, dir / "ppmae_log.csv");
  out << "ppmae: best epoch " << fit.best_epoch << ", validation masked MSE " << std::setprecision(6)
      << fit.best_val_mse << " (copy-t0 " << fit.copy_baseline_mse << ")\n";

  fs::create_directories(dir / "reconstructions");
  const std::size_t shown = std::min<std::size_t>(4, fit.val_indices.size());
  for (std::size_t k = 0; k < shown; ++k) {
    const auto& s = samples[fit.val_indices[k]];
    const auto future = models::reconstruct_future(*fit.model, s.image_t0, train::reconstruction_seed(c.seed, s.case_id),
                                                   {s.image_t0.height, s.image_t0.width, c.task2.mask_samples});
    data::save_png(strip(s.image_t0, s.image_t1, future), dir / "reconstructions" / (s.case_id + ".png"));
  }

  auto ft_cfg = c.finetune_train;
  if (!c.task2.finetune) ft_cfg.epochs = 0;
  const auto tuned = train::finetune_task2(raw(classifiers), *fit.model, samples, ft_cfg);
  for (std::size_t k = 0; k < tuned.size(); ++k) {
    const std::string name = classifier_paths[k].stem().string();  // fold<k>
    models::CheckpointMeta m{c.seed, ft_cfg.epochs, {{"task", 2}, {"source", classifier_paths[k].filename().string()}}};
    models::save_checkpoint(*tuned[k], m, dir / ("task2_" + name + ".ckpt"));
  }
  out << "task 2: " << tuned.size() << " classifiers " << (ft_cfg.epochs ? "fine-tuned" : "copied") << "\n";
  return 0;
}

int cmd_train(const Options& o, std::ostream& out) {
  if (o.out.empty()) throw CommandError("train needs --out <dir>");
  const RunConfig c = resolve_config(o);
  return o.task == 1 ? train_task1(o, c, out) : train_task2(o, c, out);
}

int cmd_predict(const Options& o, std::ostream& out) {
  if (o.out.empty()) throw CommandError("predict needs --out <predictions.csv>");
  const RunConfig c = resolve_config(o);
  const auto samples = load_samples(require_manifest(c));
  const auto dir = require_checkpoints(c);
  require_new_file(o.out, o.force);
  std::vector<int> pred;
  if (o.task == 1) {
    const auto paths = fold_checkpoints(dir, "fold");
    if (paths.empty()) throw CommandError("no fold<k>.ckpt files in " + dir.string());
    const auto models = load_classifiers(paths);
    check_sizes(samples, models.front()->config().image_h, models.front()->config().image_w);
    pred = train::predict_task1(raw(models), samples);
  } else {
    const auto paths = fold_checkpoints(dir, "task2_fold");
    if (paths.empty()) throw CommandError("no task2_fold<k>.ckpt files in " + dir.string() + " (run `ppmae train --task 2`)");
    if (!fs::exists(dir / "ppmae.ckpt")) throw CommandError("missing checkpoint " + (dir / "ppmae.ckpt").string());
    const auto models = load_classifiers(paths);
    check_sizes(samples, models.front()->config().image_h, models.front()->config().image_w);
    const auto ppmae = models::make_ppmae(models::read_checkpoint(dir / "ppmae.ckpt"));
    const train::Task2Options opts{c.task2.mask_samples, c.task2.ensemble};
    pred.resize(samples.size());
    parallel_for(samples.size(), [&](std::size_t i) {
      pred[i] = train::predict_task2(*ppmae, raw(models), samples[i].image_t0,
                                     train::reconstruction_seed(c.seed, samples[i].case_id), opts);
    });
  }
  std::string csv = "case_id,pred\n";
  for (std::size_t i = 0; i < samples.size(); ++i) csv += samples[i].case_id + "," + std::to_string(pred[i]) + "\n";
  write_text(o.out, csv);
  out << "wrote " << samples.size() << " predictions to " << o.out << "\n";
  return 0;
}

std::map<std::string, int> read_predictions(const fs::path& path, int num_classes) {
  std::ifstream in(path);
  if (!in) throw CommandError("cannot open predictions " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "case_id,pred") {
    throw CommandError("predictions " + path.string() + ": header must be 'case_id,pred'");
  }
  std::map<std::string, int> out;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    const std::string where = "predictions " + path.string() + " row " + std::to_string(row);
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos) {
      throw CommandError(where + ": expected two fields");
    }
    const std::string id = line.substr(0, comma), value = line.substr(comma + 1);
    int p = -1;
    try {
      std::size_t used = 0;
      p = std::stoi(value, &used);
      if (used != value.size()) p = -1;
    } catch (const std::exception&) {
      p = -1;
    }
    if (p < 0 || p >= num_classes) throw CommandError(where + ": prediction '" + value + "' is not a class index");
    if (!out.emplace(id, p).second) throw CommandError(where + ": duplicate case_id " + id);
  }
  return out;
}

int cmd_evaluate(const Options& o, std::ostream& out) {
  if (o.predictions.empty()) throw CommandError("evaluate needs --predictions <csv>");
  const RunConfig c = resolve_config(o);
  const auto manifest = data::load_manifest(require_manifest(c));
  const int K = o.task == 1 ? data::kTask1Classes : data::kTask2Classes;
  const auto preds = read_predictions(o.predictions, K);

  std::set<std::string> manifest_ids;
  for (const auto& r : manifest.rows) manifest_ids.insert(r.case_id);
  for (const auto& [id, p] : preds) {
    if (!manifest_ids.count(id)) throw CommandError("case set mismatch: prediction for unknown case " + id);
  }
  std::vector<int> truth, pred;
  std::size_t skipped = 0;
  for (const auto& r : manifest.rows) {
    const auto it = preds.find(r.case_id);
    if (it == preds.end()) throw CommandError("case set mismatch: no prediction for case " + r.case_id);
    const auto& label = o.task == 1 ? r.label_task1 : r.label_task2;
    if (!label) {
      ++skipped;
      continue;
    }
    truth.push_back(*label);
    pred.push_back(it->second);
  }
  if (truth.empty()) throw CommandError("no case in the manifest carries a Task-" + std::to_string(o.task) + " label");
  json report = metrics::to_json(metrics::evaluate(o.task, truth, pred));
  report["skipped_unlabeled"] = skipped;
  const std::string text = report.dump(2) + "\n";
  if (o.out.empty()) {
    out << text;
  } else {
    require_new_file(o.out, o.force);
    write_text(o.out, text);
    out << "wrote " << o.out << "\n";
  }
  return 0;
}

int cmd_gradcheck(const Options& o, std::ostream& out) {
  const std::uint64_t seed = o.seed.value_or(7);
  auto results = nx::primitive_gradcheck_suite(seed);
  for (auto& r : models::model_gradcheck_suite(seed)) results.push_back(std::move(r));
  bool ok = true;
  out << std::left << std::setw(36) << "check" << std::right << std::setw(12) << "components" << std::setw(14)
      << "max_rel_err" << "  result\n";
  json table = json::array();
  for (const auto& r : results) {
    ok = ok && r.passed;
    out << std::left << std::setw(36) << r.name << std::right << std::setw(12) << r.components << std::setw(14)
        << std::scientific << std::setprecision(3) << r.max_rel_error << "  " << (r.passed ? "pass" : "FAIL") << "\n";
    table.push_back({{"name", r.name},
                     {"components", r.components},
                     {"max_rel_error", r.max_rel_error},
                     {"max_abs_error", r.max_abs_error},
                     {"passed", r.passed}});
  }
  out << std::defaultfloat << (ok ? "all gradient checks passed" : "gradient checks FAILED") << "\n";
  if (!o.out.empty()) {
    require_new_file(o.out, o.force);
    write_text(o.out, table.dump(2) + "\n");
  }
  return ok ? 0 : 1;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Longitudinal B-scan progression: synthetic data, preprocessing, training and evaluation", "ppmae"};
  app.require_subcommand(1);
  Options o;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Run configuration JSON")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "Run seed (overrides the config)");
    sub->add_flag("--force", o.force, "Overwrite existing outputs");
  };
  auto* gen = app.add_subcommand("gen-synth", "Render a synthetic paired dataset and its manifest");
  add_common(gen);
  gen->add_option("--out", o.out, "Output directory")->required();
  gen->add_option("--n", o.n, "Number of pairs");

  auto* pre = app.add_subcommand("preprocess", "Flatten, crop and resize every pair of a manifest");
  add_common(pre);
  pre->add_option("--manifest", o.manifest, "Input manifest CSV");
  pre->add_option("--out", o.out, "Output directory")->required();

  auto* trn = app.add_subcommand("train", "Train fold classifiers (task 1) or PPMAE plus fine-tuning (task 2)");
  add_common(trn);
  trn->add_option("--task", o.task, "1 or 2")->check(CLI::IsMember({1, 2}));
  trn->add_option("--manifest", o.manifest, "Training manifest CSV");
  trn->add_option("--checkpoints", o.checkpoints, "Task-1 checkpoint directory (task 2)");
  trn->add_option("--out", o.out, "Output directory")->required();

  auto* prd = app.add_subcommand("predict", "Write case_id,pred for every manifest row");
  add_common(prd);
  prd->add_option("--task", o.task, "1 or 2")->check(CLI::IsMember({1, 2}));
  prd->add_option("--manifest", o.manifest, "Manifest CSV");
  prd->add_option("--checkpoints", o.checkpoints, "Checkpoint directory");
  prd->add_option("--out", o.out, "Predictions CSV")->required();

  auto* evl = app.add_subcommand("evaluate", "Score predictions against manifest labels");
  add_common(evl);
  evl->add_option("--task", o.task, "1 or 2")->check(CLI::IsMember({1, 2}));
  evl->add_option("--manifest", o.manifest, "Manifest CSV");
  evl->add_option("--predictions", o.predictions, "Predictions CSV")->required();
  evl->add_option("--out", o.out, "Report JSON (stdout when omitted)");

  auto* grd = app.add_subcommand("gradcheck", "Finite-difference check of every primitive and model");
  grd->add_option("--seed", o.seed, "Suite seed");
  grd->add_option("--out", o.out, "Results JSON");
  grd->add_flag("--force", o.force, "Overwrite existing outputs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 2;
  }
  try {
    if (gen->parsed()) return cmd_gen_synth(o, out);
    if (pre->parsed()) return cmd_preprocess(o, out);
    if (trn->parsed()) return cmd_train(o, out);
    if (prd->parsed()) return cmd_predict(o, out);
    if (evl->parsed()) return cmd_evaluate(o, out);
    return cmd_gradcheck(o, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace ppmae::cli
