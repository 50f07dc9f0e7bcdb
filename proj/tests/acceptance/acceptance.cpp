// Runs the ten acceptance criteria and prints one PASS/FAIL line per
// criterion. Arguments select a subset by number, e.g. `acceptance 2 3 10`.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <set>
#include <sstream>
#include <string>
#include <unistd.h>

#include "ppmae/cli/cli.hpp"
#include "ppmae/dataio/synth.hpp"
#include "ppmae/metrics/metrics.hpp"
#include "ppmae/models/model_gradcheck.hpp"
#include "ppmae/numerics/gradcheck.hpp"
#include "ppmae/numerics/ops.hpp"
#include "ppmae/patchwork/patchwork.hpp"
#include "ppmae/preprocess/preprocess.hpp"
#include "ppmae/training/trainer.hpp"

using namespace ppmae;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::vector<data::PairSample> synthetic(data::SynthConfig cfg, std::size_t n, std::uint64_t seed, const std::string& prefix,
                                        const prep::PreprocessParams& params = {}) {
  cfg.seed = seed;
  cfg.id_prefix = prefix;
  std::vector<data::PairSample> out;
  for (const auto& s : data::generate_samples(cfg, n)) out.push_back(prep::preprocess_pair(s, params));
  return out;
}

double macro_f1_of(const std::vector<int>& truth, const std::vector<int>& pred, std::size_t k) {
  return metrics::macro_f1(metrics::confusion(truth, pred, k));
}

// ---------------------------------------------------------------------------

Outcome gradient_correctness() {
  const auto t = Clock::now();
  auto results = nx::primitive_gradcheck_suite(7);
  const std::size_t n_primitive = results.size();
  for (auto& r : models::model_gradcheck_suite(7)) results.push_back(std::move(r));
  const double elapsed = seconds_since(t);
  double worst = 0.0;
  std::string failed;
  for (const auto& r : results) {
    worst = std::max(worst, r.max_rel_error);
    if (!(r.passed && r.max_rel_error <= 1e-4)) failed += " " + r.name;
  }
  const bool models_present = results.size() >= n_primitive + 3;
  return {failed.empty() && models_present && elapsed < 120.0,
          std::to_string(results.size()) + " checks, worst relative error " + fmt("%.2e", worst) + ", " +
              fmt("%.1f", elapsed) + " s" + (failed.empty() ? "" : "; failed:" + failed)};
}

Outcome metric_oracles() {
  Rng rng(2024);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    metrics::ConfusionMatrix cm;
    cm.classes = 2;
    cm.counts.resize(4);
    for (auto& c : cm.counts) c = rng.below(trial % 10 == 0 ? 3 : 40);
    const double tp = cm.at(1, 1), tn = cm.at(0, 0), fp = cm.at(0, 1), fn = cm.at(1, 0);
    const double den = std::sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn));
    const double mcc = den == 0.0 ? 0.0 : (tp * tn - fp * fn) / den;
    worst = std::max(worst, std::abs(metrics::rk_correlation(cm) - mcc));
  }
  const std::vector<int> t{0, 0, 2, 2}, p{2, 2, 0, 0}, same{0, 1, 2, 1};
  const double q_same = metrics::qwk(same, same, 3), q_rev = metrics::qwk(t, p, 3);
  const double m1 = metrics::mean_metric(0.6465, 0.0790, 0.6936, 0.0060);
  const double m2 = metrics::mean_metric(0.6491, 0.0938, 0.6963, 0.0410);
  const bool pass = worst <= 1e-12 && q_same == 1.0 && std::abs(q_rev + 1.0) <= 1e-12 &&
                    std::abs(m1 - 0.3563) <= 5e-5 && std::abs(m2 - 0.3701) <= 5e-5;
  return {pass, "max |Rk - MCC| " + fmt("%.1e", worst) + "; qwk identical " + fmt("%.3f", q_same) + ", reversal " +
                    fmt("%.3f", q_rev) + "; means " + fmt("%.5f", m1) + ", " + fmt("%.5f", m2)};
}

Outcome masking_invariants() {
  bool counts_ok = true;
  std::vector<std::size_t> hits(64, 0);
  const std::size_t draws = 10000;
  for (std::size_t s = 0; s < draws; ++s) {
    const auto plan = patch::sample_mask(64, 0.75, s);
    counts_ok = counts_ok && plan.visible.size() == 16 && plan.masked.size() == 48;
    for (auto k : plan.masked) ++hits[k];
  }
  double worst = 0.0;
  for (auto h : hits) worst = std::max(worst, std::abs(static_cast<double>(h) / draws - 0.75));

  Rng rng(3);
  bool bit_equal = true;
  for (int trial = 0; trial < 100; ++trial) {
    data::GrayImage t0(64, 64);
    for (auto& v : t0.pixels) v = rng.uniform();
    const auto grid = patch::patchify(t0, 8);
    const auto plan = patch::sample_mask(64, 0.75, rng.next());
    patch::PatchMatrix pred{plan.masked.size(), 64, std::vector<double>(plan.masked.size() * 64)};
    for (auto& v : pred.data) v = rng.uniform(-0.5, 1.5);
    const auto out = patch::patchify(patch::composite(grid, pred, plan), 8);
    for (auto k : plan.visible) {
      const auto a = out.at(k), b = grid.at(k);
      bit_equal = bit_equal && std::equal(a.begin(), a.end(), b.begin());
    }
  }
  return {counts_ok && worst <= 0.02 && bit_equal,
          "16/48 split " + std::string(counts_ok ? "always" : "NOT always") + "; max |freq - 0.75| " +
              fmt("%.4f", worst) + " over 10000 draws; visible patches " + (bit_equal ? "bit-equal" : "DIFFER")};
}

Outcome cross_temporal_property() {
  models::PPMAEConfig c;
  const models::PPMAE model(c, 11);
  Rng rng(4);
  const std::size_t B = 3;
  auto random_batch = [&] {
    std::vector<double> v(B * c.image_h * c.image_w);
    for (auto& x : v) x = rng.uniform();
    return nx::Tensor({B, c.image_h, c.image_w}, std::move(v), true);
  };
  std::vector<patch::MaskPlan> plans;
  for (std::size_t b = 0; b < B; ++b) plans.push_back(patch::sample_mask(c.num_patches(), c.mask_ratio, 100 + b));
  const auto t0 = random_batch(), t1a = random_batch(), t1b = random_batch();

  // The loss graph for one t1 is built first; the forward for another t1 must not move.
  const auto pred_a = model.predict(t0, plans);
  const auto loss_a = models::ppmae_loss(pred_a, t1a, plans, c.patch);
  nx::backward(loss_a);
  const auto pred_b = model.predict(t0, plans);
  (void)models::ppmae_loss(pred_b, t1b, plans, c.patch);
  const auto va = pred_a.values(), vb = pred_b.values();
  const bool same_forward = std::equal(va.begin(), va.end(), vb.begin(), vb.end());

  // Gradient w.r.t. t1 vanishes outside masked patches.
  bool zero_outside = true;
  const auto g = t1a.grad();
  const std::size_t gc = c.grid_cols();
  for (std::size_t b = 0; b < B; ++b) {
    std::set<std::size_t> masked(plans[b].masked.begin(), plans[b].masked.end());
    for (std::size_t r = 0; r < c.image_h; ++r) {
      for (std::size_t col = 0; col < c.image_w; ++col) {
        const std::size_t k = (r / c.patch) * gc + col / c.patch;
        if (!masked.count(k)) zero_outside = zero_outside && g[(b * c.image_h + r) * c.image_w + col] == 0.0;
      }
    }
  }

  nx::NoGradGuard guard;
  const auto pred = model.predict(t0, plans);
  const double l_pp = models::ppmae_loss(pred, t0, plans, c.patch).item();
  const double l_mae = models::mae_loss(pred, t0, plans, c.patch).item();
  const bool pass = same_forward && zero_outside && std::abs(l_pp - l_mae) <= 1e-12;
  return {pass, std::string("forward ") + (same_forward ? "bit-identical" : "CHANGED") + " under t1 change; t1 grad " +
                    (zero_outside ? "zero" : "NONZERO") + " outside masked patches; |ppmae - mae| at t1 == t0 " +
                    fmt("%.1e", std::abs(l_pp - l_mae))};
}

// Shared by criteria 5 and 6.
struct PPMAEOrdering {
  std::optional<train::PPMAEFit> flat, raw;
};

data::SynthConfig growth_only() {
  data::SynthConfig s;
  s.class_balance = {0.0, 0.0, 1.0, 0.0};
  return s;
}

train::TrainConfig ppmae_desk(std::uint64_t seed) {
  auto cfg = train::TrainConfig::desk(train::Task::ppmae);
  cfg.seed = seed;
  return cfg;
}

Outcome ppmae_beats_copy(PPMAEOrdering& shared) {
  const auto t = Clock::now();
  const auto samples = synthetic(growth_only(), 512, 501, "G");
  auto cfg = ppmae_desk(5);
  cfg.epochs = 100;
  shared.flat = train::train_ppmae(cfg, models::PPMAEConfig{}, samples);
  const double elapsed = seconds_since(t);
  const auto& f = *shared.flat;
  const double margin = 1.0 - f.best_val_mse / f.copy_baseline_mse;
  return {cfg.epochs <= 100 && margin >= 0.10 && elapsed <= 1800.0,
          "validation masked MSE " + fmt("%.5f", f.best_val_mse) + " vs copy-t0 " + fmt("%.5f", f.copy_baseline_mse) +
              " (" + fmt("%.1f", 100.0 * margin) + "% lower, need >= 10%); " + std::to_string(cfg.epochs) +
              " epochs, " + fmt("%.0f", elapsed) + " s"};
}

Outcome flattening_benefit(PPMAEOrdering& shared) {
  if (!shared.flat) ppmae_beats_copy(shared);
  prep::PreprocessParams no_flatten;
  no_flatten.flatten = false;
  const auto samples = synthetic(growth_only(), 512, 501, "G", no_flatten);
  auto cfg = ppmae_desk(5);
  cfg.epochs = 100;
  shared.raw = train::train_ppmae(cfg, models::PPMAEConfig{}, samples);
  const double with = shared.flat->best_val_mse, without = shared.raw->best_val_mse;
  return {with < without, "validation masked MSE with flattening " + fmt("%.5f", with) + " vs without " +
                              fmt("%.5f", without) + " (vertical jitter " + fmt("%.0f", growth_only().depth_jitter) +
                              " px, same seeds)"};
}

// Fold classifiers shared by criteria 7 and 8.
struct ClassifierBank {
  std::vector<std::unique_ptr<models::FusionClassifier>> late;
  double early_f1 = -1.0;
};

const std::vector<data::PairSample>& task1_train() {
  static const auto samples = [] {
    auto s = synthetic(data::SynthConfig{}, 400, 701, "A");
    data::split_folds(s, 4, 701);
    return s;
  }();
  return samples;
}

std::vector<const models::FusionClassifier*> raw_ptrs(const std::vector<std::unique_ptr<models::FusionClassifier>>& v) {
  std::vector<const models::FusionClassifier*> out;
  for (const auto& m : v) out.push_back(m.get());
  return out;
}

void train_late_folds(ClassifierBank& bank, std::vector<double>* fold_f1) {
  auto cfg = train::TrainConfig::desk(train::Task::fusion_late);
  cfg.seed = 7;
  for (int f = 0; f < 4; ++f) {
    auto fit = train::train_fusion(cfg, models::FusionConfig::desk(models::FusionKind::late), task1_train(), f);
    if (fold_f1) fold_f1->push_back(fit.best_f1);
    bank.late.push_back(std::move(fit.model));
  }
}

Outcome classifier_sanity(ClassifierBank& bank) {
  const auto t = Clock::now();
  std::vector<double> fold_f1;
  train_late_folds(bank, &fold_f1);
  auto early_cfg = train::TrainConfig::desk(train::Task::fusion_early);
  early_cfg.seed = 7;
  bank.early_f1 = train::train_fusion(early_cfg, models::FusionConfig::desk(models::FusionKind::early), task1_train(), 0).best_f1;

  // Ensemble versus single folds on pairs no fold has seen.
  const auto test = synthetic(data::SynthConfig{}, 200, 702, "B");
  std::vector<int> truth;
  for (const auto& s : test) truth.push_back(*s.label_task1);
  const double ens = macro_f1_of(truth, train::predict_task1(raw_ptrs(bank.late), test), 4);
  double best_single = 0.0;
  for (const auto& m : bank.late) best_single = std::max(best_single, macro_f1_of(truth, train::predict_task1({m.get()}, test), 4));

  const bool pass = fold_f1[0] >= 0.90 && bank.early_f1 >= 0.85 && ens >= best_single - 0.02;
  return {pass, "late fold-0 F1 " + fmt("%.4f", fold_f1[0]) + " (need 0.90), early " + fmt("%.4f", bank.early_f1) +
                    " (need 0.85); test ensemble " + fmt("%.4f", ens) + " vs best single " + fmt("%.4f", best_single) +
                    "; 30 epochs, " + fmt("%.0f", seconds_since(t)) + " s"};
}

Outcome task2_end_to_end(ClassifierBank& bank) {
  const auto t = Clock::now();
  if (bank.late.empty()) train_late_folds(bank, nullptr);
  auto three = data::SynthConfig{};
  three.class_balance = {1.0, 1.0, 1.0, 0.0};
  const auto train_pairs = synthetic(three, 768, 801, "T");
  const auto held = synthetic(three, 150, 802, "H");

  const auto fit = train::train_ppmae(ppmae_desk(8), models::PPMAEConfig{}, train_pairs);
  auto ft_cfg = train::TrainConfig::desk(train::Task::finetune_task2);
  ft_cfg.seed = 8;
  const auto tuned = train::finetune_task2(raw_ptrs(bank.late), *fit.model, train_pairs, ft_cfg);

  auto score = [&](const std::vector<const models::FusionClassifier*>& ms) {
    std::vector<int> truth, pred;
    for (const auto& s : held) {
      truth.push_back(*s.label_task2);
      pred.push_back(train::predict_task2(*fit.model, ms, s.image_t0, train::reconstruction_seed(8, s.case_id)));
    }
    return macro_f1_of(truth, pred, 3);
  };
  const double before = score(raw_ptrs(bank.late)), after = score(raw_ptrs(tuned));
  return {before >= 0.70 && after >= before - 0.02,
          "held-out Task-2 macro-F1 " + fmt("%.4f", before) + " (need 0.70), after fine-tuning " + fmt("%.4f", after) +
              " (need >= " + fmt("%.4f", before - 0.02) + "); PPMAE val MSE " + fmt("%.5f", fit.best_val_mse) +
              " vs copy " + fmt("%.5f", fit.copy_baseline_mse) + "; " + fmt("%.0f", seconds_since(t)) + " s"};
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "ppmae");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  if (code != 0) std::fprintf(stderr, "ppmae %s failed: %s\n", args[1].c_str(), err.str().c_str());
  return code;
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / ("ppmae_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  bool ok = cli({"gen-synth", "--out", (root / "raw").string(), "--n", "32", "--seed", "9"}) == 0 &&
            cli({"preprocess", "--manifest", (root / "raw" / "manifest.csv").string(), "--out", (root / "data").string()}) == 0;
  {
    std::ofstream cfg(root / "config.json");
    cfg << R"({"classifier_train": {"epochs": 3}, "ppmae_train": {"epochs": 3}, "paths": {"manifest": "data/manifest.csv"}})";
  }
  const std::string cfg = (root / "config.json").string();
  std::vector<std::string> outputs[2];
  for (int run = 0; run < 2 && ok; ++run) {
    const fs::path dir = root / ("run" + std::to_string(run));
    ok = ok && cli({"train", "--config", cfg, "--task", "1", "--out", (dir / "ck").string(), "--seed", "5"}) == 0;
    ok = ok && cli({"train", "--config", cfg, "--task", "2", "--checkpoints", (dir / "ck").string(), "--out",
                    (dir / "ck").string(), "--seed", "5"}) == 0;
    for (const char* task : {"1", "2"}) {
      const auto pred = dir / (std::string("pred") + task + ".csv"), report = dir / (std::string("report") + task + ".json");
      ok = ok && cli({"predict", "--config", cfg, "--task", task, "--checkpoints", (dir / "ck").string(), "--out",
                      pred.string(), "--seed", "5"}) == 0;
      ok = ok && cli({"evaluate", "--config", cfg, "--task", task, "--predictions", pred.string(), "--out",
                      report.string()}) == 0;
      outputs[run].push_back(read_bytes(pred));
      outputs[run].push_back(read_bytes(report));
    }
    outputs[run].push_back(read_bytes(dir / "ck" / "ppmae.ckpt"));
    outputs[run].push_back(read_bytes(dir / "ck" / "ppmae_log.csv"));
  }
  const bool same = ok && outputs[0] == outputs[1] && !outputs[0].front().empty();
  fs::remove_all(root);
  return {same, ok ? std::string("two train+predict+evaluate runs (tasks 1 and 2) ") +
                         (same ? "byte-identical" : "DIFFER") + " in predictions, reports, PPMAE checkpoint and log"
                   : std::string("CLI sequence failed")};
}

Outcome flattening_invariants() {
  // Class 3 renders a speckle-corrupted follow-up, which is not a clean scan.
  data::SynthConfig clean;
  clean.noise = 0.0;
  clean.class_balance = {1.0, 1.0, 1.0, 0.0};
  clean.seed = 1001;
  const prep::PreprocessParams params;
  std::size_t checked = 0, zero = 0, idempotent = 0;
  for (const auto& s : data::generate_samples(clean, 64)) {
    for (const auto* img : {&s.image_t0, &s.image_t1}) {
      const auto flat = prep::flatten(*img, prep::estimate_surface(*img, params));
      const auto again = prep::estimate_surface(flat, params);
      ++checked;
      zero += std::all_of(again.rows.begin(), again.rows.end(), [](std::size_t r) { return r == 0; });
      idempotent += prep::flatten(flat, again) == flat;
    }
  }
  using P = prep::SurfaceProfile;
  const std::vector<P> same{P{{3, 7, 1}}, P{{3, 7, 1}}}, two{P{{4, 4, 4}}, P{{6, 6, 6}}},
      three{P{{4, 9, 5}}, P{{5, 4, 9}}, P{{9, 5, 4}}};
  const bool medians = prep::fuse_surfaces(same).rows == std::vector<std::size_t>{3, 7, 1} &&
                       prep::fuse_surfaces(two).rows == std::vector<std::size_t>{5, 5, 5} &&
                       prep::fuse_surfaces(three).rows == std::vector<std::size_t>{5, 5, 5};
  return {zero == checked && idempotent == checked && medians,
          std::to_string(zero) + "/" + std::to_string(checked) + " clean scans re-detect the zero profile; " +
              std::to_string(idempotent) + "/" + std::to_string(checked) + " idempotent (classes 0-2); median examples " +
              (medians ? "exact" : "WRONG")};
}

}  // namespace

int main(int argc, char** argv) {
  std::setvbuf(stdout, nullptr, _IONBF, 0);
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  PPMAEOrdering ordering;
  ClassifierBank bank;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient correctness", gradient_correctness},
      {"metric oracle equivalence", metric_oracles},
      {"masking invariants", masking_invariants},
      {"PPMAE cross-temporal property", cross_temporal_property},
      {"PPMAE beats copy-t0", [&] { return ppmae_beats_copy(ordering); }},
      {"preprocessing benefit ordering", [&] { return flattening_benefit(ordering); }},
      {"classifier sanity", [&] { return classifier_sanity(bank); }},
      {"Task-2 end-to-end", [&] { return task2_end_to_end(bank); }},
      {"determinism", determinism},
      {"flattening invariants", flattening_invariants},
  };
  int failures = 0, run = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    ++run;
    failures += !o.pass;
    std::printf("[%s] criterion %d, %s: %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(), o.detail.c_str());
  }
  std::printf("%d/%d criteria passed\n", run - failures, run);
  return failures == 0 ? 0 : 1;
}
