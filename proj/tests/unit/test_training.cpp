#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>

#include "ppmae/dataio/synth.hpp"
#include "ppmae/preprocess/preprocess.hpp"
#include "ppmae/training/augment.hpp"
#include "ppmae/training/trainer.hpp"
#include "temp_dir.hpp"

using namespace ppmae;
using namespace ppmae::train;
using data::GrayImage;
using data::PairSample;

namespace {

GrayImage random_image(Rng& rng, std::size_t h, std::size_t w) {
  GrayImage img(h, w);
  for (auto& p : img.pixels) p = rng.uniform();
  return img;
}

models::FusionConfig toy_fusion(models::FusionKind kind, std::size_t side = 16) {
  models::FusionConfig c;
  c.kind = kind;
  c.encoder.in_channels = kind == models::FusionKind::early ? 2 : 3;
  c.encoder.widths = {4, 8};
  c.encoder.feature_dim = 8;
  c.image_h = c.image_w = side;
  return c;
}

models::PPMAEConfig toy_ppmae() {
  models::PPMAEConfig c;
  c.image_h = c.image_w = 16;
  c.patch = 4;
  c.enc_dim = c.dec_dim = 16;
  c.enc_heads = c.dec_heads = 2;
  c.enc_depth = c.dec_depth = 1;
  return c;
}

// Random pairs with labels cycling 0..3 and folds cycling 0..folds-1.
std::vector<PairSample> random_pairs(std::size_t n, std::size_t side, int folds, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<PairSample> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& s = out[i];
    s.case_id = "C" + std::to_string(i);
    s.patient_id = "P" + std::to_string(i / 2);
    s.image_t0 = random_image(rng, side, side);
    s.image_t1 = random_image(rng, side, side);
    s.label_task1 = static_cast<int>(i % 4);
    if (i % 4 != 3) s.label_task2 = static_cast<int>(i % 4);
    s.fold = static_cast<int>((i / 2) % static_cast<std::size_t>(folds));
  }
  return out;
}

std::vector<double> flat_params(const models::Model& m) {
  std::vector<double> out;
  for (const auto& p : m.params().items()) out.insert(out.end(), p.tensor.values().begin(), p.tensor.values().end());
  return out;
}

TrainConfig quick(Task task, std::size_t epochs) {
  TrainConfig c = TrainConfig::desk(task);
  c.epochs = epochs;
  c.batch = 4;
  c.seed = 17;
  return c;
}

// A classifier whose logits equal `bias` for every input.
void make_constant(models::FusionClassifier& m, const std::vector<double>& bias) {
  for (const auto& p : m.params().items()) {
    auto v = nx::Tensor(p.tensor).mutable_values();
    std::fill(v.begin(), v.end(), 0.0);
  }
  const std::string name = m.config().kind == models::FusionKind::late ? "head.fc.bias" : "head.fc2.bias";
  auto b = nx::Tensor(m.params().get(name)).mutable_values();
  std::copy(bias.begin(), bias.end(), b.begin());
}

struct ThreadEnv {
  explicit ThreadEnv(const char* n) { setenv("PPMAE_THREADS", n, 1); }
  ~ThreadEnv() { unsetenv("PPMAE_THREADS"); }
};

}  // namespace

TEST_CASE("empty augmentation is the identity on both scans") {
  Rng rng(1);
  const auto a = random_image(rng, 12, 20), b = random_image(rng, 12, 20);
  for (int trial = 0; trial < 20; ++trial) {
    const auto [x, y] = augment_pair(a, b, AugmentSpec{}, rng);
    CHECK(x == a);
    CHECK(y == b);
  }
}

TEST_CASE("flips apply to both scans and are involutions") {
  Rng rng(2);
  const auto a = random_image(rng, 7, 11), b = random_image(rng, 7, 11);
  AugmentSpec spec;
  spec.hflip_prob = 1.0;
  const auto [x, y] = augment_pair(a, b, spec, rng);
  CHECK(x == flip_horizontal(a));
  CHECK(y == flip_horizontal(b));
  CHECK(x.at(3, 0) == a.at(3, 10));
  const auto [x2, y2] = augment_pair(x, y, spec, rng);
  CHECK(x2 == a);
  CHECK(y2 == b);
  CHECK(flip_vertical(flip_vertical(a)) == a);
  CHECK(flip_vertical(a).at(0, 4) == a.at(6, 4));
}

TEST_CASE("rotation by zero degrees is the identity; quarter turns are exact permutations") {
  Rng rng(3);
  const auto a = random_image(rng, 9, 9);
  CHECK(rotate(a, 0.0) == a);
  const auto q = rotate(a, 90.0);
  double err_ccw = 0.0, err_cw = 0.0;
  for (std::size_t r = 0; r < 9; ++r) {
    for (std::size_t c = 0; c < 9; ++c) {
      err_ccw = std::max(err_ccw, std::abs(q.at(r, c) - a.at(c, 8 - r)));
      err_cw = std::max(err_cw, std::abs(q.at(r, c) - a.at(8 - c, r)));
    }
  }
  CHECK(std::min(err_ccw, err_cw) < 1e-9);
}

TEST_CASE("gaussian blur matches a direct two-dimensional convolution") {
  Rng rng(4);
  const auto a = random_image(rng, 10, 13);
  for (double sigma : {0.3, 0.8, 1.7}) {
    const auto got = gaussian_blur(a, sigma);
    const long rad = static_cast<long>(std::ceil(3.0 * sigma));
    for (long r = 0; r < 10; ++r) {
      for (long c = 0; c < 13; ++c) {
        double num = 0.0, den = 0.0;
        for (long dy = -rad; dy <= rad; ++dy) {
          for (long dx = -rad; dx <= rad; ++dx) {
            const double w = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
            const long y = std::clamp(r + dy, 0L, 9L), x = std::clamp(c + dx, 0L, 12L);
            num += w * a.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x));
            den += w;
          }
        }
        CHECK(got.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) == doctest::Approx(num / den).epsilon(1e-12));
      }
    }
  }
  const GrayImage flat(6, 6, 0.37);
  for (double v : gaussian_blur(flat, 1.2).pixels) CHECK(v == doctest::Approx(0.37).epsilon(1e-14));
}

TEST_CASE("property: augmenting a registered pair (x, x) yields a registered pair (y, y)") {
  Rng gen(5);
  for (int trial = 0; trial < 200; ++trial) {
    AugmentSpec spec;
    spec.hflip_prob = gen.uniform();
    spec.vflip_prob = gen.uniform();
    spec.rotation_deg = gen.uniform(0.0, 30.0);
    spec.crop_scale_min = gen.uniform(0.5, 1.0);
    spec.crop_scale_max = gen.uniform(spec.crop_scale_min, 1.0);
    if (trial % 2 == 1) {
      spec.brightness = gen.uniform(0.0, 0.2);
      spec.contrast = gen.uniform(0.0, 0.3);
      spec.blur_prob = gen.uniform();
      spec.blur_sigma_min = gen.uniform(0.1, 0.5);
      spec.blur_sigma_max = gen.uniform(spec.blur_sigma_min, 1.5);
    }
    const std::size_t h = 4 + gen.below(20), w = 4 + gen.below(20);
    const auto x = random_image(gen, h, w);
    Rng rng(gen.next());
    const auto [y0, y1] = augment_pair(x, x, spec, rng);
    CHECK(y0 == y1);
    CHECK(y0.height == h);
    CHECK(y0.width == w);
    for (double p : y0.pixels) CHECK((p >= 0.0 && p <= 1.0));
  }
}

TEST_CASE("augmentation spec validation and json round trip") {
  AugmentSpec bad;
  bad.perspective = true;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = AugmentSpec{};
  bad.hflip_prob = 1.5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = AugmentSpec{};
  bad.crop_scale_min = 0.9;
  bad.crop_scale_max = 0.8;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  for (const auto& spec : {AugmentSpec::classifier_default(), AugmentSpec::ppmae_default()}) {
    CHECK(AugmentSpec::from_json(spec.to_json()) == spec);
  }
  CHECK_THROWS_AS(AugmentSpec::from_json({{"hflip", 0.5}}), std::invalid_argument);
}

TEST_CASE("train config presets carry the desk and full-scale hyperparameters") {
  const auto t1 = TrainConfig::paper(Task::fusion_late);
  CHECK(t1.lr == 1e-4);
  CHECK(t1.batch == 128);
  CHECK(t1.epochs == 150);
  CHECK(t1.split == 0.75);
  const auto ft = TrainConfig::paper(Task::finetune_task2);
  CHECK(ft.lr == 1e-5);
  CHECK(ft.epochs == 1);
  CHECK(ft.split == 1.0);
  const auto pm = TrainConfig::paper(Task::ppmae);
  CHECK(pm.lr == 1e-5);
  CHECK(pm.epochs == 100);
  CHECK(pm.batch == 128);
  CHECK(pm.augment.crop_scale_min < 1.0);
  CHECK(pm.augment.vflip_prob == 0.0);

  const auto desk = TrainConfig::desk(Task::fusion_early);
  CHECK(desk.batch == 16);
  CHECK(desk.epochs == 30);
  CHECK(TrainConfig::desk(Task::ppmae).epochs == 200);
}

TEST_CASE("train config validation and json round trip") {
  auto c = TrainConfig::desk(Task::ppmae);
  c.seed = 99;
  const auto back = TrainConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK_THROWS_AS(TrainConfig::from_json({{"task", "ppmae"}, {"learning_rate", 1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(TrainConfig::from_json({{"task", "resnet"}}), std::invalid_argument);
  CHECK_THROWS_AS(TrainConfig::from_json({{"lr", 0.0}}), std::invalid_argument);
  CHECK_THROWS_AS(TrainConfig::from_json({{"batch", 0}}), std::invalid_argument);
  CHECK_THROWS_AS(TrainConfig::from_json({{"split", 0.0}}), std::invalid_argument);
  CHECK_THROWS_AS(TrainConfig::from_json({{"split", 1.5}}), std::invalid_argument);
  CHECK_THROWS_AS(TrainConfig::from_json({{"task", "fusion-late"}, {"epochs", 0}}), std::invalid_argument);
  CHECK_NOTHROW(TrainConfig::from_json({{"task", "finetune-task2"}, {"epochs", 0}}));
  CHECK(parse_task(to_string(Task::finetune_task2)) == Task::finetune_task2);
}

TEST_CASE("metrics log uses fixed columns with empty cells") {
  std::vector<LogRow> rows{{1, "train", 1.5, {}, {}, {}, {}, {}}, {1, "val", 0.25, 0.5, 0.125, 0.75, {}, 0.0625}};
  CHECK(format_log(rows) ==
        "epoch,split,loss,f1,rk,spec,qwk,mse\n"
        "1,train,1.500000,,,,,\n"
        "1,val,0.250000,0.500000,0.125000,0.750000,,0.062500\n");
  TempDir dir("log");
  write_log(rows, dir.path() / "log.csv");
  CHECK(std::filesystem::file_size(dir.path() / "log.csv") == format_log(rows).size());
}

TEST_CASE("fusion training: smoke run, determinism and error cases") {
  const auto samples = random_pairs(8, 16, 2, 6);
  for (auto kind : {models::FusionKind::early, models::FusionKind::late}) {
    const auto fit = train_fusion(quick(Task::fusion_late, 1), toy_fusion(kind), samples, 0);
    REQUIRE(fit.log.size() == 2);
    for (const auto& row : fit.log) CHECK(std::isfinite(row.loss));
    CHECK(fit.log[1].f1.has_value());
    CHECK(fit.best_epoch == 1);
  }
  const auto a = train_fusion(quick(Task::fusion_late, 2), toy_fusion(models::FusionKind::late), samples, 1);
  const auto b = train_fusion(quick(Task::fusion_late, 2), toy_fusion(models::FusionKind::late), samples, 1);
  CHECK(flat_params(*a.model) == flat_params(*b.model));
  CHECK(format_log(a.log) == format_log(b.log));

  CHECK_THROWS_AS(train_fusion(quick(Task::fusion_late, 1), toy_fusion(models::FusionKind::late), samples, 5),
                  std::invalid_argument);
  auto unlabeled = samples;
  unlabeled[3].label_task1.reset();
  CHECK_THROWS_AS(train_fusion(quick(Task::fusion_late, 1), toy_fusion(models::FusionKind::late), unlabeled, 0),
                  std::invalid_argument);
  CHECK_THROWS_AS(train_fusion(quick(Task::fusion_late, 1), toy_fusion(models::FusionKind::late, 32), samples, 0),
                  std::invalid_argument);
}

TEST_CASE("fusion training is independent of the worker count") {
  const auto samples = random_pairs(12, 16, 2, 7);
  auto cfg = quick(Task::fusion_early, 2);
  std::vector<double> serial, threaded;
  {
    ThreadEnv env("1");
    serial = flat_params(*train_fusion(cfg, toy_fusion(models::FusionKind::early), samples, 0).model);
  }
  {
    ThreadEnv env("3");
    threaded = flat_params(*train_fusion(cfg, toy_fusion(models::FusionKind::early), samples, 0).model);
  }
  CHECK(serial == threaded);
}

TEST_CASE("validation samples never contribute gradients") {
  auto samples = random_pairs(8, 16, 2, 8);
  const auto cfg = quick(Task::fusion_late, 2);
  const auto mc = toy_fusion(models::FusionKind::late);

  // Everything in the validation fold: parameters stay at their initial values.
  auto all_val = samples;
  for (auto& s : all_val) s.fold = 0;
  const auto frozen = train_fusion(cfg, mc, all_val, 0);
  const models::FusionClassifier init(mc, hash_seed({cfg.seed, 0}));
  CHECK(flat_params(*frozen.model) == flat_params(init));

  // Replacing validation images leaves the last-epoch weights untouched; the
  // single-epoch run has no model selection to differ by.
  auto one = cfg;
  one.epochs = 1;
  const auto base = train_fusion(one, mc, samples, 1);
  Rng rng(9);
  for (auto& s : samples) {
    if (s.fold == 1) s.image_t1 = random_image(rng, 16, 16);
  }
  const auto changed = train_fusion(one, mc, samples, 1);
  CHECK(flat_params(*base.model) == flat_params(*changed.model));
}

TEST_CASE("fusion training lowers the loss on separable pairs") {
  data::SynthConfig sc;
  sc.seed = 21;
  auto raw = data::generate_samples(sc, 64);
  prep::PreprocessParams pp;
  pp.out_h = pp.out_w = 16;
  std::vector<PairSample> samples;
  for (const auto& r : raw) samples.push_back(prep::preprocess_pair(r, pp));
  data::split_folds(samples, 4, 21);
  auto cfg = quick(Task::fusion_late, 50);
  cfg.batch = 16;
  const auto fit = train_fusion(cfg, toy_fusion(models::FusionKind::late), samples, 0);
  const double first = fit.log.front().loss, last = fit.log[fit.log.size() - 2].loss;
  MESSAGE("train loss " << first << " -> " << last);
  CHECK(fit.log[fit.log.size() - 2].split == "train");
  CHECK(last < first);
}

TEST_CASE("ppmae training: smoke run, determinism, split and errors") {
  auto samples = random_pairs(8, 16, 2, 10);
  auto cfg = quick(Task::ppmae, 1);
  const auto fit = train_ppmae(cfg, toy_ppmae(), samples);
  CHECK(std::isfinite(fit.best_val_mse));
  CHECK(std::isfinite(fit.copy_baseline_mse));
  CHECK(fit.train_indices.size() + fit.val_indices.size() == samples.size());
  CHECK(fit.val_indices.size() == 2);  // one of four patients
  for (auto v : fit.val_indices) {
    for (auto t : fit.train_indices) CHECK(samples[v].patient_id != samples[t].patient_id);
  }
  cfg.epochs = 2;
  const auto a = train_ppmae(cfg, toy_ppmae(), samples);
  const auto b = train_ppmae(cfg, toy_ppmae(), samples);
  CHECK(flat_params(*a.model) == flat_params(*b.model));
  CHECK(format_log(a.log) == format_log(b.log));

  cfg.split = 1.0;
  const auto no_val = train_ppmae(cfg, toy_ppmae(), samples);
  CHECK(no_val.val_indices.empty());
  CHECK(no_val.best_epoch == 2);

  CHECK_THROWS_AS(train_ppmae(cfg, toy_ppmae(), {}), std::invalid_argument);
}

TEST_CASE("ppmae evaluation: copy baseline is the t0 patch error, zero when t1 == t0") {
  auto samples = random_pairs(6, 16, 2, 11);
  const models::PPMAE model(toy_ppmae(), 3);
  std::vector<std::size_t> idx{0, 2, 5};
  const auto r = evaluate_ppmae(model, samples, idx, 4);
  CHECK(r.copy_t0 > 0.0);
  CHECK(std::isfinite(r.model));
  for (auto& s : samples) s.image_t1 = s.image_t0;
  const auto same = evaluate_ppmae(model, samples, idx, 4);
  CHECK(same.copy_t0 == 0.0);
  CHECK(same.model > 0.0);
}

TEST_CASE("ensemble examples and tie rule") {
  const auto mc = toy_fusion(models::FusionKind::late);
  models::FusionClassifier a(mc, 1), b(mc, 1);
  Rng rng(12);
  const auto x0 = random_image(rng, 16, 16), x1 = random_image(rng, 16, 16);

  const auto single = ensemble_predict({&a}, {&x0}, {&x1}).front();
  {
    nx::NoGradGuard guard;
    const auto logits = a.logits(models::stack_images({&x0}, true), models::stack_images({&x1}, true));
    const auto v = logits.values();
    const double m = *std::max_element(v.begin(), v.end());
    double z = 0.0;
    for (double l : v) z += std::exp(l - m);
    for (std::size_t k = 0; k < 4; ++k) CHECK(single[k] == doctest::Approx(std::exp(v[k] - m) / z).epsilon(1e-14));
  }
  const auto twice = ensemble_predict({&a, &b}, {&x0}, {&x1}).front();
  for (std::size_t k = 0; k < 4; ++k) CHECK(twice[k] == doctest::Approx(single[k]).epsilon(1e-15));

  make_constant(a, {0.0, 60.0, 0.0, 0.0});
  make_constant(b, {0.0, 0.0, 60.0, 0.0});
  const auto mixed = ensemble_predict({&a, &b}, {&x0}, {&x1}).front();
  CHECK(mixed[0] == doctest::Approx(0.0).epsilon(1e-20).scale(1.0));
  CHECK(mixed[1] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(mixed[2] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(mixed[1] == mixed[2]);
  CHECK(argmax(mixed) == 1);

  const auto votes = ensemble_predict({&a, &b}, {&x0}, {&x1}, EnsembleMode::vote).front();
  CHECK(votes == std::vector<double>{0.0, 0.5, 0.5, 0.0});

  models::FusionClassifier early(toy_fusion(models::FusionKind::early), 1);
  CHECK_THROWS_AS(ensemble_predict({&a, &early}, {&x0}, {&x1}), std::invalid_argument);
  CHECK_THROWS_AS(ensemble_predict({}, {&x0}, {&x1}), std::invalid_argument);
}

TEST_CASE("argmax breaks ties toward the lowest index") {
  CHECK(argmax({0.25, 0.25, 0.25, 0.25}) == 0);
  CHECK(argmax({0.1, 0.4, 0.4, 0.1}) == 1);
  CHECK(argmax({0.0, 0.0, 1.0}) == 2);
  CHECK_THROWS_AS(argmax({}), std::invalid_argument);
}

TEST_CASE("property: ensemble output is a probability vector") {
  Rng gen(13);
  for (int trial = 0; trial < 20; ++trial) {
    const auto kind = trial % 2 ? models::FusionKind::early : models::FusionKind::late;
    std::vector<std::unique_ptr<models::FusionClassifier>> owned;
    std::vector<const models::FusionClassifier*> ms;
    const std::size_t n_models = 1 + gen.below(4);
    for (std::size_t m = 0; m < n_models; ++m) {
      owned.push_back(std::make_unique<models::FusionClassifier>(toy_fusion(kind), gen.next()));
      ms.push_back(owned.back().get());
    }
    std::vector<GrayImage> a, b;
    const std::size_t batch = 1 + gen.below(3);
    for (std::size_t i = 0; i < batch; ++i) {
      a.push_back(random_image(gen, 16, 16));
      b.push_back(random_image(gen, 16, 16));
    }
    std::vector<const GrayImage*> pa, pb;
    for (std::size_t i = 0; i < batch; ++i) {
      pa.push_back(&a[i]);
      pb.push_back(&b[i]);
    }
    for (auto mode : {EnsembleMode::mean_softmax, EnsembleMode::vote}) {
      for (const auto& p : ensemble_predict(ms, pa, pb, mode)) {
        CHECK(std::all_of(p.begin(), p.end(), [](double v) { return v >= 0.0; }));
        CHECK(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0) <= 1e-12);
      }
    }
  }
}

TEST_CASE("task-2 prediction drops the fourth class and is seed-deterministic") {
  const models::PPMAE ppmae(toy_ppmae(), 5);
  const auto mc = toy_fusion(models::FusionKind::late);
  models::FusionClassifier heavy(mc, 2), plain(mc, 3);
  make_constant(heavy, {0.0, 1.0, 2.0, 50.0});
  Rng rng(14);
  for (int trial = 0; trial < 10; ++trial) {
    const auto t0 = random_image(rng, 16, 16);
    const auto p = task2_probabilities(ppmae, {&heavy}, t0, 7);
    REQUIRE(p.size() == 3);
    CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(p[2] > p[1]);
    CHECK(predict_task2(ppmae, {&heavy}, t0, 7) == 2);
    const int c = predict_task2(ppmae, {&plain, &heavy}, t0, 8);
    CHECK((c >= 0 && c <= 2));
    CHECK(task2_probabilities(ppmae, {&plain}, t0, 9) == task2_probabilities(ppmae, {&plain}, t0, 9));
  }
  CHECK(reconstruction_seed(1, "A") == reconstruction_seed(1, "A"));
  CHECK(reconstruction_seed(1, "A") != reconstruction_seed(1, "B"));
  CHECK(reconstruction_seed(1, "A") != reconstruction_seed(2, "A"));
}

TEST_CASE("task-2 fine-tuning: zero epochs, smoke run, determinism and errors") {
  const auto samples = random_pairs(8, 16, 2, 15);
  const models::PPMAE ppmae(toy_ppmae(), 5);
  models::FusionClassifier a(toy_fusion(models::FusionKind::late), 1);
  const models::FusionClassifier b(toy_fusion(models::FusionKind::late), 2);
  nx::Tensor(a.params().get("head.fc.bias")).mutable_values()[3] = 0.7;
  auto cfg = quick(Task::finetune_task2, 0);

  const auto same = finetune_task2({&a, &b}, ppmae, samples, cfg);
  REQUIRE(same.size() == 2);
  CHECK(flat_params(*same[0]) == flat_params(a));
  CHECK(flat_params(*same[1]) == flat_params(b));

  cfg.epochs = 1;
  cfg.lr = 1e-3;
  const auto tuned = finetune_task2({&a, &b}, ppmae, samples, cfg);
  CHECK(flat_params(*tuned[0]) != flat_params(a));
  CHECK(flat_params(*tuned[1]) != flat_params(b));
  const auto again = finetune_task2({&a, &b}, ppmae, samples, cfg);
  CHECK(flat_params(*tuned[0]) == flat_params(*again[0]));
  CHECK(flat_params(*tuned[1]) == flat_params(*again[1]));

  // The fourth logit gets no gradient from the three-class loss, so only
  // weight decay moves its bias: six Task-2 labels in batches of four.
  const double decay = 1.0 - cfg.lr * cfg.weight_decay;
  CHECK(tuned[0]->params().get("head.fc.bias").values()[3] == doctest::Approx(0.7 * decay * decay).epsilon(1e-12));

  auto unlabeled = samples;
  for (auto& s : unlabeled) s.label_task2.reset();
  CHECK_THROWS_AS(finetune_task2({&a}, ppmae, unlabeled, cfg), std::invalid_argument);
  CHECK_THROWS_AS(finetune_task2({}, ppmae, samples, cfg), std::invalid_argument);
}
