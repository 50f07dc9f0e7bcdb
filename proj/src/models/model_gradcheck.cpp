#include "ppmae/models/model_gradcheck.hpp"

#include "ppmae/models/fusion.hpp"
#include "ppmae/models/ppmae.hpp"
#include "ppmae/numerics/losses.hpp"

namespace ppmae::models {

namespace {

nx::Tensor random_images(Rng& rng, nx::Shape shape) {
  std::vector<double> v(nx::numel(shape));
  for (auto& x : v) x = rng.uniform();
  return nx::Tensor(std::move(shape), std::move(v), true);
}

}  // namespace

std::vector<nx::GradCheckResult> model_gradcheck_suite(std::uint64_t seed) {
  std::vector<nx::GradCheckResult> results;
  Rng rng(hash_seed({seed, 0x6d6f64656cULL}));
  nx::GradCheckOptions opt;
  opt.seed = seed;

  for (auto kind : {FusionKind::early, FusionKind::late}) {
    FusionConfig cfg = FusionConfig::desk(kind);
    cfg.encoder.widths = {4, 8};
    cfg.encoder.feature_dim = 8;
    cfg.image_h = cfg.image_w = 16;
    FusionClassifier model(cfg, seed);
    const auto t0 = random_images(rng, {2, 1, 16, 16});
    const auto t1 = random_images(rng, {2, 1, 16, 16});
    const std::vector<int> labels{1, 3};
    auto inputs = model.parameters();
    inputs.push_back(t0);
    inputs.push_back(t1);
    results.push_back(nx::check_gradients(
        model.kind() + " (cross-entropy)",
        [&](const std::vector<nx::Tensor>&) { return nx::cross_entropy_loss(model.logits(t0, t1), labels); },
        inputs, opt));
  }

  PPMAEConfig cfg;
  cfg.image_h = cfg.image_w = 16;
  cfg.patch = 4;
  cfg.enc_dim = cfg.dec_dim = 8;
  cfg.enc_heads = cfg.dec_heads = 2;
  cfg.enc_depth = cfg.dec_depth = 1;
  PPMAE model(cfg, seed);
  const auto t0 = random_images(rng, {2, 16, 16});
  const auto t1 = random_images(rng, {2, 16, 16});
  const std::vector<patch::MaskPlan> plans{patch::sample_mask(16, 0.75, seed), patch::sample_mask(16, 0.75, seed + 1)};
  auto inputs = model.parameters();
  inputs.push_back(t0);
  inputs.push_back(t1);
  results.push_back(nx::check_gradients(
      "ppmae (masked mse vs t1)",
      [&](const std::vector<nx::Tensor>&) { return ppmae_loss(model.predict(t0, plans), t1, plans, cfg.patch); },
      inputs, opt));
  return results;
}

}  // namespace ppmae::models
