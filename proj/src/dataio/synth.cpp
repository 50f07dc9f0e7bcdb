#include "ppmae/dataio/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "ppmae/util/parallel.hpp"
#include "ppmae/util/rng.hpp"

namespace ppmae::data {

namespace {

constexpr double kVitreous = 0.05;
constexpr double kInnerLayer = 0.85;
constexpr double kStroma = 0.55;
constexpr double kRpe = 0.95;
constexpr double kChoroid = 0.30;
constexpr double kDeep = 0.15;
constexpr double kPocketBase = 0.04;
constexpr double kRadiusJitter = 0.15;
constexpr double kEdgeMargin = 2.0;

struct Scene {
  double top_center;
  double slope;
  double pocket_col;
  double pocket_ry;
  double pocket_fill;
};

double band_top(const Scene& s, double col, std::size_t width) {
  return s.top_center + s.slope * (col - 0.5 * static_cast<double>(width - 1));
}

GrayImage draw(const SynthConfig& cfg, const Scene& s) {
  GrayImage img(cfg.height, cfg.width);
  const double rx = s.pocket_ry * cfg.pocket_aspect;
  const double pocket_row = band_top(s, s.pocket_col, cfg.width) + 0.5 * cfg.band_thickness;
  const long thick = std::lround(cfg.band_thickness);
  for (std::size_t c = 0; c < cfg.width; ++c) {
    const long top = std::lround(band_top(s, static_cast<double>(c), cfg.width));
    for (std::size_t r = 0; r < cfg.height; ++r) {
      const long d = static_cast<long>(r) - top;
      double v;
      if (d < 0) {
        v = kVitreous;
      } else if (d < 3) {
        v = kInnerLayer;
      } else if (d < thick - 3) {
        v = kStroma;
      } else if (d < thick) {
        v = kRpe;
      } else if (d < thick + 8) {
        v = kChoroid;
      } else {
        v = kDeep;
      }
      if (d >= 3 && d < thick - 3) {
        const double dy = (static_cast<double>(r) - pocket_row) / s.pocket_ry;
        const double dx = (static_cast<double>(c) - s.pocket_col) / rx;
        if (dx * dx + dy * dy <= 1.0) v = s.pocket_fill;
      }
      img.at(r, c) = v;
    }
  }
  return img;
}

void add_noise(GrayImage& img, double sigma, Rng& rng) {
  for (auto& p : img.pixels) p = std::clamp(p + sigma * rng.normal(), 0.0, 1.0);
}

// Heavy multiplicative speckle, additive noise and impulse noise.
void corrupt(GrayImage& img, Rng& rng) {
  for (auto& p : img.pixels) {
    double v = p * std::exp(0.6 * rng.normal()) + 0.2 * rng.normal();
    const double u = rng.uniform();
    if (u < 0.04) {
      v = 0.0;
    } else if (u < 0.08) {
      v = 1.0;
    }
    p = std::clamp(v, 0.0, 1.0);
  }
}

}  // namespace

void SynthConfig::validate() const {
  if (height == 0 || width == 0) throw std::invalid_argument("synth: image dimensions must be positive");
  if (!(growth_factor > 1.0)) throw std::invalid_argument("synth: growth_factor must be > 1");
  if (!(noise >= 0.0 && noise < 1.0)) throw std::invalid_argument("synth: noise must lie in [0, 1)");
  if (band_top_min > band_top_max || tilt < 0.0 || depth_jitter < 0.0 || band_thickness < 8.0) {
    throw std::invalid_argument("synth: invalid band geometry");
  }
  if (pocket_radius <= 0.0 || pocket_aspect <= 0.0 || activity_cue < 0.0) {
    throw std::invalid_argument("synth: invalid pocket geometry");
  }
  if (kPocketBase + 2.0 * activity_cue >= kStroma) {
    throw std::invalid_argument("synth: activity_cue makes the pocket as bright as the surrounding tissue");
  }
  if (band_top_min - 0.5 * tilt - depth_jitter < 2.0 ||
      band_top_max + 0.5 * tilt + depth_jitter + band_thickness + 1.0 > static_cast<double>(height)) {
    throw std::invalid_argument("synth: band does not fit inside the image");
  }
  const double ry_max = pocket_radius * (1.0 + kRadiusJitter) * std::sqrt(growth_factor);
  if (ry_max > 0.5 * band_thickness - 3.0 - kEdgeMargin ||
      2.0 * (ry_max * pocket_aspect + kEdgeMargin) >= static_cast<double>(width)) {
    throw std::invalid_argument("synth: pocket cannot fit inside the band for this geometry");
  }
  const double total = std::accumulate(class_balance.begin(), class_balance.end(), 0.0);
  if (!(total > 0.0) || std::any_of(class_balance.begin(), class_balance.end(), [](double w) { return w < 0; })) {
    throw std::invalid_argument("synth: class balance must be non-negative with positive sum");
  }
  if (pairs_per_patient == 0) throw std::invalid_argument("synth: pairs_per_patient must be positive");
}

std::vector<int> synth_class_plan(const SynthConfig& config, std::size_t n_pairs) {
  const double total = std::accumulate(config.class_balance.begin(), config.class_balance.end(), 0.0);
  std::array<std::size_t, 4> counts{};
  std::array<double, 4> remainder{};
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < 4; ++k) {
    const double exact = static_cast<double>(n_pairs) * config.class_balance[k] / total;
    counts[k] = static_cast<std::size_t>(std::floor(exact));
    remainder[k] = exact - static_cast<double>(counts[k]);
    assigned += counts[k];
  }
  std::array<std::size_t, 4> order{0, 1, 2, 3};
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return remainder[a] > remainder[b]; });
  for (std::size_t i = 0; assigned < n_pairs; ++i, ++assigned) ++counts[order[i % 4]];

  std::vector<int> plan;
  plan.reserve(n_pairs);
  for (int k = 0; k < 4; ++k) plan.insert(plan.end(), counts[static_cast<std::size_t>(k)], k);
  Rng rng(hash_seed({config.seed, 0x636c6173ULL}));
  rng.shuffle(plan);
  return plan;
}

PairSample render_pair(const SynthConfig& cfg, std::size_t index, std::size_t n_pairs, SynthTruth* truth) {
  cfg.validate();
  if (index >= n_pairs) throw std::out_of_range("render_pair: index beyond dataset size");
  const int label = synth_class_plan(cfg, n_pairs)[index];
  Rng rng(hash_seed({cfg.seed, 0x70616972ULL, index}));

  const double w = static_cast<double>(cfg.width);
  Scene s0;
  s0.top_center = rng.uniform(cfg.band_top_min, cfg.band_top_max);
  s0.slope = rng.uniform(-cfg.tilt, cfg.tilt) / w;
  const double small = cfg.pocket_radius * rng.uniform(1.0 - kRadiusJitter, 1.0 + kRadiusJitter);
  const double large = small * std::sqrt(cfg.growth_factor);
  const double middle = small * std::pow(cfg.growth_factor, 0.5 * rng.uniform());
  const double rx_max = large * cfg.pocket_aspect + kEdgeMargin;
  s0.pocket_col = rng.uniform(std::max(0.2 * w, rx_max), std::min(0.8 * w, w - 1.0 - rx_max));

  Scene s1 = s0;
  s1.top_center = s0.top_center + (cfg.depth_jitter > 0.0 ? rng.uniform(-cfg.depth_jitter, cfg.depth_jitter) : 0.0);
  static constexpr int kActivity[4] = {2, 1, 0, 1};
  s0.pocket_fill = kPocketBase + cfg.activity_cue * kActivity[label];
  s1.pocket_fill = kPocketBase + cfg.activity_cue;
  switch (label) {
    case 0:
      s0.pocket_ry = large;
      s1.pocket_ry = small;
      break;
    case 2:
      s0.pocket_ry = small;
      s1.pocket_ry = large;
      break;
    default:
      s0.pocket_ry = middle;
      s1.pocket_ry = middle;
      break;
  }

  PairSample out;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%sC%05zu", cfg.id_prefix.c_str(), index);
  out.case_id = buf;
  std::snprintf(buf, sizeof buf, "%sP%04zu", cfg.id_prefix.c_str(), index / cfg.pairs_per_patient);
  out.patient_id = buf;
  out.image_t0 = draw(cfg, s0);
  out.image_t1 = draw(cfg, s1);
  add_noise(out.image_t0, cfg.noise, rng);
  add_noise(out.image_t1, cfg.noise, rng);
  if (label == 3) corrupt(out.image_t1, rng);
  out.image_t0 = quantize8(out.image_t0);
  out.image_t1 = quantize8(out.image_t1);
  out.label_task1 = label;
  if (label < 3) out.label_task2 = label;
  out.split = Split::train;

  if (truth) {
    truth->label = label;
    truth->band_top_t0 = s0.top_center;
    truth->band_top_t1 = s1.top_center;
    truth->slope = s0.slope;
    truth->pocket_col = s0.pocket_col;
    truth->pocket_ry_t0 = s0.pocket_ry;
    truth->pocket_ry_t1 = s1.pocket_ry;
  }
  return out;
}

std::vector<PairSample> generate_samples(const SynthConfig& config, std::size_t n_pairs) {
  if (n_pairs == 0) throw std::invalid_argument("generate_synthetic: n_pairs must be positive");
  config.validate();
  std::vector<PairSample> out(n_pairs);
  parallel_for(n_pairs, [&](std::size_t i) { out[i] = render_pair(config, i, n_pairs); });
  return out;
}

Manifest generate_synthetic(const SynthConfig& config, std::size_t n_pairs, const std::filesystem::path& out_dir) {
  const auto samples = generate_samples(config, n_pairs);
  std::filesystem::create_directories(out_dir / "images");
  Manifest m;
  m.source_dir = out_dir;
  m.rows.resize(n_pairs);
  parallel_for(n_pairs, [&](std::size_t i) {
    const auto& s = samples[i];
    PairRecord& r = m.rows[i];
    r.case_id = s.case_id;
    r.patient_id = s.patient_id;
    r.image_t0 = std::filesystem::path("images") / (s.case_id + "_t0.pgm");
    r.image_t1 = std::filesystem::path("images") / (s.case_id + "_t1.pgm");
    r.label_task1 = s.label_task1;
    r.label_task2 = s.label_task2;
    r.split = s.split;
    save_pgm(s.image_t0, out_dir / r.image_t0);
    save_pgm(s.image_t1, out_dir / r.image_t1);
  });
  return m;
}

}  // namespace ppmae::data
