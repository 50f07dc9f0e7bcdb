#include "doctest.h"

#include <algorithm>
#include <map>

#include "ppmae/dataio/synth.hpp"
#include "ppmae/preprocess/preprocess.hpp"
#include "ppmae/util/rng.hpp"

using namespace ppmae;
using namespace ppmae::prep;
using data::GrayImage;

namespace {

GrayImage band_image(std::size_t h, std::size_t w, const std::vector<std::size_t>& tops) {
  GrayImage img(h, w, 0.0);
  for (std::size_t c = 0; c < w; ++c) {
    for (std::size_t r = tops[c]; r < h; ++r) img.at(r, c) = 1.0;
  }
  return img;
}

// Brute-force detector: explicit window sums, nearest-neighbour fill by
// full scan, and a sorted-window median.
std::vector<std::size_t> oracle_detect(const GrayImage& img, double thr, std::size_t win) {
  const long H = static_cast<long>(img.height), W = static_cast<long>(img.width);
  std::vector<long> raw(img.width, -1);
  for (long c = 0; c < W; ++c) {
    for (long r = 0; r < H; ++r) {
      double s = 0;
      int n = 0;
      for (long k = r - 1; k <= r + 1; ++k) {
        if (k >= 0 && k < H) {
          s += img.at(static_cast<std::size_t>(k), static_cast<std::size_t>(c));
          ++n;
        }
      }
      if (s / n > thr) {
        raw[static_cast<std::size_t>(c)] = r;
        break;
      }
    }
  }
  std::vector<long> filled(raw);
  for (long c = 0; c < W; ++c) {
    if (raw[static_cast<std::size_t>(c)] >= 0) continue;
    long best = -1, best_d = W + 1;
    for (long j = 0; j < W; ++j) {
      if (raw[static_cast<std::size_t>(j)] < 0) continue;
      const long d = std::abs(j - c);
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    filled[static_cast<std::size_t>(c)] = raw[static_cast<std::size_t>(best)];
  }
  std::vector<std::size_t> out(img.width);
  const long half = static_cast<long>(win / 2);
  for (long c = 0; c < W; ++c) {
    std::vector<long> window;
    for (long k = c - half; k <= c + half; ++k) window.push_back(filled[static_cast<std::size_t>(std::clamp(k, 0L, W - 1))]);
    std::sort(window.begin(), window.end());
    out[static_cast<std::size_t>(c)] = static_cast<std::size_t>(window[window.size() / 2]);
  }
  return out;
}

data::SynthConfig clean_config(std::uint64_t seed) {
  data::SynthConfig cfg;
  cfg.noise = 0.0;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("surface detection on constructed bands") {
  const auto flat = band_image(32, 12, std::vector<std::size_t>(12, 5));
  CHECK(detect_surface(flat, 0.5, 1).rows == std::vector<std::size_t>(12, 5));
  CHECK(detect_surface(flat, 0.5, 5).rows == std::vector<std::size_t>(12, 5));

  std::vector<std::size_t> tilt(16);
  for (std::size_t c = 0; c < 16; ++c) tilt[c] = 5 + c;
  CHECK(detect_surface(band_image(40, 16, tilt), 0.5, 5).rows == tilt);

  auto spiky = band_image(32, 12, std::vector<std::size_t>(12, 10));
  spiky.at(2, 6) = 1.0;
  spiky.at(3, 6) = 1.0;
  const auto raw = detect_surface(spiky, 0.5, 1);
  CHECK(raw.rows[6] < 10);
  const auto smooth = detect_surface(spiky, 0.5, 5);
  CHECK(smooth.rows == std::vector<std::size_t>(12, 10));
  CHECK(smooth.rows == oracle_detect(spiky, 0.5, 5));
}

TEST_CASE("columns without a crossing inherit the nearest detected column") {
  auto img = band_image(20, 7, {4, 4, 4, 4, 9, 9, 9});
  for (std::size_t r = 0; r < 20; ++r) {
    img.at(r, 0) = 0.0;
    img.at(r, 3) = 0.0;
  }
  const auto p = detect_surface(img, 0.5, 1);
  CHECK(p.rows == std::vector<std::size_t>{4, 4, 4, 4, 9, 9, 9});
  CHECK_THROWS_AS(detect_surface(GrayImage(10, 10, 0.0), 0.5, 3), SurfaceError);
  CHECK_THROWS_AS(detect_surface(img, 0.0, 3), std::invalid_argument);
  CHECK_THROWS_AS(detect_surface(img, 0.5, 4), std::invalid_argument);
}

TEST_CASE("detector matches the brute-force oracle on random images") {
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t h = 3 + rng.below(20), w = 1 + rng.below(25);
    GrayImage img(h, w);
    for (auto& p : img.pixels) p = rng.uniform() < 0.3 ? rng.uniform() : 0.1 * rng.uniform();
    img.at(rng.below(h), rng.below(w)) = 1.0;
    img.at(std::min(h - 1, rng.below(h) + 1), rng.below(w)) = 1.0;
    const double thr = 0.2 + 0.3 * rng.uniform();
    const std::size_t win = 1 + 2 * rng.below(4);
    bool any = false;
    try {
      const auto got = detect_surface(img, thr, win);
      any = true;
      CHECK(got.rows == oracle_detect(img, thr, win));
    } catch (const SurfaceError&) {
    }
    (void)any;
  }
}

TEST_CASE("fusion takes the elementwise median with half-up rounding") {
  const SurfaceProfile a{{4, 4, 4}}, b{{6, 6, 6}}, c{{9, 5, 4}};
  CHECK(fuse_surfaces(std::vector{a, a}).rows == a.rows);
  CHECK(fuse_surfaces(std::vector{a, b}).rows == std::vector<std::size_t>{5, 5, 5});
  CHECK(fuse_surfaces(std::vector{SurfaceProfile{{4}}, SurfaceProfile{{5}}}).rows == std::vector<std::size_t>{5});
  CHECK(fuse_surfaces(std::vector{SurfaceProfile{{4}}, SurfaceProfile{{5}}, SurfaceProfile{{9}}}).rows ==
        std::vector<std::size_t>{5});
  CHECK(fuse_surfaces(std::vector{a, b, c}).rows == std::vector<std::size_t>{6, 5, 4});
  CHECK_THROWS_AS(fuse_surfaces(std::vector{a, SurfaceProfile{{1, 2}}}), std::invalid_argument);
  CHECK_THROWS_AS(fuse_surfaces(std::vector<SurfaceProfile>{}), std::invalid_argument);
}

TEST_CASE("fusion is permutation invariant and idempotent") {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 1 + rng.below(6), w = 1 + rng.below(10);
    std::vector<SurfaceProfile> ps(k);
    for (auto& p : ps) {
      p.rows.resize(w);
      for (auto& r : p.rows) r = rng.below(50);
    }
    const auto ref = fuse_surfaces(ps);
    rng.shuffle(ps);
    CHECK(fuse_surfaces(ps) == ref);
    const std::vector<SurfaceProfile> same(k, ps[0]);
    CHECK(fuse_surfaces(same) == ps[0]);
  }
}

TEST_CASE("flatten shifts columns and zero-fills") {
  Rng rng(12);
  GrayImage img(10, 4);
  for (auto& p : img.pixels) p = rng.uniform();
  CHECK(flatten(img, SurfaceProfile{{0, 0, 0, 0}}) == img);
  const auto out = flatten(img, SurfaceProfile{{0, 5, 2, 9}});
  CHECK(out.at(0, 1) == img.at(5, 1));
  CHECK(out.at(4, 1) == img.at(9, 1));
  CHECK(out.at(5, 1) == 0.0);
  CHECK(out.at(0, 3) == img.at(9, 3));
  for (std::size_t r = 1; r < 10; ++r) CHECK(out.at(r, 3) == 0.0);
  CHECK_THROWS_AS(flatten(img, SurfaceProfile{{0, 0}}), std::invalid_argument);
}

TEST_CASE("flatten keeps the shifted pixels of every column") {
  Rng rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t h = 1 + rng.below(15), w = 1 + rng.below(8);
    GrayImage img(h, w);
    for (auto& p : img.pixels) p = 0.01 + rng.uniform();
    SurfaceProfile s;
    for (std::size_t c = 0; c < w; ++c) s.rows.push_back(rng.below(h));
    const auto out = flatten(img, s);
    for (std::size_t c = 0; c < w; ++c) {
      std::vector<double> kept, moved;
      for (std::size_t r = s.rows[c]; r < h; ++r) kept.push_back(img.at(r, c));
      for (std::size_t r = 0; r < h; ++r) {
        if (out.at(r, c) != 0.0) moved.push_back(out.at(r, c));
      }
      std::sort(kept.begin(), kept.end());
      std::sort(moved.begin(), moved.end());
      CHECK(kept == moved);
    }
  }
}

TEST_CASE("flattening clean synthetic scans is idempotent") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const auto s = data::render_pair(clean_config(seed), 0, 4);
    const auto once = flatten(s.image_t0, detect_surface(s.image_t0, 0.4, 5));
    const auto redetected = detect_surface(once, 0.4, 5);
    CHECK(redetected.rows == std::vector<std::size_t>(once.width, 0));
    CHECK(flatten(once, redetected) == once);
  }
}

TEST_CASE("crop and resize") {
  Rng rng(8);
  GrayImage img(6, 5);
  for (auto& p : img.pixels) p = rng.uniform();
  CHECK(crop_and_resize(img, 6, 6, 5) == img);
  const auto c = crop_and_resize(GrayImage(6, 5, 0.7), 3, 9, 11);
  CHECK(c.height == 9);
  CHECK(c.width == 11);
  for (double p : c.pixels) CHECK(p == doctest::Approx(0.7));
  const GrayImage checker(2, 2, std::vector<double>{1.0, 0.0, 0.0, 1.0});
  CHECK(crop_and_resize(checker, 2, 1, 1).pixels[0] == doctest::Approx(0.5));
  const auto top = crop_and_resize(img, 2, 2, 5);
  for (std::size_t i = 0; i < 10; ++i) CHECK(top.pixels[i] == img.pixels[i]);
  CHECK_THROWS_AS(crop_and_resize(img, 7, 2, 2), std::invalid_argument);
  CHECK_THROWS_AS(crop_and_resize(img, 3, 0, 2), std::invalid_argument);
}

TEST_CASE("pair preprocessing") {
  PreprocessParams params;
  params.out_h = 32;
  params.out_w = 80;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto s = data::render_pair(clean_config(seed), 0, 4);
    const auto out = preprocess_pair(s, params);
    CHECK(out.image_t0.height == 32);
    CHECK(out.image_t1.width == 80);
    CHECK(out.label_task1 == s.label_task1);
    CHECK(out.case_id == s.case_id);
    CHECK(detect_surface(out.image_t0, 0.4, 5).rows == std::vector<std::size_t>(80, 0));
    CHECK(detect_surface(out.image_t1, 0.4, 5).rows == std::vector<std::size_t>(80, 0));
  }

  auto twin = data::render_pair(data::SynthConfig{}, 3, 10);
  twin.image_t1 = twin.image_t0;
  const auto tw = preprocess_pair(twin, params);
  CHECK(tw.image_t0 == tw.image_t1);

  data::SynthConfig cfg;
  cfg.class_balance = {0, 0, 0, 1};
  const auto other = data::render_pair(cfg, 0, 1);
  REQUIRE(other.label_task1 == 3);
  const auto oo = preprocess_pair(other, params);
  CHECK(oo.image_t1.height == 32);

  data::PairSample blank = twin;
  blank.image_t0 = GrayImage(64, 160, 0.0);
  blank.image_t1 = blank.image_t0;
  CHECK_NOTHROW(preprocess_pair(blank, params));

  params.thresholds.clear();
  CHECK_THROWS_AS(preprocess_pair(twin, params), std::invalid_argument);
}

TEST_CASE("noisy synthetic scans flatten to a surface at row zero") {
  PreprocessParams params;
  data::SynthConfig cfg;
  cfg.seed = 17;
  cfg.depth_jitter = 4.0;
  std::size_t zero_cols = 0, total = 0;
  for (std::size_t i = 0; i < 12; ++i) {
    const auto s = data::render_pair(cfg, i, 12);
    if (s.label_task1 == 3) continue;
    const auto out = preprocess_pair(s, params);
    for (const auto* img : {&out.image_t0, &out.image_t1}) {
      const auto p = detect_surface(*img, 0.4, 5);
      zero_cols += static_cast<std::size_t>(std::count(p.rows.begin(), p.rows.end(), std::size_t{0}));
      total += p.rows.size();
    }
  }
  CHECK(zero_cols == total);
}
