#include "ppmae/models/fusion.hpp"

#include <stdexcept>

#include "ppmae/numerics/ops.hpp"

namespace ppmae::models {

namespace {

std::size_t conv_out(std::size_t n, std::size_t stride) { return (n - 1) / stride + 1; }

}  // namespace

void EncoderConfig::validate() const {
  if (in_channels == 0) throw std::invalid_argument("encoder: in_channels must be positive");
  if (widths.empty()) throw std::invalid_argument("encoder: at least one stage width is required");
  for (auto w : widths) {
    if (w == 0) throw std::invalid_argument("encoder: stage widths must be positive");
  }
  if (blocks_per_stage == 0) throw std::invalid_argument("encoder: blocks_per_stage must be positive");
  if (feature_dim == 0) throw std::invalid_argument("encoder: feature_dim must be positive");
}

nlohmann::json EncoderConfig::to_json() const {
  return {{"in_channels", in_channels},
          {"widths", widths},
          {"blocks_per_stage", blocks_per_stage},
          {"feature_dim", feature_dim}};
}

EncoderConfig EncoderConfig::from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.in_channels = j.at("in_channels").get<std::size_t>();
  c.widths = j.at("widths").get<std::vector<std::size_t>>();
  c.blocks_per_stage = j.at("blocks_per_stage").get<std::size_t>();
  c.feature_dim = j.at("feature_dim").get<std::size_t>();
  c.validate();
  return c;
}

ResidualEncoder::ResidualEncoder(const EncoderConfig& config, ParamStore& store, const std::string& prefix,
                                 std::uint64_t seed)
    : config_(config) {
  config_.validate();
  Rng rng(seed);
  const std::string p = prefix + ".";
  const std::size_t c0 = config_.widths.front();
  stem_w_ = store.add(p + "stem.weight",
                      init::fan_in_normal({c0, config_.in_channels, 3, 3}, config_.in_channels * 9, 2.0, rng));
  stem_b_ = store.add(p + "stem.bias", init::zeros({c0}));
  std::size_t cin = c0;
  for (std::size_t s = 0; s < config_.widths.size(); ++s) {
    const std::size_t cout = config_.widths[s];
    for (std::size_t k = 0; k < config_.blocks_per_stage; ++k) {
      Block b;
      b.stride = (s > 0 && k == 0) ? 2 : 1;
      const std::string bp = p + "stage" + std::to_string(s) + ".block" + std::to_string(k) + ".";
      b.w1 = store.add(bp + "conv1.weight", init::fan_in_normal({cout, cin, 3, 3}, cin * 9, 2.0, rng));
      b.b1 = store.add(bp + "conv1.bias", init::zeros({cout}));
      // Residual branch starts at half the Kaiming variance.
      b.w2 = store.add(bp + "conv2.weight", init::fan_in_normal({cout, cout, 3, 3}, cout * 9, 1.0, rng));
      b.b2 = store.add(bp + "conv2.bias", init::zeros({cout}));
      if (b.stride != 1 || cin != cout) {
        b.proj_w = store.add(bp + "shortcut.weight", init::fan_in_normal({cout, cin, 1, 1}, cin, 1.0, rng));
        b.proj_b = store.add(bp + "shortcut.bias", init::zeros({cout}));
      }
      blocks_.push_back(b);
      cin = cout;
    }
  }
  out_w_ = store.add(p + "proj.weight", init::fan_in_normal({cin, config_.feature_dim}, cin, 2.0, rng));
  out_b_ = store.add(p + "proj.bias", init::zeros({config_.feature_dim}));
}

nx::Tensor ResidualEncoder::forward(const nx::Tensor& x) const {
  if (x.dim() != 4 || x.size(1) != config_.in_channels) {
    throw nx::ShapeError("encoder: expected [B, " + std::to_string(config_.in_channels) + ", H, W], got " +
                         nx::to_string(x.shape()));
  }
  std::size_t h = conv_out(x.size(2), 2), w = conv_out(x.size(3), 2);
  if (h < 2 || w < 2) throw nx::ShapeError("encoder: input " + nx::to_string(x.shape()) + " is too small");
  auto y = nx::scale(nx::add(x, nx::Tensor::scalar(-0.5)), 2.0);
  y = nx::relu(nx::conv2d(y, stem_w_, stem_b_, {2, 1}));
  y = nx::max_pool2d(y, 2, 2);
  for (const auto& b : blocks_) {
    auto r = nx::relu(nx::conv2d(y, b.w1, b.b1, {b.stride, 1}));
    r = nx::conv2d(r, b.w2, b.b2, {1, 1});
    const auto shortcut = b.proj_w.defined() ? nx::conv2d(y, b.proj_w, b.proj_b, {b.stride, 0}) : y;
    y = nx::relu(nx::add(r, shortcut));
  }
  const std::size_t B = y.size(0), C = y.size(1);
  y = nx::mean(nx::reshape(y, {B, C, y.size(2) * y.size(3)}), 2);
  return nx::relu(nx::linear(y, out_w_, out_b_));
}

std::string to_string(FusionKind kind) { return kind == FusionKind::early ? "early" : "late"; }

FusionKind parse_fusion_kind(const std::string& s) {
  if (s == "early" || s == "fusion-early") return FusionKind::early;
  if (s == "late" || s == "fusion-late") return FusionKind::late;
  throw std::invalid_argument("unknown fusion kind '" + s + "' (expected early or late)");
}

FusionConfig FusionConfig::desk(FusionKind kind) {
  FusionConfig c;
  c.kind = kind;
  c.encoder = EncoderConfig{kind == FusionKind::early ? 2u : 3u, {16, 32, 64}, 1, 128};
  return c;
}

FusionConfig FusionConfig::paper(FusionKind kind) {
  FusionConfig c;
  c.kind = kind;
  c.encoder = EncoderConfig{kind == FusionKind::early ? 2u : 3u, {64, 128, 256, 512}, 1, 2048};
  c.image_h = 200;
  c.image_w = 512;
  return c;
}

void FusionConfig::validate() const {
  encoder.validate();
  const std::size_t want = kind == FusionKind::early ? 2 : 3;
  if (encoder.in_channels != want) {
    throw std::invalid_argument(to_string(kind) + " fusion needs an encoder with " + std::to_string(want) +
                                " input channels, got " + std::to_string(encoder.in_channels));
  }
  if (image_h < 4 || image_w < 4) throw std::invalid_argument("fusion: image size must be at least 4x4");
  if (num_classes < 2) throw std::invalid_argument("fusion: need at least two classes");
}

nlohmann::json FusionConfig::to_json() const {
  return {{"kind", to_string(kind)},
          {"encoder", encoder.to_json()},
          {"image_h", image_h},
          {"image_w", image_w},
          {"num_classes", num_classes}};
}

FusionConfig FusionConfig::from_json(const nlohmann::json& j) {
  FusionConfig c;
  c.kind = parse_fusion_kind(j.at("kind").get<std::string>());
  c.encoder = EncoderConfig::from_json(j.at("encoder"));
  c.image_h = j.at("image_h").get<std::size_t>();
  c.image_w = j.at("image_w").get<std::size_t>();
  c.num_classes = j.at("num_classes").get<std::size_t>();
  c.validate();
  return c;
}

namespace {

const FusionConfig& validated(const FusionConfig& c) {
  c.validate();
  return c;
}

}  // namespace

FusionClassifier::FusionClassifier(const FusionConfig& config, std::uint64_t seed)
    : config_(validated(config)),
      encoder_(config_.encoder, params_, "encoder", hash_seed({seed, 0x656e63ULL})) {
  Rng rng(hash_seed({seed, 0x68656164ULL}));
  const std::size_t D = config_.encoder.feature_dim, K = config_.num_classes;
  if (config_.kind == FusionKind::early) {
    fc1_w_ = params_.add("head.fc1.weight", init::fan_in_normal({D, D}, D, 2.0, rng));
    fc1_b_ = params_.add("head.fc1.bias", init::zeros({D}));
    fc2_w_ = params_.add("head.fc2.weight", init::fan_in_normal({D, K}, D, 1.0, rng));
    fc2_b_ = params_.add("head.fc2.bias", init::zeros({K}));
  } else {
    fc1_w_ = params_.add("head.fc.weight", init::fan_in_normal({2 * D, K}, 2 * D, 1.0, rng));
    fc1_b_ = params_.add("head.fc.bias", init::zeros({K}));
  }
}

std::string FusionClassifier::kind() const { return to_string(config_.kind) + "_fusion"; }

nx::Tensor FusionClassifier::fused_input(const nx::Tensor& t0, const nx::Tensor& t1) const {
  if (t0.shape() != t1.shape()) {
    throw nx::ShapeError("fusion: t0 " + nx::to_string(t0.shape()) + " and t1 " + nx::to_string(t1.shape()) +
                         " differ");
  }
  if (t0.dim() != 4 || t0.size(1) != 1) {
    throw nx::ShapeError("fusion: expected [B, 1, H, W], got " + nx::to_string(t0.shape()));
  }
  if (config_.kind == FusionKind::early) return nx::concat({t0, t1}, 1);
  return nx::concat({nx::concat({t0, t0, t0}, 1), nx::concat({t1, t1, t1}, 1)}, 0);
}

nx::Tensor FusionClassifier::features(const nx::Tensor& t0, const nx::Tensor& t1) const {
  const auto f = encoder_.forward(fused_input(t0, t1));
  if (config_.kind == FusionKind::early) return f;
  const std::size_t B = t0.size(0);
  return nx::concat({nx::slice(f, 0, 0, B), nx::slice(f, 0, B, 2 * B)}, 1);
}

nx::Tensor FusionClassifier::logits(const nx::Tensor& t0, const nx::Tensor& t1) const {
  const auto f = features(t0, t1);
  if (config_.kind == FusionKind::early) {
    return nx::linear(nx::relu(nx::linear(f, fc1_w_, fc1_b_)), fc2_w_, fc2_b_);
  }
  return nx::linear(f, fc1_w_, fc1_b_);
}

}  // namespace ppmae::models
