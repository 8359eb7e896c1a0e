#include "m2s/backbone.hpp"

#include <cmath>

#include "m2s/errors.hpp"

namespace m2s {
namespace {

// ImageNet statistics; inputs arrive in [0, 1].
constexpr std::array<double, 3> kMean{0.485, 0.456, 0.406};
constexpr std::array<double, 3> kStd{0.229, 0.224, 0.225};

template <std::size_t N>
void require_positive(const std::array<int, N>& values, const char* field) {
  for (int v : values) {
    if (v <= 0) throw ConfigError(std::string("backbone.") + field + ": entries must be positive");
  }
}

}  // namespace

std::string preset_name(ScalePreset p) { return p == ScalePreset::toy ? "toy" : "full"; }

ScalePreset parse_preset(const std::string& name) {
  if (name == "toy") return ScalePreset::toy;
  if (name == "full") return ScalePreset::full;
  throw ConfigError("unknown preset '" + name + "' (expected toy or full)");
}

BackboneConfig BackboneConfig::for_preset(ScalePreset p) {
  BackboneConfig cfg;
  if (p == ScalePreset::toy) {
    cfg.preset = ScalePreset::toy;
    cfg.encoder_channels = {16, 32, 48, 64};
    cfg.decoder_channels = {64, 32, 16};
    cfg.stage_depths = {1, 1, 1, 1};
    cfg.encoder_heads = {1, 2, 3, 4};
    cfg.decoder_heads = {4, 2, 1};
    cfg.mlp_ratios = {4, 4, 4, 4};
  }
  return cfg;
}

void BackboneConfig::validate() const {
  require_positive(encoder_channels, "encoder_channels");
  require_positive(decoder_channels, "decoder_channels");
  require_positive(stage_depths, "stage_depths");
  require_positive(encoder_heads, "encoder_heads");
  require_positive(decoder_heads, "decoder_heads");
  require_positive(mlp_ratios, "mlp_ratios");
  require_positive(sr_ratios, "sr_ratios");
  for (std::size_t i = 1; i < encoder_channels.size(); ++i) {
    if (encoder_channels[i] <= encoder_channels[i - 1]) {
      throw ConfigError("backbone.encoder_channels must be strictly increasing");
    }
  }
  for (std::size_t i = 0; i < 4; ++i) {
    if (encoder_channels[i] % encoder_heads[i] != 0) {
      throw ConfigError("backbone: encoder stage " + std::to_string(i + 1) + " width " +
                        std::to_string(encoder_channels[i]) + " not divisible by " +
                        std::to_string(encoder_heads[i]) + " heads");
    }
  }
  for (std::size_t i = 0; i < 3; ++i) {
    if (decoder_channels[i] % decoder_heads[i] != 0) {
      throw ConfigError("backbone: decoder stage " + std::to_string(i + 1) + " width " +
                        std::to_string(decoder_channels[i]) + " not divisible by " +
                        std::to_string(decoder_heads[i]) + " heads");
    }
  }
  if (decoder_depth <= 0) throw ConfigError("backbone.decoder_depth must be positive");
  if (decoder_mlp_ratio <= 0) throw ConfigError("backbone.decoder_mlp_ratio must be positive");
}

BlockSpec encoder_block_spec(const BackboneConfig& cfg, int stage) {
  const auto i = static_cast<std::size_t>(stage);
  return {cfg.encoder_channels.at(i), cfg.encoder_heads.at(i), cfg.sr_ratios.at(i),
          cfg.mlp_ratios.at(i)};
}

BlockSpec decoder_block_spec(const BackboneConfig& cfg, int stage) {
  const auto i = static_cast<std::size_t>(stage);
  // Decoder stage 0 runs at stride 16, the same stride as encoder stage 3.
  return {cfg.decoder_channels.at(i), cfg.decoder_heads.at(i), cfg.sr_ratios.at(2 - i),
          cfg.decoder_mlp_ratio};
}

TransformerBlock::TransformerBlock(ParamStore& store, const std::string& prefix, BlockSpec spec,
                                   Rng& rng)
    : spec_(spec) {
  const int c = spec.width;
  const int hidden = c * spec.mlp_ratio;
  norm1_ = LayerNorm(store, prefix + ".norm1", c);
  q_ = pointwise(store, prefix + ".attn.q", c, c, rng);
  kv_ = pointwise(store, prefix + ".attn.kv", c, 2 * c, rng);
  proj_ = pointwise(store, prefix + ".attn.proj", c, c, rng);
  if (spec.sr_ratio > 1) {
    sr_ = Conv2d(store, prefix + ".attn.sr", c, c, spec.sr_ratio, {.stride = spec.sr_ratio}, rng);
    sr_norm_ = LayerNorm(store, prefix + ".attn.norm", c, 1e-5);
  }
  norm2_ = LayerNorm(store, prefix + ".norm2", c);
  fc1_ = pointwise(store, prefix + ".mlp.fc1", c, hidden, rng);
  dwconv_ = Conv2d(store, prefix + ".mlp.dwconv", hidden, hidden, 3,
                   {.padding = 1, .groups = hidden}, rng);
  fc2_ = pointwise(store, prefix + ".mlp.fc2", hidden, c, rng);
}

Var TransformerBlock::operator()(const Var& x) const {
  require_feature_map(x.value(), "transformer block input");
  if (x.shape()[0] != spec_.width) {
    throw ConfigError("transformer block expects " + std::to_string(spec_.width) +
                      " channels, got " + std::to_string(x.shape()[0]));
  }
  Var h = ops::add(x, attention(norm1_(x)));
  return ops::add(h, feed_forward(norm2_(h)));
}

Var TransformerBlock::attention(const Var& x) const {
  const int c = spec_.width;
  const int n = x.shape()[1] * x.shape()[2];
  const int head_dim = c / spec_.heads;
  Var q = q_(x);
  Var ctx = x;
  if (spec_.sr_ratio > 1) {
    if (x.shape()[1] < spec_.sr_ratio || x.shape()[2] < spec_.sr_ratio) {
      throw DimensionError("transformer block: spatial size " + to_string(x.shape()) +
                           " smaller than reduction ratio " + std::to_string(spec_.sr_ratio));
    }
    ctx = sr_norm_(sr_(x));
  }
  Var kv = kv_(ctx);
  const int m = kv.shape()[1] * kv.shape()[2];
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  std::vector<Var> heads;
  heads.reserve(static_cast<std::size_t>(spec_.heads));
  for (int h = 0; h < spec_.heads; ++h) {
    Var qh = ops::reshape(ops::slice(q, h * head_dim, head_dim), {head_dim, n});
    Var kh = ops::reshape(ops::slice(kv, h * head_dim, head_dim), {head_dim, m});
    Var vh = ops::reshape(ops::slice(kv, c + h * head_dim, head_dim), {head_dim, m});
    Var scores = ops::scale(ops::matmul(qh, kh, kernels::Trans::yes, kernels::Trans::no), scale);
    Var probs = ops::softmax_rows(scores);
    heads.push_back(ops::matmul(vh, probs, kernels::Trans::no, kernels::Trans::yes));
  }
  Var merged = ops::reshape(ops::concat(heads), x.shape());
  return proj_(merged);
}

Var TransformerBlock::feed_forward(const Var& x) const {
  return fc2_(ops::gelu(dwconv_(fc1_(x))));
}

void check_input_dims(const Tensor& image) {
  require_feature_map(image, "encoder input");
  if (image.channels() != 3) {
    throw DimensionError("encoder input must have 3 channels, got " +
                         std::to_string(image.channels()));
  }
  if (image.height() % 32 != 0) {
    throw DimensionError("input height " + std::to_string(image.height()) +
                         " is not divisible by 32");
  }
  if (image.width() % 32 != 0) {
    throw DimensionError("input width " + std::to_string(image.width()) +
                         " is not divisible by 32");
  }
}

PyramidEncoder::PyramidEncoder(ParamStore& store, const std::string& prefix,
                               const BackboneConfig& cfg, Rng& rng) {
  cfg.validate();
  int in_ch = 3;
  for (int s = 0; s < 4; ++s) {
    const std::string sp = prefix + ".stage" + std::to_string(s + 1);
    const int width = cfg.encoder_channels[static_cast<std::size_t>(s)];
    Stage stage;
    if (s == 0) {
      stage.embed = Conv2d(store, sp + ".patch_embed", in_ch, width, 7,
                           {.stride = 4, .padding = 3}, rng);
    } else {
      stage.embed = Conv2d(store, sp + ".patch_embed", in_ch, width, 3,
                           {.stride = 2, .padding = 1}, rng);
    }
    stage.embed_norm = LayerNorm(store, sp + ".patch_norm", width, 1e-5);
    for (int b = 0; b < cfg.stage_depths[static_cast<std::size_t>(s)]; ++b) {
      stage.blocks.emplace_back(store, sp + ".block" + std::to_string(b),
                                encoder_block_spec(cfg, s), rng);
    }
    stage.out_norm = LayerNorm(store, sp + ".norm", width);
    stages_.push_back(std::move(stage));
    in_ch = width;
  }
}

StagePyramid PyramidEncoder::encode(const Tensor& image) const {
  check_input_dims(image);
  Tensor normalized = image;
  const std::size_t plane = static_cast<std::size_t>(image.height()) * image.width();
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < plane; ++i) {
      normalized[c * plane + i] = (image[c * plane + i] - kMean[c]) / kStd[c];
    }
  }
  StagePyramid pyr;
  pyr.input_height = image.height();
  pyr.input_width = image.width();
  Var x = constant(std::move(normalized));
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    const Stage& stage = stages_[s];
    x = stage.embed_norm(stage.embed(x));
    for (const auto& block : stage.blocks) x = block(x);
    x = stage.out_norm(x);
    pyr.stages[s] = x;
  }
  return pyr;
}

}  // namespace m2s
