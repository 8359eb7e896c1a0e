#include "m2s/m2s_attention.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>

#include "m2s/errors.hpp"

namespace m2s {

std::string convention_name(DctConvention c) {
  return c == DctConvention::standard ? "standard" : "as_written";
}

DctConvention parse_convention(const std::string& name) {
  if (name == "standard") return DctConvention::standard;
  if (name == "as_written") return DctConvention::as_written;
  throw ConfigError("unknown DCT convention '" + name + "'");
}

M2SConfig M2SConfig::for_preset(ScalePreset p) {
  M2SConfig cfg;
  if (p == ScalePreset::toy) {
    cfg.reduced_channels = 16;
    cfg.min_channels = 16;
  }
  return cfg;
}

int M2SConfig::bottleneck_channels() const noexcept {
  return std::max(1, cross_channels() / reduction_ratio);
}

void M2SConfig::validate() const {
  if (reduced_channels <= 0) throw ConfigError("m2s.reduced_channels must be positive");
  if (target_divisor < 1) {
    throw ConfigError("m2s.target_divisor " + std::to_string(target_divisor) +
                      " would make the target resolution larger than the input");
  }
  if (num_frequencies <= 0) throw ConfigError("m2s.num_frequencies must be positive");
  if (pyramid_levels < 1) throw ConfigError("m2s.pyramid_levels must be at least 1");
  if (!(channel_decay > 1.0)) throw ConfigError("m2s.channel_decay must exceed 1");
  if (min_channels <= 0 || min_height <= 0 || min_width <= 0) {
    throw ConfigError("m2s minimum level sizes must be positive");
  }
  if (reduction_ratio <= 0) throw ConfigError("m2s.reduction_ratio must be positive");
}

std::vector<std::pair<int, int>> zigzag_frequencies(int height, int width, int k) {
  if (height <= 0 || width <= 0) throw DimensionError("DCT grid must be non-empty");
  if (k <= 0 || static_cast<long>(k) > static_cast<long>(height) * width) {
    throw ConfigError("cannot select " + std::to_string(k) + " frequencies on a " +
                      std::to_string(height) + "x" + std::to_string(width) + " grid");
  }
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(static_cast<std::size_t>(k));
  for (int diag = 0; static_cast<int>(pairs.size()) < k; ++diag) {
    for (int u = 0; u <= diag && static_cast<int>(pairs.size()) < k; ++u) {
      const int v = diag - u;
      if (u < height && v < width) pairs.emplace_back(u, v);
    }
  }
  return pairs;
}

SpectralBasis build_dct_basis(int height, int width, int k, DctConvention convention) {
  SpectralBasis basis;
  basis.frequency_pairs = zigzag_frequencies(height, width, k);
  basis.images = Tensor({k, height, width});
  for (int q = 0; q < k; ++q) {
    const auto [u, v] = basis.frequency_pairs[static_cast<std::size_t>(q)];
    for (int h = 0; h < height; ++h) {
      const double ch = convention == DctConvention::standard
                            ? std::cos(std::numbers::pi * (h + 0.5) * u / height)
                            : std::cos(std::numbers::pi * h * (u + 0.5) / height);
      for (int w = 0; w < width; ++w) {
        const double cw = convention == DctConvention::standard
                              ? std::cos(std::numbers::pi * (w + 0.5) * v / width)
                              : std::cos(std::numbers::pi * w * (v + 0.5) / width);
        basis.images.at(q, h, w) = ch * cw;
      }
    }
  }
  return basis;
}

void write_basis_dump(const std::filesystem::path& path, const SpectralBasis& basis) {
  static_assert(std::endian::native == std::endian::little, "dump writer assumes little-endian");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const std::string magic = "m2s-dct/1\n";
  out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
  auto put = [&](std::int32_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); };
  put(static_cast<std::int32_t>(basis.frequency_pairs.size()));
  put(basis.height());
  put(basis.width());
  for (auto [u, v] : basis.frequency_pairs) {
    put(u);
    put(v);
  }
  for (double v : basis.images.values()) {
    const auto f = static_cast<float>(v);
    out.write(reinterpret_cast<const char*>(&f), sizeof f);
  }
  if (!out) throw IoError("failed writing " + path.string());
}

LevelShape level_shape(const M2SConfig& cfg, int level, int channels, int height, int width) {
  if (level < 1) throw ConfigError("pyramid level index must start at 1");
  LevelShape s;
  s.level = level;
  s.scale_factor = 1 << (level - 1);
  s.dilation = 2 * level + 1;
  const double decayed = channels / std::pow(cfg.channel_decay, level - 1);
  s.channels = std::max(static_cast<int>(std::floor(decayed)), cfg.min_channels);
  s.height = std::min(height, std::max(height / s.scale_factor, cfg.min_height));
  s.width = std::min(width, std::max(width / s.scale_factor, cfg.min_width));
  return s;
}

M2SBlock::M2SBlock(ParamStore& store, const std::string& prefix, const M2SConfig& cfg,
                   const std::array<int, 4>& encoder_channels, Rng& rng)
    : cfg_(cfg) {
  cfg_.validate();
  const int cr = cfg_.reduced_channels;
  const int c = cfg_.cross_channels();
  for (std::size_t i = 0; i < 4; ++i) {
    reduce_[i] = pointwise(store, prefix + ".reduce" + std::to_string(i + 1), encoder_channels[i],
                           cr, rng);
  }
  squeeze_ = pointwise(store, prefix + ".spectral.fc1", c, cfg_.bottleneck_channels(), rng);
  excite_ = pointwise(store, prefix + ".spectral.fc2", cfg_.bottleneck_channels(), c, rng);
  for (int l = 1; l <= cfg_.pyramid_levels; ++l) {
    const std::string lp = prefix + ".level" + std::to_string(l);
    const LevelShape shape = level_shape(cfg_, l, c, 1, 1);
    Level lvl;
    lvl.dilated = Conv2d(store, lp + ".dilated", c, c, 3,
                         {.padding = shape.dilation, .dilation = shape.dilation}, rng);
    lvl.squeeze = pointwise(store, lp + ".squeeze", c, shape.channels, rng);
    lvl.foreground = pointwise(store, lp + ".foreground", shape.channels, 1, rng);
    lvl.alpha = store.add(lp + ".alpha", Tensor({1}, 1.0));
    lvl.beta = store.add(lp + ".beta", Tensor({1}, 0.5));
    lvl.restore = Conv2d(store, lp + ".restore", shape.channels, c, 3, {.padding = 1}, rng);
    levels_.push_back(std::move(lvl));
  }
}

std::pair<int, int> M2SBlock::target_size(int input_h, int input_w) const {
  if (input_h % cfg_.target_divisor != 0 || input_w % cfg_.target_divisor != 0) {
    throw ConfigError("input " + std::to_string(input_h) + "x" + std::to_string(input_w) +
                      " is not divisible by the target divisor " +
                      std::to_string(cfg_.target_divisor));
  }
  return {input_h / cfg_.target_divisor, input_w / cfg_.target_divisor};
}

CrossScaleFeatures M2SBlock::preprocess(const StagePyramid& pyr) const {
  const auto [ht, wt] = target_size(pyr.input_height, pyr.input_width);
  CrossScaleFeatures out;
  std::array<Var, 4> resized;
  for (std::size_t i = 0; i < 4; ++i) {
    const Var& stage = pyr.stages[i];
    require_feature_map(stage.value(), "pyramid stage");
    const int stride = 4 << i;
    if (stage.shape()[1] * stride != pyr.input_height ||
        stage.shape()[2] * stride != pyr.input_width) {
      throw DimensionError("pyramid stage " + std::to_string(i + 1) + " has shape " +
                           to_string(stage.shape()) + ", expected stride " +
                           std::to_string(stride));
    }
    out.reduced[i] = reduce_[i](stage);
    resized[i] = ops::resize_bilinear(out.reduced[i], ht, wt);
  }
  out.cross = ops::concat(resized);
  return out;
}

Var M2SBlock::spectral_attention(const Var& pooled_sum, const Var& pooled_max) const {
  auto branch = [&](const Var& pooled) {
    const int c = pooled.shape()[0];
    const int k = pooled.shape()[1];
    Var as_map = ops::reshape(pooled, {c, 1, k});
    return ops::sum_trailing(excite_(ops::relu(squeeze_(as_map))));
  };
  if (pooled_sum.shape() != pooled_max.shape() || pooled_sum.value().rank() != 2 ||
      pooled_sum.shape()[0] != cfg_.cross_channels()) {
    throw DimensionError("spectral attention expects two [" +
                         std::to_string(cfg_.cross_channels()) + ", K] inputs");
  }
  return ops::sigmoid(ops::add(branch(pooled_sum), branch(pooled_max)));
}

Var recalibrate(const Var& cross, const Var& attention) { return ops::mul_channels(cross, attention); }

Var M2SBlock::pyramid_decompose(const Var& recalibrated, int level) const {
  const LevelShape s = level_shape(cfg_, level, recalibrated.shape()[0], recalibrated.shape()[1],
                                   recalibrated.shape()[2]);
  const Level& lvl = this->level(level);
  Var down = ops::resize_bilinear(recalibrated, s.height, s.width);
  return lvl.squeeze(ops::relu(lvl.dilated(down)));
}

SpatialAttention M2SBlock::spatial_attend(const Var& level_feature, int level) const {
  const Level& lvl = this->level(level);
  Var fg = ops::sigmoid(lvl.foreground(level_feature));
  Var bg = ops::one_minus(fg);
  Var mixed = ops::add(ops::mul_scalar(ops::mul_spatial(level_feature, fg), lvl.alpha),
                       ops::mul_scalar(ops::mul_spatial(level_feature, bg), lvl.beta));
  return {lvl.restore(mixed), fg};
}

Var M2SBlock::pyramid_fuse(const Var& cross, const std::vector<Var>& refined) const {
  Var out = cross;
  for (const Var& r : refined) {
    out = ops::add(out, ops::resize_bilinear(r, cross.shape()[1], cross.shape()[2]));
  }
  return out;
}

std::array<Var, 4> M2SBlock::postprocess(const Var& fused, const std::array<Var, 4>& reduced) const {
  const int cr = cfg_.reduced_channels;
  if (fused.shape()[0] != 4 * cr) {
    throw DimensionError("postprocess expects " + std::to_string(4 * cr) + " channels, got " +
                         std::to_string(fused.shape()[0]));
  }
  std::array<Var, 4> skips;
  for (std::size_t i = 0; i < 4; ++i) {
    Var chunk = ops::slice(fused, static_cast<int>(i) * cr, cr);
    const Var& residual = reduced[i];
    skips[i] = ops::add(
        ops::resize_bilinear(chunk, residual.shape()[1], residual.shape()[2]), residual);
  }
  return skips;
}

M2SBlock::Output M2SBlock::forward(const StagePyramid& pyr) const {
  Output out;
  CrossScaleFeatures pre = preprocess(pyr);
  out.cross = pre.cross;
  const SpectralBasis basis = build_dct_basis(pre.cross.shape()[1], pre.cross.shape()[2],
                                              cfg_.num_frequencies, cfg_.dct);
  Var pooled_sum = ops::spectral_pool(pre.cross, basis.images, ops::SpectralPool::weighted_sum);
  Var pooled_max = ops::spectral_pool(pre.cross, basis.images, ops::SpectralPool::weighted_max);
  out.attention = spectral_attention(pooled_sum, pooled_max);
  out.recalibrated = recalibrate(pre.cross, out.attention);
  std::vector<Var> refined;
  for (int l = 1; l <= cfg_.pyramid_levels; ++l) {
    SpatialAttention sa = spatial_attend(pyramid_decompose(out.recalibrated, l), l);
    refined.push_back(sa.refined);
    out.foreground.push_back(sa.foreground);
  }
  out.fused = pyramid_fuse(pre.cross, refined);
  out.skips = postprocess(out.fused, pre.reduced);
  return out;
}

}  // namespace m2s
