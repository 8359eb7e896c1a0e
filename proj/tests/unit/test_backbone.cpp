#include <doctest.h>

#include "gradcheck.hpp"
#include "m2s/backbone.hpp"
#include "m2s/errors.hpp"
#include "m2s/model.hpp"

using namespace m2s;
using namespace m2s::testing;

TEST_CASE("full preset stage shapes at 256x256") {
  ParamStore store;
  Rng rng(1);
  PyramidEncoder enc(store, "encoder", BackboneConfig::for_preset(ScalePreset::full), rng);
  Rng data(2);
  NoGradGuard guard;
  const auto pyr = enc.encode(random_tensor({3, 256, 256}, data, 0, 1));
  CHECK(pyr.stages[0].shape() == Shape{64, 64, 64});
  CHECK(pyr.stages[1].shape() == Shape{128, 32, 32});
  CHECK(pyr.stages[2].shape() == Shape{320, 16, 16});
  CHECK(pyr.stages[3].shape() == Shape{512, 8, 8});
}

TEST_CASE("toy preset stage shapes at 64x64") {
  ParamStore store;
  Rng rng(1);
  PyramidEncoder enc(store, "encoder", BackboneConfig::for_preset(ScalePreset::toy), rng);
  Rng data(3);
  NoGradGuard guard;
  const auto pyr = enc.encode(random_tensor({3, 64, 64}, data, 0, 1));
  CHECK(pyr.stages[0].shape() == Shape{16, 16, 16});
  CHECK(pyr.stages[1].shape() == Shape{32, 8, 8});
  CHECK(pyr.stages[2].shape() == Shape{48, 4, 4});
  CHECK(pyr.stages[3].shape() == Shape{64, 2, 2});
}

TEST_CASE("inputs not divisible by 32 are rejected with the axis named") {
  ParamStore store;
  Rng rng(1);
  PyramidEncoder enc(store, "encoder", BackboneConfig::for_preset(ScalePreset::toy), rng);
  try {
    (void)enc.encode(Tensor({3, 250, 250}));
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    CHECK(std::string(e.what()).find("height") != std::string::npos);
  }
  CHECK_THROWS_AS(enc.encode(Tensor({3, 64, 48})), DimensionError);
  CHECK_THROWS_AS(enc.encode(Tensor({1, 64, 64})), DimensionError);
}

TEST_CASE("transformer block preserves shape, survives zero input and is input-sensitive") {
  ParamStore store;
  Rng rng(4);
  const BlockSpec spec{64, 2, 2, 4};
  TransformerBlock block(store, "blk", spec, rng);
  NoGradGuard guard;
  const Var zero = block(constant(Tensor({64, 8, 8})));
  CHECK(zero.shape() == Shape{64, 8, 8});
  CHECK(zero.value().all_finite());

  Rng data(5);
  Tensor x = random_tensor({64, 8, 8}, data);
  const Tensor y0 = block(constant(x)).value();
  x.at(3, 2, 2) += 1e-3;
  const Tensor y1 = block(constant(x)).value();
  double diff = 0.0;
  for (std::size_t i = 0; i < y0.size(); ++i) diff += std::abs(y0[i] - y1[i]);
  CHECK(diff > 0.0);
  CHECK_THROWS_AS(block(constant(Tensor({32, 8, 8}))), ConfigError);
}

TEST_CASE("transformer block gradient check") {
  ParamStore store;
  Rng rng(6);
  TransformerBlock block(store, "blk", BlockSpec{8, 2, 2, 2}, rng);
  Rng data(7);
  Var x(random_tensor({8, 4, 4}, data), true);
  std::vector<std::pair<std::string, Var>> vars{{"x", x}};
  for (const auto& p : store.params()) vars.emplace_back(p.name, p.var);
  const auto r = gradient_check([&] { return random_projection(block(x), 11); }, all_elements(vars), 1e-4);
  CAPTURE(r.worst);
  CHECK(r.max_rel_error < 1e-4);
}

namespace {

// Closed-form per-layer count, written independently of the module code.
std::int64_t conv(std::int64_t in, std::int64_t out, std::int64_t k, std::int64_t groups = 1) {
  return out * (in / groups) * k * k + out;
}
std::int64_t ln(std::int64_t c) { return 2 * c; }
std::int64_t block(std::int64_t c, std::int64_t sr, std::int64_t mlp) {
  std::int64_t n = ln(c) + conv(c, c, 1) + conv(c, 2 * c, 1) + conv(c, c, 1);
  if (sr > 1) n += conv(c, c, sr) + ln(c);
  const std::int64_t h = c * mlp;
  n += ln(c) + conv(c, h, 1) + conv(h, h, 3, h) + conv(h, c, 1);
  return n;
}

std::int64_t analytic_count(const ModelConfig& cfg) {
  const auto& b = cfg.backbone;
  std::int64_t n = 0;
  std::int64_t prev = 3;
  for (int s = 0; s < 4; ++s) {
    const std::int64_t c = b.encoder_channels[s];
    n += conv(prev, c, s == 0 ? 7 : 3) + ln(c);
    for (int d = 0; d < b.stage_depths[s]; ++d) n += block(c, b.sr_ratios[s], b.mlp_ratios[s]);
    n += ln(c);
    prev = c;
  }
  const auto& m = cfg.m2s;
  const std::int64_t cr = m.reduced_channels;
  const std::int64_t big = 4 * cr;
  for (int s = 0; s < 4; ++s) n += conv(b.encoder_channels[s], cr, 1);
  const std::int64_t hidden = std::max<std::int64_t>(1, big / m.reduction_ratio);
  n += conv(big, hidden, 1) + conv(hidden, big, 1);
  for (int l = 1; l <= m.pyramid_levels; ++l) {
    const auto cl = std::max<std::int64_t>(static_cast<std::int64_t>(big / std::pow(m.channel_decay, l - 1)), m.min_channels);
    n += conv(big, big, 3) + conv(big, cl, 1) + conv(cl, 1, 1) + 2 + conv(cl, big, 3);
  }
  n += conv(cr, 1, 1);  // prior head
  n += conv(cr, cr, 1);  // decoder entry
  std::int64_t state = cr;
  for (int j = 0; j < 3; ++j) {
    const std::int64_t w = b.decoder_channels[j];
    n += conv(state + cr, w, 1);
    for (int d = 0; d < b.decoder_depth; ++d) n += block(w, b.sr_ratios[2 - j], b.decoder_mlp_ratio);
    const std::int64_t gh = std::max<std::int64_t>(1, w / 2);
    n += conv(cfg.decoder.text_dim, gh, 1) + conv(gh, w, 1);
    state = w;
  }
  n += conv(state, 1, 1);
  return n;
}

}  // namespace

TEST_CASE("parameter count matches the closed-form per-layer count") {
  for (auto p : {ScalePreset::toy, ScalePreset::full}) {
    const auto cfg = ModelConfig::for_preset(p);
    CHECK(count_parameters(cfg) == analytic_count(cfg));
  }
}

TEST_CASE("doubling every width grows the count by a factor in (2, 4)") {
  auto cfg = ModelConfig::for_preset(ScalePreset::toy);
  const double base = static_cast<double>(count_parameters(cfg));
  for (auto& c : cfg.backbone.encoder_channels) c *= 2;
  for (auto& c : cfg.backbone.decoder_channels) c *= 2;
  cfg.m2s.reduced_channels *= 2;
  cfg.m2s.min_channels *= 2;
  const double ratio = static_cast<double>(count_parameters(cfg)) / base;
  CHECK(ratio > 2.0);
  CHECK(ratio < 4.0);
}

TEST_CASE("full preset lands within 15 percent of 27.4M") {
  const double n = static_cast<double>(count_parameters(ModelConfig::for_preset(ScalePreset::full)));
  CHECK(std::abs(n - 27.4e6) / 27.4e6 <= 0.15);
}

TEST_CASE("backbone config validation") {
  auto cfg = BackboneConfig::for_preset(ScalePreset::toy);
  cfg.encoder_channels[1] = 15;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = BackboneConfig::for_preset(ScalePreset::full);
  cfg.encoder_heads[2] = 3;  // 320 % 3 != 0
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK(parse_preset("toy") == ScalePreset::toy);
  CHECK_THROWS_AS(parse_preset("huge"), ConfigError);
}
