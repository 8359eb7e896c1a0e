#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "m2s/difficulty.hpp"
#include "m2s/errors.hpp"
#include "oracles.hpp"

using namespace m2s;
using namespace m2s::testing;

namespace {

Tensor map_from(int h, int w, const std::function<double(int, int)>& f) {
  Tensor t({h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) t[static_cast<std::size_t>(y * w + x)] = f(y, x);
  return t;
}

Tensor transpose(const Tensor& t) {
  const int h = t.dim(0), w = t.dim(1);
  return map_from(w, h, [&](int y, int x) { return t[static_cast<std::size_t>(x * w + y)]; });
}

}  // namespace

TEST_CASE("sobel examples") {
  const auto c = sobel(Tensor({5, 5}, 3.0));
  for (double v : c.dx.values()) CHECK(v == 0.0);
  for (double v : c.dy.values()) CHECK(v == 0.0);

  const auto ramp = sobel(map_from(5, 5, [](int, int x) { return static_cast<double>(x); }));
  for (int y = 0; y < 5; ++y) {
    for (int x = 1; x < 4; ++x) CHECK(ramp.dx[static_cast<std::size_t>(y * 5 + x)] == 8.0);
    for (int x = 0; x < 5; ++x) CHECK(ramp.dy[static_cast<std::size_t>(y * 5 + x)] == 0.0);
  }
  CHECK_THROWS_AS(sobel(Tensor({2, 5})), DimensionError);
  CHECK(sobel(Tensor({1, 4, 4})).dx.shape() == Shape{4, 4});
}

TEST_CASE("sobel transpose symmetry and linearity") {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor g = random_tensor({6, 9}, rng);
    const auto s = sobel(g);
    const auto st = sobel(transpose(g));
    const Tensor dy_t = transpose(s.dy);
    for (std::size_t i = 0; i < dy_t.size(); ++i) CHECK(std::abs(st.dx[i] - dy_t[i]) < 1e-12);
    Tensor scaled = g;
    for (double& v : scaled.values()) v *= 4.0;
    const auto ss = sobel(scaled);
    for (std::size_t i = 0; i < g.size(); ++i) {
      CHECK(ss.dx[i] == 4.0 * s.dx[i]);
      CHECK(ss.dy[i] == 4.0 * s.dy[i]);
    }
  }
}

TEST_CASE("curvature examples") {
  for (auto mode : {CurvatureMode::as_written, CurvatureMode::standard}) {
    const auto flat = curvature(derivative_stack(Tensor({6, 6}, 0.4)), mode);
    for (double v : flat.values()) CHECK(v == 0.0);
    const auto ramp = curvature(derivative_stack(map_from(6, 6, [](int, int x) { return 0.1 * x; })), mode);
    for (double v : ramp.values()) CHECK(std::abs(v) < 1e-12);
  }
}

TEST_CASE("cross derivatives agree on smooth fields") {
  const auto s = derivative_stack(map_from(12, 12, [](int y, int x) { return 0.01 * x * y + 0.002 * x * x * y; }));
  for (int y = 2; y < 10; ++y)
    for (int x = 2; x < 10; ++x) {
      const auto i = static_cast<std::size_t>(y * 12 + x);
      CHECK(s.gxy[i] == doctest::Approx(s.gyx[i]).epsilon(1e-12));
    }
}

TEST_CASE("difficulty score examples") {
  CurvatureField zero_k{Tensor({4, 4}), Tensor({4, 4}, 1.0)};
  CHECK(difficulty_score(zero_k) == 0.5);
  CurvatureField no_edge{Tensor({4, 4}, 3.0), Tensor({4, 4})};
  CHECK(difficulty_score(no_edge) == 0.0);

  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    CurvatureField f{random_tensor({8, 8}, rng, -5, 5), random_tensor({8, 8}, rng, 0, 2)};
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < 64; ++i) {
      num += f.kappa[i] * f.edge[i];
      den += f.edge[i];
    }
    CHECK(std::abs(difficulty_score(f) - 1.0 / (1.0 + std::exp(-num / den))) <= 1e-12);
  }
}

TEST_CASE("zero curvature on edges gives exactly one half") {
  Rng rng(3);
  Tensor kappa = random_tensor({6, 6}, rng, -9, 9);
  Tensor edge({6, 6});
  for (std::size_t i = 0; i < 36; i += 3) {
    edge[i] = rng.uniform(0.1, 2.0);
    kappa[i] = 0.0;
  }
  CHECK(difficulty_score({kappa, edge}) == 0.5);
}

TEST_CASE("classification boundary and monotonicity") {
  CHECK(classify(0.5, 0.5).label == DifficultyLabel::hard);
  CHECK(classify(0.4999, 0.5).label == DifficultyLabel::easy);
  CHECK(classify(0.0, 0.5).label == DifficultyLabel::easy);
  bool seen_hard = false;
  for (int i = 0; i <= 1000; ++i) {
    const bool hard = classify(i / 1000.0, 0.37).label == DifficultyLabel::hard;
    CHECK(!(seen_hard && !hard));
    seen_hard = seen_hard || hard;
  }
}

TEST_CASE("pipeline matches the scalar oracle") {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    Grid g{8, 8, {}};
    Tensor t({8, 8});
    for (int i = 0; i < 64; ++i) {
      g.v.push_back(rng.uniform(0.01, 0.99));
      t[static_cast<std::size_t>(i)] = g.v.back();
    }
    for (bool standard : {false, true}) {
      DifficultyConfig cfg;
      cfg.mode = standard ? CurvatureMode::standard : CurvatureMode::as_written;
      const auto got = assess_difficulty(t, cfg);
      const auto want = oracle_difficulty(g, standard);
      CHECK(std::abs(got.score - want.score) <= 1e-9);
      CHECK((got.label == DifficultyLabel::hard) == want.hard);
    }
  }
}

TEST_CASE("uniform and tiny priors are easy with score zero") {
  const auto flat = assess_difficulty(Tensor({8, 8}, 0.5));
  CHECK(flat.score == 0.0);
  CHECK(flat.label == DifficultyLabel::easy);
  const auto tiny = assess_difficulty(Tensor({1, 2, 2}, std::vector<double>{0.1, 0.9, 0.3, 0.7}));
  CHECK(tiny.score == 0.0);
  CHECK(tiny.label == DifficultyLabel::easy);
}

TEST_CASE("names and config validation") {
  CHECK(label_name(DifficultyLabel::hard) == "hard");
  CHECK(parse_label("easy") == DifficultyLabel::easy);
  CHECK_FALSE(parse_label("medium").has_value());
  CHECK(parse_curvature_mode("standard") == CurvatureMode::standard);
  CHECK_THROWS_AS(parse_curvature_mode("gauss"), ConfigError);
  DifficultyConfig cfg;
  cfg.threshold = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
