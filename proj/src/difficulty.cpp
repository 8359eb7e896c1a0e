#include "m2s/difficulty.hpp"

#include <algorithm>
#include <cmath>

#include "m2s/errors.hpp"

namespace m2s {
namespace {

Tensor as_plane(const Tensor& map) {
  if (map.rank() == 2) return map;
  if (map.rank() == 3 && map.dim(0) == 1) return map.reshaped({map.dim(1), map.dim(2)});
  throw DimensionError("difficulty maps must be HxW or 1xHxW, got " + to_string(map.shape()));
}

double stable_sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

std::string_view label_name(DifficultyLabel label) noexcept {
  return label == DifficultyLabel::hard ? "hard" : "easy";
}

std::optional<DifficultyLabel> parse_label(std::string_view name) noexcept {
  if (name == "hard") return DifficultyLabel::hard;
  if (name == "easy") return DifficultyLabel::easy;
  return std::nullopt;
}

std::string curvature_mode_name(CurvatureMode mode) {
  return mode == CurvatureMode::as_written ? "as_written" : "standard";
}

CurvatureMode parse_curvature_mode(const std::string& name) {
  if (name == "as_written") return CurvatureMode::as_written;
  if (name == "standard") return CurvatureMode::standard;
  throw ConfigError("unknown curvature mode '" + name + "'");
}

void DifficultyConfig::validate() const {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw ConfigError("difficulty threshold must lie in (0, 1)");
  }
  if (!(epsilon > 0.0)) throw ConfigError("difficulty epsilon must be positive");
}

SobelPair sobel(const Tensor& input) {
  const Tensor map = as_plane(input);
  const int h = map.dim(0);
  const int w = map.dim(1);
  if (h < 3 || w < 3) {
    throw DimensionError("sobel needs at least a 3x3 map, got " + std::to_string(h) + "x" +
                         std::to_string(w));
  }
  static constexpr int kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
  SobelPair out{Tensor({h, w}), Tensor({h, w})};
  auto px = [&](int r, int c) {
    r = std::clamp(r, 0, h - 1);
    c = std::clamp(c, 0, w - 1);
    return map[static_cast<std::size_t>(r) * w + c];
  };
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double gx = 0.0, gy = 0.0;
      for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
          const double v = px(r + i - 1, c + j - 1);
          gx += kx[i][j] * v;
          gy += kx[j][i] * v;
        }
      }
      out.dx[static_cast<std::size_t>(r) * w + c] = gx;
      out.dy[static_cast<std::size_t>(r) * w + c] = gy;
    }
  }
  return out;
}

DerivativeStack derivative_stack(const Tensor& prior) {
  DerivativeStack s;
  auto [gx, gy] = sobel(prior);
  auto [gxx, gxy] = sobel(gx);
  auto [gyx, gyy] = sobel(gy);
  s.gx = std::move(gx);
  s.gy = std::move(gy);
  s.gxx = std::move(gxx);
  s.gxy = std::move(gxy);
  s.gyx = std::move(gyx);
  s.gyy = std::move(gyy);
  return s;
}

Tensor curvature(const DerivativeStack& s, CurvatureMode mode, double eps) {
  const Shape& shape = s.gx.shape();
  for (const Tensor* t : {&s.gy, &s.gxx, &s.gxy, &s.gyx, &s.gyy}) {
    if (t->shape() != shape) throw DimensionError("derivative stack shapes differ");
  }
  Tensor kappa(shape);
  for (std::size_t i = 0; i < kappa.size(); ++i) {
    const double gx = s.gx[i], gy = s.gy[i];
    const double cross = mode == CurvatureMode::as_written ? 2.0 * gx * gy : 2.0 * gx * gy * s.gxy[i];
    const double num = gx * gx * s.gyy[i] - cross + gy * gy * s.gxx[i];
    const double den = std::max(std::pow(gx * gx + gy * gy, 1.5), eps);
    kappa[i] = num / den;
  }
  return kappa;
}

Tensor edge_magnitude(const DerivativeStack& s) {
  Tensor e(s.gx.shape());
  for (std::size_t i = 0; i < e.size(); ++i) e[i] = std::sqrt(s.gx[i] * s.gx[i] + s.gy[i] * s.gy[i]);
  return e;
}

double difficulty_score(const CurvatureField& field, double eps) {
  if (field.kappa.shape() != field.edge.shape()) {
    throw DimensionError("curvature and edge maps differ in shape");
  }
  double weighted = 0.0, total = 0.0;
  for (std::size_t i = 0; i < field.kappa.size(); ++i) {
    weighted += field.kappa[i] * field.edge[i];
    total += field.edge[i];
  }
  if (total < eps) return 0.0;
  return stable_sigmoid(weighted / total);
}

DifficultyVerdict classify(double score, double threshold) {
  return {score, score >= threshold ? DifficultyLabel::hard : DifficultyLabel::easy, threshold};
}

DifficultyVerdict assess_difficulty(const Tensor& prior, const DifficultyConfig& cfg) {
  const Tensor plane = as_plane(prior);
  if (plane.dim(0) < 3 || plane.dim(1) < 3) return classify(0.0, cfg.threshold);
  const DerivativeStack stack = derivative_stack(plane);
  const CurvatureField field{curvature(stack, cfg.mode, cfg.epsilon), edge_magnitude(stack)};
  return classify(difficulty_score(field, cfg.epsilon), cfg.threshold);
}

}  // namespace m2s
