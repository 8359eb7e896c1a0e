#pragma once

// Straight-line reimplementations used as test oracles. They share no code
// with the library beyond the Tensor container.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "m2s/tensor.hpp"

namespace m2s::testing {

/// Row-major H x W grid of doubles.
struct Grid {
  int h = 0, w = 0;
  std::vector<double> v;
  double at(int y, int x) const {
    y = std::clamp(y, 0, h - 1);
    x = std::clamp(x, 0, w - 1);
    return v[static_cast<std::size_t>(y) * w + x];
  }
};

inline void oracle_sobel(const Grid& g, Grid& dx, Grid& dy) {
  dx = {g.h, g.w, std::vector<double>(g.v.size())};
  dy = dx;
  for (int y = 0; y < g.h; ++y) {
    for (int x = 0; x < g.w; ++x) {
      const double a = g.at(y - 1, x - 1), b = g.at(y - 1, x), c = g.at(y - 1, x + 1);
      const double d = g.at(y, x - 1), f = g.at(y, x + 1);
      const double p = g.at(y + 1, x - 1), q = g.at(y + 1, x), r = g.at(y + 1, x + 1);
      dx.v[static_cast<std::size_t>(y) * g.w + x] = (c + 2 * f + r) - (a + 2 * d + p);
      dy.v[static_cast<std::size_t>(y) * g.w + x] = (p + 2 * q + r) - (a + 2 * b + c);
    }
  }
}

/// Curvature numerator/denominator in either numerator variant.
inline double oracle_kappa(double gx, double gy, double gxx, double gxy, double gyy, bool standard,
                           double eps = 1e-8) {
  const double cross = standard ? 2.0 * gx * gy * gxy : 2.0 * gx * gy;
  const double num = gx * gx * gyy - cross + gy * gy * gxx;
  const double den = std::max(std::pow(gx * gx + gy * gy, 1.5), eps);
  return num / den;
}

struct OracleVerdict {
  double score = 0.0;
  bool hard = false;
};

inline OracleVerdict oracle_difficulty(const Grid& g, bool standard, double tau = 0.5, double eps = 1e-8) {
  Grid gx, gy, gxx, gxy, gyx, gyy;
  oracle_sobel(g, gx, gy);
  oracle_sobel(gx, gxx, gxy);
  oracle_sobel(gy, gyx, gyy);
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < g.v.size(); ++i) {
    const double e = std::sqrt(gx.v[i] * gx.v[i] + gy.v[i] * gy.v[i]);
    num += oracle_kappa(gx.v[i], gy.v[i], gxx.v[i], gxy.v[i], gyy.v[i], standard, eps) * e;
    den += e;
  }
  OracleVerdict out;
  out.score = den < eps ? 0.0 : 1.0 / (1.0 + std::exp(-num / den));
  out.hard = out.score >= tau;
  return out;
}

struct Counts {
  std::int64_t tp = 0, fp = 0, fn = 0;
};

inline Counts brute_counts(const std::vector<int>& a, const std::vector<int>& b) {
  Counts c;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] && b[i]) ++c.tp;
    if (a[i] && !b[i]) ++c.fp;
    if (!a[i] && b[i]) ++c.fn;
  }
  return c;
}

inline double brute_dsc(const Counts& c) {
  return (c.tp + c.fp + c.fn) == 0 ? 1.0 : 2.0 * c.tp / static_cast<double>(2 * c.tp + c.fp + c.fn);
}

inline double brute_iou(const Counts& c) {
  return (c.tp + c.fp + c.fn) == 0 ? 1.0 : c.tp / static_cast<double>(c.tp + c.fp + c.fn);
}

inline Tensor bits_to_mask(unsigned bits, int h, int w) {
  Tensor t({1, h, w});
  for (int i = 0; i < h * w; ++i) t[static_cast<std::size_t>(i)] = (bits >> i) & 1u ? 1.0 : 0.0;
  return t;
}

inline std::vector<int> bits_to_vector(unsigned bits, int n) {
  std::vector<int> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = static_cast<int>((bits >> i) & 1u);
  return v;
}

}  // namespace m2s::testing
