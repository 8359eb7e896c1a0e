#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "m2s/kernels.hpp"
#include "m2s/rng.hpp"

using namespace m2s;
namespace k = m2s::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("gemm matches the serial reference for every transpose combination") {
  Rng rng(1);
  for (auto ta : {k::Trans::no, k::Trans::yes}) {
    for (auto tb : {k::Trans::no, k::Trans::yes}) {
      for (auto [m, n, kk] : {std::array{1, 1, 1}, std::array{7, 13, 5}, std::array{65, 33, 300}, std::array{4, 600, 17}}) {
        const auto a = random_vec(static_cast<std::size_t>(m * kk), rng);
        const auto b = random_vec(static_cast<std::size_t>(kk * n), rng);
        auto c1 = random_vec(static_cast<std::size_t>(m * n), rng);
        auto c2 = c1;
        k::gemm(ta, tb, m, n, kk, 0.7, a, b, 0.3, c1);
        k::reference::gemm(ta, tb, m, n, kk, 0.7, a, b, 0.3, c2);
        CHECK(max_diff(c1, c2) < 1e-11);
      }
    }
  }
}

TEST_CASE("gemm with beta zero ignores NaN garbage in c") {
  Rng rng(2);
  const auto a = random_vec(6, rng);
  const auto b = random_vec(6, rng);
  std::vector<double> c(4, std::nan(""));
  k::gemm(k::Trans::no, k::Trans::no, 2, 2, 3, 1.0, a, b, 0.0, c);
  for (double v : c) CHECK(std::isfinite(v));
}

TEST_CASE("conv2d forward and backward match the reference across geometries") {
  Rng rng(3);
  std::vector<k::ConvGeometry> geoms;
  geoms.push_back({4, 9, 9, 6, 3, 3, 1, 1, 1, 1});
  geoms.push_back({3, 16, 16, 8, 7, 7, 4, 3, 1, 1});
  geoms.push_back({5, 8, 8, 5, 3, 3, 1, 1, 1, 5});
  geoms.push_back({6, 8, 8, 4, 1, 1, 1, 0, 1, 1});
  geoms.push_back({4, 10, 10, 4, 3, 3, 1, 5, 5, 1});
  geoms.push_back({4, 8, 8, 6, 2, 2, 2, 0, 1, 2});
  for (const auto& g : geoms) {
    CAPTURE(g.kernel_h);
    CAPTURE(g.groups);
    const auto x = random_vec(static_cast<std::size_t>(g.in_channels * g.height * g.width), rng);
    const auto w = random_vec(static_cast<std::size_t>(g.weight_count()), rng);
    const auto bias = random_vec(static_cast<std::size_t>(g.out_channels), rng);
    const auto ny = static_cast<std::size_t>(g.out_channels * g.out_height() * g.out_width());
    std::vector<double> y1(ny), y2(ny);
    k::conv2d_forward(g, x, w, bias, y1);
    k::reference::conv2d_forward(g, x, w, bias, y2);
    CHECK(max_diff(y1, y2) < 1e-12);

    const auto dy = random_vec(ny, rng);
    std::vector<double> dx1(x.size()), dx2(x.size()), dw1(w.size()), dw2(w.size()), db1(bias.size()), db2(bias.size());
    k::conv2d_backward(g, x, w, dy, dx1, dw1, db1);
    k::reference::conv2d_backward(g, x, w, dy, dx2, dw2, db2);
    CHECK(max_diff(dx1, dx2) < 1e-12);
    CHECK(max_diff(dw1, dw2) < 1e-12);
    CHECK(max_diff(db1, db2) < 1e-12);
  }
}

TEST_CASE("bilinear resize matches the reference and its backward is the adjoint") {
  Rng rng(4);
  for (auto [ih, iw, oh, ow] : {std::array{4, 4, 8, 8}, std::array{8, 8, 4, 4}, std::array{5, 7, 11, 3}, std::array{2, 2, 64, 64}}) {
    const auto x = random_vec(static_cast<std::size_t>(3 * ih * iw), rng);
    std::vector<double> y1(static_cast<std::size_t>(3 * oh * ow)), y2(y1.size());
    k::resize_bilinear_forward(3, ih, iw, oh, ow, x, y1);
    k::reference::resize_bilinear_forward(3, ih, iw, oh, ow, x, y2);
    CHECK(max_diff(y1, y2) < 1e-14);
    // <R x, v> == <x, R^T v>
    const auto v = random_vec(y1.size(), rng);
    std::vector<double> rt(x.size());
    k::resize_bilinear_backward(3, ih, iw, oh, ow, v, rt);
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < y1.size(); ++i) lhs += y1[i] * v[i];
    for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * rt[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("bilinear upsampling of a constant stays constant") {
  std::vector<double> x(4, 2.5), y(64);
  k::resize_bilinear_forward(1, 2, 2, 8, 8, x, y);
  for (double v : y) CHECK(v == 2.5);
}

TEST_CASE("parallel results do not depend on the thread cap") {
  Rng rng(5);
  const k::ConvGeometry g{8, 20, 20, 12, 3, 3, 1, 1, 1, 1};
  const auto x = random_vec(static_cast<std::size_t>(8 * 400), rng);
  const auto w = random_vec(static_cast<std::size_t>(g.weight_count()), rng);
  std::vector<double> y1(static_cast<std::size_t>(12 * 400)), y2(y1.size());
  const int saved = k::max_threads();
  k::set_max_threads(1);
  k::conv2d_forward(g, x, w, {}, y1);
  k::set_max_threads(4);
  k::conv2d_forward(g, x, w, {}, y2);
  k::set_max_threads(saved);
  CHECK(y1 == y2);
}

TEST_CASE("MAC counter tracks gemm work") {
  k::reset_mac_counter();
  std::vector<double> a(6, 1.0), b(12, 1.0), c(8);
  k::gemm(k::Trans::no, k::Trans::no, 2, 4, 3, 1.0, a, b, 0.0, c);
  CHECK(k::macs_performed() == 24);
}
