#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "m2s/errors.hpp"

using namespace m2s;
using namespace m2s::testing;

namespace {

Var leaf(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) { return Var(random_tensor(std::move(s), rng, lo, hi), true); }

void check_op(const char* name, const std::function<Var()>& f, const std::vector<std::pair<std::string, Var>>& vars,
              double tol = 1e-6) {
  CAPTURE(name);
  const auto r = gradient_check(f, all_elements(vars));
  CAPTURE(r.worst);
  CHECK(r.max_rel_error < tol);
}

}  // namespace

TEST_CASE("elementwise ops have correct gradients") {
  Rng rng(1);
  Var a = leaf({2, 3, 3}, rng), b = leaf({2, 3, 3}, rng);
  check_op("add", [&] { return random_projection(ops::add(a, b), 1); }, {{"a", a}, {"b", b}});
  check_op("sub", [&] { return random_projection(ops::sub(a, b), 2); }, {{"a", a}, {"b", b}});
  check_op("mul", [&] { return random_projection(ops::mul(a, b), 3); }, {{"a", a}, {"b", b}});
  check_op("scale", [&] { return random_projection(ops::scale(a, -1.7), 4); }, {{"a", a}});
  check_op("one_minus", [&] { return random_projection(ops::one_minus(a), 5); }, {{"a", a}});
  check_op("sigmoid", [&] { return random_projection(ops::sigmoid(a), 6); }, {{"a", a}});
  check_op("gelu", [&] { return random_projection(ops::gelu(a), 7); }, {{"a", a}});
  check_op("relu", [&] { return random_projection(ops::relu(a), 8); }, {{"a", a}});
}

TEST_CASE("broadcast multiplies have correct gradients") {
  Rng rng(2);
  Var x = leaf({3, 4, 4}, rng), s = leaf({1}, rng), m = leaf({3, 1, 1}, rng), f = leaf({1, 4, 4}, rng);
  check_op("mul_scalar", [&] { return random_projection(ops::mul_scalar(x, s), 1); }, {{"x", x}, {"s", s}});
  check_op("mul_channels", [&] { return random_projection(ops::mul_channels(x, m), 2); }, {{"x", x}, {"m", m}});
  check_op("mul_spatial", [&] { return random_projection(ops::mul_spatial(x, f), 3); }, {{"x", x}, {"f", f}});
}

TEST_CASE("convolution gradients for dense, strided, dilated and depthwise cases") {
  Rng rng(3);
  Var x = leaf({4, 7, 7}, rng);
  struct Case {
    int out, k, in_per_group;
    ops::ConvOptions opt;
  };
  for (const auto& c : {Case{3, 3, 4, {1, 1, 1, 1}}, Case{2, 3, 4, {2, 1, 1, 1}}, Case{3, 3, 4, {1, 2, 2, 1}},
                        Case{4, 3, 1, {1, 1, 1, 4}}, Case{5, 1, 4, {1, 0, 1, 1}}}) {
    Var w = leaf({c.out, c.in_per_group, c.k, c.k}, rng);
    Var b = leaf({c.out}, rng);
    check_op("conv2d", [&] { return random_projection(ops::conv2d(x, w, b, c.opt), 9); },
             {{"x", x}, {"w", w}, {"b", b}});
  }
}

TEST_CASE("shape ops have correct gradients") {
  Rng rng(4);
  Var a = leaf({2, 3, 3}, rng), b = leaf({3, 3, 3}, rng);
  check_op("resize_up", [&] { return random_projection(ops::resize_bilinear(a, 7, 5), 1); }, {{"a", a}});
  check_op("resize_down", [&] { return random_projection(ops::resize_bilinear(b, 2, 2), 2); }, {{"b", b}});
  check_op("concat", [&] {
    const std::array parts{a, b};
    return random_projection(ops::concat(parts), 3);
  }, {{"a", a}, {"b", b}});
  check_op("slice", [&] { return random_projection(ops::slice(b, 1, 2), 4); }, {{"b", b}});
  check_op("reshape", [&] { return random_projection(ops::reshape(a, {2, 9}), 5); }, {{"a", a}});
}

TEST_CASE("matrix, normalisation and reduction ops have correct gradients") {
  Rng rng(5);
  Var a = leaf({4, 3}, rng), b = leaf({3, 5}, rng), bt = leaf({5, 3}, rng);
  check_op("matmul", [&] { return random_projection(ops::matmul(a, b), 1); }, {{"a", a}, {"b", b}});
  check_op("matmul_tb", [&] { return random_projection(ops::matmul(a, bt, kernels::Trans::no, kernels::Trans::yes), 2); },
           {{"a", a}, {"bt", bt}});
  Var x = leaf({6, 3, 2}, rng), g = leaf({6}, rng), be = leaf({6}, rng);
  check_op("layer_norm", [&] { return random_projection(ops::layer_norm(x, g, be, 1e-5), 3); },
           {{"x", x}, {"g", g}, {"be", be}});
  Var s = leaf({3, 4}, rng, -2, 2);
  check_op("softmax_rows", [&] { return random_projection(ops::softmax_rows(s), 4); }, {{"s", s}});
  Var t = leaf({3, 1, 4}, rng);
  check_op("sum_trailing", [&] { return random_projection(ops::sum_trailing(t), 5); }, {{"t", t}});
  check_op("mean", [&] { return ops::mean(ops::mul(t, t)); }, {{"t", t}});
}

TEST_CASE("spectral pooling gradients in both modes") {
  Rng rng(6);
  Var x = leaf({3, 4, 4}, rng);
  Tensor basis = random_tensor({2, 4, 4}, rng);
  check_op("weighted_sum", [&] { return random_projection(ops::spectral_pool(x, basis, ops::SpectralPool::weighted_sum), 1); },
           {{"x", x}});
  check_op("weighted_max", [&] { return random_projection(ops::spectral_pool(x, basis, ops::SpectralPool::weighted_max), 2); },
           {{"x", x}});
}

TEST_CASE("bce gradient and clamping") {
  Rng rng(7);
  Var p = leaf({1, 3, 3}, rng, 0.05, 0.95);
  Tensor t({1, 3, 3});
  for (std::size_t i = 0; i < t.size(); i += 2) t[i] = 1.0;
  check_op("bce", [&] { return ops::bce(p, t, 1e-7); }, {{"p", p}});

  Var sat(Tensor({1, 1, 2}, std::vector<double>{0.0, 1.0}), true);
  const Var loss = ops::bce(sat, Tensor({1, 1, 2}, std::vector<double>{1.0, 0.0}), 1e-7);
  CHECK(std::isfinite(loss.value()[0]));
  backward(loss);
  CHECK(sat.grad()[0] == 0.0);
  CHECK(sat.grad()[1] == 0.0);
}

TEST_CASE("bce examples") {
  const Var half = ops::bce(constant(Tensor({1, 2, 2}, 0.5)), Tensor({1, 2, 2}, 1.0), 1e-7);
  CHECK(half.value()[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  const Var perfect = ops::bce(constant(Tensor({1, 2, 2}, 1.0)), Tensor({1, 2, 2}, 1.0), 1e-7);
  CHECK(perfect.value()[0] == doctest::Approx(1e-7).epsilon(1e-6));
  CHECK_THROWS_AS(ops::bce(constant(Tensor({1, 2, 2})), Tensor({1, 2, 3}), 1e-7), DimensionError);
}

TEST_CASE("no-grad mode records nothing") {
  Rng rng(8);
  Var a = leaf({2, 2, 2}, rng);
  NoGradGuard guard;
  const Var y = ops::sigmoid(a);
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("gradients accumulate across backward calls") {
  Var a(Tensor({1}, 2.0), true);
  backward(ops::scale(a, 3.0));
  backward(ops::scale(a, 3.0));
  CHECK(a.grad()[0] == 6.0);
  a.zero_grad();
  CHECK((!a.has_grad() || a.grad()[0] == 0.0));
}

TEST_CASE("mismatched shapes raise dimension errors") {
  Rng rng(9);
  Var a = leaf({2, 2, 2}, rng), b = leaf({2, 2, 3}, rng);
  CHECK_THROWS_AS(ops::add(a, b), DimensionError);
  CHECK_THROWS_AS(ops::mul(a, b), DimensionError);
}
