#pragma once

// Reverse-mode automatic differentiation over Tensor values. Every op records
// its inputs and a backward closure when grad mode is on and at least one
// input requires a gradient; backward() replays the tape in reverse
// topological order and then releases it.

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "m2s/kernels.hpp"
#include "m2s/tensor.hpp"

namespace m2s {

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  /// Gradient buffer, zero-initialised on first use.
  Tensor& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  bool defined() const noexcept { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  const char* op() const { return node_->op; }

  bool has_grad() const { return !node_->grad.empty(); }
  Tensor& grad() const { return node_->grad_buffer(); }
  void zero_grad() const { node_->grad = Tensor(); }

  const std::shared_ptr<Node>& node() const noexcept { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Leaf that never receives gradients.
inline Var constant(Tensor t) { return Var(std::move(t), false); }

bool grad_enabled() noexcept;

/// Disables tape recording for its lifetime (inference, evaluation).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Seeds d(root)/d(root) = 1 and accumulates gradients into every reachable
/// node that requires them.
void backward(const Var& root);

/// Nodes reachable from root in forward (topological) order.
std::vector<std::shared_ptr<Node>> tape_of(const Var& root);

namespace ops {

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
/// 1 - a
Var one_minus(const Var& a);
/// a * s where s is a single-element tensor.
Var mul_scalar(const Var& a, const Var& s);
/// x[c, ...] * m[c]
Var mul_channels(const Var& x, const Var& m);
/// x[c, h, w] * f[0, h, w]
Var mul_spatial(const Var& x, const Var& f);

Var sigmoid(const Var& x);
Var relu(const Var& x);
Var gelu(const Var& x);

struct ConvOptions {
  int stride = 1;
  int padding = 0;
  int dilation = 1;
  int groups = 1;
};
/// x: [Cin, H, W], w: [Cout, Cin/groups, kh, kw], b: [Cout] or undefined.
Var conv2d(const Var& x, const Var& w, const Var& b, ConvOptions opt = {});

/// Bilinear, half-pixel centres. Returns x itself when the size already matches.
Var resize_bilinear(const Var& x, int out_h, int out_w);

Var concat(std::span<const Var> parts);
Var slice(const Var& x, int begin, int count);
Var reshape(const Var& x, Shape shape);

/// op(a) * op(b) for rank-2 operands.
Var matmul(const Var& a, const Var& b, kernels::Trans ta = kernels::Trans::no,
           kernels::Trans tb = kernels::Trans::no);
/// Normalises over axis 0 independently for every remaining position.
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps);
Var softmax_rows(const Var& x);

/// Sum over every axis but the first: [C, ...] -> [C].
Var sum_trailing(const Var& x);
Var sum(const Var& x);
Var mean(const Var& x);

enum class SpectralPool { weighted_sum, weighted_max };
/// x: [C, H, W], basis: [K, H, W] -> [C, K].
Var spectral_pool(const Var& x, const Tensor& basis, SpectralPool mode);

/// Mean binary cross-entropy with predictions clamped to [eps, 1 - eps].
Var bce(const Var& pred, const Tensor& target, double eps);

}  // namespace ops
}  // namespace m2s
