#include "m2s/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_set>

#include "m2s/errors.hpp"

namespace m2s {
namespace {

thread_local bool t_grad_enabled = true;

using kernels::Trans;

Var make(Tensor value, const char* op, std::initializer_list<Var> inputs,
         std::function<void(Node&)> fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = op;
  bool needs = false;
  if (t_grad_enabled) {
    for (const Var& in : inputs) needs = needs || in.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    for (const Var& in : inputs) node->inputs.push_back(in.node());
    node->backward = std::move(fn);
  }
  return Var(std::move(node));
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  }
}

// Accumulates `scale * src` into the input's gradient if it wants one.
void accumulate(Node* in, const Tensor& src, double scale = 1.0) {
  if (!in->requires_grad) return;
  Tensor& g = in->grad_buffer();
  const std::size_t n = g.size();
  double* gp = g.data();
  const double* sp = src.data();
#pragma omp parallel for schedule(static) if (n > 65536)
  for (std::size_t i = 0; i < n; ++i) gp[i] += scale * sp[i];
}

std::size_t trailing(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t i = 1; i < s.size(); ++i) n *= static_cast<std::size_t>(s[i]);
  return n;
}

template <typename Forward, typename Derivative>
Var unary(const Var& x, const char* op, Forward f, Derivative df) {
  Tensor out(x.shape());
  const std::size_t n = out.size();
  const double* xp = x.value().data();
  double* op_ = out.data();
#pragma omp parallel for schedule(static) if (n > 65536)
  for (std::size_t i = 0; i < n; ++i) op_[i] = f(xp[i]);
  Var xin = x;
  return make(std::move(out), op, {x}, [xin, df](Node& self) mutable {
    Node* in = xin.node().get();
    if (!in->requires_grad) return;
    Tensor& g = in->grad_buffer();
    const std::size_t n = g.size();
    const double* xv = in->value.data();
    const double* yv = self.value.data();
    const double* gy = self.grad.data();
    double* gx = g.data();
#pragma omp parallel for schedule(static) if (n > 65536)
    for (std::size_t i = 0; i < n; ++i) gx[i] += gy[i] * df(xv[i], yv[i]);
  });
}

}  // namespace

Tensor& Node::grad_buffer() {
  if (grad.empty() && !value.empty()) grad = Tensor(value.shape());
  return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

bool grad_enabled() noexcept { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

std::vector<std::shared_ptr<Node>> tape_of(const Var& root) {
  std::vector<std::shared_ptr<Node>> order;
  if (!root.defined()) return order;
  std::unordered_set<Node*> visited;
  // Iterative post-order DFS.
  std::vector<std::pair<std::shared_ptr<Node>, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      auto child = node->inputs[next++];
      if (child && visited.insert(child.get()).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

void backward(const Var& root) {
  if (!root.requires_grad()) return;
  auto order = tape_of(root);
  root.node()->grad_buffer().fill(1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node& n = **it;
    if (n.backward && !n.grad.empty()) n.backward(n);
  }
  for (auto& n : order) {
    if (n->backward) {
      n->backward = nullptr;
      n->inputs.clear();
    }
  }
}

namespace ops {

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  Var ca = a, cb = b;
  return make(std::move(out), "add", {a, b}, [ca, cb](Node& self) {
    accumulate(ca.node().get(), self.grad);
    accumulate(cb.node().get(), self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  Var ca = a, cb = b;
  return make(std::move(out), "sub", {a, b}, [ca, cb](Node& self) {
    accumulate(ca.node().get(), self.grad);
    accumulate(cb.node().get(), self.grad, -1.0);
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  Var ca = a, cb = b;
  return make(std::move(out), "mul", {a, b}, [ca, cb](Node& self) {
    const std::size_t n = self.grad.size();
    if (ca.requires_grad()) {
      Tensor& g = ca.node()->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i] * cb.value()[i];
    }
    if (cb.requires_grad()) {
      Tensor& g = cb.node()->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i] * ca.value()[i];
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor out = a.value();
  for (auto& v : out.values()) v *= s;
  Var ca = a;
  return make(std::move(out), "scale", {a},
              [ca, s](Node& self) { accumulate(ca.node().get(), self.grad, s); });
}

Var one_minus(const Var& a) {
  Tensor out = a.value();
  for (auto& v : out.values()) v = 1.0 - v;
  Var ca = a;
  return make(std::move(out), "one_minus", {a},
              [ca](Node& self) { accumulate(ca.node().get(), self.grad, -1.0); });
}

Var mul_scalar(const Var& a, const Var& s) {
  if (s.value().size() != 1) throw DimensionError("mul_scalar: scale must hold one value");
  const double sv = s.value()[0];
  Tensor out = a.value();
  for (auto& v : out.values()) v *= sv;
  Var ca = a, cs = s;
  return make(std::move(out), "mul_scalar", {a, s}, [ca, cs](Node& self) {
    accumulate(ca.node().get(), self.grad, cs.value()[0]);
    if (cs.requires_grad()) {
      double acc = 0.0;
      for (std::size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * ca.value()[i];
      cs.node()->grad_buffer()[0] += acc;
    }
  });
}

Var mul_channels(const Var& x, const Var& m) {
  const int c = x.shape().at(0);
  if (static_cast<int>(m.value().size()) != c) {
    throw DimensionError("mul_channels: " + std::to_string(m.value().size()) +
                         " weights for " + std::to_string(c) + " channels");
  }
  const std::size_t inner = trailing(x.shape());
  Tensor out = x.value();
  for (int ch = 0; ch < c; ++ch) {
    const double w = m.value()[static_cast<std::size_t>(ch)];
    double* p = out.data() + static_cast<std::size_t>(ch) * inner;
    for (std::size_t i = 0; i < inner; ++i) p[i] *= w;
  }
  Var cx = x, cm = m;
  return make(std::move(out), "mul_channels", {x, m}, [cx, cm, c, inner](Node& self) {
    for (int ch = 0; ch < c; ++ch) {
      const double* gy = self.grad.data() + static_cast<std::size_t>(ch) * inner;
      if (cx.requires_grad()) {
        double* gx = cx.node()->grad_buffer().data() + static_cast<std::size_t>(ch) * inner;
        const double w = cm.value()[static_cast<std::size_t>(ch)];
        for (std::size_t i = 0; i < inner; ++i) gx[i] += gy[i] * w;
      }
      if (cm.requires_grad()) {
        const double* xv = cx.value().data() + static_cast<std::size_t>(ch) * inner;
        double acc = 0.0;
        for (std::size_t i = 0; i < inner; ++i) acc += gy[i] * xv[i];
        cm.node()->grad_buffer()[static_cast<std::size_t>(ch)] += acc;
      }
    }
  });
}

Var mul_spatial(const Var& x, const Var& f) {
  if (x.value().rank() != 3 || f.value().rank() != 3 || f.shape()[0] != 1 ||
      f.shape()[1] != x.shape()[1] || f.shape()[2] != x.shape()[2]) {
    throw DimensionError("mul_spatial: cannot broadcast " + to_string(f.shape()) + " over " +
                         to_string(x.shape()));
  }
  const int c = x.shape()[0];
  const std::size_t inner = trailing(x.shape());
  Tensor out = x.value();
  for (int ch = 0; ch < c; ++ch) {
    double* p = out.data() + static_cast<std::size_t>(ch) * inner;
    for (std::size_t i = 0; i < inner; ++i) p[i] *= f.value()[i];
  }
  Var cx = x, cf = f;
  return make(std::move(out), "mul_spatial", {x, f}, [cx, cf, c, inner](Node& self) {
    if (cx.requires_grad()) {
      Tensor& gx = cx.node()->grad_buffer();
      for (int ch = 0; ch < c; ++ch) {
        const std::size_t off = static_cast<std::size_t>(ch) * inner;
        for (std::size_t i = 0; i < inner; ++i) gx[off + i] += self.grad[off + i] * cf.value()[i];
      }
    }
    if (cf.requires_grad()) {
      Tensor& gf = cf.node()->grad_buffer();
      for (int ch = 0; ch < c; ++ch) {
        const std::size_t off = static_cast<std::size_t>(ch) * inner;
        for (std::size_t i = 0; i < inner; ++i) gf[i] += self.grad[off + i] * cx.value()[off + i];
      }
    }
  });
}

Var sigmoid(const Var& x) {
  return unary(
      x, "sigmoid",
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var relu(const Var& x) {
  return unary(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var gelu(const Var& x) {
  return unary(
      x, "gelu", [](double v) { return 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0)); },
      [](double v, double) {
        const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
        const double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * std::numbers::pi);
        return cdf + v * pdf;
      });
}

Var conv2d(const Var& x, const Var& w, const Var& b, ConvOptions opt) {
  require_feature_map(x.value(), "conv2d input");
  if (w.value().rank() != 4) throw DimensionError("conv2d: weight must be rank 4");
  kernels::ConvGeometry g;
  g.in_channels = x.shape()[0];
  g.height = x.shape()[1];
  g.width = x.shape()[2];
  g.out_channels = w.shape()[0];
  g.kernel_h = w.shape()[2];
  g.kernel_w = w.shape()[3];
  g.stride = opt.stride;
  g.padding = opt.padding;
  g.dilation = opt.dilation;
  g.groups = opt.groups;
  if (g.in_channels % g.groups != 0 || g.out_channels % g.groups != 0 ||
      w.shape()[1] != g.in_channels / g.groups) {
    throw DimensionError("conv2d: weight " + to_string(w.shape()) + " does not fit input " +
                         to_string(x.shape()) + " with " + std::to_string(g.groups) + " groups");
  }
  if (b.defined() && static_cast<int>(b.value().size()) != g.out_channels) {
    throw DimensionError("conv2d: bias length does not match output channels");
  }
  if (g.out_height() <= 0 || g.out_width() <= 0) {
    throw DimensionError("conv2d: input " + to_string(x.shape()) + " too small for kernel");
  }
  Tensor out({g.out_channels, g.out_height(), g.out_width()});
  kernels::conv2d_forward(g, x.value().values(), w.value().values(),
                          b.defined() ? b.value().values() : std::span<const double>{},
                          out.values());
  Var cx = x, cw = w, cb = b;
  auto fn = [cx, cw, cb, g](Node& self) {
    std::span<double> dx, dw, db;
    if (cx.requires_grad()) dx = cx.node()->grad_buffer().values();
    if (cw.requires_grad()) dw = cw.node()->grad_buffer().values();
    if (cb.defined() && cb.requires_grad()) db = cb.node()->grad_buffer().values();
    kernels::conv2d_backward(g, cx.value().values(), cw.value().values(), self.grad.values(), dx,
                             dw, db);
  };
  if (b.defined()) return make(std::move(out), "conv2d", {x, w, b}, fn);
  return make(std::move(out), "conv2d", {x, w}, fn);
}

Var resize_bilinear(const Var& x, int out_h, int out_w) {
  require_feature_map(x.value(), "resize_bilinear input");
  if (out_h <= 0 || out_w <= 0) throw DimensionError("resize_bilinear: non-positive target size");
  const int c = x.shape()[0];
  const int h = x.shape()[1];
  const int w = x.shape()[2];
  if (h == out_h && w == out_w) return x;
  Tensor out({c, out_h, out_w});
  kernels::resize_bilinear_forward(c, h, w, out_h, out_w, x.value().values(), out.values());
  Var cx = x;
  return make(std::move(out), "resize_bilinear", {x}, [cx, c, h, w, out_h, out_w](Node& self) {
    if (!cx.requires_grad()) return;
    kernels::resize_bilinear_backward(c, h, w, out_h, out_w, self.grad.values(),
                                      cx.node()->grad_buffer().values());
  });
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  Shape shape = parts[0].shape();
  int total = 0;
  for (const Var& p : parts) {
    Shape s = p.shape();
    if (s.size() != shape.size() || !std::equal(s.begin() + 1, s.end(), shape.begin() + 1)) {
      throw DimensionError("concat: incompatible shapes " + to_string(s) + " and " +
                           to_string(shape));
    }
    total += s[0];
  }
  shape[0] = total;
  Tensor out(shape);
  std::size_t off = 0;
  for (const Var& p : parts) {
    std::copy(p.value().data(), p.value().data() + p.value().size(), out.data() + off);
    off += p.value().size();
  }
  std::vector<Var> held(parts.begin(), parts.end());
  auto node = make(std::move(out), "concat", {}, nullptr);
  bool needs = false;
  if (grad_enabled()) {
    for (const Var& p : parts) needs = needs || p.requires_grad();
  }
  if (needs) {
    Node& n = *node.node();
    n.requires_grad = true;
    for (const Var& p : parts) n.inputs.push_back(p.node());
    n.backward = [held](Node& self) {
      std::size_t off = 0;
      for (const Var& p : held) {
        const std::size_t n = p.value().size();
        if (p.requires_grad()) {
          Tensor& g = p.node()->grad_buffer();
          for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[off + i];
        }
        off += n;
      }
    };
  }
  return node;
}

Var slice(const Var& x, int begin, int count) {
  const Shape& s = x.shape();
  if (begin < 0 || count <= 0 || begin + count > s.at(0)) {
    throw DimensionError("slice: range [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") outside axis of " +
                         std::to_string(s.at(0)));
  }
  Shape shape = s;
  shape[0] = count;
  const std::size_t inner = trailing(s);
  const std::size_t off = static_cast<std::size_t>(begin) * inner;
  Tensor out(shape);
  std::copy(x.value().data() + off, x.value().data() + off + out.size(), out.data());
  Var cx = x;
  return make(std::move(out), "slice", {x}, [cx, off](Node& self) {
    if (!cx.requires_grad()) return;
    Tensor& g = cx.node()->grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[off + i] += self.grad[i];
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  Var cx = x;
  return make(std::move(out), "reshape", {x},
              [cx](Node& self) { accumulate(cx.node().get(), self.grad); });
}

Var matmul(const Var& a, const Var& b, Trans ta, Trans tb) {
  if (a.value().rank() != 2 || b.value().rank() != 2) throw DimensionError("matmul: rank-2 only");
  const int m = ta == Trans::no ? a.shape()[0] : a.shape()[1];
  const int k = ta == Trans::no ? a.shape()[1] : a.shape()[0];
  const int kb = tb == Trans::no ? b.shape()[0] : b.shape()[1];
  const int n = tb == Trans::no ? b.shape()[1] : b.shape()[0];
  if (k != kb) {
    throw DimensionError("matmul: inner dimensions differ (" + std::to_string(k) + " vs " +
                         std::to_string(kb) + ")");
  }
  Tensor out({m, n});
  kernels::gemm(ta, tb, m, n, k, 1.0, a.value().values(), b.value().values(), 0.0, out.values());
  Var ca = a, cb = b;
  return make(std::move(out), "matmul", {a, b}, [ca, cb, ta, tb, m, n, k](Node& self) {
    const auto dc = self.grad.values();
    if (ca.requires_grad()) {
      auto da = ca.node()->grad_buffer().values();
      const auto bv = cb.value().values();
      if (ta == Trans::no) {
        kernels::gemm(Trans::no, tb == Trans::no ? Trans::yes : Trans::no, m, k, n, 1.0, dc, bv,
                      1.0, da);
      } else {
        kernels::gemm(tb == Trans::no ? Trans::no : Trans::yes, Trans::yes, k, m, n, 1.0, bv, dc,
                      1.0, da);
      }
    }
    if (cb.requires_grad()) {
      auto db = cb.node()->grad_buffer().values();
      const auto av = ca.value().values();
      if (tb == Trans::no) {
        kernels::gemm(ta == Trans::no ? Trans::yes : Trans::no, Trans::no, k, n, m, 1.0, av, dc,
                      1.0, db);
      } else {
        kernels::gemm(Trans::yes, ta == Trans::no ? Trans::no : Trans::yes, n, k, m, 1.0, dc, av,
                      1.0, db);
      }
    }
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const int c = x.shape().at(0);
  const std::size_t n = trailing(x.shape());
  if (static_cast<int>(gamma.value().size()) != c || static_cast<int>(beta.value().size()) != c) {
    throw DimensionError("layer_norm: affine parameters do not match " + std::to_string(c) +
                         " channels");
  }
  std::vector<double> mu(n, 0.0), rstd(n, 0.0);
  const double* xv = x.value().data();
  for (int ch = 0; ch < c; ++ch) {
    const double* row = xv + static_cast<std::size_t>(ch) * n;
    for (std::size_t i = 0; i < n; ++i) mu[i] += row[i];
  }
  for (auto& m : mu) m /= c;
  for (int ch = 0; ch < c; ++ch) {
    const double* row = xv + static_cast<std::size_t>(ch) * n;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = row[i] - mu[i];
      rstd[i] += d * d;
    }
  }
  for (auto& r : rstd) r = 1.0 / std::sqrt(r / c + eps);
  Tensor xhat(x.shape());
  Tensor out(x.shape());
  for (int ch = 0; ch < c; ++ch) {
    const std::size_t off = static_cast<std::size_t>(ch) * n;
    const double gm = gamma.value()[static_cast<std::size_t>(ch)];
    const double bt = beta.value()[static_cast<std::size_t>(ch)];
    for (std::size_t i = 0; i < n; ++i) {
      const double h = (xv[off + i] - mu[i]) * rstd[i];
      xhat[off + i] = h;
      out[off + i] = gm * h + bt;
    }
  }
  Var cx = x, cg = gamma, cb = beta;
  return make(std::move(out), "layer_norm", {x, gamma, beta},
              [cx, cg, cb, xhat = std::move(xhat), rstd = std::move(rstd), c, n](Node& self) {
                const Tensor& gy = self.grad;
                if (cg.requires_grad() || cb.requires_grad()) {
                  for (int ch = 0; ch < c; ++ch) {
                    const std::size_t off = static_cast<std::size_t>(ch) * n;
                    double dg = 0.0, db = 0.0;
                    for (std::size_t i = 0; i < n; ++i) {
                      dg += gy[off + i] * xhat[off + i];
                      db += gy[off + i];
                    }
                    if (cg.requires_grad()) cg.node()->grad_buffer()[static_cast<std::size_t>(ch)] += dg;
                    if (cb.requires_grad()) cb.node()->grad_buffer()[static_cast<std::size_t>(ch)] += db;
                  }
                }
                if (!cx.requires_grad()) return;
                std::vector<double> mean_d(n, 0.0), mean_dx(n, 0.0);
                for (int ch = 0; ch < c; ++ch) {
                  const std::size_t off = static_cast<std::size_t>(ch) * n;
                  const double gm = cg.value()[static_cast<std::size_t>(ch)];
                  for (std::size_t i = 0; i < n; ++i) {
                    const double d = gy[off + i] * gm;
                    mean_d[i] += d;
                    mean_dx[i] += d * xhat[off + i];
                  }
                }
                for (std::size_t i = 0; i < n; ++i) {
                  mean_d[i] /= c;
                  mean_dx[i] /= c;
                }
                Tensor& gx = cx.node()->grad_buffer();
                for (int ch = 0; ch < c; ++ch) {
                  const std::size_t off = static_cast<std::size_t>(ch) * n;
                  const double gm = cg.value()[static_cast<std::size_t>(ch)];
                  for (std::size_t i = 0; i < n; ++i) {
                    const double d = gy[off + i] * gm;
                    gx[off + i] += rstd[i] * (d - mean_d[i] - xhat[off + i] * mean_dx[i]);
                  }
                }
              });
}

Var softmax_rows(const Var& x) {
  if (x.value().rank() != 2) throw DimensionError("softmax_rows: rank-2 only");
  const int rows = x.shape()[0];
  const int cols = x.shape()[1];
  Tensor out(x.shape());
#pragma omp parallel for schedule(static) if (rows > 256)
  for (int r = 0; r < rows; ++r) {
    const double* in = x.value().data() + static_cast<std::size_t>(r) * cols;
    double* o = out.data() + static_cast<std::size_t>(r) * cols;
    const double mx = *std::max_element(in, in + cols);
    double total = 0.0;
    for (int j = 0; j < cols; ++j) {
      o[j] = std::exp(in[j] - mx);
      total += o[j];
    }
    for (int j = 0; j < cols; ++j) o[j] /= total;
  }
  Var cx = x;
  return make(std::move(out), "softmax_rows", {x}, [cx, rows, cols](Node& self) {
    if (!cx.requires_grad()) return;
    Tensor& gx = cx.node()->grad_buffer();
#pragma omp parallel for schedule(static) if (rows > 256)
    for (int r = 0; r < rows; ++r) {
      const std::size_t off = static_cast<std::size_t>(r) * cols;
      double dot = 0.0;
      for (int j = 0; j < cols; ++j) dot += self.grad[off + j] * self.value[off + j];
      for (int j = 0; j < cols; ++j) gx[off + j] += self.value[off + j] * (self.grad[off + j] - dot);
    }
  });
}

Var sum_trailing(const Var& x) {
  const int c = x.shape().at(0);
  const std::size_t inner = trailing(x.shape());
  Tensor out({c});
  for (int ch = 0; ch < c; ++ch) {
    const double* p = x.value().data() + static_cast<std::size_t>(ch) * inner;
    double acc = 0.0;
    for (std::size_t i = 0; i < inner; ++i) acc += p[i];
    out[static_cast<std::size_t>(ch)] = acc;
  }
  Var cx = x;
  return make(std::move(out), "sum_trailing", {x}, [cx, c, inner](Node& self) {
    if (!cx.requires_grad()) return;
    Tensor& g = cx.node()->grad_buffer();
    for (int ch = 0; ch < c; ++ch) {
      const double gv = self.grad[static_cast<std::size_t>(ch)];
      double* p = g.data() + static_cast<std::size_t>(ch) * inner;
      for (std::size_t i = 0; i < inner; ++i) p[i] += gv;
    }
  });
}

Var sum(const Var& x) {
  double acc = 0.0;
  for (double v : x.value().values()) acc += v;
  Var cx = x;
  return make(Tensor({1}, acc), "sum", {x}, [cx](Node& self) {
    if (!cx.requires_grad()) return;
    Tensor& g = cx.node()->grad_buffer();
    const double gv = self.grad[0];
    for (auto& v : g.values()) v += gv;
  });
}

Var mean(const Var& x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

Var spectral_pool(const Var& x, const Tensor& basis, SpectralPool mode) {
  require_feature_map(x.value(), "spectral_pool input");
  if (basis.rank() != 3 || basis.dim(1) != x.shape()[1] || basis.dim(2) != x.shape()[2]) {
    throw DimensionError("spectral_pool: basis " + to_string(basis.shape()) +
                         " does not match feature map " + to_string(x.shape()));
  }
  const int c = x.shape()[0];
  const int k = basis.dim(0);
  const std::size_t hw = static_cast<std::size_t>(x.shape()[1]) * x.shape()[2];
  Tensor out({c, k});
  std::vector<std::size_t> argmax(static_cast<std::size_t>(c) * k, 0);
  for (int ch = 0; ch < c; ++ch) {
    const double* f = x.value().data() + static_cast<std::size_t>(ch) * hw;
    for (int q = 0; q < k; ++q) {
      const double* d = basis.data() + static_cast<std::size_t>(q) * hw;
      double acc = mode == SpectralPool::weighted_sum ? 0.0 : f[0] * d[0];
      std::size_t best = 0;
      for (std::size_t i = 0; i < hw; ++i) {
        const double p = f[i] * d[i];
        if (mode == SpectralPool::weighted_sum) {
          acc += p;
        } else if (p > acc) {
          acc = p;
          best = i;
        }
      }
      out[static_cast<std::size_t>(ch) * k + q] = acc;
      argmax[static_cast<std::size_t>(ch) * k + q] = best;
    }
  }
  Var cx = x;
  return make(std::move(out), "spectral_pool", {x},
              [cx, basis, mode, argmax = std::move(argmax), c, k, hw](Node& self) {
                if (!cx.requires_grad()) return;
                Tensor& g = cx.node()->grad_buffer();
                for (int ch = 0; ch < c; ++ch) {
                  double* gf = g.data() + static_cast<std::size_t>(ch) * hw;
                  for (int q = 0; q < k; ++q) {
                    const std::size_t idx = static_cast<std::size_t>(ch) * k + q;
                    const double gv = self.grad[idx];
                    const double* d = basis.data() + static_cast<std::size_t>(q) * hw;
                    if (mode == SpectralPool::weighted_sum) {
                      for (std::size_t i = 0; i < hw; ++i) gf[i] += gv * d[i];
                    } else {
                      gf[argmax[idx]] += gv * d[argmax[idx]];
                    }
                  }
                }
              });
}

Var bce(const Var& pred, const Tensor& target, double eps) {
  if (pred.shape() != target.shape()) {
    throw DimensionError("bce: prediction " + to_string(pred.shape()) + " vs target " +
                         to_string(target.shape()));
  }
  const std::size_t n = target.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::clamp(pred.value()[i], eps, 1.0 - eps);
    const double t = target[i];
    acc -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
  }
  Var cp = pred;
  return make(Tensor({1}, acc / static_cast<double>(n)), "bce", {pred},
              [cp, target, eps, n](Node& self) {
                if (!cp.requires_grad()) return;
                Tensor& g = cp.node()->grad_buffer();
                const double scale = self.grad[0] / static_cast<double>(n);
                for (std::size_t i = 0; i < n; ++i) {
                  const double raw = cp.value()[i];
                  if (raw < eps || raw > 1.0 - eps) continue;
                  const double t = target[i];
                  g[i] += scale * (-t / raw + (1.0 - t) / (1.0 - raw));
                }
              });
}

}  // namespace ops
}  // namespace m2s
