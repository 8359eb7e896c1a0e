#include <algorithm>
#include <cmath>

#include "m2s/kernels.hpp"

namespace m2s::kernels::reference {
namespace {

double source_coord(int o, int in, int out) {
  const double src = (static_cast<double>(in) / out) * (o + 0.5) - 0.5;
  return src < 0.0 ? 0.0 : src;
}

}  // namespace

void gemm(Trans ta, Trans tb, int m, int n, int k, double alpha, std::span<const double> a,
          std::span<const double> b, double beta, std::span<double> c) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) {
        const double av = ta == Trans::no ? a[static_cast<std::size_t>(i) * k + p]
                                          : a[static_cast<std::size_t>(p) * m + i];
        const double bv = tb == Trans::no ? b[static_cast<std::size_t>(p) * n + j]
                                          : b[static_cast<std::size_t>(j) * k + p];
        acc += av * bv;
      }
      double& out = c[static_cast<std::size_t>(i) * n + j];
      out = alpha * acc + (beta == 0.0 ? 0.0 : beta * out);
    }
  }
}

void conv2d_forward(const ConvGeometry& g, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y) {
  const int oh = g.out_height();
  const int ow = g.out_width();
  const int cin_g = g.in_channels / g.groups;
  const int cout_g = g.out_channels / g.groups;
  for (int o = 0; o < g.out_channels; ++o) {
    const int grp = o / cout_g;
    for (int yo = 0; yo < oh; ++yo) {
      for (int xo = 0; xo < ow; ++xo) {
        double acc = bias.empty() ? 0.0 : bias[static_cast<std::size_t>(o)];
        for (int ci = 0; ci < cin_g; ++ci) {
          const int c = grp * cin_g + ci;
          for (int ki = 0; ki < g.kernel_h; ++ki) {
            for (int kj = 0; kj < g.kernel_w; ++kj) {
              const int iy = yo * g.stride - g.padding + ki * g.dilation;
              const int ix = xo * g.stride - g.padding + kj * g.dilation;
              if (iy < 0 || iy >= g.height || ix < 0 || ix >= g.width) continue;
              const double wv =
                  w[((static_cast<std::size_t>(o) * cin_g + ci) * g.kernel_h + ki) * g.kernel_w + kj];
              acc += wv * x[(static_cast<std::size_t>(c) * g.height + iy) * g.width + ix];
            }
          }
        }
        y[(static_cast<std::size_t>(o) * oh + yo) * ow + xo] = acc;
      }
    }
  }
}

void conv2d_backward(const ConvGeometry& g, std::span<const double> x, std::span<const double> w,
                     std::span<const double> dy, std::span<double> dx, std::span<double> dw,
                     std::span<double> dbias) {
  const int oh = g.out_height();
  const int ow = g.out_width();
  const int cin_g = g.in_channels / g.groups;
  const int cout_g = g.out_channels / g.groups;
  for (int o = 0; o < g.out_channels; ++o) {
    const int grp = o / cout_g;
    for (int yo = 0; yo < oh; ++yo) {
      for (int xo = 0; xo < ow; ++xo) {
        const double gy = dy[(static_cast<std::size_t>(o) * oh + yo) * ow + xo];
        if (!dbias.empty()) dbias[static_cast<std::size_t>(o)] += gy;
        for (int ci = 0; ci < cin_g; ++ci) {
          const int c = grp * cin_g + ci;
          for (int ki = 0; ki < g.kernel_h; ++ki) {
            for (int kj = 0; kj < g.kernel_w; ++kj) {
              const int iy = yo * g.stride - g.padding + ki * g.dilation;
              const int ix = xo * g.stride - g.padding + kj * g.dilation;
              if (iy < 0 || iy >= g.height || ix < 0 || ix >= g.width) continue;
              const std::size_t wi =
                  ((static_cast<std::size_t>(o) * cin_g + ci) * g.kernel_h + ki) * g.kernel_w + kj;
              const std::size_t xi = (static_cast<std::size_t>(c) * g.height + iy) * g.width + ix;
              if (!dw.empty()) dw[wi] += gy * x[xi];
              if (!dx.empty()) dx[xi] += gy * w[wi];
            }
          }
        }
      }
    }
  }
}

void resize_bilinear_forward(int channels, int in_h, int in_w, int out_h, int out_w,
                             std::span<const double> x, std::span<double> y) {
  for (int c = 0; c < channels; ++c) {
    for (int oy = 0; oy < out_h; ++oy) {
      const double sy = source_coord(oy, in_h, out_h);
      const int y0 = std::min(static_cast<int>(std::floor(sy)), in_h - 1);
      const int y1 = std::min(y0 + 1, in_h - 1);
      const double fy = sy - y0;
      for (int ox = 0; ox < out_w; ++ox) {
        const double sx = source_coord(ox, in_w, out_w);
        const int x0 = std::min(static_cast<int>(std::floor(sx)), in_w - 1);
        const int x1 = std::min(x0 + 1, in_w - 1);
        const double fx = sx - x0;
        auto px = [&](int yy, int xx) {
          return x[(static_cast<std::size_t>(c) * in_h + yy) * in_w + xx];
        };
        const double top = (1.0 - fx) * px(y0, x0) + fx * px(y0, x1);
        const double bottom = (1.0 - fx) * px(y1, x0) + fx * px(y1, x1);
        y[(static_cast<std::size_t>(c) * out_h + oy) * out_w + ox] = (1.0 - fy) * top + fy * bottom;
      }
    }
  }
}

void resize_bilinear_backward(int channels, int in_h, int in_w, int out_h, int out_w,
                              std::span<const double> dy, std::span<double> dx) {
  for (int c = 0; c < channels; ++c) {
    for (int oy = 0; oy < out_h; ++oy) {
      const double sy = source_coord(oy, in_h, out_h);
      const int y0 = std::min(static_cast<int>(std::floor(sy)), in_h - 1);
      const int y1 = std::min(y0 + 1, in_h - 1);
      const double fy = sy - y0;
      for (int ox = 0; ox < out_w; ++ox) {
        const double sx = source_coord(ox, in_w, out_w);
        const int x0 = std::min(static_cast<int>(std::floor(sx)), in_w - 1);
        const int x1 = std::min(x0 + 1, in_w - 1);
        const double fx = sx - x0;
        const double gv = dy[(static_cast<std::size_t>(c) * out_h + oy) * out_w + ox];
        auto at = [&](int yy, int xx) -> double& {
          return dx[(static_cast<std::size_t>(c) * in_h + yy) * in_w + xx];
        };
        at(y0, x0) += (1.0 - fy) * (1.0 - fx) * gv;
        at(y0, x1) += (1.0 - fy) * fx * gv;
        at(y1, x0) += fy * (1.0 - fx) * gv;
        at(y1, x1) += fy * fx * gv;
      }
    }
  }
}

}  // namespace m2s::kernels::reference
