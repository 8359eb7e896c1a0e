#include "m2s/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <atomic>
#include <vector>

#include "m2s/errors.hpp"

namespace m2s::kernels {
namespace {

std::atomic<std::uint64_t> g_macs{0};

constexpr int kBlockK = 256;
constexpr int kBlockN = 512;
constexpr int kRows = 4;

void count_macs(std::int64_t m, std::int64_t n, std::int64_t k) {
  g_macs.fetch_add(static_cast<std::uint64_t>(m * n * k), std::memory_order_relaxed);
}

// Packs op(src) (rows x cols after transposition) into dst row-major.
void pack_transposed(const double* src, int rows, int cols, std::vector<double>& dst) {
  dst.resize(static_cast<std::size_t>(rows) * cols);
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      dst[static_cast<std::size_t>(r) * cols + c] = src[static_cast<std::size_t>(c) * rows + r];
    }
  }
}

// c[rows x n] += alpha * a[rows x k] * b[k x n] for a strip of at most kRows rows.
void strip_kernel(int rows, int n, int k, double alpha, const double* a, const double* b,
                  double* c) {
  for (int kb = 0; kb < k; kb += kBlockK) {
    const int ke = std::min(k, kb + kBlockK);
    for (int jb = 0; jb < n; jb += kBlockN) {
      const int je = std::min(n, jb + kBlockN);
      if (rows == kRows) {
        double* __restrict c0 = c;
        double* __restrict c1 = c + n;
        double* __restrict c2 = c + 2 * static_cast<std::size_t>(n);
        double* __restrict c3 = c + 3 * static_cast<std::size_t>(n);
        for (int kk = kb; kk < ke; ++kk) {
          const double a0 = alpha * a[kk];
          const double a1 = alpha * a[static_cast<std::size_t>(k) + kk];
          const double a2 = alpha * a[2 * static_cast<std::size_t>(k) + kk];
          const double a3 = alpha * a[3 * static_cast<std::size_t>(k) + kk];
          const double* __restrict bk = b + static_cast<std::size_t>(kk) * n;
          for (int j = jb; j < je; ++j) {
            const double bv = bk[j];
            c0[j] += a0 * bv;
            c1[j] += a1 * bv;
            c2[j] += a2 * bv;
            c3[j] += a3 * bv;
          }
        }
      } else {
        for (int r = 0; r < rows; ++r) {
          double* __restrict cr = c + static_cast<std::size_t>(r) * n;
          const double* ar = a + static_cast<std::size_t>(r) * k;
          for (int kk = kb; kk < ke; ++kk) {
            const double av = alpha * ar[kk];
            const double* __restrict bk = b + static_cast<std::size_t>(kk) * n;
            for (int j = jb; j < je; ++j) cr[j] += av * bk[j];
          }
        }
      }
    }
  }
}

struct AxisTap {
  int i0;
  int i1;
  double l0;
  double l1;
};

std::vector<AxisTap> axis_taps(int in, int out) {
  std::vector<AxisTap> taps(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (int o = 0; o < out; ++o) {
    double src = scale * (o + 0.5) - 0.5;
    if (src < 0.0) src = 0.0;
    int i0 = static_cast<int>(src);
    if (i0 > in - 1) i0 = in - 1;
    const int i1 = i0 < in - 1 ? i0 + 1 : i0;
    const double l1 = src - i0;
    taps[static_cast<std::size_t>(o)] = {i0, i1, 1.0 - l1, l1};
  }
  return taps;
}

void im2col(const ConvGeometry& g, const double* x, int channels, double* col) {
  const int oh = g.out_height();
  const int ow = g.out_width();
  const int rows = channels * g.kernel_h * g.kernel_w;
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    const int c = r / (g.kernel_h * g.kernel_w);
    const int ki = (r / g.kernel_w) % g.kernel_h;
    const int kj = r % g.kernel_w;
    const double* xc = x + static_cast<std::size_t>(c) * g.height * g.width;
    double* out = col + static_cast<std::size_t>(r) * oh * ow;
    for (int y = 0; y < oh; ++y) {
      const int iy = y * g.stride - g.padding + ki * g.dilation;
      double* orow = out + static_cast<std::size_t>(y) * ow;
      if (iy < 0 || iy >= g.height) {
        std::fill(orow, orow + ow, 0.0);
        continue;
      }
      for (int xo = 0; xo < ow; ++xo) {
        const int ix = xo * g.stride - g.padding + kj * g.dilation;
        orow[xo] = (ix >= 0 && ix < g.width) ? xc[static_cast<std::size_t>(iy) * g.width + ix] : 0.0;
      }
    }
  }
}

// Accumulates columns back into the image; one thread owns each input channel.
void col2im_add(const ConvGeometry& g, const double* col, int channels, double* dx) {
  const int oh = g.out_height();
  const int ow = g.out_width();
  const int taps = g.kernel_h * g.kernel_w;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < channels; ++c) {
    double* dxc = dx + static_cast<std::size_t>(c) * g.height * g.width;
    for (int t = 0; t < taps; ++t) {
      const int ki = t / g.kernel_w;
      const int kj = t % g.kernel_w;
      const double* in = col + (static_cast<std::size_t>(c) * taps + t) * oh * ow;
      for (int y = 0; y < oh; ++y) {
        const int iy = y * g.stride - g.padding + ki * g.dilation;
        if (iy < 0 || iy >= g.height) continue;
        for (int xo = 0; xo < ow; ++xo) {
          const int ix = xo * g.stride - g.padding + kj * g.dilation;
          if (ix >= 0 && ix < g.width) {
            dxc[static_cast<std::size_t>(iy) * g.width + ix] += in[static_cast<std::size_t>(y) * ow + xo];
          }
        }
      }
    }
  }
}

void depthwise_forward(const ConvGeometry& g, const double* x, const double* w,
                       std::span<const double> bias, double* y) {
  const int oh = g.out_height();
  const int ow = g.out_width();
  const int taps = g.kernel_h * g.kernel_w;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < g.in_channels; ++c) {
    const double* xc = x + static_cast<std::size_t>(c) * g.height * g.width;
    const double* wc = w + static_cast<std::size_t>(c) * taps;
    double* yc = y + static_cast<std::size_t>(c) * oh * ow;
    const double b = bias.empty() ? 0.0 : bias[static_cast<std::size_t>(c)];
    for (int yo = 0; yo < oh; ++yo) {
      for (int xo = 0; xo < ow; ++xo) {
        double acc = b;
        for (int t = 0; t < taps; ++t) {
          const int iy = yo * g.stride - g.padding + (t / g.kernel_w) * g.dilation;
          const int ix = xo * g.stride - g.padding + (t % g.kernel_w) * g.dilation;
          if (iy >= 0 && iy < g.height && ix >= 0 && ix < g.width) {
            acc += wc[t] * xc[static_cast<std::size_t>(iy) * g.width + ix];
          }
        }
        yc[static_cast<std::size_t>(yo) * ow + xo] = acc;
      }
    }
  }
}

void depthwise_backward(const ConvGeometry& g, const double* x, const double* w,
                        const double* dy, std::span<double> dx, std::span<double> dw,
                        std::span<double> dbias) {
  const int oh = g.out_height();
  const int ow = g.out_width();
  const int taps = g.kernel_h * g.kernel_w;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < g.in_channels; ++c) {
    const double* xc = x + static_cast<std::size_t>(c) * g.height * g.width;
    const double* wc = w + static_cast<std::size_t>(c) * taps;
    const double* dyc = dy + static_cast<std::size_t>(c) * oh * ow;
    double db = 0.0;
    for (int i = 0; i < oh * ow; ++i) db += dyc[i];
    if (!dbias.empty()) dbias[static_cast<std::size_t>(c)] += db;
    for (int t = 0; t < taps; ++t) {
      const int ki = t / g.kernel_w;
      const int kj = t % g.kernel_w;
      double dwt = 0.0;
      for (int yo = 0; yo < oh; ++yo) {
        const int iy = yo * g.stride - g.padding + ki * g.dilation;
        if (iy < 0 || iy >= g.height) continue;
        for (int xo = 0; xo < ow; ++xo) {
          const int ix = xo * g.stride - g.padding + kj * g.dilation;
          if (ix < 0 || ix >= g.width) continue;
          const double gy = dyc[static_cast<std::size_t>(yo) * ow + xo];
          const std::size_t xi = static_cast<std::size_t>(iy) * g.width + ix;
          dwt += gy * xc[xi];
          if (!dx.empty()) dx[static_cast<std::size_t>(c) * g.height * g.width + xi] += gy * wc[t];
        }
      }
      if (!dw.empty()) dw[static_cast<std::size_t>(c) * taps + t] += dwt;
    }
  }
}

}  // namespace

std::uint64_t macs_performed() noexcept { return g_macs.load(std::memory_order_relaxed); }
void reset_mac_counter() noexcept { g_macs.store(0, std::memory_order_relaxed); }

int max_threads() noexcept { return omp_get_max_threads(); }
void set_max_threads(int n) noexcept {
  if (n > 0) omp_set_num_threads(n);
}

void gemm(Trans ta, Trans tb, int m, int n, int k, double alpha, std::span<const double> a,
          std::span<const double> b, double beta, std::span<double> c) {
  if (a.size() < static_cast<std::size_t>(m) * k || b.size() < static_cast<std::size_t>(k) * n ||
      c.size() < static_cast<std::size_t>(m) * n) {
    throw DimensionError("gemm: operand spans are smaller than the declared sizes");
  }
  count_macs(m, n, k);
  if (beta == 0.0) {
    std::fill(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(m) * n, 0.0);
  } else if (beta != 1.0) {
    for (std::size_t i = 0; i < static_cast<std::size_t>(m) * n; ++i) c[i] *= beta;
  }
  if (k == 0 || alpha == 0.0) return;

  std::vector<double> a_packed;
  std::vector<double> b_packed;
  const double* ap = a.data();
  const double* bp = b.data();
  if (ta == Trans::yes) {
    pack_transposed(a.data(), m, k, a_packed);
    ap = a_packed.data();
  }
  if (tb == Trans::yes) {
    pack_transposed(b.data(), k, n, b_packed);
    bp = b_packed.data();
  }

  const int strips = (m + kRows - 1) / kRows;
  double* cp = c.data();
#pragma omp parallel for schedule(static)
  for (int s = 0; s < strips; ++s) {
    const int r0 = s * kRows;
    const int rows = std::min(kRows, m - r0);
    strip_kernel(rows, n, k, alpha, ap + static_cast<std::size_t>(r0) * k, bp,
                 cp + static_cast<std::size_t>(r0) * n);
  }
}

void conv2d_forward(const ConvGeometry& g, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y) {
  const int oh = g.out_height();
  const int ow = g.out_width();
  const int spatial = oh * ow;
  if (g.is_depthwise()) {
    count_macs(g.out_channels, spatial, static_cast<std::int64_t>(g.kernel_h) * g.kernel_w);
    depthwise_forward(g, x.data(), w.data(), bias, y.data());
    return;
  }
  const int cin_g = g.in_channels / g.groups;
  const int cout_g = g.out_channels / g.groups;
  const int patch = cin_g * g.kernel_h * g.kernel_w;
  std::vector<double> col;
  for (int grp = 0; grp < g.groups; ++grp) {
    const double* xg = x.data() + static_cast<std::size_t>(grp) * cin_g * g.height * g.width;
    std::span<const double> cols;
    if (g.is_pointwise()) {
      cols = {xg, static_cast<std::size_t>(patch) * spatial};
    } else {
      col.resize(static_cast<std::size_t>(patch) * spatial);
      im2col(g, xg, cin_g, col.data());
      cols = col;
    }
    gemm(Trans::no, Trans::no, cout_g, spatial, patch, 1.0,
         w.subspan(static_cast<std::size_t>(grp) * cout_g * patch),
         cols, 0.0, y.subspan(static_cast<std::size_t>(grp) * cout_g * spatial));
  }
  if (!bias.empty()) {
#pragma omp parallel for schedule(static)
    for (int o = 0; o < g.out_channels; ++o) {
      double* yo = y.data() + static_cast<std::size_t>(o) * spatial;
      const double b = bias[static_cast<std::size_t>(o)];
      for (int i = 0; i < spatial; ++i) yo[i] += b;
    }
  }
}

void conv2d_backward(const ConvGeometry& g, std::span<const double> x, std::span<const double> w,
                     std::span<const double> dy, std::span<double> dx, std::span<double> dw,
                     std::span<double> dbias) {
  if (g.is_depthwise()) {
    count_macs(2 * g.out_channels, g.out_height() * g.out_width(),
               static_cast<std::int64_t>(g.kernel_h) * g.kernel_w);
    depthwise_backward(g, x.data(), w.data(), dy.data(), dx, dw, dbias);
    return;
  }
  const int spatial = g.out_height() * g.out_width();
  if (!dbias.empty()) {
#pragma omp parallel for schedule(static)
    for (int o = 0; o < g.out_channels; ++o) {
      const double* dyo = dy.data() + static_cast<std::size_t>(o) * spatial;
      double acc = 0.0;
      for (int i = 0; i < spatial; ++i) acc += dyo[i];
      dbias[static_cast<std::size_t>(o)] += acc;
    }
  }
  const int cin_g = g.in_channels / g.groups;
  const int cout_g = g.out_channels / g.groups;
  const int patch = cin_g * g.kernel_h * g.kernel_w;
  std::vector<double> col;
  std::vector<double> dcol;
  for (int grp = 0; grp < g.groups; ++grp) {
    const double* xg = x.data() + static_cast<std::size_t>(grp) * cin_g * g.height * g.width;
    const auto dyg = dy.subspan(static_cast<std::size_t>(grp) * cout_g * spatial,
                                static_cast<std::size_t>(cout_g) * spatial);
    const auto wg = w.subspan(static_cast<std::size_t>(grp) * cout_g * patch,
                              static_cast<std::size_t>(cout_g) * patch);
    if (!dw.empty()) {
      std::span<const double> cols;
      if (g.is_pointwise()) {
        cols = {xg, static_cast<std::size_t>(patch) * spatial};
      } else {
        col.resize(static_cast<std::size_t>(patch) * spatial);
        im2col(g, xg, cin_g, col.data());
        cols = col;
      }
      gemm(Trans::no, Trans::yes, cout_g, patch, spatial, 1.0, dyg, cols, 1.0,
           dw.subspan(static_cast<std::size_t>(grp) * cout_g * patch));
    }
    if (!dx.empty()) {
      auto dxg = dx.subspan(static_cast<std::size_t>(grp) * cin_g * g.height * g.width);
      if (g.is_pointwise()) {
        gemm(Trans::yes, Trans::no, patch, spatial, cout_g, 1.0, wg, dyg, 1.0, dxg);
      } else {
        dcol.resize(static_cast<std::size_t>(patch) * spatial);
        gemm(Trans::yes, Trans::no, patch, spatial, cout_g, 1.0, wg, dyg, 0.0, dcol);
        col2im_add(g, dcol.data(), cin_g, dxg.data());
      }
    }
  }
}

void resize_bilinear_forward(int channels, int in_h, int in_w, int out_h, int out_w,
                             std::span<const double> x, std::span<double> y) {
  const auto ty = axis_taps(in_h, out_h);
  const auto tx = axis_taps(in_w, out_w);
#pragma omp parallel for schedule(static)
  for (int c = 0; c < channels; ++c) {
    const double* xc = x.data() + static_cast<std::size_t>(c) * in_h * in_w;
    double* yc = y.data() + static_cast<std::size_t>(c) * out_h * out_w;
    for (int oy = 0; oy < out_h; ++oy) {
      const AxisTap& a = ty[static_cast<std::size_t>(oy)];
      const double* r0 = xc + static_cast<std::size_t>(a.i0) * in_w;
      const double* r1 = xc + static_cast<std::size_t>(a.i1) * in_w;
      for (int ox = 0; ox < out_w; ++ox) {
        const AxisTap& b = tx[static_cast<std::size_t>(ox)];
        yc[static_cast<std::size_t>(oy) * out_w + ox] =
            a.l0 * (b.l0 * r0[b.i0] + b.l1 * r0[b.i1]) + a.l1 * (b.l0 * r1[b.i0] + b.l1 * r1[b.i1]);
      }
    }
  }
}

void resize_bilinear_backward(int channels, int in_h, int in_w, int out_h, int out_w,
                              std::span<const double> dy, std::span<double> dx) {
  const auto ty = axis_taps(in_h, out_h);
  const auto tx = axis_taps(in_w, out_w);
#pragma omp parallel for schedule(static)
  for (int c = 0; c < channels; ++c) {
    double* dxc = dx.data() + static_cast<std::size_t>(c) * in_h * in_w;
    const double* dyc = dy.data() + static_cast<std::size_t>(c) * out_h * out_w;
    for (int oy = 0; oy < out_h; ++oy) {
      const AxisTap& a = ty[static_cast<std::size_t>(oy)];
      double* r0 = dxc + static_cast<std::size_t>(a.i0) * in_w;
      double* r1 = dxc + static_cast<std::size_t>(a.i1) * in_w;
      for (int ox = 0; ox < out_w; ++ox) {
        const AxisTap& b = tx[static_cast<std::size_t>(ox)];
        const double gv = dyc[static_cast<std::size_t>(oy) * out_w + ox];
        r0[b.i0] += a.l0 * b.l0 * gv;
        r0[b.i1] += a.l0 * b.l1 * gv;
        r1[b.i0] += a.l1 * b.l0 * gv;
        r1[b.i1] += a.l1 * b.l1 * gv;
      }
    }
  }
}

}  // namespace m2s::kernels
