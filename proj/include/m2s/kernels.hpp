#pragma once

// Compute kernels behind the autograd ops. The default namespace holds the
// OpenMP-parallel versions; m2s::kernels::reference holds plain serial loops
// used as the test oracle and benchmark baseline. Work is split so that each
// output element is produced by exactly one thread with a fixed accumulation
// order, which keeps results independent of the thread count.

#include <cstdint>
#include <span>

namespace m2s::kernels {

enum class Trans { no, yes };

struct ConvGeometry {
  int in_channels = 1;
  int height = 1;
  int width = 1;
  int out_channels = 1;
  int kernel_h = 1;
  int kernel_w = 1;
  int stride = 1;
  int padding = 0;
  int dilation = 1;
  int groups = 1;

  int out_height() const noexcept {
    return (height + 2 * padding - dilation * (kernel_h - 1) - 1) / stride + 1;
  }
  int out_width() const noexcept {
    return (width + 2 * padding - dilation * (kernel_w - 1) - 1) / stride + 1;
  }
  bool is_pointwise() const noexcept {
    return kernel_h == 1 && kernel_w == 1 && stride == 1 && padding == 0 && groups == 1;
  }
  bool is_depthwise() const noexcept {
    return groups > 1 && groups == in_channels && groups == out_channels;
  }
  std::int64_t weight_count() const noexcept {
    return std::int64_t{out_channels} * (in_channels / groups) * kernel_h * kernel_w;
  }
};

/// c(m x n) = alpha * op(a) * op(b) + beta * c, all row-major and densely packed.
void gemm(Trans ta, Trans tb, int m, int n, int k, double alpha, std::span<const double> a,
          std::span<const double> b, double beta, std::span<double> c);

/// y = conv(x, w) + bias. `bias` may be empty.
void conv2d_forward(const ConvGeometry& g, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y);

/// Accumulates into dx, dw and dbias; any of them may be empty to skip it.
void conv2d_backward(const ConvGeometry& g, std::span<const double> x, std::span<const double> w,
                     std::span<const double> dy, std::span<double> dx, std::span<double> dw,
                     std::span<double> dbias);

/// Bilinear resampling with half-pixel centres (align_corners = false).
void resize_bilinear_forward(int channels, int in_h, int in_w, int out_h, int out_w,
                             std::span<const double> x, std::span<double> y);

/// Accumulates the adjoint of resize_bilinear_forward into dx.
void resize_bilinear_backward(int channels, int in_h, int in_w, int out_h, int out_w,
                              std::span<const double> dy, std::span<double> dx);

/// Multiply-accumulate operations issued through gemm/conv since the last reset.
std::uint64_t macs_performed() noexcept;
void reset_mac_counter() noexcept;

/// Worker count used by the parallel kernels.
int max_threads() noexcept;
void set_max_threads(int n) noexcept;

namespace reference {

void gemm(Trans ta, Trans tb, int m, int n, int k, double alpha, std::span<const double> a,
          std::span<const double> b, double beta, std::span<double> c);
void conv2d_forward(const ConvGeometry& g, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y);
void conv2d_backward(const ConvGeometry& g, std::span<const double> x, std::span<const double> w,
                     std::span<const double> dy, std::span<double> dx, std::span<double> dw,
                     std::span<double> dbias);
void resize_bilinear_forward(int channels, int in_h, int in_w, int out_h, int out_w,
                             std::span<const double> x, std::span<double> y);
void resize_bilinear_backward(int channels, int in_h, int in_w, int out_h, int out_w,
                              std::span<const double> dy, std::span<double> dx);

}  // namespace reference
}  // namespace m2s::kernels
