#pragma once

// Skip-connection attention: the four encoder stages are reduced to a common
// width, resampled to one target grid and concatenated; the cross-scale map is
// recalibrated by DCT-frequency channel attention, refined by a pyramid of
// foreground/background spatial attention branches, and split back into four
// per-stage skip maps.

#include <array>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "m2s/backbone.hpp"
#include "m2s/nn.hpp"

namespace m2s {

enum class DctConvention {
  /// cos(pi (h + 1/2) u / H) cos(pi (w + 1/2) v / W); (0, 0) is constant.
  standard,
  /// cos(pi h (u + 1/2) / H) cos(pi w (v + 1/2) / W), kept for comparison runs.
  as_written,
};

std::string convention_name(DctConvention c);
DctConvention parse_convention(const std::string& name);

struct M2SConfig {
  int reduced_channels = 64;
  int target_divisor = 8;
  int num_frequencies = 16;
  int pyramid_levels = 3;
  double channel_decay = 2.0;
  int min_channels = 64;
  int min_height = 4;
  int min_width = 4;
  int reduction_ratio = 16;
  DctConvention dct = DctConvention::standard;

  static M2SConfig for_preset(ScalePreset p);
  int cross_channels() const noexcept { return 4 * reduced_channels; }
  int bottleneck_channels() const noexcept;
  void validate() const;

  friend bool operator==(const M2SConfig&, const M2SConfig&) = default;
};

struct SpectralBasis {
  std::vector<std::pair<int, int>> frequency_pairs;
  /// K x H x W basis images.
  Tensor images;

  int height() const { return images.dim(1); }
  int width() const { return images.dim(2); }
};

/// The k lowest (u, v) pairs ordered by u + v, ties broken by ascending u.
std::vector<std::pair<int, int>> zigzag_frequencies(int height, int width, int k);
SpectralBasis build_dct_basis(int height, int width, int k,
                              DctConvention convention = DctConvention::standard);

/// Raw dump: "m2s-dct/1\n", int32 K, H, W, K (u, v) int32 pairs, then K*H*W
/// little-endian float32 values.
void write_basis_dump(const std::filesystem::path& path, const SpectralBasis& basis);

struct LevelShape {
  int level = 1;
  int channels = 0;
  int height = 0;
  int width = 0;
  int dilation = 3;
  int scale_factor = 1;
};

/// Channel and spatial extent of pyramid level `level` (1-based) for a
/// cross-scale map of `channels` x `height` x `width`.
LevelShape level_shape(const M2SConfig& cfg, int level, int channels, int height, int width);

struct CrossScaleFeatures {
  /// f_c: C x H_t x W_t.
  Var cross;
  /// Channel-reduced stage maps at native stage resolution.
  std::array<Var, 4> reduced;
};

struct SpatialAttention {
  Var refined;
  /// 1 x H_l x W_l foreground map; background is its complement.
  Var foreground;
};

class M2SBlock {
 public:
  M2SBlock(ParamStore& store, const std::string& prefix, const M2SConfig& cfg,
           const std::array<int, 4>& encoder_channels, Rng& rng);

  struct Output {
    std::array<Var, 4> skips;
    Var cross;
    Var attention;
    Var recalibrated;
    Var fused;
    std::vector<Var> foreground;
  };

  Output forward(const StagePyramid& pyr) const;

  CrossScaleFeatures preprocess(const StagePyramid& pyr) const;
  /// Channel attention from the pooled [C, K] projections of both modes.
  Var spectral_attention(const Var& pooled_sum, const Var& pooled_max) const;
  Var pyramid_decompose(const Var& recalibrated, int level) const;
  SpatialAttention spatial_attend(const Var& level_feature, int level) const;
  Var pyramid_fuse(const Var& cross, const std::vector<Var>& refined) const;
  std::array<Var, 4> postprocess(const Var& fused, const std::array<Var, 4>& reduced) const;

  const M2SConfig& config() const noexcept { return cfg_; }
  std::pair<int, int> target_size(int input_h, int input_w) const;

  struct Level {
    Conv2d dilated;
    Conv2d squeeze;
    Conv2d foreground;
    Var alpha;
    Var beta;
    Conv2d restore;
  };
  const Level& level(int l) const { return levels_.at(static_cast<std::size_t>(l - 1)); }

 private:
  M2SConfig cfg_;
  std::array<Conv2d, 4> reduce_;
  Conv2d squeeze_, excite_;
  std::vector<Level> levels_;
};

/// f_c[c, h, w] * M[c]
Var recalibrate(const Var& cross, const Var& attention);

}  // namespace m2s
