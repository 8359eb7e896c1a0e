#pragma once

// Four-stage pyramid transformer encoder (overlapping patch embeddings,
// spatial-reduction attention, convolutional feed-forward) and the block it
// is built from, which the decoder reuses.

#include <array>
#include <string>
#include <vector>

#include "m2s/nn.hpp"

namespace m2s {

enum class ScalePreset { toy, full };

std::string preset_name(ScalePreset p);
ScalePreset parse_preset(const std::string& name);

struct BackboneConfig {
  ScalePreset preset = ScalePreset::full;
  std::array<int, 4> encoder_channels{64, 128, 320, 512};
  std::array<int, 3> decoder_channels{256, 128, 64};
  std::array<int, 4> stage_depths{3, 4, 6, 3};
  std::array<int, 4> encoder_heads{1, 2, 5, 8};
  std::array<int, 3> decoder_heads{4, 2, 1};
  std::array<int, 4> mlp_ratios{8, 8, 4, 4};
  /// Key/value spatial reduction per encoder stage (strides 4..32). Decoder
  /// stages reuse the ratio of the encoder stage at the same stride.
  std::array<int, 4> sr_ratios{8, 4, 2, 1};
  int decoder_depth = 1;
  int decoder_mlp_ratio = 4;

  static BackboneConfig for_preset(ScalePreset p);
  /// Throws ConfigError on the first violated invariant.
  void validate() const;

  friend bool operator==(const BackboneConfig&, const BackboneConfig&) = default;
};

struct BlockSpec {
  int width = 0;
  int heads = 1;
  int sr_ratio = 1;
  int mlp_ratio = 4;
};

BlockSpec encoder_block_spec(const BackboneConfig& cfg, int stage);
BlockSpec decoder_block_spec(const BackboneConfig& cfg, int stage);

/// Pre-norm transformer block on a CxHxW map: spatial-reduction multi-head
/// attention followed by a feed-forward branch with a 3x3 depthwise
/// convolution between its two projections. Both branches are residual.
class TransformerBlock {
 public:
  TransformerBlock(ParamStore& store, const std::string& prefix, BlockSpec spec, Rng& rng);

  Var operator()(const Var& x) const;
  const BlockSpec& spec() const noexcept { return spec_; }

 private:
  Var attention(const Var& x) const;
  Var feed_forward(const Var& x) const;

  BlockSpec spec_;
  LayerNorm norm1_, norm2_, sr_norm_;
  Conv2d q_, kv_, proj_, sr_;
  Conv2d fc1_, dwconv_, fc2_;
};

struct StagePyramid {
  std::array<Var, 4> stages;
  int input_height = 0;
  int input_width = 0;
};

/// Throws DimensionError naming the axis when H or W is not a multiple of 32.
void check_input_dims(const Tensor& image);

class PyramidEncoder {
 public:
  PyramidEncoder(ParamStore& store, const std::string& prefix, const BackboneConfig& cfg, Rng& rng);

  /// `image` is 3xHxW with values in [0, 1].
  StagePyramid encode(const Tensor& image) const;

 private:
  struct Stage {
    Conv2d embed;
    LayerNorm embed_norm;
    std::vector<TransformerBlock> blocks;
    LayerNorm out_norm;
  };
  std::vector<Stage> stages_;
};

}  // namespace m2s
