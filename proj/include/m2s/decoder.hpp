#pragma once

// Difficulty-guided transformer decoder: each stage fuses the upsampled
// decoder state with a refined skip map, runs a transformer block and gates
// the result channel-wise with a projection of the difficulty label's text
// embedding.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include "m2s/backbone.hpp"
#include "m2s/difficulty.hpp"
#include "m2s/nn.hpp"

namespace m2s {

struct TextEmbedding {
  Tensor vector;
  DifficultyLabel source_label = DifficultyLabel::easy;
};

/// Frozen two-entry vocabulary {easy, hard}.
class EmbeddingTable {
 public:
  /// Unit-variance Gaussian rows; redrawn from a derived seed until the two
  /// rows have cosine similarity below 0.99.
  static EmbeddingTable generate(int dim, std::uint64_t seed);
  /// Whitespace-separated text file, one "<token> v1 ... vD" line per token;
  /// lines for "hard" and "easy" are required, other tokens are ignored.
  static EmbeddingTable load(const std::filesystem::path& path, int dim);
  /// Rows ordered easy, hard.
  static EmbeddingTable from_tensor(Tensor rows);

  TextEmbedding embed(DifficultyLabel label) const;
  int dim() const { return rows_.dim(1); }
  double cosine_similarity() const;
  const Tensor& rows() const noexcept { return rows_; }

 private:
  explicit EmbeddingTable(Tensor rows) : rows_(std::move(rows)) {}
  Tensor rows_;
};

/// sigmoid(W2 relu(W1 t + b1) + b2) applied as a per-channel gate.
class DgaGate {
 public:
  DgaGate() = default;
  DgaGate(ParamStore& store, const std::string& prefix, int text_dim, int width, Rng& rng);

  /// C x 1 x 1 gate values in (0, 1).
  Var gate(const TextEmbedding& t) const;
  Var operator()(const Var& x, const TextEmbedding& t) const;

 private:
  Conv2d fc1_, fc2_;
  int text_dim_ = 0;
};

class DecoderStage {
 public:
  DecoderStage(ParamStore& store, const std::string& prefix, int prev_channels, int skip_channels,
               BlockSpec spec, int depth, int text_dim, Rng& rng);

  struct Output {
    Var state;
    Var transformed;
    Var gate;
  };
  Output forward(const Var& prev, const Var& skip, const TextEmbedding& t) const;
  Var operator()(const Var& prev, const Var& skip, const TextEmbedding& t) const {
    return forward(prev, skip, t).state;
  }

 private:
  Conv2d fuse_;
  std::vector<TransformerBlock> blocks_;
  DgaGate dga_;
};

/// 1x1 projection to one channel, sigmoid, bilinear upsampling to the input size.
class PredictionHead {
 public:
  PredictionHead() = default;
  PredictionHead(ParamStore& store, const std::string& prefix, int channels, Rng& rng);
  Var operator()(const Var& last, int out_h, int out_w) const;

 private:
  Conv2d proj_;
};

}  // namespace m2s
