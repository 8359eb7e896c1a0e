#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "m2s/backbone.hpp"
#include "m2s/checkpoint.hpp"
#include "m2s/decoder.hpp"
#include "m2s/difficulty.hpp"
#include "m2s/m2s_attention.hpp"

namespace m2s {

struct DecoderConfig {
  int text_dim = 300;
  /// Optional text-embedding file; empty means a seeded table is generated.
  std::string embedding_file;
  DifficultyConfig difficulty;

  friend bool operator==(const DecoderConfig&, const DecoderConfig&) = default;
};

struct ModelConfig {
  BackboneConfig backbone;
  M2SConfig m2s;
  DecoderConfig decoder;

  static ModelConfig for_preset(ScalePreset p);
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct ForwardResult {
  /// 1 x H x W probabilities.
  Var mask;
  /// 1 x H/32 x W/32 probabilities.
  Var prior;
  DifficultyVerdict verdict;
  /// Label actually fed to the decoder (differs from verdict under override).
  DifficultyLabel label_used = DifficultyLabel::easy;
  std::array<Var, 4> skips;
  std::array<Var, 3> decoder_states;
  std::array<Var, 3> gates;
};

/// The assembled network: pyramid encoder, M2S skip attention, prior head,
/// difficulty calculator and three DGA decoder stages.
class M2SFormer {
 public:
  M2SFormer(const ModelConfig& cfg, std::uint64_t seed);

  ForwardResult forward(const Tensor& image,
                        std::optional<DifficultyLabel> label_override = std::nullopt) const;

  const ModelConfig& config() const noexcept { return cfg_; }
  ParamStore& params() noexcept { return store_; }
  const ParamStore& params() const noexcept { return store_; }
  const EmbeddingTable& embeddings() const noexcept { return table_; }
  /// Replaces the frozen table.
  void set_embeddings(EmbeddingTable table);
  /// Loads parameters and the frozen embedding table from a checkpoint.
  void restore(const Checkpoint& ckpt);

  const PyramidEncoder& encoder() const noexcept { return *encoder_; }
  const M2SBlock& m2s_block() const noexcept { return *m2s_; }

 private:
  ModelConfig cfg_;
  ParamStore store_;
  EmbeddingTable table_;
  Var table_buffer_;
  std::unique_ptr<PyramidEncoder> encoder_;
  std::unique_ptr<M2SBlock> m2s_;
  Conv2d prior_head_;
  Conv2d entry_;
  std::vector<DecoderStage> stages_;
  PredictionHead head_;
};

/// Exact learnable-scalar count of the assembled model (the frozen text
/// embedding table is not learnable and is excluded).
std::int64_t count_parameters(const ModelConfig& cfg);

}  // namespace m2s
