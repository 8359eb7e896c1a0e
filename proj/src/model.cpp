#include "m2s/model.hpp"

#include "m2s/errors.hpp"

namespace m2s {

ModelConfig ModelConfig::for_preset(ScalePreset p) {
  ModelConfig cfg;
  cfg.backbone = BackboneConfig::for_preset(p);
  cfg.m2s = M2SConfig::for_preset(p);
  return cfg;
}

void ModelConfig::validate() const {
  backbone.validate();
  m2s.validate();
  decoder.difficulty.validate();
  if (decoder.text_dim <= 0) throw ConfigError("decoder.text_dim must be positive");
}

M2SFormer::M2SFormer(const ModelConfig& cfg, std::uint64_t seed)
    : cfg_(cfg),
      table_(cfg.decoder.embedding_file.empty()
                 ? EmbeddingTable::generate(cfg.decoder.text_dim,
                                            derive_seed(seed, SeedStream::text_embedding))
                 : EmbeddingTable::load(cfg.decoder.embedding_file, cfg.decoder.text_dim)) {
  cfg_.validate();
  Rng rng(derive_seed(seed, SeedStream::weights));
  const int cr = cfg_.m2s.reduced_channels;
  encoder_ = std::make_unique<PyramidEncoder>(store_, "encoder", cfg_.backbone, rng);
  m2s_ = std::make_unique<M2SBlock>(store_, "m2s", cfg_.m2s, cfg_.backbone.encoder_channels, rng);
  prior_head_ = pointwise(store_, "prior_head", cr, 1, rng);
  entry_ = pointwise(store_, "decoder.entry", cr, cr, rng);
  int prev = cr;
  for (int s = 0; s < 3; ++s) {
    const BlockSpec spec = decoder_block_spec(cfg_.backbone, s);
    stages_.emplace_back(store_, "decoder.stage" + std::to_string(s + 1), prev, cr, spec,
                         cfg_.backbone.decoder_depth, cfg_.decoder.text_dim, rng);
    prev = spec.width;
  }
  head_ = PredictionHead(store_, "head", prev, rng);
  table_buffer_ = store_.add_buffer("text_embedding.table", table_.rows());
}

void M2SFormer::set_embeddings(EmbeddingTable table) {
  if (table.dim() != cfg_.decoder.text_dim) {
    throw DimensionError("embedding table width does not match decoder.text_dim");
  }
  table_ = std::move(table);
  table_buffer_.mutable_value() = table_.rows();
}

void M2SFormer::restore(const Checkpoint& ckpt) {
  restore_parameters(store_, ckpt);
  table_ = EmbeddingTable::from_tensor(table_buffer_.value());
}

ForwardResult M2SFormer::forward(const Tensor& image,
                                 std::optional<DifficultyLabel> label_override) const {
  ForwardResult out;
  const StagePyramid pyr = encoder_->encode(image);
  const M2SBlock::Output m2s = m2s_->forward(pyr);
  out.skips = m2s.skips;
  out.prior = ops::sigmoid(prior_head_(m2s.skips[3]));
  out.verdict = assess_difficulty(out.prior.value(), cfg_.decoder.difficulty);
  out.label_used = label_override.value_or(out.verdict.label);
  const TextEmbedding text = table_.embed(out.label_used);

  Var state = entry_(m2s.skips[3]);
  for (std::size_t s = 0; s < 3; ++s) {
    const DecoderStage::Output stage = stages_[s].forward(state, m2s.skips[2 - s], text);
    state = stage.state;
    out.decoder_states[s] = stage.state;
    out.gates[s] = stage.gate;
  }
  out.mask = head_(state, image.height(), image.width());
  return out;
}

std::int64_t count_parameters(const ModelConfig& cfg) {
  return M2SFormer(cfg, 0).params().scalar_count();
}

}  // namespace m2s
