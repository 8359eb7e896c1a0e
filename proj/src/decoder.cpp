#include "m2s/decoder.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "m2s/errors.hpp"

namespace m2s {

EmbeddingTable EmbeddingTable::generate(int dim, std::uint64_t seed) {
  if (dim <= 0) throw ConfigError("text embedding dimension must be positive");
  for (std::uint64_t attempt = 0;; ++attempt) {
    Rng rng(attempt == 0 ? seed : derive_seed(seed, attempt));
    Tensor rows({2, dim});
    for (auto& v : rows.values()) v = rng.normal();
    EmbeddingTable table(std::move(rows));
    if (table.cosine_similarity() < 0.99) return table;
  }
}

EmbeddingTable EmbeddingTable::load(const std::filesystem::path& path, int dim) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read embedding file " + path.string());
  std::map<std::string, std::vector<double>> found;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string token;
    if (!(ls >> token) || (token != "hard" && token != "easy")) continue;
    std::vector<double> values;
    double v = 0.0;
    while (ls >> v) values.push_back(v);
    if (static_cast<int>(values.size()) != dim) {
      throw IoError(path.string() + ": '" + token + "' has " + std::to_string(values.size()) +
                    " values, expected " + std::to_string(dim));
    }
    found[token] = std::move(values);
  }
  for (const char* key : {"easy", "hard"}) {
    if (!found.contains(key)) throw IoError(path.string() + ": no vector for '" + key + "'");
  }
  std::vector<double> flat = found["easy"];
  flat.insert(flat.end(), found["hard"].begin(), found["hard"].end());
  return EmbeddingTable(Tensor({2, dim}, std::move(flat)));
}

EmbeddingTable EmbeddingTable::from_tensor(Tensor rows) {
  if (rows.rank() != 2 || rows.dim(0) != 2 || rows.dim(1) <= 0) {
    throw DimensionError("embedding table must be 2xD, got " + to_string(rows.shape()));
  }
  return EmbeddingTable(std::move(rows));
}

TextEmbedding EmbeddingTable::embed(DifficultyLabel label) const {
  const int d = dim();
  const std::size_t row = label == DifficultyLabel::hard ? 1 : 0;
  Tensor v({d});
  for (int i = 0; i < d; ++i) v[static_cast<std::size_t>(i)] = rows_[row * d + i];
  return {std::move(v), label};
}

double EmbeddingTable::cosine_similarity() const {
  const int d = dim();
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (int i = 0; i < d; ++i) {
    const double a = rows_[static_cast<std::size_t>(i)];
    const double b = rows_[static_cast<std::size_t>(d + i)];
    dot += a * b;
    na += a * a;
    nb += b * b;
  }
  return dot / std::sqrt(na * nb);
}

DgaGate::DgaGate(ParamStore& store, const std::string& prefix, int text_dim, int width, Rng& rng)
    : text_dim_(text_dim) {
  const int hidden = std::max(1, width / 2);
  fc1_ = pointwise(store, prefix + ".fc1", text_dim, hidden, rng);
  fc2_ = pointwise(store, prefix + ".fc2", hidden, width, rng);
}

Var DgaGate::gate(const TextEmbedding& t) const {
  if (static_cast<int>(t.vector.size()) != text_dim_) {
    throw DimensionError("text embedding has " + std::to_string(t.vector.size()) +
                         " values, gate expects " + std::to_string(text_dim_));
  }
  Var tv = constant(t.vector.reshaped({text_dim_, 1, 1}));
  return ops::sigmoid(fc2_(ops::relu(fc1_(tv))));
}

Var DgaGate::operator()(const Var& x, const TextEmbedding& t) const {
  return ops::mul_channels(x, gate(t));
}

DecoderStage::DecoderStage(ParamStore& store, const std::string& prefix, int prev_channels,
                           int skip_channels, BlockSpec spec, int depth, int text_dim, Rng& rng) {
  fuse_ = pointwise(store, prefix + ".fuse", prev_channels + skip_channels, spec.width, rng);
  for (int b = 0; b < depth; ++b) {
    blocks_.emplace_back(store, prefix + ".block" + std::to_string(b), spec, rng);
  }
  dga_ = DgaGate(store, prefix + ".dga", text_dim, spec.width, rng);
}

DecoderStage::Output DecoderStage::forward(const Var& prev, const Var& skip,
                                           const TextEmbedding& t) const {
  require_feature_map(prev.value(), "decoder state");
  require_feature_map(skip.value(), "decoder skip");
  Var up = ops::resize_bilinear(prev, 2 * prev.shape()[1], 2 * prev.shape()[2]);
  if (up.shape()[1] != skip.shape()[1] || up.shape()[2] != skip.shape()[2]) {
    throw DimensionError("decoder stage: upsampled state " + to_string(up.shape()) +
                         " does not match skip " + to_string(skip.shape()));
  }
  const Var parts[] = {up, skip};
  Var x = fuse_(ops::concat(parts));
  for (const auto& block : blocks_) x = block(x);
  Output out;
  out.transformed = x;
  out.gate = dga_.gate(t);
  out.state = ops::mul_channels(x, out.gate);
  return out;
}

PredictionHead::PredictionHead(ParamStore& store, const std::string& prefix, int channels, Rng& rng)
    : proj_(pointwise(store, prefix + ".proj", channels, 1, rng)) {}

Var PredictionHead::operator()(const Var& last, int out_h, int out_w) const {
  return ops::resize_bilinear(ops::sigmoid(proj_(last)), out_h, out_w);
}

}  // namespace m2s
