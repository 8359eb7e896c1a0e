#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "gradcheck.hpp"
#include "m2s/decoder.hpp"
#include "m2s/errors.hpp"
#include "m2s/model.hpp"

using namespace m2s;
using namespace m2s::testing;

TEST_CASE("embedding table lookups") {
  const auto table = EmbeddingTable::generate(300, 7);
  CHECK(table.dim() == 300);
  CHECK(table.cosine_similarity() < 0.99);
  const auto a = table.embed(DifficultyLabel::hard);
  const auto b = table.embed(DifficultyLabel::hard);
  CHECK(a.vector == b.vector);
  CHECK(a.vector.size() == 300);
  CHECK(a.source_label == DifficultyLabel::hard);
  CHECK(a.vector != table.embed(DifficultyLabel::easy).vector);
  CHECK(EmbeddingTable::generate(300, 7).rows() == table.rows());
}

TEST_CASE("embedding table from file") {
  const auto path = std::filesystem::temp_directory_path() / "m2s_embed.txt";
  {
    std::ofstream out(path);
    out << "the 1 2 3\nhard 1 0 0\neasy 0 1 0\n";
  }
  const auto t = EmbeddingTable::load(path, 3);
  CHECK(t.embed(DifficultyLabel::hard).vector.values()[0] == 1.0);
  CHECK(t.embed(DifficultyLabel::easy).vector.values()[1] == 1.0);
  CHECK_THROWS_AS(EmbeddingTable::load(path, 4), IoError);
  {
    std::ofstream out(path);
    out << "hard 1 0 0\n";
  }
  CHECK_THROWS_AS(EmbeddingTable::load(path, 3), IoError);
  std::filesystem::remove(path);
}

TEST_CASE("DGA gate examples") {
  ParamStore store;
  Rng rng(1);
  DgaGate gate(store, "dga", 5, 4, rng);
  TextEmbedding zero{Tensor({5}), DifficultyLabel::easy};
  NoGradGuard guard;
  const Tensor out_values = gate.gate(zero).value();
  for (double v : out_values.values()) CHECK(v == 0.5);
  Rng data(2);
  const Var x = constant(random_tensor({4, 3, 3}, data));
  const Tensor y = gate(x, zero).value();
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == 0.5 * x.value()[i]);

  TextEmbedding big{random_tensor({5}, data, -30, 30), DifficultyLabel::hard};
  const Tensor big_values = gate.gate(big).value();
  for (double v : big_values.values()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  CHECK_THROWS_AS(gate.gate(TextEmbedding{Tensor({6}), DifficultyLabel::easy}), DimensionError);
}

TEST_CASE("decoder stage shapes and resolution checks") {
  ParamStore store;
  Rng rng(3);
  DecoderStage stage(store, "stage", 64, 64, BlockSpec{256, 4, 2, 4}, 1, 300, rng);
  const auto table = EmbeddingTable::generate(300, 1);
  Rng data(4);
  NoGradGuard guard;
  const auto out = stage.forward(constant(random_tensor({64, 8, 8}, data)), constant(random_tensor({64, 16, 16}, data)),
                                 table.embed(DifficultyLabel::hard));
  CHECK(out.state.shape() == Shape{256, 16, 16});
  CHECK(out.gate.shape() == Shape{256, 1, 1});
  CHECK_THROWS_AS(stage(constant(Tensor({64, 4, 4})), constant(Tensor({64, 16, 16})), table.embed(DifficultyLabel::easy)),
                  DimensionError);
}

TEST_CASE("prediction head examples") {
  ParamStore store;
  Rng rng(5);
  PredictionHead head(store, "head", 8, rng);
  NoGradGuard guard;
  const Var mask = head(constant(Tensor({8, 4, 4})), 16, 16);
  CHECK(mask.shape() == Shape{1, 16, 16});
  for (double v : mask.value().values()) CHECK(v == 0.5);
}

TEST_CASE("model forward contract on the toy preset") {
  M2SFormer model(ModelConfig::for_preset(ScalePreset::toy), 3);
  Rng data(6);
  Tensor image = random_tensor({3, 64, 64}, data, 0, 1);
  NoGradGuard guard;
  const auto a = model.forward(image);
  const auto b = model.forward(image);
  CHECK(a.mask.shape() == Shape{1, 64, 64});
  CHECK(a.prior.shape() == Shape{1, 2, 2});
  CHECK(a.mask.value() == b.mask.value());
  CHECK(a.decoder_states[0].shape() == Shape{64, 4, 4});
  CHECK(a.decoder_states[1].shape() == Shape{32, 8, 8});
  CHECK(a.decoder_states[2].shape() == Shape{16, 16, 16});
  for (const auto& g : a.gates)
    for (double v : g.value().values()) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }
  image.at(1, 10, 10) += 0.05;
  CHECK(model.forward(image).mask.value() != a.mask.value());
}

TEST_CASE("full preset decoder chain at 256") {
  M2SFormer model(ModelConfig::for_preset(ScalePreset::full), 3);
  Rng data(7);
  NoGradGuard guard;
  const auto out = model.forward(random_tensor({3, 256, 256}, data, 0, 1));
  CHECK(out.decoder_states[0].shape() == Shape{256, 16, 16});
  CHECK(out.decoder_states[1].shape() == Shape{128, 32, 32});
  CHECK(out.decoder_states[2].shape() == Shape{64, 64, 64});
  CHECK(out.mask.shape() == Shape{1, 256, 256});
  CHECK(out.prior.shape() == Shape{1, 8, 8});
}

TEST_CASE("label conditioning changes the mask") {
  M2SFormer model(ModelConfig::for_preset(ScalePreset::toy), 4);
  Rng data(8);
  const Tensor image = random_tensor({3, 64, 64}, data, 0, 1);
  NoGradGuard guard;
  const auto hard = model.forward(image, DifficultyLabel::hard);
  const auto easy = model.forward(image, DifficultyLabel::easy);
  CHECK(hard.label_used == DifficultyLabel::hard);
  CHECK(easy.label_used == DifficultyLabel::easy);
  CHECK(hard.mask.value() != easy.mask.value());
}

TEST_CASE("the text embedding buffer never receives gradient") {
  M2SFormer model(ModelConfig::for_preset(ScalePreset::toy), 5);
  Rng data(9);
  const auto out = model.forward(random_tensor({3, 64, 64}, data, 0, 1));
  backward(random_projection(out.mask, 1));
  for (const auto& b : model.params().buffers()) CHECK_FALSE(b.var.has_grad());
  CHECK(model.params().find("text_embedding.table").shape() == Shape{2, 300});
}
