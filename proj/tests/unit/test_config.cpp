#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "m2s/config.hpp"
#include "m2s/errors.hpp"

using namespace m2s;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_config_text(text).validate();
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("empty document yields the full defaults") {
  const RunConfig c = parse_config_text("{}");
  CHECK(c.preset == ScalePreset::full);
  CHECK(c.model.m2s.reduced_channels == 64);
  CHECK(c.model.m2s.num_frequencies == 16);
  CHECK(c.model.m2s.pyramid_levels == 3);
  CHECK(c.model.decoder.text_dim == 300);
  CHECK(c.model.decoder.difficulty.threshold == 0.5);
  CHECK(c.train.initial_lr == 1e-4);
  CHECK(c.train.final_lr == 1e-6);
  CHECK(c.train.batch_size == 32);
  CHECK(c.train.epochs == 100);
  CHECK(c.data.resolution == 256);
  CHECK(c == RunConfig::for_preset(ScalePreset::full));
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("preset key switches defaults and later keys override") {
  const RunConfig c = parse_config_text(R"({"preset": "toy", "model": {"num_frequencies": 8}, "seed": 9})");
  CHECK(c.preset == ScalePreset::toy);
  CHECK(c.model.backbone.encoder_channels == std::array<int, 4>{16, 32, 48, 64});
  CHECK(c.model.m2s.num_frequencies == 8);
  CHECK(c.seed == 9);
}

TEST_CASE("errors name the offending key") {
  CHECK(error_of(R"({"model": {"reduced_channels": 0}})").find("reduced_channels") != std::string::npos);
  CHECK(error_of(R"({"model": {"bogus": 1}})").find("unknown key 'model.bogus'") != std::string::npos);
  CHECK(error_of(R"({"extra": 1})").find("unknown key 'extra'") != std::string::npos);
  CHECK(error_of(R"({"train": {"epochs": "many"}})").find("train.epochs must be an integer") != std::string::npos);
  CHECK(error_of(R"({"model": {"encoder_channels": [1, 2]}})").find("model.encoder_channels") != std::string::npos);
  CHECK(error_of(R"({"preset": "huge"})").find("huge") != std::string::npos);
  CHECK(error_of(R"({"data": {"resolution": 250}})").find("resolution") != std::string::npos);
  CHECK(error_of(R"({"train": {"initial_lr": 1e-6, "final_lr": 1e-4}})").find("lr") != std::string::npos);
  CHECK(error_of("{not json").find("malformed") != std::string::npos);
}

TEST_CASE("serialisation round trips") {
  RunConfig c = RunConfig::for_preset(ScalePreset::toy);
  c.seed = 123;
  c.train.initial_lr = 0.1 + 0.2;
  c.model.m2s.dct = DctConvention::as_written;
  c.model.decoder.difficulty.mode = CurvatureMode::standard;
  c.data.root = "some/where";
  CHECK(parse_config_text(serialize_config(c)) == c);
  const RunConfig full = RunConfig::for_preset(ScalePreset::full);
  CHECK(parse_config_text(serialize_config(full)) == full);
}

TEST_CASE("path checks") {
  RunConfig c = RunConfig::for_preset(ScalePreset::toy);
  c.data.root = "/definitely/not/here";
  CHECK_NOTHROW(c.validate(false));
  CHECK_THROWS_AS(c.validate(true), ConfigError);
  CHECK_THROWS_AS(parse_config("/definitely/not/here.json"), ConfigError);
}
