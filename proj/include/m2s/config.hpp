#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "m2s/model.hpp"
#include "m2s/training.hpp"

namespace m2s {

struct DataConfig {
  std::string root;
  std::string dataset_name = "dataset";
  int resolution = 256;
  friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

/// Everything a run needs. JSON layout:
///   { "preset": "full", "seed": 0, "output_dir": "...",
///     "model": {...}, "train": {...}, "data": {...} }
/// The preset selects defaults; every other key overrides one field.
struct RunConfig {
  ScalePreset preset = ScalePreset::full;
  ModelConfig model = ModelConfig::for_preset(ScalePreset::full);
  TrainConfig train = TrainConfig::for_preset(ScalePreset::full);
  DataConfig data;
  std::string output_dir = "runs/default";
  std::uint64_t seed = 0;

  static RunConfig for_preset(ScalePreset p);
  /// Range checks on every section; `check_paths` also requires referenced
  /// files and directories to exist.
  void validate(bool check_paths = false) const;
  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Throws ConfigError naming the offending key path on unknown keys or type mismatches.
RunConfig parse_config_text(const std::string& text);
RunConfig parse_config(const std::filesystem::path& path);
std::string serialize_config(const RunConfig& cfg);

}  // namespace m2s
