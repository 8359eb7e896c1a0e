#include "m2s/config.hpp"

#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "m2s/errors.hpp"

namespace m2s {

using nlohmann::json;

RunConfig RunConfig::for_preset(ScalePreset p) {
  RunConfig cfg;
  cfg.preset = p;
  cfg.model = ModelConfig::for_preset(p);
  cfg.train = TrainConfig::for_preset(p);
  return cfg;
}

void RunConfig::validate(bool check_paths) const {
  model.validate();
  train.validate();
  if (data.resolution <= 0 || data.resolution % 32 != 0)
    throw ConfigError("data.resolution must be a positive multiple of 32");
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
  if (!check_paths) return;
  if (!model.decoder.embedding_file.empty() && !std::filesystem::exists(model.decoder.embedding_file))
    throw ConfigError("model.embedding_file does not exist: " + model.decoder.embedding_file);
  if (data.root.empty()) throw ConfigError("data.root is required");
  if (!std::filesystem::is_directory(data.root)) throw ConfigError("data.root is not a directory: " + data.root);
}

namespace {

/// Walks one JSON object, remembering which keys were consumed so leftovers
/// can be reported as unknown.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(label() + " must be an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    convert(*it, out, field(key));
  }

  template <typename T, std::size_t N>
  void read(const char* key, std::array<T, N>& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    if (!it->is_array() || it->size() != N)
      throw ConfigError(field(key) + " must be an array of " + std::to_string(N) + " numbers");
    for (std::size_t i = 0; i < N; ++i) convert((*it)[i], out[i], field(key) + "[" + std::to_string(i) + "]");
  }

  std::optional<std::string> text(const char* key) {
    std::optional<std::string> out;
    if (j_.contains(key)) {
      out.emplace();
      read(key, *out);
    }
    seen_.insert(key);
    return out;
  }

  std::optional<Section> child(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return std::nullopt;
    return Section(*it, field(key));
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.contains(k)) throw ConfigError("unknown key '" + field(k) + "'");
    }
  }

 private:
  std::string label() const { return path_.empty() ? "configuration" : path_; }
  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  static void convert(const json& v, int& out, const std::string& where) {
    if (!v.is_number_integer()) throw ConfigError(where + " must be an integer");
    const auto x = v.get<std::int64_t>();
    if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max())
      throw ConfigError(where + " is out of range");
    out = static_cast<int>(x);
  }
  static void convert(const json& v, std::uint64_t& out, const std::string& where) {
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
      throw ConfigError(where + " must be a non-negative integer");
    out = v.get<std::uint64_t>();
  }
  static void convert(const json& v, double& out, const std::string& where) {
    if (!v.is_number()) throw ConfigError(where + " must be a number");
    out = v.get<double>();
  }
  static void convert(const json& v, std::string& out, const std::string& where) {
    if (!v.is_string()) throw ConfigError(where + " must be a string");
    out = v.get<std::string>();
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename Enum, typename Parse>
void read_enum(Section& s, const char* key, Enum& out, Parse parse) {
  if (auto name = s.text(key)) out = parse(*name);
}

void read_model(Section s, ModelConfig& m) {
  auto& b = m.backbone;
  s.read("encoder_channels", b.encoder_channels);
  s.read("decoder_channels", b.decoder_channels);
  s.read("stage_depths", b.stage_depths);
  s.read("encoder_heads", b.encoder_heads);
  s.read("decoder_heads", b.decoder_heads);
  s.read("mlp_ratios", b.mlp_ratios);
  s.read("sr_ratios", b.sr_ratios);
  s.read("decoder_depth", b.decoder_depth);
  s.read("decoder_mlp_ratio", b.decoder_mlp_ratio);
  auto& a = m.m2s;
  s.read("reduced_channels", a.reduced_channels);
  s.read("target_divisor", a.target_divisor);
  s.read("num_frequencies", a.num_frequencies);
  s.read("pyramid_levels", a.pyramid_levels);
  s.read("channel_decay", a.channel_decay);
  s.read("min_channels", a.min_channels);
  s.read("min_height", a.min_height);
  s.read("min_width", a.min_width);
  s.read("reduction_ratio", a.reduction_ratio);
  read_enum(s, "dct", a.dct, parse_convention);
  auto& d = m.decoder;
  s.read("text_dim", d.text_dim);
  s.read("embedding_file", d.embedding_file);
  s.read("difficulty_threshold", d.difficulty.threshold);
  read_enum(s, "curvature_mode", d.difficulty.mode, parse_curvature_mode);
  s.read("difficulty_epsilon", d.difficulty.epsilon);
  s.finish();
}

void read_train(Section s, TrainConfig& t) {
  s.read("initial_lr", t.initial_lr);
  s.read("final_lr", t.final_lr);
  s.read("batch_size", t.batch_size);
  s.read("epochs", t.epochs);
  s.read("loss_epsilon", t.loss_epsilon);
  s.read("adam_beta1", t.adam_beta1);
  s.read("adam_beta2", t.adam_beta2);
  s.read("adam_epsilon", t.adam_epsilon);
  s.read("folds", t.folds);
  s.read("validation_fold", t.validation_fold);
  s.finish();
}

void read_data(Section s, DataConfig& d) {
  s.read("root", d.root);
  s.read("dataset_name", d.dataset_name);
  s.read("resolution", d.resolution);
  s.finish();
}

}  // namespace

RunConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed configuration: ") + e.what());
  }
  Section top(j, "");
  ScalePreset preset = ScalePreset::full;
  read_enum(top, "preset", preset, parse_preset);
  RunConfig cfg = RunConfig::for_preset(preset);
  top.read("seed", cfg.seed);
  top.read("output_dir", cfg.output_dir);
  if (auto s = top.child("model")) read_model(*s, cfg.model);
  if (auto s = top.child("train")) read_train(*s, cfg.train);
  if (auto s = top.child("data")) read_data(*s, cfg.data);
  top.finish();
  cfg.model.backbone.preset = preset;
  return cfg;
}

RunConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read configuration " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config_text(text.str());
}

std::string serialize_config(const RunConfig& cfg) {
  const auto& b = cfg.model.backbone;
  const auto& a = cfg.model.m2s;
  const auto& d = cfg.model.decoder;
  const auto& t = cfg.train;
  json j;
  j["preset"] = preset_name(cfg.preset);
  j["seed"] = cfg.seed;
  j["output_dir"] = cfg.output_dir;
  j["model"] = {
      {"encoder_channels", b.encoder_channels},
      {"decoder_channels", b.decoder_channels},
      {"stage_depths", b.stage_depths},
      {"encoder_heads", b.encoder_heads},
      {"decoder_heads", b.decoder_heads},
      {"mlp_ratios", b.mlp_ratios},
      {"sr_ratios", b.sr_ratios},
      {"decoder_depth", b.decoder_depth},
      {"decoder_mlp_ratio", b.decoder_mlp_ratio},
      {"reduced_channels", a.reduced_channels},
      {"target_divisor", a.target_divisor},
      {"num_frequencies", a.num_frequencies},
      {"pyramid_levels", a.pyramid_levels},
      {"channel_decay", a.channel_decay},
      {"min_channels", a.min_channels},
      {"min_height", a.min_height},
      {"min_width", a.min_width},
      {"reduction_ratio", a.reduction_ratio},
      {"dct", convention_name(a.dct)},
      {"text_dim", d.text_dim},
      {"embedding_file", d.embedding_file},
      {"difficulty_threshold", d.difficulty.threshold},
      {"curvature_mode", curvature_mode_name(d.difficulty.mode)},
      {"difficulty_epsilon", d.difficulty.epsilon},
  };
  j["train"] = {
      {"initial_lr", t.initial_lr},     {"final_lr", t.final_lr},       {"batch_size", t.batch_size},
      {"epochs", t.epochs},             {"loss_epsilon", t.loss_epsilon}, {"adam_beta1", t.adam_beta1},
      {"adam_beta2", t.adam_beta2},     {"adam_epsilon", t.adam_epsilon}, {"folds", t.folds},
      {"validation_fold", t.validation_fold},
  };
  j["data"] = {{"root", cfg.data.root}, {"dataset_name", cfg.data.dataset_name}, {"resolution", cfg.data.resolution}};
  return j.dump(2) + "\n";
}

}  // namespace m2s
