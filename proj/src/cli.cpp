#include "m2s/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "m2s/checkpoint.hpp"
#include "m2s/config.hpp"
#include "m2s/data.hpp"
#include "m2s/difficulty.hpp"
#include "m2s/errors.hpp"
#include "m2s/kernels.hpp"
#include "m2s/metrics.hpp"
#include "m2s/model.hpp"
#include "m2s/training.hpp"

namespace m2s {

namespace fs = std::filesystem;

void apply_thread_env() {
  if (const char* v = std::getenv("M2S_NUM_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(v, &end, 10);
    if (end == v || *end != '\0' || n < 1) throw ConfigError("M2S_NUM_THREADS must be a positive integer");
    kernels::set_max_threads(static_cast<int>(n));
  }
}

namespace {

struct ConfigFlags {
  std::string config;
  std::string preset;
  std::optional<std::uint64_t> seed;
};

void add_config_flags(CLI::App* app, ConfigFlags& f, bool with_seed = true) {
  app->add_option("--config", f.config, "JSON run configuration");
  app->add_option("--preset", f.preset, "Scale preset")->check(CLI::IsMember({"toy", "full"}));
  if (with_seed) app->add_option("--seed", f.seed, "Global seed");
}

RunConfig resolve_config(const ConfigFlags& f) {
  RunConfig cfg;
  if (f.config.empty()) {
    cfg = RunConfig::for_preset(f.preset.empty() ? ScalePreset::full : parse_preset(f.preset));
  } else {
    std::ifstream in(f.config);
    if (!in) throw ConfigError("cannot read configuration " + f.config);
    std::ostringstream text;
    text << in.rdbuf();
    auto j = nlohmann::json::parse(text.str(), nullptr, false);
    if (j.is_discarded()) throw ConfigError("malformed configuration " + f.config);
    if (!f.preset.empty()) {
      if (j.is_object() && j.contains("preset") && j["preset"] != f.preset)
        throw ConfigError("--preset " + f.preset + " conflicts with the configuration preset");
      if (j.is_object()) j["preset"] = f.preset;
    }
    cfg = parse_config_text(j.dump());
  }
  if (f.seed) cfg.seed = *f.seed;
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

std::vector<const ForgerySample*> select(const std::vector<ForgerySample>& samples, const FoldAssignment& folds,
                                         int fold, bool in_fold) {
  std::vector<const ForgerySample*> out;
  for (const auto& s : samples) {
    if ((folds.fold_of.at(s.id) == fold) == in_fold) out.push_back(&s);
  }
  return out;
}

std::vector<ForgerySample> copy_of(const std::vector<const ForgerySample*>& ptrs) {
  std::vector<ForgerySample> out;
  out.reserve(ptrs.size());
  for (const auto* p : ptrs) out.push_back(*p);
  return out;
}

std::vector<std::string> ids_of(const std::vector<ForgerySample>& samples) {
  std::vector<std::string> ids;
  for (const auto& s : samples) ids.push_back(s.id);
  return ids;
}

Corpus load_reported(const RunConfig& cfg, std::ostream& err) {
  Corpus corpus = load_corpus(cfg.data.root, cfg.data.resolution);
  for (const auto& s : corpus.skipped) err << "skipped " << s.path.string() << ": " << s.reason << "\n";
  if (corpus.samples.empty()) throw ConfigError("no image/mask pairs found under " + cfg.data.root);
  return corpus;
}

std::unique_ptr<M2SFormer> model_from_checkpoint(const fs::path& path, RunConfig* cfg_out = nullptr) {
  if (!fs::exists(path)) throw IoError("checkpoint not found: " + path.string());
  const Checkpoint ckpt = read_checkpoint(path);
  const RunConfig cfg = parse_config_text(ckpt.metadata);
  auto model = std::make_unique<M2SFormer>(cfg.model, cfg.seed);
  model->restore(ckpt);
  if (cfg_out) *cfg_out = cfg;
  return model;
}

struct TrainFlags {
  ConfigFlags config;
  std::string data;
  std::string out;
  std::optional<int> fold;
  std::optional<int> epochs;
};

int run_train(const TrainFlags& f, std::ostream& out, std::ostream& err) {
  RunConfig cfg = resolve_config(f.config);
  if (!f.data.empty()) cfg.data.root = f.data;
  if (!f.out.empty()) cfg.output_dir = f.out;
  if (f.fold) cfg.train.validation_fold = *f.fold;
  if (f.epochs) cfg.train.epochs = *f.epochs;
  cfg.validate(true);

  const fs::path out_dir = cfg.output_dir;
  fs::create_directories(out_dir);
  const std::string snapshot = serialize_config(cfg);
  write_text(out_dir / "config.json", snapshot);

  const Corpus corpus = load_reported(cfg, err);
  std::vector<ForgerySample> train_set = corpus.samples;
  std::vector<ForgerySample> val_set;
  if (cfg.train.validation_fold >= 0) {
    const auto folds = kfold(ids_of(corpus.samples), cfg.train.folds, cfg.seed);
    train_set = copy_of(select(corpus.samples, folds, cfg.train.validation_fold, false));
    val_set = copy_of(select(corpus.samples, folds, cfg.train.validation_fold, true));
  }

  M2SFormer model(cfg.model, cfg.seed);
  TrainOptions opts;
  opts.out_dir = out_dir;
  opts.metadata = snapshot;
  opts.on_epoch = [&](const EpochLog& e) {
    out << "epoch " << e.epoch << " total=" << e.mean.total << " main=" << e.mean.main_bce
        << " prior=" << e.mean.prior_bce << " lr=" << e.lr;
    if (e.validation_dsc) out << " val_dsc=" << *e.validation_dsc;
    out << "\n";
  };
  const auto result = train(model, train_set, val_set, cfg.train, cfg.seed, opts);
  out << "final checkpoint: " << result.final_checkpoint.string() << "\n";
  out << "best checkpoint: " << result.best_checkpoint.string() << "\n";
  return 0;
}

struct EvalFlags {
  std::string checkpoints;
  std::string data;
  std::string out;
  std::string dataset;
};

int run_eval(const EvalFlags& f, std::ostream& out, std::ostream& err) {
  const fs::path ckpt_root = f.checkpoints;
  const fs::path first = ckpt_root / "fold0" / "best.ckpt";
  if (!fs::exists(first)) throw IoError("missing checkpoint for fold 0: " + first.string());
  RunConfig cfg;
  model_from_checkpoint(first, &cfg);
  if (!f.data.empty()) cfg.data.root = f.data;
  if (!f.dataset.empty()) cfg.data.dataset_name = f.dataset;
  if (!f.out.empty()) cfg.output_dir = f.out;
  cfg.validate(true);

  const Corpus corpus = load_reported(cfg, err);
  const auto folds = kfold(ids_of(corpus.samples), cfg.train.folds, cfg.seed);
  std::unique_ptr<M2SFormer> current;
  const auto report = evaluate(cfg.data.dataset_name, corpus.samples, folds, [&](int fold) -> Predictor {
    const fs::path path = ckpt_root / ("fold" + std::to_string(fold)) / "best.ckpt";
    if (!fs::exists(path)) throw IoError("missing checkpoint for fold " + std::to_string(fold) + ": " + path.string());
    current = model_from_checkpoint(path);
    return [&current](const Tensor& image) {
      NoGradGuard guard;
      return current->forward(image).mask.value();
    };
  });
  const std::string csv = metrics_csv(report);
  out << csv;
  if (!f.out.empty()) {
    write_text(fs::path(f.out) / "metrics.csv", csv);
    write_text(fs::path(f.out) / "config.json", serialize_config(cfg));
  }
  return 0;
}

struct PredictFlags {
  std::string checkpoint;
  std::string input;
  std::string out;
  std::string label;
};

int run_predict(const PredictFlags& f, std::ostream& out) {
  if (f.checkpoint.empty()) throw ConfigError("predict requires --checkpoint");
  if (f.input.empty()) throw ConfigError("predict requires --input");
  if (f.out.empty()) throw ConfigError("predict requires --out");
  std::optional<DifficultyLabel> override_label;
  if (!f.label.empty()) {
    override_label = parse_label(f.label);
    if (!override_label) throw ConfigError("--label must be easy or hard");
  }
  RunConfig cfg;
  const auto model = model_from_checkpoint(f.checkpoint, &cfg);
  const LoadedImage img = load_image(f.input, cfg.data.resolution);

  NoGradGuard guard;
  const auto result = model->forward(img.image, override_label);
  const Var full = ops::resize_bilinear(result.mask, img.original_height, img.original_width);
  const fs::path out_dir = f.out;
  const fs::path mask_path = out_dir / (fs::path(f.input).stem().string() + "_mask.png");
  write_gray_png(mask_path, full.value());
  cfg.output_dir = f.out;
  write_text(out_dir / "config.json", serialize_config(cfg));
  out << "s=" << std::setprecision(6) << result.verdict.score << " label=" << label_name(result.verdict.label) << "\n";
  out << "mask: " << mask_path.string() << "\n";
  return 0;
}

Tensor read_text_map(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<double> values;
  int rows = 0;
  int cols = -1;
  std::string line;
  while (std::getline(in, line)) {
    for (char& ch : line)
      if (ch == ',') ch = ' ';
    std::istringstream ls(line);
    std::vector<double> row;
    double v;
    while (ls >> v) row.push_back(v);
    if (!ls.eof()) throw IoError("non-numeric entry in " + path.string());
    if (row.empty()) continue;
    if (cols >= 0 && static_cast<int>(row.size()) != cols) throw IoError("ragged rows in " + path.string());
    cols = static_cast<int>(row.size());
    values.insert(values.end(), row.begin(), row.end());
    ++rows;
  }
  if (rows == 0) throw IoError("empty map " + path.string());
  return Tensor({rows, cols}, std::move(values));
}

struct ScoreFlags {
  std::string input;
  std::string mode = "as_written";
  double threshold = 0.5;
};

int run_score(const ScoreFlags& f, std::ostream& out) {
  DifficultyConfig cfg;
  cfg.mode = parse_curvature_mode(f.mode);
  cfg.threshold = f.threshold;
  cfg.validate();
  const fs::path path = f.input;
  if (!fs::exists(path)) throw IoError("input not found: " + path.string());
  const std::string ext = path.extension().string();
  const Tensor map = (ext == ".txt" || ext == ".csv") ? read_text_map(path) : load_gray_map(path);
  const auto v = assess_difficulty(map, cfg);
  out << "s=" << std::setprecision(6) << v.score << " label=" << label_name(v.label) << "\n";
  return 0;
}

struct GenFlags {
  int count = 16;
  int size = 256;
  std::string type = "mixed";
  std::uint64_t seed = 0;
  std::string out;
};

int run_gen(const GenFlags& f, std::ostream& out) {
  const auto samples = generate_synthetic(f.count, f.size, parse_synth_kind(f.type), f.seed);
  write_corpus(f.out, samples);
  const nlohmann::json snapshot = {{"count", f.count}, {"size", f.size}, {"type", f.type}, {"seed", f.seed}};
  write_text(fs::path(f.out) / "synthetic.json", snapshot.dump(2) + "\n");
  out << "wrote " << samples.size() << " samples to " << f.out << "\n";
  return 0;
}

int run_count(const ConfigFlags& f, std::ostream& out) {
  const RunConfig cfg = resolve_config(f);
  cfg.model.validate();
  out << count_parameters(cfg.model) << "\n";
  return 0;
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"M2SFormer image forgery localization", "m2s"};
  app.require_subcommand(1);

  TrainFlags train_f;
  auto* train_cmd = app.add_subcommand("train", "Train one model on a corpus");
  add_config_flags(train_cmd, train_f.config);
  train_cmd->add_option("--data", train_f.data, "Corpus root");
  train_cmd->add_option("--out", train_f.out, "Output directory");
  train_cmd->add_option("--fold", train_f.fold, "Held-out validation fold (-1 for none)");
  train_cmd->add_option("--epochs", train_f.epochs, "Override the epoch count");

  EvalFlags eval_f;
  auto* eval_cmd = app.add_subcommand("eval", "Cross-validated evaluation from per-fold checkpoints");
  eval_cmd->add_option("--checkpoints", eval_f.checkpoints, "Directory holding fold<k>/best.ckpt")->required();
  eval_cmd->add_option("--data", eval_f.data, "Corpus root");
  eval_cmd->add_option("--dataset", eval_f.dataset, "Dataset name for the report");
  eval_cmd->add_option("--out", eval_f.out, "Output directory for metrics.csv");

  PredictFlags predict_f;
  auto* predict_cmd = app.add_subcommand("predict", "Predict a forgery mask for one image");
  predict_cmd->add_option("--checkpoint", predict_f.checkpoint, "Model checkpoint");
  predict_cmd->add_option("--input", predict_f.input, "Input image");
  predict_cmd->add_option("--out", predict_f.out, "Output directory");
  predict_cmd->add_option("--label", predict_f.label, "Force the difficulty label (easy or hard)");

  ScoreFlags score_f;
  auto* score_cmd = app.add_subcommand("score-difficulty", "Curvature difficulty of a prior map");
  score_cmd->add_option("input", score_f.input, "Grayscale image or whitespace/comma separated text map")
      ->required();
  score_cmd->add_option("--mode", score_f.mode, "Curvature mode")->check(CLI::IsMember({"as_written", "standard"}));
  score_cmd->add_option("--threshold", score_f.threshold, "Hard/easy threshold");

  GenFlags gen_f;
  auto* gen_cmd = app.add_subcommand("gen-synthetic", "Generate a procedural forgery corpus");
  gen_cmd->add_option("--count", gen_f.count, "Number of samples");
  gen_cmd->add_option("--size", gen_f.size, "Image side length");
  gen_cmd->add_option("--type", gen_f.type, "Forgery kind")->check(CLI::IsMember({"copy_move", "splice", "mixed"}));
  gen_cmd->add_option("--seed", gen_f.seed, "Seed");
  gen_cmd->add_option("--out", gen_f.out, "Output corpus root")->required();

  ConfigFlags count_f;
  auto* count_cmd = app.add_subcommand("count-params", "Print the learnable parameter count");
  add_config_flags(count_cmd, count_f, false);

  try {
    std::vector<std::string> args;
    for (int i = argc - 1; i >= 1; --i) args.emplace_back(argv[i]);
    app.parse(std::move(args));
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return 1;
  }

  try {
    apply_thread_env();
    if (train_cmd->parsed()) return run_train(train_f, out, err);
    if (eval_cmd->parsed()) return run_eval(eval_f, out, err);
    if (predict_cmd->parsed()) return run_predict(predict_f, out);
    if (score_cmd->parsed()) return run_score(score_f, out);
    if (gen_cmd->parsed()) return run_gen(gen_f, out);
    if (count_cmd->parsed()) return run_count(count_f, out);
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const ContractViolation& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  err << app.help();
  return 1;
}

}  // namespace m2s
