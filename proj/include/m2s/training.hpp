#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "m2s/autograd.hpp"
#include "m2s/data.hpp"
#include "m2s/model.hpp"

namespace m2s {

struct TrainConfig {
  double initial_lr = 1e-4;
  double final_lr = 1e-6;
  int batch_size = 32;
  int epochs = 100;
  double loss_epsilon = 1e-7;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  int folds = 5;
  /// Fold held out for checkpoint selection; -1 trains on everything.
  int validation_fold = 0;

  static TrainConfig for_preset(ScalePreset p);
  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct LossBreakdown {
  double main_bce = 0.0;
  double prior_bce = 0.0;
  double total = 0.0;
};

/// Mean pixelwise binary cross-entropy with predictions clamped to [eps, 1 - eps].
double bce(const Tensor& target, const Tensor& pred, double eps);

struct LossTerms {
  Var main;
  Var prior;
  Var total;
  LossBreakdown values() const;
};

/// Sum of the mask BCE and the BCE of the x32-upsampled prior, both against `target`.
LossTerms total_loss(const Tensor& target, const Var& mask, const Var& prior, double eps);

/// Cosine-annealed learning rate without restarts.
double lr_at(std::int64_t step, std::int64_t total_steps, const TrainConfig& cfg);

class Adam {
 public:
  Adam(ParamStore& store, double beta1, double beta2, double eps);
  /// One update from the gradients currently held by the store.
  void step(double lr);
  std::int64_t steps() const noexcept { return t_; }

 private:
  ParamStore* store_;
  double beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

/// One optimizer step on `batch` with gradients averaged over the batch.
/// Throws NumericalError naming the first non-finite tensor if a loss is not finite.
LossBreakdown train_step(M2SFormer& model, Adam& opt, std::span<const ForgerySample* const> batch, double lr,
                         double eps);

struct EpochLog {
  int epoch = 0;
  LossBreakdown mean;
  double lr = 0.0;
  std::optional<double> validation_dsc;
};

struct TrainOptions {
  /// Checkpoints and loss log go here; empty disables file output.
  std::filesystem::path out_dir;
  std::string metadata = "{}";
  std::function<void(const EpochLog&)> on_epoch;
};

struct TrainResult {
  std::vector<EpochLog> log;
  std::optional<double> best_validation_dsc;
  std::filesystem::path final_checkpoint;
  std::filesystem::path best_checkpoint;
};

TrainResult train(M2SFormer& model, std::span<const ForgerySample> train_set,
                  std::span<const ForgerySample> validation_set, const TrainConfig& cfg, std::uint64_t seed,
                  const TrainOptions& options = {});

/// Mean DSC of the binarised predictions over `samples`.
double mean_dsc(const M2SFormer& model, std::span<const ForgerySample> samples, double threshold = 0.5);

std::string loss_log_csv(const std::vector<EpochLog>& log);

}  // namespace m2s
