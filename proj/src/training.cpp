#include "m2s/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "m2s/checkpoint.hpp"
#include "m2s/errors.hpp"
#include "m2s/metrics.hpp"

namespace m2s {

TrainConfig TrainConfig::for_preset(ScalePreset p) {
  TrainConfig cfg;
  if (p == ScalePreset::toy) {
    cfg.initial_lr = 2e-3;
    cfg.final_lr = 2e-5;
    cfg.batch_size = 2;
    cfg.epochs = 300;
  }
  return cfg;
}

void TrainConfig::validate() const {
  if (!(initial_lr > 0.0) || !std::isfinite(initial_lr)) throw ConfigError("train.initial_lr must be positive");
  if (!(final_lr >= 0.0 && final_lr < initial_lr))
    throw ConfigError("train.final_lr must be non-negative and below train.initial_lr");
  if (batch_size < 1) throw ConfigError("train.batch_size must be at least 1");
  if (epochs < 1) throw ConfigError("train.epochs must be at least 1");
  if (!(loss_epsilon > 0.0 && loss_epsilon < 0.5)) throw ConfigError("train.loss_epsilon must lie in (0, 0.5)");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw ConfigError("train.adam_beta1 must lie in [0, 1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw ConfigError("train.adam_beta2 must lie in [0, 1)");
  if (!(adam_epsilon > 0.0)) throw ConfigError("train.adam_epsilon must be positive");
  if (folds < 2) throw ConfigError("train.folds must be at least 2");
  if (validation_fold < -1 || validation_fold >= folds)
    throw ConfigError("train.validation_fold must be -1 or a fold index below train.folds");
}

double bce(const Tensor& target, const Tensor& pred, double eps) {
  return ops::bce(constant(pred), target, eps).value()[0];
}

LossBreakdown LossTerms::values() const {
  return {main.value()[0], prior.value()[0], total.value()[0]};
}

LossTerms total_loss(const Tensor& target, const Var& mask, const Var& prior, double eps) {
  if (target.rank() != 3 || mask.shape() != target.shape()) {
    throw DimensionError("loss target " + to_string(target.shape()) + " does not match mask " +
                         to_string(mask.shape()));
  }
  const Var up = ops::resize_bilinear(prior, prior.shape()[1] * 32, prior.shape()[2] * 32);
  LossTerms t;
  t.main = ops::bce(mask, target, eps);
  t.prior = ops::bce(up, target, eps);
  t.total = ops::add(t.main, t.prior);
  return t;
}

double lr_at(std::int64_t step, std::int64_t total_steps, const TrainConfig& cfg) {
  if (total_steps <= 0 || step < 0 || step > total_steps)
    throw ContractViolation("lr_at requires 0 <= step <= total_steps");
  const double phase = std::numbers::pi * static_cast<double>(step) / static_cast<double>(total_steps);
  const double w = 0.5 * (1.0 + std::cos(phase));
  return w * cfg.initial_lr + (1.0 - w) * cfg.final_lr;
}

Adam::Adam(ParamStore& store, double beta1, double beta2, double eps)
    : store_(&store), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : store.params()) {
    m_.emplace_back(p.var.value().size(), 0.0);
    v_.emplace_back(p.var.value().size(), 0.0);
  }
}

void Adam::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const auto& params = store_->params();
  for (std::size_t k = 0; k < params.size(); ++k) {
    Var p = params[k].var;
    if (!p.has_grad()) continue;
    Tensor& value = p.mutable_value();
    const Tensor& g = p.grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < value.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      value[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

namespace {

[[noreturn]] void report_non_finite(const M2SFormer& model, const Var& root, const std::string& where) {
  for (const auto& node : tape_of(root)) {
    if (node->value.all_finite()) continue;
    for (const auto& p : model.params().params()) {
      if (p.var.node() == node) throw NumericalError(where + ": parameter '" + p.name + "' is not finite");
    }
    throw NumericalError(where + ": first non-finite tensor is the output of '" + node->op + "' with shape " +
                         to_string(node->value.shape()));
  }
  throw NumericalError(where + ": loss is not finite");
}

}  // namespace

LossBreakdown train_step(M2SFormer& model, Adam& opt, std::span<const ForgerySample* const> batch, double lr,
                         double eps) {
  if (batch.empty()) throw ContractViolation("train_step needs a non-empty batch");
  model.params().zero_grad();
  LossBreakdown sum;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const ForgerySample* s : batch) {
    const auto out = model.forward(s->image);
    const auto terms = total_loss(s->mask, out.mask, out.prior, eps);
    const auto v = terms.values();
    if (!std::isfinite(v.total)) report_non_finite(model, terms.total, "sample " + s->id);
    sum.main_bce += v.main_bce;
    sum.prior_bce += v.prior_bce;
    sum.total += v.total;
    backward(ops::scale(terms.total, inv));
  }
  opt.step(lr);
  return {sum.main_bce * inv, sum.prior_bce * inv, sum.total * inv};
}

double mean_dsc(const M2SFormer& model, std::span<const ForgerySample> samples, double threshold) {
  if (samples.empty()) return 0.0;
  NoGradGuard guard;
  double acc = 0.0;
  for (const auto& s : samples) {
    const auto out = model.forward(s.image);
    acc += dsc(binarize(out.mask.value(), threshold), s.mask);
  }
  return acc / static_cast<double>(samples.size());
}

std::string loss_log_csv(const std::vector<EpochLog>& log) {
  std::ostringstream out;
  out << "epoch,main_bce,prior_bce,total,lr\n";
  char line[160];
  for (const auto& e : log) {
    std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%.17g,%.17g\n", e.epoch, e.mean.main_bce, e.mean.prior_bce,
                  e.mean.total, e.lr);
    out << line;
  }
  return out.str();
}

TrainResult train(M2SFormer& model, std::span<const ForgerySample> train_set,
                  std::span<const ForgerySample> validation_set, const TrainConfig& cfg, std::uint64_t seed,
                  const TrainOptions& options) {
  cfg.validate();
  if (train_set.empty()) throw ConfigError("training set is empty");

  const auto n = train_set.size();
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  const auto batches_per_epoch = static_cast<std::int64_t>((n + batch - 1) / batch);
  const std::int64_t total_steps = batches_per_epoch * cfg.epochs;

  Adam opt(model.params(), cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon);
  Rng order_rng(derive_seed(seed, SeedStream::batch_order));
  std::vector<std::size_t> order(n);

  TrainResult result;
  const bool write = !options.out_dir.empty();
  if (write) {
    std::filesystem::create_directories(options.out_dir);
    result.final_checkpoint = options.out_dir / "final.ckpt";
    result.best_checkpoint = options.out_dir / "best.ckpt";
  }

  std::int64_t step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = n; i-- > 1;) {
      std::swap(order[i], order[static_cast<std::size_t>(order_rng.uniform_int(0, static_cast<int>(i)))]);
    }
    EpochLog entry;
    entry.epoch = epoch;
    for (std::size_t begin = 0; begin < n; begin += batch) {
      std::vector<const ForgerySample*> members;
      for (std::size_t i = begin; i < std::min(n, begin + batch); ++i) members.push_back(&train_set[order[i]]);
      entry.lr = lr_at(step, total_steps, cfg);
      const auto losses = train_step(model, opt, members, entry.lr, cfg.loss_epsilon);
      const double w = static_cast<double>(members.size()) / static_cast<double>(n);
      entry.mean.main_bce += w * losses.main_bce;
      entry.mean.prior_bce += w * losses.prior_bce;
      ++step;
    }
    entry.mean.total = entry.mean.main_bce + entry.mean.prior_bce;

    if (!validation_set.empty()) {
      entry.validation_dsc = mean_dsc(model, validation_set);
      if (!result.best_validation_dsc || *entry.validation_dsc > *result.best_validation_dsc) {
        result.best_validation_dsc = entry.validation_dsc;
        if (write) save_checkpoint(result.best_checkpoint, model.params(), options.metadata);
      }
    }
    result.log.push_back(entry);
    if (write) {
      std::ofstream log(options.out_dir / "loss_log.csv");
      log << loss_log_csv(result.log);
    }
    if (options.on_epoch) options.on_epoch(entry);
  }
  if (write) {
    save_checkpoint(result.final_checkpoint, model.params(), options.metadata);
    if (validation_set.empty()) save_checkpoint(result.best_checkpoint, model.params(), options.metadata);
  }
  return result;
}

}  // namespace m2s
