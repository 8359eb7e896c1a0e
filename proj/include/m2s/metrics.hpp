#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "m2s/data.hpp"
#include "m2s/tensor.hpp"

namespace m2s {

struct ConfusionCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  std::int64_t tn = 0;
};

/// 1 where `probs` >= threshold, else 0.
Tensor binarize(const Tensor& probs, double threshold = 0.5);

/// Counts over binary maps of equal shape; `pred` and `truth` must hold 0/1 only.
ConfusionCounts confusion(const Tensor& pred, const Tensor& truth);

// Both scores are 1 when prediction and ground truth are both empty.
double dsc(const ConfusionCounts& c);
double iou(const ConfusionCounts& c);
double dsc(const Tensor& pred, const Tensor& truth);
double miou(const Tensor& pred, const Tensor& truth);

struct FoldMetrics {
  int fold = 0;
  int samples = 0;
  /// Means over the fold's samples, in [0, 1].
  double dsc = 0.0;
  double miou = 0.0;
};

struct MetricsReport {
  std::string dataset;
  std::vector<FoldMetrics> folds;
  // Percentages; std is the population standard deviation across folds.
  double dsc_mean = 0.0, dsc_std = 0.0;
  double miou_mean = 0.0, miou_std = 0.0;
};

using Predictor = std::function<Tensor(const Tensor& image)>;

FoldMetrics evaluate_fold(int fold, std::span<const ForgerySample* const> samples,
                          const Predictor& predict, double threshold = 0.5);

MetricsReport aggregate(const std::string& dataset, std::vector<FoldMetrics> folds);

/// Evaluates every fold of `folds` over `samples`, asking `predictor_for_fold`
/// for each fold's model.
MetricsReport evaluate(const std::string& dataset, std::span<const ForgerySample> samples,
                       const FoldAssignment& folds,
                       const std::function<Predictor(int fold)>& predictor_for_fold,
                       double threshold = 0.5);

/// `dataset,fold,dsc,miou` rows in percent with one decimal, then mean and std rows.
std::string metrics_csv(const MetricsReport& report);

}  // namespace m2s
