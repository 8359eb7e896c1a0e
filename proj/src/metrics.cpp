#include "m2s/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <map>

#include "m2s/errors.hpp"

namespace m2s {

Tensor binarize(const Tensor& probs, double threshold) {
  Tensor out = Tensor::zeros_like(probs);
  for (std::size_t i = 0; i < probs.size(); ++i) out[i] = probs[i] >= threshold ? 1.0 : 0.0;
  return out;
}

ConfusionCounts confusion(const Tensor& pred, const Tensor& truth) {
  if (pred.shape() != truth.shape()) {
    throw DimensionError("prediction shape " + to_string(pred.shape()) + " differs from ground truth " +
                         to_string(truth.shape()));
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = pred[i];
    const double t = truth[i];
    if ((p != 0.0 && p != 1.0) || (t != 0.0 && t != 1.0))
      throw ContractViolation("confusion counts require binary maps");
    if (p == 1.0) {
      (t == 1.0 ? c.tp : c.fp) += 1;
    } else {
      (t == 1.0 ? c.fn : c.tn) += 1;
    }
  }
  return c;
}

double dsc(const ConfusionCounts& c) {
  const auto denom = 2 * c.tp + c.fp + c.fn;
  return denom == 0 ? 1.0 : 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

double iou(const ConfusionCounts& c) {
  const auto denom = c.tp + c.fp + c.fn;
  return denom == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(denom);
}

double dsc(const Tensor& pred, const Tensor& truth) { return dsc(confusion(pred, truth)); }
double miou(const Tensor& pred, const Tensor& truth) { return iou(confusion(pred, truth)); }

FoldMetrics evaluate_fold(int fold, std::span<const ForgerySample* const> samples, const Predictor& predict,
                          double threshold) {
  FoldMetrics m;
  m.fold = fold;
  for (const ForgerySample* s : samples) {
    const Tensor pred = binarize(predict(s->image), threshold);
    const auto c = confusion(pred, s->mask);
    m.dsc += dsc(c);
    m.miou += iou(c);
    ++m.samples;
  }
  if (m.samples > 0) {
    m.dsc /= m.samples;
    m.miou /= m.samples;
  }
  return m;
}

MetricsReport aggregate(const std::string& dataset, std::vector<FoldMetrics> folds) {
  MetricsReport r;
  r.dataset = dataset;
  r.folds = std::move(folds);
  if (r.folds.empty()) return r;
  const double n = static_cast<double>(r.folds.size());
  for (const auto& f : r.folds) {
    r.dsc_mean += 100.0 * f.dsc;
    r.miou_mean += 100.0 * f.miou;
  }
  r.dsc_mean /= n;
  r.miou_mean /= n;
  for (const auto& f : r.folds) {
    r.dsc_std += std::pow(100.0 * f.dsc - r.dsc_mean, 2);
    r.miou_std += std::pow(100.0 * f.miou - r.miou_mean, 2);
  }
  r.dsc_std = std::sqrt(r.dsc_std / n);
  r.miou_std = std::sqrt(r.miou_std / n);
  return r;
}

MetricsReport evaluate(const std::string& dataset, std::span<const ForgerySample> samples,
                       const FoldAssignment& folds, const std::function<Predictor(int fold)>& predictor_for_fold,
                       double threshold) {
  std::map<int, std::vector<const ForgerySample*>> by_fold;
  for (const auto& s : samples) {
    const auto it = folds.fold_of.find(s.id);
    if (it == folds.fold_of.end()) throw ContractViolation("sample " + s.id + " has no fold assignment");
    by_fold[it->second].push_back(&s);
  }
  std::vector<FoldMetrics> results;
  for (int f = 0; f < folds.k; ++f) {
    const Predictor predict = predictor_for_fold(f);
    results.push_back(evaluate_fold(f, by_fold[f], predict, threshold));
  }
  return aggregate(dataset, std::move(results));
}

std::string metrics_csv(const MetricsReport& report) {
  std::string out = "dataset,fold,dsc,miou\n";
  char line[256];
  for (const auto& f : report.folds) {
    std::snprintf(line, sizeof line, "%s,%d,%.1f,%.1f\n", report.dataset.c_str(), f.fold, 100.0 * f.dsc,
                  100.0 * f.miou);
    out += line;
  }
  std::snprintf(line, sizeof line, "%s,mean,%.1f,%.1f\n", report.dataset.c_str(), report.dsc_mean,
                report.miou_mean);
  out += line;
  std::snprintf(line, sizeof line, "%s,std,%.1f,%.1f\n", report.dataset.c_str(), report.dsc_std,
                report.miou_std);
  out += line;
  return out;
}

}  // namespace m2s
