#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "m2s/autograd.hpp"
#include "m2s/rng.hpp"

namespace m2s::testing {

struct GradProbe {
  std::string label;
  Var var;
  std::size_t index = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;
  std::size_t checked = 0;
};

/// |a - n| / max(|a|, |n|, floor)
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Compares backward() against central differences for each probe. `loss`
/// rebuilds the graph from the current parameter values on every call.
inline GradCheckResult gradient_check(const std::function<Var()>& loss, const std::vector<GradProbe>& probes,
                                      double step = 1e-5, double floor = 1e-6) {
  for (auto p : probes) p.var.zero_grad();
  backward(loss());
  std::vector<double> analytic;
  analytic.reserve(probes.size());
  for (auto p : probes) analytic.push_back(p.var.has_grad() ? p.var.grad()[p.index] : 0.0);

  GradCheckResult r;
  NoGradGuard guard;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    Var v = probes[i].var;
    double& x = v.mutable_value()[probes[i].index];
    const double saved = x;
    x = saved + step;
    const double up = loss().value()[0];
    x = saved - step;
    const double down = loss().value()[0];
    x = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double err = relative_error(analytic[i], numeric, floor);
    ++r.checked;
    if (err > r.max_rel_error) {
      r.max_rel_error = err;
      r.worst = probes[i].label + "[" + std::to_string(probes[i].index) + "] analytic=" +
                std::to_string(analytic[i]) + " numeric=" + std::to_string(numeric);
    }
  }
  return r;
}

/// Every element of every listed variable.
inline std::vector<GradProbe> all_elements(const std::vector<std::pair<std::string, Var>>& vars) {
  std::vector<GradProbe> out;
  for (const auto& [name, v] : vars) {
    for (std::size_t i = 0; i < v.value().size(); ++i) out.push_back({name, v, i});
  }
  return out;
}

/// Fixed random linear functional of `x`, so every output element contributes.
inline Var random_projection(const Var& x, std::uint64_t seed) {
  Rng rng(seed);
  Tensor w(x.shape());
  for (double& v : w.values()) v = rng.uniform(-1.0, 1.0);
  return ops::sum(ops::mul(x, constant(std::move(w))));
}

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace m2s::testing
