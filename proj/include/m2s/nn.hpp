#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "m2s/autograd.hpp"
#include "m2s/rng.hpp"

namespace m2s {

struct NamedTensorVar {
  std::string name;
  Var var;
};

/// Owns every learnable tensor of a model under dotted names, plus frozen
/// buffers that travel with checkpoints but never receive gradients.
class ParamStore {
 public:
  Var add(const std::string& name, Tensor init);
  Var add_buffer(const std::string& name, Tensor value);

  const std::vector<NamedTensorVar>& params() const noexcept { return params_; }
  const std::vector<NamedTensorVar>& buffers() const noexcept { return buffers_; }
  Var find(const std::string& name) const;

  std::int64_t scalar_count() const noexcept;
  void zero_grad();

 private:
  void check_unique(const std::string& name) const;

  std::vector<NamedTensorVar> params_;
  std::vector<NamedTensorVar> buffers_;
};

/// k x k weights use a fan-out normal; 1x1 projections a truncated normal
/// with std 0.02. Biases start at zero.
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParamStore& store, const std::string& prefix, int in_channels, int out_channels,
         int kernel, ops::ConvOptions options, Rng& rng, bool bias = true);

  Var operator()(const Var& x) const { return ops::conv2d(x, weight, bias, options); }
  int in_channels() const { return weight.shape()[1] * options.groups; }
  int out_channels() const { return weight.shape()[0]; }

  Var weight;
  Var bias;
  ops::ConvOptions options;
};

/// 1x1 convolution with the projection initialiser.
Conv2d pointwise(ParamStore& store, const std::string& prefix, int in_channels, int out_channels,
                 Rng& rng);

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParamStore& store, const std::string& prefix, int channels, double eps = 1e-6);

  Var operator()(const Var& x) const { return ops::layer_norm(x, gamma, beta, eps); }

  Var gamma;
  Var beta;
  double eps = 1e-6;
};

}  // namespace m2s
