#include "m2s/nn.hpp"

#include <cmath>
#include <numbers>

#include "m2s/errors.hpp"

namespace m2s {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t global, std::uint64_t stream) noexcept {
  return splitmix64(splitmix64(global) + stream * 0x9e3779b97f4a7c15ULL);
}

int Rng::uniform_int(int lo, int hi) noexcept {
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  return lo + static_cast<int>(engine_() % span);
}

double Rng::normal() noexcept {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
  has_spare_ = true;
  return r * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::truncated_normal(double std) noexcept {
  for (;;) {
    const double z = normal();
    if (std::abs(z) <= 2.0) return z * std;
  }
}

void ParamStore::check_unique(const std::string& name) const {
  if (find(name).defined()) throw ContractViolation("duplicate parameter name '" + name + "'");
}

Var ParamStore::add(const std::string& name, Tensor init) {
  check_unique(name);
  Var v(std::move(init), true);
  params_.push_back({name, v});
  return v;
}

Var ParamStore::add_buffer(const std::string& name, Tensor value) {
  check_unique(name);
  Var v(std::move(value), false);
  buffers_.push_back({name, v});
  return v;
}

Var ParamStore::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p.var;
  }
  for (const auto& b : buffers_) {
    if (b.name == name) return b.var;
  }
  return {};
}

std::int64_t ParamStore::scalar_count() const noexcept {
  std::int64_t n = 0;
  for (const auto& p : params_) n += static_cast<std::int64_t>(p.var.value().size());
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

Conv2d::Conv2d(ParamStore& store, const std::string& prefix, int in_channels, int out_channels,
               int kernel, ops::ConvOptions opts, Rng& rng, bool with_bias)
    : options(opts) {
  if (in_channels <= 0 || out_channels <= 0 || kernel <= 0) {
    throw ConfigError(prefix + ": convolution sizes must be positive");
  }
  if (in_channels % opts.groups != 0 || out_channels % opts.groups != 0) {
    throw ConfigError(prefix + ": channels not divisible by groups");
  }
  Tensor w({out_channels, in_channels / opts.groups, kernel, kernel});
  if (kernel == 1 && opts.groups == 1) {
    for (auto& v : w.values()) v = rng.truncated_normal(0.02);
  } else {
    const double fan_out = static_cast<double>(kernel) * kernel * out_channels / opts.groups;
    const double std = std::sqrt(2.0 / fan_out);
    for (auto& v : w.values()) v = rng.normal() * std;
  }
  weight = store.add(prefix + ".weight", std::move(w));
  if (with_bias) bias = store.add(prefix + ".bias", Tensor({out_channels}));
}

Conv2d pointwise(ParamStore& store, const std::string& prefix, int in_channels, int out_channels,
                 Rng& rng) {
  return Conv2d(store, prefix, in_channels, out_channels, 1, {}, rng);
}

LayerNorm::LayerNorm(ParamStore& store, const std::string& prefix, int channels, double e)
    : eps(e) {
  gamma = store.add(prefix + ".weight", Tensor({channels}, 1.0));
  beta = store.add(prefix + ".bias", Tensor({channels}));
}

}  // namespace m2s
