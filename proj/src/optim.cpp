#include "balgan/optim.hpp"

#include <cmath>

#include "balgan/errors.hpp"

namespace balgan {

namespace {

Tensor& slot(OptimizerState& state, const std::string& key, const Shape& shape) {
  auto it = state.slots.find(key);
  if (it == state.slots.end()) it = state.slots.emplace(key, Tensor(shape)).first;
  if (it->second.shape() != shape) throw CheckpointError("optimizer slot '" + key + "' has the wrong shape");
  return it->second;
}

}  // namespace

void Adam::step(ParamSet& params) {
  if (!(config_.lr >= 0.0)) throw ConfigError("Adam learning rate must be non-negative");
  ++state_.steps;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state_.steps));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state_.steps));
  const float lr = static_cast<float>(config_.lr);
  for (const auto& [name, e] : params.entries()) {
    if (!e.trainable || e.buffer) continue;
    Tensor& m = slot(state_, name + ".m", e.grad.shape());
    Tensor& v = slot(state_, name + ".v", e.grad.shape());
    Tensor& p = params.value(name);
    const Tensor& g = e.grad;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = static_cast<float>(b1 * m[i] + (1.0 - b1) * g[i]);
      v[i] = static_cast<float>(b2 * v[i] + (1.0 - b2) * static_cast<double>(g[i]) * g[i]);
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[i] -= lr * static_cast<float>(mhat / (std::sqrt(vhat) + config_.eps));
    }
  }
}

void RMSProp::step(ParamSet& params) {
  if (!(config_.lr >= 0.0)) throw ConfigError("RMSProp learning rate must be non-negative");
  ++state_.steps;
  const double rho = config_.rho;
  const float lr = static_cast<float>(config_.lr);
  for (const auto& [name, e] : params.entries()) {
    if (!e.trainable || e.buffer) continue;
    Tensor& s = slot(state_, name + ".sq", e.grad.shape());
    Tensor& p = params.value(name);
    const Tensor& g = e.grad;
    for (std::size_t i = 0; i < p.size(); ++i) {
      s[i] = static_cast<float>(rho * s[i] + (1.0 - rho) * static_cast<double>(g[i]) * g[i]);
      p[i] -= lr * static_cast<float>(g[i] / (std::sqrt(static_cast<double>(s[i])) + config_.eps));
    }
  }
}

}  // namespace balgan
