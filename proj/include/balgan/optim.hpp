#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "balgan/autograd.hpp"

namespace balgan {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct RMSPropConfig {
  double lr = 5e-5;
  double rho = 0.9;
  double eps = 1e-8;
};

// Optimizer state is a set of named tensors plus a step counter so it can be
// checkpointed through the tensor archive.
struct OptimizerState {
  std::int64_t steps = 0;
  std::map<std::string, Tensor> slots;
};

// Updates every trainable, non-buffer entry from its gradient slot.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}
  void step(ParamSet& params);
  const AdamConfig& config() const { return config_; }
  const OptimizerState& state() const { return state_; }
  void set_state(OptimizerState state) { state_ = std::move(state); }

 private:
  AdamConfig config_;
  OptimizerState state_;
};

class RMSProp {
 public:
  explicit RMSProp(RMSPropConfig config = {}) : config_(config) {}
  void step(ParamSet& params);
  const RMSPropConfig& config() const { return config_; }
  const OptimizerState& state() const { return state_; }
  void set_state(OptimizerState state) { state_ = std::move(state); }

 private:
  RMSPropConfig config_;
  OptimizerState state_;
};

}  // namespace balgan
