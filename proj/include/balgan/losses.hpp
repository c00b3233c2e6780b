#pragma once

// Adversarial objectives: the binary-cross-entropy minimax family and the
// Wasserstein family with gradient penalty. Score tensors are 1-d (one value
// per sample); every loss returns a scalar Var.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "balgan/autograd.hpp"
#include "balgan/rng.hpp"

namespace balgan {

// Probabilities are clamped to [kProbClamp, 1 - kProbClamp] before logs.
inline constexpr float kProbClamp = 1e-7f;

struct PenaltyConfig {
  double lambda = 10.0;
};

// -mean(log d_real) - mean(log(1 - d_fake))
Var bce_discriminator_loss(const Var& d_real, const Var& d_fake);
// mean(log(1 - d_fake)): the generator-dependent part of the negated
// discriminator loss. The real-sample term is dropped; it has no generator
// gradient.
Var bce_generator_loss_minimax(const Var& d_fake);
// -mean(log d_fake)
Var bce_generator_loss_nonsaturating(const Var& d_fake);

// mean(d_fake) - mean(d_real)
Var wgan_critic_loss(const Var& d_real, const Var& d_fake);
// -mean(d_fake)
Var wgan_generator_loss(const Var& d_fake);

struct Interpolation {
  Var x_hat;                    // leaf that requires a gradient
  std::vector<float> epsilons;  // one per sample
};

// x_hat_i = eps_i * real_i + (1 - eps_i) * fake_i with eps_i ~ U(0,1).
// Neither source receives gradient.
Interpolation interpolate(const Tensor& real, const Tensor& fake, Rng& rng);
Interpolation interpolate(const Tensor& real, const Tensor& fake, std::uint64_t seed);
Interpolation interpolate_with(const Tensor& real, const Tensor& fake, std::span<const float> epsilons);

using CriticFn = std::function<Var(const Var&)>;

// lambda * mean((||grad_x critic(x_hat)||_2 - 1)^2), differentiable w.r.t.
// the critic's parameters.
Var gradient_penalty(const CriticFn& critic, const Var& x_hat, const PenaltyConfig& cfg);

// wgan_critic_loss + penalty.
Var wgan_gp_total_critic_loss(const Var& d_real, const Var& d_fake, const Var& penalty);

// Jensen-Shannon divergence in nats between two discrete distributions on the
// same support. 0 * log 0 counts as 0.
double js_divergence(std::span<const double> p, std::span<const double> q);

}  // namespace balgan
