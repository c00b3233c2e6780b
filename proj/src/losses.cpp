#include "balgan/losses.hpp"

#include <cmath>

#include "balgan/errors.hpp"
#include "balgan/ops.hpp"

namespace balgan {

namespace {

void require_batch(const Var& scores, const char* what) {
  if (!scores.defined() || scores.value().size() == 0) throw ContractError(std::string(what) + ": empty batch");
}

Var log_prob(const Var& p) { return log(clamp(p, kProbClamp, 1.0f - kProbClamp)); }

Var log_one_minus(const Var& p) {
  return log(add_scalar(scale(clamp(p, kProbClamp, 1.0f - kProbClamp), -1.0f), 1.0f));
}

}  // namespace

Var bce_discriminator_loss(const Var& d_real, const Var& d_fake) {
  require_batch(d_real, "bce_discriminator_loss");
  require_batch(d_fake, "bce_discriminator_loss");
  return scale(add(mean(log_prob(d_real)), mean(log_one_minus(d_fake))), -1.0f);
}

Var bce_generator_loss_minimax(const Var& d_fake) {
  require_batch(d_fake, "bce_generator_loss_minimax");
  return mean(log_one_minus(d_fake));
}

Var bce_generator_loss_nonsaturating(const Var& d_fake) {
  require_batch(d_fake, "bce_generator_loss_nonsaturating");
  return scale(mean(log_prob(d_fake)), -1.0f);
}

Var wgan_critic_loss(const Var& d_real, const Var& d_fake) {
  require_batch(d_real, "wgan_critic_loss");
  require_batch(d_fake, "wgan_critic_loss");
  return sub(mean(d_fake), mean(d_real));
}

Var wgan_generator_loss(const Var& d_fake) {
  require_batch(d_fake, "wgan_generator_loss");
  return scale(mean(d_fake), -1.0f);
}

Interpolation interpolate_with(const Tensor& real, const Tensor& fake, std::span<const float> epsilons) {
  if (real.shape() != fake.shape()) {
    throw ShapeError("interpolate: real " + shape_to_string(real.shape()) + " vs fake " + shape_to_string(fake.shape()));
  }
  if (real.rank() < 1 || static_cast<std::size_t>(real.dim(0)) != epsilons.size()) {
    throw ShapeError("interpolate: need one epsilon per sample");
  }
  const std::size_t n = epsilons.size();
  const std::size_t inner = n == 0 ? 0 : real.size() / n;
  Tensor out(real.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const float e = epsilons[i];
    for (std::size_t j = 0; j < inner; ++j) {
      const std::size_t k = i * inner + j;
      out[k] = e * real[k] + (1.0f - e) * fake[k];
    }
  }
  return {Var::leaf(std::move(out), true), std::vector<float>(epsilons.begin(), epsilons.end())};
}

Interpolation interpolate(const Tensor& real, const Tensor& fake, Rng& rng) {
  if (real.rank() < 1) throw ShapeError("interpolate: batch tensor required");
  std::vector<float> eps(static_cast<std::size_t>(real.dim(0)));
  for (float& e : eps) e = static_cast<float>(rng.uniform());
  return interpolate_with(real, fake, eps);
}

Interpolation interpolate(const Tensor& real, const Tensor& fake, std::uint64_t seed) {
  Rng rng(seed);
  return interpolate(real, fake, rng);
}

Var gradient_penalty(const CriticFn& critic, const Var& x_hat, const PenaltyConfig& cfg) {
  if (!(cfg.lambda >= 0.0)) throw ConfigError("gradient penalty lambda must be >= 0");
  const Var norms = grad_norm_wrt_input(critic(x_hat), x_hat);
  return scale(mean(square(add_scalar(norms, -1.0f))), static_cast<float>(cfg.lambda));
}

Var wgan_gp_total_critic_loss(const Var& d_real, const Var& d_fake, const Var& penalty) {
  return add(wgan_critic_loss(d_real, d_fake), penalty);
}

double js_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size() || p.empty()) throw ContractError("js_divergence: distributions need the same non-empty support");
  double sp = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] < 0.0 || q[i] < 0.0) throw ContractError("js_divergence: negative probability mass");
    sp += p[i];
    sq += q[i];
  }
  if (std::abs(sp - 1.0) > 1e-9 || std::abs(sq - 1.0) > 1e-9) {
    throw ContractError("js_divergence: distributions must sum to 1");
  }
  double js = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0.0) js += 0.5 * p[i] * std::log(p[i] / m);
    if (q[i] > 0.0) js += 0.5 * q[i] * std::log(q[i] / m);
  }
  return std::max(js, 0.0);
}

}  // namespace balgan
