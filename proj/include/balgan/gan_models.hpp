#pragma once

// DCGAN generator and critic. Both are pure convolution stacks; the critic
// follows the WGAN-GP rules (no batch norm, raw score) unless the spec selects
// the classic BCE formulation.

#include <cstdint>

#include "balgan/autograd.hpp"
#include "balgan/rng.hpp"
#include "json.hpp"

namespace balgan {

enum class LatentPrior { standard_normal, uniform };
enum class LossMode { bce, wgan_gp };
enum class CriticOutput { none, sigmoid };

struct LatentSpec {
  int dim = 100;
  LatentPrior prior = LatentPrior::standard_normal;

  friend bool operator==(const LatentSpec&, const LatentSpec&) = default;
};

struct GanSpec {
  int image_size = 64;
  int channels = 1;
  LatentSpec latent;
  int base_feature_maps = 64;
  bool critic_batch_norm = false;
  CriticOutput critic_final_activation = CriticOutput::none;
  LossMode loss_mode = LossMode::wgan_gp;

  // Throws ConfigError describing the first violated rule.
  void validate() const;
  // Number of stride-2 stages between 4x4 and image_size.
  int stages() const;

  // A consistent spec for the given loss mode (BCE: sigmoid critic with batch norm).
  static GanSpec for_mode(LossMode mode);

  friend bool operator==(const GanSpec&, const GanSpec&) = default;
};

nlohmann::json to_json(const GanSpec& spec);
GanSpec gan_spec_from_json(const nlohmann::json& j);
std::string to_string(LossMode mode);
LossMode loss_mode_from_string(const std::string& s);

// count x dim latent batch drawn from the spec's prior.
Tensor sample_latent(const LatentSpec& latent, int count, Rng& rng);

// Forward-mode switches for layers with batch statistics.
struct ForwardMode {
  bool batch_stats = true;      // false: use running statistics
  bool update_running = true;   // only meaningful with batch_stats

  static ForwardMode train() { return {true, true}; }
  static ForwardMode train_frozen_stats() { return {true, false}; }
  static ForwardMode eval() { return {false, false}; }
};

// z (N x latent.dim) -> images (N x channels x image_size x image_size) in [-1, 1].
//
// Layout for n = log2(image_size / 4) stages and F = base_feature_maps:
//   gen.proj   transposed conv latent -> F*2^(n-1), k4 s1 p0 (1x1 -> 4x4), batch norm, relu
//   gen.up<i>  transposed conv halving channels, k4 s2 p1, batch norm, relu   (i = 1..n-1)
//   gen.out    transposed conv F -> channels, k4 s2 p1, bias, tanh
class Generator {
 public:
  Generator(GanSpec spec, std::uint64_t seed);

  Var forward(const Var& z, ForwardMode mode = ForwardMode::train());
  // Inference helper: running statistics, no graph, processed in chunks.
  Tensor sample(int count, Rng& rng);

  const GanSpec& spec() const { return spec_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  // Closed-form trainable parameter count.
  static std::size_t parameter_count(const GanSpec& spec);

 private:
  GanSpec spec_;
  ParamSet params_;
};

// images -> one score per sample (shape N).
//
//   critic.conv0   conv channels -> F, k4 s2 p1, bias, leaky_relu(0.2)
//   critic.conv<i> conv doubling channels, k4 s2 p1, then either critic.bn<i>
//                  (critic_batch_norm) or a bias, leaky_relu(0.2)   (i = 1..n-1)
//   critic.head    dense (F*2^(n-1)*4*4) -> 1; sigmoid only when the spec asks for it
class Critic {
 public:
  Critic(GanSpec spec, std::uint64_t seed);

  Var forward(const Var& images, ForwardMode mode = ForwardMode::train());

  const GanSpec& spec() const { return spec_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  static std::size_t parameter_count(const GanSpec& spec);

 private:
  GanSpec spec_;
  ParamSet params_;
};

}  // namespace balgan
