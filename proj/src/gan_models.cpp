#include "balgan/gan_models.hpp"

#include <algorithm>
#include <bit>

#include "balgan/errors.hpp"
#include "balgan/ops.hpp"

namespace balgan {

namespace {

constexpr float kInitStd = 0.02f;
constexpr float kLeakySlope = 0.2f;

Tensor normal_tensor(Shape shape, Rng& rng, double stddev) {
  Tensor t(std::move(shape));
  for (float& v : t.data()) v = static_cast<float>(rng.normal(0.0, stddev));
  return t;
}

void add_batch_norm(ParamSet& p, const std::string& prefix, int channels) {
  p.add(prefix + ".gamma", Tensor(Shape{channels}, 1.0f));
  p.add(prefix + ".beta", Tensor(Shape{channels}, 0.0f));
  p.add_buffer(prefix + ".running_mean", Tensor(Shape{channels}, 0.0f));
  p.add_buffer(prefix + ".running_var", Tensor(Shape{channels}, 1.0f));
}

Var apply_batch_norm(ParamSet& p, const std::string& prefix, const Var& x, ForwardMode mode) {
  BatchNormOptions opt;
  opt.training = mode.batch_stats;
  Tensor* rm = mode.batch_stats && !mode.update_running ? nullptr : &p.value(prefix + ".running_mean");
  Tensor* rv = mode.batch_stats && !mode.update_running ? nullptr : &p.value(prefix + ".running_var");
  return batch_norm(x, p.var(prefix + ".gamma"), p.var(prefix + ".beta"), rm, rv, opt);
}

int generator_channels(const GanSpec& s, int stage) {
  return s.base_feature_maps << (s.stages() - 1 - stage);
}

int critic_channels(const GanSpec& s, int layer) { return s.base_feature_maps << layer; }

}  // namespace

int GanSpec::stages() const { return std::countr_zero(static_cast<unsigned>(image_size)) - 2; }

void GanSpec::validate() const {
  if (image_size < 16 || !std::has_single_bit(static_cast<unsigned>(image_size))) {
    throw ConfigError("image_size must be a power of two >= 16, got " + std::to_string(image_size));
  }
  if (channels < 1) throw ConfigError("channels must be >= 1");
  if (latent.dim < 1) throw ConfigError("latent dim must be >= 1");
  if (base_feature_maps < 1) throw ConfigError("base_feature_maps must be >= 1");
  if (loss_mode == LossMode::wgan_gp) {
    if (critic_batch_norm) throw ConfigError("wgan_gp critic must not use batch normalization");
    if (critic_final_activation != CriticOutput::none) throw ConfigError("wgan_gp critic must have no final activation");
  } else if (critic_final_activation != CriticOutput::sigmoid) {
    throw ConfigError("bce critic must end in a sigmoid");
  }
}

GanSpec GanSpec::for_mode(LossMode mode) {
  GanSpec s;
  s.loss_mode = mode;
  if (mode == LossMode::bce) {
    s.critic_batch_norm = true;
    s.critic_final_activation = CriticOutput::sigmoid;
  }
  return s;
}

std::string to_string(LossMode mode) { return mode == LossMode::bce ? "bce" : "wgan_gp"; }

LossMode loss_mode_from_string(const std::string& s) {
  if (s == "bce") return LossMode::bce;
  if (s == "wgan_gp") return LossMode::wgan_gp;
  throw ConfigError("unknown loss_mode '" + s + "' (expected bce or wgan_gp)");
}

nlohmann::json to_json(const GanSpec& s) {
  return {{"image_size", s.image_size},
          {"channels", s.channels},
          {"latent_dim", s.latent.dim},
          {"latent_prior", s.latent.prior == LatentPrior::standard_normal ? "standard_normal" : "uniform"},
          {"base_feature_maps", s.base_feature_maps},
          {"critic_batch_norm", s.critic_batch_norm},
          {"critic_final_activation", s.critic_final_activation == CriticOutput::none ? "none" : "sigmoid"},
          {"loss_mode", to_string(s.loss_mode)}};
}

GanSpec gan_spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("gan spec must be an object");
  GanSpec s;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "image_size") {
        s.image_size = value.get<int>();
      } else if (key == "channels") {
        s.channels = value.get<int>();
      } else if (key == "latent_dim") {
        s.latent.dim = value.get<int>();
      } else if (key == "latent_prior") {
        const auto p = value.get<std::string>();
        if (p == "standard_normal") {
          s.latent.prior = LatentPrior::standard_normal;
        } else if (p == "uniform") {
          s.latent.prior = LatentPrior::uniform;
        } else {
          throw ConfigError("unknown latent_prior '" + p + "'");
        }
      } else if (key == "base_feature_maps") {
        s.base_feature_maps = value.get<int>();
      } else if (key == "critic_batch_norm") {
        s.critic_batch_norm = value.get<bool>();
      } else if (key == "critic_final_activation") {
        const auto a = value.get<std::string>();
        if (a == "none") {
          s.critic_final_activation = CriticOutput::none;
        } else if (a == "sigmoid") {
          s.critic_final_activation = CriticOutput::sigmoid;
        } else {
          throw ConfigError("unknown critic_final_activation '" + a + "'");
        }
      } else if (key == "loss_mode") {
        s.loss_mode = loss_mode_from_string(value.get<std::string>());
      } else {
        throw ConfigError("unknown gan key '" + key + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("gan." + key + ": " + e.what());
    }
  }
  return s;
}

Tensor sample_latent(const LatentSpec& latent, int count, Rng& rng) {
  Tensor z(Shape{count, latent.dim});
  for (float& v : z.data()) {
    v = latent.prior == LatentPrior::standard_normal ? static_cast<float>(rng.normal())
                                                      : static_cast<float>(rng.uniform(-1.0, 1.0));
  }
  return z;
}

Generator::Generator(GanSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  spec_.validate();
  Rng rng(seed);
  const int n = spec_.stages();
  params_.add("gen.proj.weight", normal_tensor({spec_.latent.dim, generator_channels(spec_, 0), 4, 4}, rng, kInitStd));
  add_batch_norm(params_, "gen.bn0", generator_channels(spec_, 0));
  for (int i = 1; i < n; ++i) {
    const std::string up = "gen.up" + std::to_string(i);
    params_.add(up + ".weight",
                normal_tensor({generator_channels(spec_, i - 1), generator_channels(spec_, i), 4, 4}, rng, kInitStd));
    add_batch_norm(params_, "gen.bn" + std::to_string(i), generator_channels(spec_, i));
  }
  params_.add("gen.out.weight", normal_tensor({spec_.base_feature_maps, spec_.channels, 4, 4}, rng, kInitStd));
  params_.add("gen.out.bias", Tensor(Shape{spec_.channels}, 0.0f));
}

Var Generator::forward(const Var& z, ForwardMode mode) {
  if (z.value().rank() != 2 || z.value().dim(1) != spec_.latent.dim) {
    throw ShapeError("generator expects N x " + std::to_string(spec_.latent.dim) + " latent batch, got " +
                     shape_to_string(z.shape()));
  }
  const int batch = z.value().dim(0);
  Var h = reshape(z, {batch, spec_.latent.dim, 1, 1});
  h = conv2d_transpose(h, params_.var("gen.proj.weight"), 1, 0);
  h = relu(apply_batch_norm(params_, "gen.bn0", h, mode));
  for (int i = 1; i < spec_.stages(); ++i) {
    h = conv2d_transpose(h, params_.var("gen.up" + std::to_string(i) + ".weight"), 2, 1);
    h = relu(apply_batch_norm(params_, "gen.bn" + std::to_string(i), h, mode));
  }
  h = conv2d_transpose(h, params_.var("gen.out.weight"), 2, 1);
  return tanh(add_bias(h, params_.var("gen.out.bias")));
}

Tensor Generator::sample(int count, Rng& rng) {
  if (count < 0) throw ContractError("sample count must be non-negative");
  const int s = spec_.image_size;
  Tensor out(Shape{count, spec_.channels, s, s});
  if (count == 0) return out;
  NoGradGuard no_grad;
  const Tensor z = sample_latent(spec_.latent, count, rng);
  constexpr int kChunk = 256;
  const std::size_t per = static_cast<std::size_t>(spec_.channels) * s * s;
  for (int begin = 0; begin < count; begin += kChunk) {
    const int end = std::min(count, begin + kChunk);
    const Var images = forward(Var::constant(z.slice_rows(begin, end)), ForwardMode::eval());
    std::copy(images.value().data().begin(), images.value().data().end(), out.ptr() + begin * per);
  }
  return out;
}

std::size_t Generator::parameter_count(const GanSpec& spec) {
  spec.validate();
  const std::size_t n = static_cast<std::size_t>(spec.stages());
  std::size_t total = 0;
  std::size_t prev = static_cast<std::size_t>(spec.latent.dim);
  for (std::size_t i = 0; i < n; ++i) {
    const auto ch = static_cast<std::size_t>(generator_channels(spec, static_cast<int>(i)));
    total += prev * ch * 16 + 2 * ch;
    prev = ch;
  }
  total += prev * static_cast<std::size_t>(spec.channels) * 16 + static_cast<std::size_t>(spec.channels);
  return total;
}

Critic::Critic(GanSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  spec_.validate();
  Rng rng(seed);
  const int n = spec_.stages();
  params_.add("critic.conv0.weight", normal_tensor({critic_channels(spec_, 0), spec_.channels, 4, 4}, rng, kInitStd));
  params_.add("critic.conv0.bias", Tensor(Shape{critic_channels(spec_, 0)}, 0.0f));
  for (int i = 1; i < n; ++i) {
    const std::string conv = "critic.conv" + std::to_string(i);
    params_.add(conv + ".weight",
                normal_tensor({critic_channels(spec_, i), critic_channels(spec_, i - 1), 4, 4}, rng, kInitStd));
    if (spec_.critic_batch_norm) {
      add_batch_norm(params_, "critic.bn" + std::to_string(i), critic_channels(spec_, i));
    } else {
      params_.add(conv + ".bias", Tensor(Shape{critic_channels(spec_, i)}, 0.0f));
    }
  }
  const int features = critic_channels(spec_, n - 1) * 16;
  params_.add("critic.head.weight", normal_tensor({features, 1}, rng, kInitStd));
  params_.add("critic.head.bias", Tensor(Shape{1}, 0.0f));
}

Var Critic::forward(const Var& images, ForwardMode mode) {
  const Tensor& v = images.value();
  const int s = spec_.image_size;
  if (v.rank() != 4 || v.dim(1) != spec_.channels || v.dim(2) != s || v.dim(3) != s) {
    throw ShapeError("critic expects N x " + std::to_string(spec_.channels) + " x " + std::to_string(s) + " x " +
                     std::to_string(s) + " images, got " + shape_to_string(v.shape()));
  }
  const int batch = v.dim(0);
  Var h = conv2d(images, params_.var("critic.conv0.weight"), 2, 1);
  h = leaky_relu(add_bias(h, params_.var("critic.conv0.bias")), kLeakySlope);
  for (int i = 1; i < spec_.stages(); ++i) {
    const std::string conv = "critic.conv" + std::to_string(i);
    h = conv2d(h, params_.var(conv + ".weight"), 2, 1);
    if (spec_.critic_batch_norm) {
      h = apply_batch_norm(params_, "critic.bn" + std::to_string(i), h, mode);
    } else {
      h = add_bias(h, params_.var(conv + ".bias"));
    }
    h = leaky_relu(h, kLeakySlope);
  }
  const int features = critic_channels(spec_, spec_.stages() - 1) * 16;
  Var score = dense(reshape(h, {batch, features}), params_.var("critic.head.weight"), params_.var("critic.head.bias"));
  score = reshape(score, {batch});
  if (spec_.critic_final_activation == CriticOutput::sigmoid) score = sigmoid(score);
  return score;
}

std::size_t Critic::parameter_count(const GanSpec& spec) {
  spec.validate();
  const int n = spec.stages();
  auto ch = [&](int i) { return static_cast<std::size_t>(critic_channels(spec, i)); };
  std::size_t total = static_cast<std::size_t>(spec.channels) * ch(0) * 16 + ch(0);
  for (int i = 1; i < n; ++i) {
    total += ch(i - 1) * ch(i) * 16 + (spec.critic_batch_norm ? 2 * ch(i) : ch(i));
  }
  total += ch(n - 1) * 16 + 1;
  return total;
}

}  // namespace balgan
