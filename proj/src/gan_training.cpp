#include "balgan/gan_training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "balgan/errors.hpp"
#include "balgan/ops.hpp"

namespace balgan {

namespace {

constexpr std::uint64_t kTrainerSalt = 1;
constexpr std::uint64_t kGeneratorSalt = 2;
constexpr std::uint64_t kCriticSalt = 3;

std::string schedule_name(Schedule s) { return s == Schedule::per_round ? "per_round" : "per_epoch"; }

template <class F>
void read_keys(const nlohmann::json& j, const std::string& where, F&& on_key) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    try {
      on_key(key, value);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(where + "." + key + ": " + e.what());
    }
  }
}

nlohmann::json adam_json(const AdamConfig& a) {
  return {{"lr", a.lr}, {"beta1", a.beta1}, {"beta2", a.beta2}, {"eps", a.eps}};
}

AdamConfig adam_from_json(const nlohmann::json& j, AdamConfig a, const std::string& where) {
  read_keys(j, where, [&](const std::string& key, const nlohmann::json& v) {
    if (key == "lr") {
      a.lr = v.get<double>();
    } else if (key == "beta1") {
      a.beta1 = v.get<double>();
    } else if (key == "beta2") {
      a.beta2 = v.get<double>();
    } else if (key == "eps") {
      a.eps = v.get<double>();
    } else if (key != "kind") {
      throw ConfigError("unknown key '" + where + "." + key + "'");
    }
  });
  return a;
}

nlohmann::json optimizer_state_meta(const OptimizerState& s) { return {{"steps", s.steps}}; }

void put_tensors(TensorArchive& a, const std::string& prefix, const std::map<std::string, Tensor>& tensors) {
  for (const auto& [name, t] : tensors) a.tensors.emplace(prefix + name, t);
}

std::map<std::string, Tensor> take_tensors(const TensorArchive& a, const std::string& prefix) {
  std::map<std::string, Tensor> out;
  for (const auto& [name, t] : a.tensors) {
    if (name.compare(0, prefix.size(), prefix) == 0) out.emplace(name.substr(prefix.size()), t);
  }
  return out;
}

std::map<std::string, Tensor> param_values(const ParamSet& p) {
  std::map<std::string, Tensor> out;
  for (const auto& [name, e] : p.entries()) out.emplace(name, e.var.value());
  return out;
}

void load_param_values(ParamSet& p, const std::map<std::string, Tensor>& values, const std::string& what) {
  if (values.size() != p.entries().size()) {
    throw CheckpointError(what + " parameter set does not match the checkpoint spec");
  }
  for (const auto& [name, t] : values) {
    if (!p.contains(name) || p.value(name).shape() != t.shape()) {
      throw CheckpointError(what + " parameter '" + name + "' does not match the checkpoint spec");
    }
    p.value(name) = t;
  }
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

void TrainConfig::validate() const {
  if (n_critic < 1) throw ConfigError("n_critic must be >= 1");
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2 (generator batch statistics)");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  // Zero learning rates are allowed: they make the null-update checks possible.
  if (!(generator_optimizer.lr >= 0.0) || !(critic_rmsprop.lr >= 0.0) || !(critic_adam.lr >= 0.0)) {
    throw ConfigError("learning rates must be non-negative");
  }
}

nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json critic = c.critic_optimizer == CriticOptimizerKind::rmsprop
                              ? nlohmann::json{{"kind", "rmsprop"},
                                               {"lr", c.critic_rmsprop.lr},
                                               {"rho", c.critic_rmsprop.rho},
                                               {"eps", c.critic_rmsprop.eps}}
                              : [&] {
                                  auto j = adam_json(c.critic_adam);
                                  j["kind"] = "adam";
                                  return j;
                                }();
  return {{"loss_mode", to_string(c.loss_mode)},
          {"n_critic", c.n_critic},
          {"schedule", schedule_name(c.schedule)},
          {"generator_optimizer", adam_json(c.generator_optimizer)},
          {"critic_optimizer", critic},
          {"lambda", c.lambda},
          {"bce_generator_loss", c.bce_generator_loss == BceGeneratorLoss::nonsaturating ? "nonsaturating" : "minimax"},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"seed", c.seed},
          {"checkpoint_every", c.checkpoint_every},
          {"log_wallclock", c.log_wallclock}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  read_keys(j, "gan_training", [&](const std::string& key, const nlohmann::json& v) {
    if (key == "loss_mode") {
      c.loss_mode = loss_mode_from_string(v.get<std::string>());
    } else if (key == "n_critic") {
      c.n_critic = v.get<int>();
    } else if (key == "schedule") {
      const auto s = v.get<std::string>();
      if (s == "per_round") {
        c.schedule = Schedule::per_round;
      } else if (s == "per_epoch") {
        c.schedule = Schedule::per_epoch;
      } else {
        throw ConfigError("unknown schedule '" + s + "' (expected per_round or per_epoch)");
      }
    } else if (key == "generator_optimizer") {
      c.generator_optimizer = adam_from_json(v, c.generator_optimizer, "gan_training.generator_optimizer");
    } else if (key == "critic_optimizer") {
      const std::string kind = v.is_object() && v.contains("kind") ? v.at("kind").get<std::string>() : "rmsprop";
      if (kind == "adam") {
        c.critic_optimizer = CriticOptimizerKind::adam;
        c.critic_adam = adam_from_json(v, c.critic_adam, "gan_training.critic_optimizer");
      } else if (kind == "rmsprop") {
        c.critic_optimizer = CriticOptimizerKind::rmsprop;
        read_keys(v, "gan_training.critic_optimizer", [&](const std::string& k, const nlohmann::json& x) {
          if (k == "lr") {
            c.critic_rmsprop.lr = x.get<double>();
          } else if (k == "rho") {
            c.critic_rmsprop.rho = x.get<double>();
          } else if (k == "eps") {
            c.critic_rmsprop.eps = x.get<double>();
          } else if (k != "kind") {
            throw ConfigError("unknown key 'gan_training.critic_optimizer." + k + "'");
          }
        });
      } else {
        throw ConfigError("unknown critic optimizer '" + kind + "' (expected rmsprop or adam)");
      }
    } else if (key == "lambda") {
      c.lambda = v.get<double>();
    } else if (key == "bce_generator_loss") {
      const auto s = v.get<std::string>();
      if (s == "nonsaturating") {
        c.bce_generator_loss = BceGeneratorLoss::nonsaturating;
      } else if (s == "minimax") {
        c.bce_generator_loss = BceGeneratorLoss::minimax;
      } else {
        throw ConfigError("unknown bce_generator_loss '" + s + "'");
      }
    } else if (key == "batch_size") {
      c.batch_size = v.get<int>();
    } else if (key == "epochs") {
      c.epochs = v.get<int>();
    } else if (key == "seed") {
      c.seed = v.get<std::uint64_t>();
    } else if (key == "checkpoint_every") {
      c.checkpoint_every = v.get<int>();
    } else if (key == "log_wallclock") {
      c.log_wallclock = v.get<bool>();
    } else {
      throw ConfigError("unknown key 'gan_training." + key + "'");
    }
  });
  return c;
}

std::string format_train_log(const std::vector<TrainLogRecord>& records) {
  std::string out = std::string(kTrainLogHeader) + "\n";
  for (const auto& r : records) {
    out += std::to_string(r.step) + "," + std::to_string(r.epoch) + "," + format_double(r.critic_loss) + "," +
           format_double(r.generator_loss) + "," + format_double(r.penalty) + "," + std::to_string(r.wallclock_ms) +
           "\n";
  }
  return out;
}

void write_train_log(const std::filesystem::path& path, const std::vector<TrainLogRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write training log " + path.string());
  out << format_train_log(records);
  if (!out) throw DataError("failed writing training log " + path.string());
}

TensorArchive checkpoint_to_archive(const Checkpoint& c) {
  TensorArchive a;
  a.meta = {{"kind", "gan_checkpoint"},
            {"spec", to_json(c.spec)},
            {"config", to_json(c.config)},
            {"class_label", c.class_label},
            {"rng", c.rng_state},
            {"counters",
             {{"critic_steps", c.counters.critic_steps},
              {"generator_steps", c.counters.generator_steps},
              {"pending_critic", c.counters.pending_critic},
              {"epochs_completed", c.counters.epochs_completed},
              {"round_critic_loss", c.counters.round_critic_loss},
              {"round_penalty", c.counters.round_penalty},
              {"round_critic_count", c.counters.round_critic_count}}},
            {"generator_optimizer", optimizer_state_meta(c.generator_optimizer)},
            {"critic_optimizer", optimizer_state_meta(c.critic_optimizer)}};
  put_tensors(a, "generator/", c.generator);
  put_tensors(a, "critic/", c.critic);
  put_tensors(a, "generator_optimizer/", c.generator_optimizer.slots);
  put_tensors(a, "critic_optimizer/", c.critic_optimizer.slots);
  return a;
}

Checkpoint checkpoint_from_archive(const TensorArchive& a) {
  try {
    if (a.meta.value("kind", "") != "gan_checkpoint") throw CheckpointError("archive is not a GAN checkpoint");
    Checkpoint c;
    c.spec = gan_spec_from_json(a.meta.at("spec"));
    c.config = train_config_from_json(a.meta.at("config"));
    c.class_label = a.meta.at("class_label").get<std::string>();
    c.rng_state = a.meta.at("rng").get<std::string>();
    const auto& k = a.meta.at("counters");
    c.counters.critic_steps = k.at("critic_steps").get<std::int64_t>();
    c.counters.generator_steps = k.at("generator_steps").get<std::int64_t>();
    c.counters.pending_critic = k.at("pending_critic").get<int>();
    c.counters.epochs_completed = k.at("epochs_completed").get<int>();
    c.counters.round_critic_loss = k.at("round_critic_loss").get<double>();
    c.counters.round_penalty = k.at("round_penalty").get<double>();
    c.counters.round_critic_count = k.at("round_critic_count").get<int>();
    c.generator_optimizer.steps = a.meta.at("generator_optimizer").at("steps").get<std::int64_t>();
    c.critic_optimizer.steps = a.meta.at("critic_optimizer").at("steps").get<std::int64_t>();
    c.generator = take_tensors(a, "generator/");
    c.critic = take_tensors(a, "critic/");
    c.generator_optimizer.slots = take_tensors(a, "generator_optimizer/");
    c.critic_optimizer.slots = take_tensors(a, "critic_optimizer/");
    c.spec.validate();
    c.config.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint metadata: ") + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("invalid checkpoint configuration: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  write_archive(path, checkpoint_to_archive(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return checkpoint_from_archive(read_archive(path)); }

EpochSource epoch_source(const ImageSet& images, const TrainConfig& cfg) {
  const int batch = cfg.batch_size;
  const std::uint64_t seed = cfg.seed;
  return [&images, batch, seed](int epoch) { return make_batches(images, batch, seed, epoch, Normalization::gan); };
}

GanTrainer::GanTrainer(GanSpec spec, TrainConfig cfg)
    : config_(cfg),
      generator_(spec, mix_seed(cfg.seed, kGeneratorSalt)),
      critic_(spec, mix_seed(cfg.seed, kCriticSalt)),
      generator_opt_(cfg.generator_optimizer),
      critic_rmsprop_(cfg.critic_rmsprop),
      critic_adam_(cfg.critic_adam),
      rng_(mix_seed(cfg.seed, kTrainerSalt)),
      started_(std::chrono::steady_clock::now()) {
  config_.validate();
  if (spec.loss_mode != config_.loss_mode) {
    throw ConfigError("loss_mode differs between gan spec (" + to_string(spec.loss_mode) + ") and training config (" +
                      to_string(config_.loss_mode) + ")");
  }
}

GanTrainer::GanTrainer(const Checkpoint& c) : GanTrainer(c.spec, c.config) {
  load_param_values(generator_.params(), c.generator, "generator");
  load_param_values(critic_.params(), c.critic, "critic");
  generator_opt_.set_state(c.generator_optimizer);
  if (config_.critic_optimizer == CriticOptimizerKind::rmsprop) {
    critic_rmsprop_.set_state(c.critic_optimizer);
  } else {
    critic_adam_.set_state(c.critic_optimizer);
  }
  rng_.restore(c.rng_state);
  counters_ = c.counters;
  class_label = c.class_label;
}

Tensor GanTrainer::fake_batch(int count, ForwardMode mode) {
  NoGradGuard no_grad;
  // Batch statistics need at least two samples.
  const int n = std::max(count, 2);
  const Tensor z = sample_latent(spec().latent, n, rng_);
  Tensor fake = generator_.forward(Var::constant(z), mode).value();
  return n == count ? fake : fake.slice_rows(0, static_cast<std::size_t>(count));
}

void GanTrainer::critic_optimizer_step() {
  if (config_.critic_optimizer == CriticOptimizerKind::rmsprop) {
    critic_rmsprop_.step(critic_.params());
  } else {
    critic_adam_.step(critic_.params());
  }
}

CriticStepResult GanTrainer::critic_step(const Tensor& real_batch) {
  const GanSpec& s = spec();
  if (real_batch.rank() != 4 || real_batch.dim(1) != s.channels || real_batch.dim(2) != s.image_size ||
      real_batch.dim(3) != s.image_size) {
    throw ShapeError("critic_step expects N x " + std::to_string(s.channels) + " x " + std::to_string(s.image_size) +
                     " x " + std::to_string(s.image_size) + " batch, got " + shape_to_string(real_batch.shape()));
  }
  const int n = real_batch.dim(0);
  if (n < 1) throw ContractError("critic_step needs a non-empty batch");
  // The generator's running statistics are left alone here; they are
  // updated by generator steps only.
  const Tensor fake = fake_batch(n, ForwardMode::train_frozen_stats());

  const Var real = Var::constant(real_batch);
  const Var d_real = critic_.forward(real, ForwardMode::train());
  const Var d_fake = critic_.forward(Var::constant(fake), ForwardMode::train());
  CriticStepResult result;
  Var loss;
  if (config_.loss_mode == LossMode::wgan_gp) {
    const Interpolation mix = interpolate(real_batch, fake, rng_);
    const CriticFn fn = [this](const Var& x) { return critic_.forward(x, ForwardMode::train()); };
    const Var penalty = gradient_penalty(fn, mix.x_hat, PenaltyConfig{config_.lambda});
    loss = wgan_gp_total_critic_loss(d_real, d_fake, penalty);
    result.penalty = penalty.value().item();
  } else {
    loss = bce_discriminator_loss(d_real, d_fake);
  }
  result.loss = loss.value().item();
  if (!std::isfinite(result.loss) || !std::isfinite(result.penalty)) {
    throw NumericError("non-finite critic loss at critic step " + std::to_string(counters_.critic_steps + 1) +
                       " (loss=" + format_double(result.loss) + ", penalty=" + format_double(result.penalty) + ")");
  }
  critic_.params().zero_grad();
  backward(loss, critic_.params());
  critic_optimizer_step();
  ++counters_.critic_steps;
  return result;
}

double GanTrainer::generator_step() {
  const Tensor z = sample_latent(spec().latent, config_.batch_size, rng_);
  const Var fake = generator_.forward(Var::constant(z), ForwardMode::train());
  // Critic statistics stay frozen: this step must not modify the critic.
  const Var d_fake = critic_.forward(fake, ForwardMode::train_frozen_stats());
  Var loss;
  if (config_.loss_mode == LossMode::wgan_gp) {
    loss = wgan_generator_loss(d_fake);
  } else if (config_.bce_generator_loss == BceGeneratorLoss::nonsaturating) {
    loss = bce_generator_loss_nonsaturating(d_fake);
  } else {
    loss = bce_generator_loss_minimax(d_fake);
  }
  const double value = loss.value().item();
  if (!std::isfinite(value)) {
    throw NumericError("non-finite generator loss at generator step " +
                       std::to_string(counters_.generator_steps + 1));
  }
  generator_.params().zero_grad();
  backward(loss, generator_.params());
  generator_opt_.step(generator_.params());
  ++counters_.generator_steps;
  return value;
}

void GanTrainer::append_log(int epoch, double critic_loss, double generator_loss, double penalty) {
  TrainLogRecord r;
  r.step = counters_.generator_steps;
  r.epoch = epoch;
  r.critic_loss = critic_loss;
  r.generator_loss = generator_loss;
  r.penalty = penalty;
  if (config_.log_wallclock) {
    r.wallclock_ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started_)
                         .count();
  }
  log_.push_back(r);
}

void GanTrainer::train(const EpochSource& source, int until_epoch, const CheckpointHook& on_checkpoint) {
  started_ = std::chrono::steady_clock::now();
  auto flush_round = [&](int epoch, double generator_loss) {
    const double count = std::max(counters_.round_critic_count, 1);
    append_log(epoch, counters_.round_critic_loss / count, generator_loss, counters_.round_penalty / count);
    counters_.round_critic_loss = counters_.round_penalty = 0.0;
    counters_.round_critic_count = 0;
  };
  for (int epoch = counters_.epochs_completed; epoch < until_epoch; ++epoch) {
    BatchStream batches = source(epoch);
    if (batches.batch_count() == 0) throw DataError("GAN training data is empty");
    const bool generator_epoch = (epoch + 1) % config_.n_critic == 0;
    while (auto batch = batches.next()) {
      const CriticStepResult c = critic_step(batch->images);
      counters_.round_critic_loss += c.loss;
      counters_.round_penalty += c.penalty;
      ++counters_.round_critic_count;
      if (config_.schedule == Schedule::per_round) {
        if (++counters_.pending_critic == config_.n_critic) {
          counters_.pending_critic = 0;
          flush_round(epoch, generator_step());
        }
      } else if (generator_epoch) {
        flush_round(epoch, generator_step());
      }
    }
    counters_.epochs_completed = epoch + 1;
    const bool last = epoch + 1 == until_epoch;
    const bool periodic = config_.checkpoint_every > 0 && (epoch + 1) % config_.checkpoint_every == 0;
    if (on_checkpoint && (last || periodic)) on_checkpoint(checkpoint());
  }
}

Checkpoint GanTrainer::checkpoint() const {
  Checkpoint c;
  c.spec = generator_.spec();
  c.config = config_;
  c.class_label = class_label;
  c.generator = param_values(generator_.params());
  c.critic = param_values(critic_.params());
  c.generator_optimizer = generator_opt_.state();
  c.critic_optimizer =
      config_.critic_optimizer == CriticOptimizerKind::rmsprop ? critic_rmsprop_.state() : critic_adam_.state();
  c.rng_state = rng_.save();
  c.counters = counters_;
  return c;
}

TrainResult train_gan(const ImageSet& images, const GanSpec& spec, const TrainConfig& cfg) {
  if (images.size() == 0) throw DataError("GAN training data is empty");
  GanTrainer trainer(spec, cfg);
  trainer.train(epoch_source(images, cfg));
  return {trainer.checkpoint(), trainer.log()};
}

Tensor generate_samples(const Checkpoint& checkpoint, int count, std::uint64_t seed) {
  Generator g(checkpoint.spec, 0);
  load_param_values(g.params(), checkpoint.generator, "generator");
  Rng rng(seed);
  return g.sample(count, rng);
}

}  // namespace balgan
