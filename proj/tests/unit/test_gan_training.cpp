#include <cmath>
#include <numbers>

#include "balgan/errors.hpp"
#include "balgan/gan_training.hpp"
#include "balgan/ops.hpp"
#include "doctest.h"
#include "fixtures.hpp"
#include "reference.hpp"

using namespace balgan;
using namespace balgan::testing;

namespace {

GanSpec tiny_spec(LossMode mode = LossMode::wgan_gp) {
  GanSpec s = GanSpec::for_mode(mode);
  s.image_size = 16;
  s.base_feature_maps = 4;
  s.latent.dim = 8;
  return s;
}

TrainConfig tiny_config(LossMode mode = LossMode::wgan_gp) {
  TrainConfig c;
  c.loss_mode = mode;
  c.batch_size = 4;
  c.epochs = 1;
  c.seed = 17;
  c.log_wallclock = false;
  return c;
}

ImageSet ring(int count) { return ring_image_set(count, 16, 5); }

Tensor real_batch(int n, std::uint64_t seed) { return to_gan_range(ring_image_set(n, 16, seed).images); }

std::map<std::string, Tensor> values(const ParamSet& ps, bool with_buffers = true) {
  std::map<std::string, Tensor> out;
  for (const auto& name : ps.names())
    if (with_buffers || !ps.is_buffer(name)) out[name] = ps.value(name);
  return out;
}

std::vector<std::uint8_t> bytes_of(const Checkpoint& c) { return encode_archive(checkpoint_to_archive(c)); }

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("defaults") {
    const TrainConfig c;
    CHECK(c.n_critic == 5);
    CHECK(c.generator_optimizer.lr == 2e-4);
    CHECK(c.generator_optimizer.beta1 == 0.5);
    CHECK(c.generator_optimizer.beta2 == 0.999);
    CHECK(c.critic_optimizer == CriticOptimizerKind::rmsprop);
    CHECK(c.critic_rmsprop.lr == 5e-5);
    CHECK(c.critic_rmsprop.rho == 0.9);
    CHECK(c.lambda == 10.0);
    CHECK(c.schedule == Schedule::per_round);
  }

  TEST_CASE("validation") {
    TrainConfig c;
    c.n_critic = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = TrainConfig{};
    c.generator_optimizer.lr = -1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = TrainConfig{};
    c.lambda = -0.5;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = TrainConfig{};
    c.batch_size = 1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK_THROWS_AS(GanTrainer(tiny_spec(LossMode::bce), tiny_config()), ConfigError);
  }

  TEST_CASE("json round trip and unknown keys") {
    TrainConfig c = tiny_config();
    c.schedule = Schedule::per_epoch;
    c.critic_optimizer = CriticOptimizerKind::adam;
    c.critic_adam.lr = 3e-4;
    const TrainConfig back = train_config_from_json(to_json(c));
    CHECK(to_json(back) == to_json(c));
    auto j = to_json(c);
    j["extra"] = true;
    CHECK_THROWS_AS(train_config_from_json(j), ConfigError);
    j = to_json(c);
    j["critic_optimizer"]["momentum"] = 0.1;
    CHECK_THROWS_AS(train_config_from_json(j), ConfigError);
  }
}

TEST_SUITE("steps") {
  TEST_CASE("critic step changes only the critic; penalty is non-negative") {
    GanTrainer t(tiny_spec(), tiny_config());
    const auto g0 = values(t.generator().params());
    const auto c0 = values(t.critic().params());
    const CriticStepResult r = t.critic_step(real_batch(4, 1));
    CHECK(r.penalty >= 0.0);
    CHECK(values(t.generator().params()) == g0);
    CHECK_FALSE(values(t.critic().params()) == c0);
    CHECK(t.counters().critic_steps == 1);
  }

  TEST_CASE("zero learning rate leaves parameters unchanged and reports the pure loss") {
    TrainConfig cfg = tiny_config();
    cfg.critic_rmsprop.lr = 0.0;
    cfg.generator_optimizer.lr = 0.0;
    GanTrainer t(tiny_spec(), cfg);
    GanTrainer twin(tiny_spec(), cfg);
    const auto c0 = values(t.critic().params());
    const auto g0 = values(t.generator().params(), false);
    const Tensor real = real_batch(4, 2);
    const CriticStepResult r = t.critic_step(real);
    CHECK(values(t.critic().params()) == c0);
    t.generator_step();
    CHECK(values(t.generator().params(), false) == g0);

    // Same draws as the step: fakes, then epsilons, from the trainer stream.
    Rng rng(mix_seed(cfg.seed, 1));
    const Tensor z = sample_latent(twin.spec().latent, 4, rng);
    const Tensor fake = twin.generator().forward(Var::constant(z), ForwardMode::train_frozen_stats()).value();
    auto critic = [&](const Var& x) { return twin.critic().forward(x); };
    const Interpolation mix = interpolate(real, fake, rng);
    const Var penalty = gradient_penalty(critic, mix.x_hat, PenaltyConfig{cfg.lambda});
    const double expected =
        wgan_gp_total_critic_loss(critic(Var::constant(real)), critic(Var::constant(fake)), penalty).value().item();
    CHECK(r.loss == expected);
    CHECK(r.penalty == penalty.value().item());
  }

  TEST_CASE("generator step leaves the critic bit-identical") {
    for (LossMode mode : {LossMode::wgan_gp, LossMode::bce}) {
      GanTrainer t(tiny_spec(mode), tiny_config(mode));
      const auto c0 = values(t.critic().params());
      const auto g0 = values(t.generator().params());
      const double loss = t.generator_step();
      CHECK(std::isfinite(loss));
      CHECK(values(t.critic().params()) == c0);
      CHECK_FALSE(values(t.generator().params()) == g0);
    }
  }

  TEST_CASE("one small generator step against a frozen linear critic decreases its loss") {
    const GanSpec spec = tiny_spec();
    Generator g(spec, 4);
    Rng rng(9);
    const Tensor w = random_tensor({16 * 16}, rng);
    const Tensor z = sample_latent(spec.latent, 6, rng);
    auto loss_of = [&] {
      const Var fake = g.forward(Var::constant(z), ForwardMode::train_frozen_stats());
      const Var d = reshape(matmul(reshape(fake, {6, 256}), Var::constant(w.reshaped({256, 1}))), {6});
      return wgan_generator_loss(d);
    };
    const Var before = loss_of();
    g.params().zero_grad();
    backward(before, g.params());
    Adam adam(AdamConfig{1e-4, 0.5, 0.999, 1e-8});
    adam.step(g.params());
    CHECK(loss_of().value().item() < before.value().item());
  }

  TEST_CASE("bce critic step at the symmetric equilibrium") {
    // A zero head makes every score sigmoid(0) = 0.5.
    GanTrainer t(tiny_spec(LossMode::bce), tiny_config(LossMode::bce));
    t.critic().params().value("critic.head.weight").fill(0.0f);
    const CriticStepResult r = t.critic_step(real_batch(4, 3));
    CHECK(r.loss == doctest::Approx(2 * std::numbers::ln2).epsilon(1e-6));
    CHECK(r.penalty == 0.0);
  }

  TEST_CASE("non-finite input aborts the step") {
    GanTrainer t(tiny_spec(), tiny_config());
    Tensor bad = real_batch(4, 1);
    bad[5] = NAN;
    CHECK_THROWS_AS(t.critic_step(bad), NumericError);
    CHECK(t.counters().critic_steps == 0);
    CHECK_THROWS_AS(t.critic_step(Tensor({2, 1, 8, 8})), ShapeError);
  }
}

TEST_SUITE("schedule") {
  TEST_CASE("10 batches with n_critic 5 make 10 critic and 2 generator updates") {
    GanTrainer t(tiny_spec(), tiny_config());
    t.train(epoch_source(ring(40), t.config()));
    CHECK(t.counters().critic_steps == 10);
    CHECK(t.counters().generator_steps == 2);
    CHECK(t.log().size() == 2);
  }

  TEST_CASE("round invariant holds across epochs with a partial final round") {
    TrainConfig cfg = tiny_config();
    cfg.epochs = 3;
    cfg.n_critic = 3;
    GanTrainer t(tiny_spec(), cfg);
    t.train(epoch_source(ring(22), cfg));  // 6 batches per epoch, last one partial
    CHECK(t.counters().critic_steps == 18);
    CHECK(t.counters().generator_steps == 6);
    for (std::size_t i = 0; i < t.log().size(); ++i) {
      const auto& r = t.log()[i];
      CHECK(r.step == static_cast<std::int64_t>(i + 1));
      CHECK(std::isfinite(r.critic_loss));
      CHECK(std::isfinite(r.generator_loss));
      CHECK(std::isfinite(r.penalty));
      CHECK(r.penalty >= 0.0);
    }
  }

  TEST_CASE("per-epoch schedule updates the generator only in every n_critic-th epoch") {
    TrainConfig cfg = tiny_config();
    cfg.schedule = Schedule::per_epoch;
    cfg.epochs = 5;
    cfg.n_critic = 5;
    GanTrainer t(tiny_spec(), cfg);
    t.train(epoch_source(ring(12), cfg), 4);
    CHECK(t.counters().critic_steps == 12);
    CHECK(t.counters().generator_steps == 0);
    t.train(epoch_source(ring(12), cfg), 5);
    CHECK(t.counters().critic_steps == 15);
    CHECK(t.counters().generator_steps == 3);
  }

  TEST_CASE("checkpoint hook fires periodically and at the end") {
    TrainConfig cfg = tiny_config();
    cfg.epochs = 5;
    cfg.checkpoint_every = 2;
    GanTrainer t(tiny_spec(), cfg);
    std::vector<int> epochs;
    t.train(epoch_source(ring(8), cfg), [&](const Checkpoint& c) { epochs.push_back(c.counters.epochs_completed); });
    CHECK(epochs == std::vector<int>{2, 4, 5});
  }

  TEST_CASE("empty data is rejected") {
    ImageSet empty;
    empty.images = Tensor({0, 1, 16, 16});
    CHECK_THROWS_AS(train_gan(empty, tiny_spec(), tiny_config()), DataError);
  }
}

TEST_SUITE("reproducibility") {
  TEST_CASE("identical seeds give identical checkpoints and logs") {
    TrainConfig cfg = tiny_config();
    cfg.epochs = 2;
    const ImageSet data = ring(20);
    const TrainResult a = train_gan(data, tiny_spec(), cfg);
    const TrainResult b = train_gan(data, tiny_spec(), cfg);
    CHECK(bytes_of(a.checkpoint) == bytes_of(b.checkpoint));
    CHECK(format_train_log(a.log) == format_train_log(b.log));
    cfg.seed = 18;
    CHECK_FALSE(bytes_of(train_gan(data, tiny_spec(), cfg).checkpoint) == bytes_of(a.checkpoint));
  }

  TEST_CASE("resume equals uninterrupted training step for step") {
    for (auto schedule : {Schedule::per_round, Schedule::per_epoch}) {
      for (LossMode mode : {LossMode::wgan_gp, LossMode::bce}) {
        TrainConfig cfg = tiny_config(mode);
        cfg.schedule = schedule;
        cfg.epochs = 5;
        cfg.n_critic = 3;
        const ImageSet data = ring(14);  // 4 batches: rounds straddle epochs
        GanTrainer full(tiny_spec(mode), cfg);
        full.train(epoch_source(data, cfg));

        TempDir dir("resume");
        GanTrainer first(tiny_spec(mode), cfg);
        first.train(epoch_source(data, cfg), 2);
        save_checkpoint(first.checkpoint(), dir / "ck");
        GanTrainer second(load_checkpoint(dir / "ck"));
        second.train(epoch_source(data, cfg));

        CHECK(bytes_of(second.checkpoint()) == bytes_of(full.checkpoint()));
        std::vector<TrainLogRecord> joined = first.log();
        joined.insert(joined.end(), second.log().begin(), second.log().end());
        CHECK(format_train_log(joined) == format_train_log(full.log()));
      }
    }
  }
}

TEST_SUITE("checkpoint files") {
  TEST_CASE("save, load, save is byte-identical") {
    TempDir dir("ckpt");
    GanTrainer t(tiny_spec(), tiny_config());
    t.class_label = "pneumonia";
    t.train(epoch_source(ring(8), t.config()));
    save_checkpoint(t.checkpoint(), dir / "a.ckpt");
    const Checkpoint c = load_checkpoint(dir / "a.ckpt");
    CHECK(c.class_label == "pneumonia");
    CHECK(c.counters == t.counters());
    CHECK(c.spec == t.spec());
    save_checkpoint(c, dir / "b.ckpt");
    CHECK(read_file(dir / "a.ckpt") == read_file(dir / "b.ckpt"));
  }

  TEST_CASE("corrupt files raise a checkpoint error") {
    TempDir dir("corrupt");
    GanTrainer t(tiny_spec(), tiny_config());
    save_checkpoint(t.checkpoint(), dir / "a.ckpt");
    const std::string good = read_file(dir / "a.ckpt");
    write_file(dir / "trunc.ckpt", good.substr(0, good.size() / 2));
    CHECK_THROWS_AS(load_checkpoint(dir / "trunc.ckpt"), CheckpointError);
    std::string flipped = good;
    flipped[flipped.size() - 20] ^= 1;
    write_file(dir / "flip.ckpt", flipped);
    CHECK_THROWS_AS(load_checkpoint(dir / "flip.ckpt"), CheckpointError);
    CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), CheckpointError);

    TensorArchive other;
    other.meta = {{"kind", "classifier"}};
    write_archive(dir / "other.ckpt", other);
    CHECK_THROWS_AS(load_checkpoint(dir / "other.ckpt"), CheckpointError);
  }
}

TEST_SUITE("sampling") {
  TEST_CASE("generate_samples contract") {
    GanTrainer t(tiny_spec(), tiny_config());
    t.train(epoch_source(ring(8), t.config()));
    const Checkpoint c = t.checkpoint();
    CHECK(generate_samples(c, 0, 1).size() == 0);
    const Tensor a = generate_samples(c, 5, 3);
    CHECK(a.shape() == Shape{5, 1, 16, 16});
    CHECK(a == generate_samples(c, 5, 3));
    CHECK_FALSE(a == generate_samples(c, 5, 4));
    for (float v : a.data()) {
      CHECK(v >= -1.0f);
      CHECK(v <= 1.0f);
    }
    // Eval-mode sampling does not depend on how many samples are drawn together.
    const Tensor more = generate_samples(c, 9, 3);
    CHECK(more.slice_rows(0, 5) == a);
  }
}

TEST_SUITE("log") {
  TEST_CASE("csv format") {
    std::vector<TrainLogRecord> recs = {{1, 0, -0.5, 0.25, 1.0, 0}, {2, 1, 1e-10, -3.0, 0.0, 42}};
    const std::string csv = format_train_log(recs);
    CHECK(csv.rfind(std::string(kTrainLogHeader) + "\n", 0) == 0);
    CHECK(csv.find("\n1,0,-0.5,0.25,1,0\n") != std::string::npos);
    CHECK(csv.find("\n2,1,1e-10,-3,0,42\n") != std::string::npos);
  }
}
