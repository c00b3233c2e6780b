#include "experiments.hpp"

#include <chrono>
#include <cmath>

#include "balgan/cross_validation.hpp"
#include "balgan/errors.hpp"
#include "balgan/rebalance.hpp"
#include "fixtures.hpp"

namespace balgan::testing {

namespace fs = std::filesystem;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void say(const Progress& progress, const std::string& text) {
  if (progress) progress(text);
}

AdamConfig gp_adam(double lr = 1e-4) { return AdamConfig{lr, 0.5, 0.9, 1e-8}; }

}  // namespace

GanSpec ring_gan_spec(const RingExperiment& e) {
  GanSpec s;
  s.image_size = e.image_size;
  s.base_feature_maps = e.base_feature_maps;
  s.latent.dim = e.latent_dim;
  return s;
}

TrainConfig ring_train_config(const RingExperiment& e) {
  TrainConfig c;
  c.n_critic = e.n_critic;
  c.batch_size = e.batch_size;
  c.epochs = e.epochs;
  c.seed = e.seed;
  c.critic_optimizer = CriticOptimizerKind::adam;
  c.critic_adam = gp_adam();
  c.generator_optimizer = gp_adam();
  c.log_wallclock = false;
  return c;
}

RingOutcome run_ring_experiment(const RingExperiment& e, const Progress& progress) {
  const auto t0 = std::chrono::steady_clock::now();
  const ImageSet data = ring_image_set(e.samples, e.image_size, e.seed);
  const int d = e.image_size * e.image_size;
  const Tensor real = to_gan_range(ring_image_set(e.eval_count, e.image_size, mix_seed(e.seed, 77)).images)
                          .reshaped({e.eval_count, d});
  const std::uint64_t latent_seed = mix_seed(e.seed, 78), projection_seed = mix_seed(e.seed, 79);

  GanTrainer trainer(ring_gan_spec(e), ring_train_config(e));
  auto swd = [&] {
    const Tensor fake = generate_samples(trainer.checkpoint(), e.eval_count, latent_seed).reshaped({e.eval_count, d});
    return sliced_wasserstein(real, fake, e.projections, projection_seed);
  };

  RingOutcome out;
  out.swd_initial = swd();
  const EpochSource source = epoch_source(data, trainer.config());
  for (int epoch = 1; epoch <= e.epochs; ++epoch) {
    try {
      trainer.train(source, epoch);
    } catch (const NumericError&) {
      out.losses_finite = false;
      break;
    }
    out.swd_per_epoch.push_back(swd());
    say(progress, "ring epoch " + std::to_string(epoch) + " swd " + std::to_string(out.swd_per_epoch.back()));
  }
  for (const auto& r : trainer.log()) {
    if (!std::isfinite(r.critic_loss) || !std::isfinite(r.generator_loss) || !std::isfinite(r.penalty)) {
      out.losses_finite = false;
    }
  }
  out.swd_final = out.swd_per_epoch.empty() ? out.swd_initial : out.swd_per_epoch.back();
  out.generator_steps = trainer.counters().generator_steps;
  out.seconds = seconds_since(t0);
  return out;
}

ClassifierSpec shapes_classifier_spec(int image_size) {
  ClassifierSpec s;
  s.input_size = image_size;
  s.blocks = {{BlockKind::plain_conv, 8, 1}, {BlockKind::residual, 16, 1}, {BlockKind::separable, 32, 1}};
  s.head_units = 32;
  return s;
}

ShapesOutcome run_shapes_experiment(const ShapesExperiment& e, const Progress& progress) {
  const auto t0 = std::chrono::steady_clock::now();
  ShapesOutcome out;
  const ClassifierSpec spec = shapes_classifier_spec(e.image_size);

  GanSpec gan;
  gan.image_size = e.image_size;
  gan.base_feature_maps = e.gan_feature_maps;
  gan.latent.dim = e.gan_latent_dim;

  for (std::uint64_t seed : e.seeds) {
    const fs::path dir = e.work_dir / ("seed" + std::to_string(seed));
    const DatasetManifest corpus =
        write_shape_dataset(dir / "data", {{"circle", e.majority}, {"square", e.minority}}, e.image_size, seed, "square", e.style);

    ClassifierTraining hyper;
    hyper.epochs = e.classifier_epochs;
    hyper.seed = seed;
    CrossValidationOptions cv;
    cv.k = e.folds;
    cv.seed = seed;
    cv.positive_class = "square";

    auto mean_recall = [](const CrossValidationResult& r) {
      double sum = 0.0;
      for (const auto& f : r.folds) sum += f.report.recall.value.value_or(0.0);
      return sum / static_cast<double>(r.folds.size());
    };

    cv.on_fold = [&](int fold, const MetricsReport& r) {
      say(progress, "seed " + std::to_string(seed) + " baseline fold " + std::to_string(fold) + " recall " +
                        std::to_string(r.recall.value.value_or(0.0)));
    };
    out.baseline_recall.push_back(mean_recall(cross_validate(corpus, spec, hyper, cv)));

    cv.train_transform = [&](const DatasetManifest& train, int fold) {
      DatasetManifest squares;
      squares.root = train.root;
      for (const auto& r : train.records)
        if (r.label == "square") squares.records.push_back(r);
      TrainConfig cfg;
      cfg.batch_size = e.gan_batch_size;
      cfg.epochs = e.gan_epochs;
      cfg.seed = mix_seed(seed, 100 + static_cast<std::uint64_t>(fold));
      cfg.critic_optimizer = CriticOptimizerKind::adam;
      cfg.critic_adam = gp_adam(e.gan_lr);
      cfg.generator_optimizer = gp_adam(e.gan_lr);
      cfg.log_wallclock = false;
      GanTrainer trainer(gan, cfg);
      trainer.class_label = "square";
      trainer.train(epoch_source(load_image_set(squares, e.image_size), cfg));

      const RebalancePlan plan = compute_plan(train.real_counts(), e.balanced_target);
      const DatasetManifest kept = random_under_sample(train, plan, cfg.seed);
      return synth_oversample(kept, plan, {{"square", trainer.checkpoint()}},
                              dir / ("fold" + std::to_string(fold)), cfg.seed, e.image_size);
    };
    cv.on_fold = [&](int fold, const MetricsReport& r) {
      say(progress, "seed " + std::to_string(seed) + " balanced fold " + std::to_string(fold) + " recall " +
                        std::to_string(r.recall.value.value_or(0.0)));
    };
    out.balanced_recall.push_back(mean_recall(cross_validate(corpus, spec, hyper, cv)));
  }
  for (std::size_t i = 0; i < e.seeds.size(); ++i) {
    out.baseline_mean += out.baseline_recall[i] / static_cast<double>(e.seeds.size());
    out.balanced_mean += out.balanced_recall[i] / static_cast<double>(e.seeds.size());
  }
  out.seconds = seconds_since(t0);
  return out;
}

}  // namespace balgan::testing
