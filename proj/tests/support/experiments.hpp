#pragma once

// Desk-scale statistical experiments shared by the acceptance runner:
// WGAN-GP convergence on the eight-mode ring, and the minority-recall
// benefit of GAN rebalancing on the circles-vs-squares corpus.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "balgan/classifier.hpp"
#include "balgan/gan_training.hpp"
#include "fixtures.hpp"

namespace balgan::testing {

using Progress = std::function<void(const std::string&)>;

struct RingExperiment {
  int samples = 2000;
  int image_size = 16;
  int base_feature_maps = 16;
  int latent_dim = 32;
  int batch_size = 64;
  int n_critic = 5;
  int epochs = 100;
  int eval_count = 512;
  int projections = 32;
  std::uint64_t seed = 1;
};

struct RingOutcome {
  double swd_initial = 0.0;
  double swd_final = 0.0;
  std::vector<double> swd_per_epoch;
  bool losses_finite = true;
  std::int64_t generator_steps = 0;
  double seconds = 0.0;
};

GanSpec ring_gan_spec(const RingExperiment& e);
TrainConfig ring_train_config(const RingExperiment& e);
// SWD between eval_count real ring images and as many generated ones, both
// in [-1, 1], with fixed real/latent/projection seeds across checkpoints.
RingOutcome run_ring_experiment(const RingExperiment& e, const Progress& progress = {});

struct ShapesExperiment {
  int majority = 1000;
  int minority = 50;
  int image_size = 16;
  ShapeStyle style{0.2, 0.6, 0.15, true};
  int folds = 5;
  int balanced_target = 500;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  // Generator trained per fold on that fold's real minority images.
  int gan_feature_maps = 16;
  int gan_latent_dim = 32;
  int gan_batch_size = 16;
  double gan_lr = 5e-4;
  int gan_epochs = 1500;
  int classifier_epochs = 12;
  std::filesystem::path work_dir;
};

struct ShapesOutcome {
  // Minority recall, averaged over folds, per seed.
  std::vector<double> baseline_recall;
  std::vector<double> balanced_recall;
  double baseline_mean = 0.0;
  double balanced_mean = 0.0;
  double seconds = 0.0;
};

ClassifierSpec shapes_classifier_spec(int image_size);
ShapesOutcome run_shapes_experiment(const ShapesExperiment& e, const Progress& progress = {});

}  // namespace balgan::testing
