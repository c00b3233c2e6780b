#pragma once

// Adversarial training loop: alternating critic / generator updates,
// loss logging, checkpoints and sampling.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "balgan/dataset_io.hpp"
#include "balgan/gan_models.hpp"
#include "balgan/losses.hpp"
#include "balgan/optim.hpp"
#include "balgan/tensor_archive.hpp"
#include "json.hpp"

namespace balgan {

// per_round: after every n_critic critic updates, one generator update.
// per_epoch: the critic updates on every batch; the generator updates on
// every batch of each n_critic-th epoch only.
enum class Schedule { per_round, per_epoch };
enum class CriticOptimizerKind { rmsprop, adam };
enum class BceGeneratorLoss { nonsaturating, minimax };

struct TrainConfig {
  LossMode loss_mode = LossMode::wgan_gp;
  int n_critic = 5;
  Schedule schedule = Schedule::per_round;
  AdamConfig generator_optimizer{};
  CriticOptimizerKind critic_optimizer = CriticOptimizerKind::rmsprop;
  RMSPropConfig critic_rmsprop{};
  AdamConfig critic_adam{};
  double lambda = 10.0;
  BceGeneratorLoss bce_generator_loss = BceGeneratorLoss::nonsaturating;
  int batch_size = 64;
  int epochs = 50;
  std::uint64_t seed = 0;
  // 0: only the final checkpoint.
  int checkpoint_every = 0;
  // When false the log's wallclock column is written as 0.
  bool log_wallclock = true;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct TrainLogRecord {
  std::int64_t step = 0;
  int epoch = 0;
  double critic_loss = 0.0;
  double generator_loss = 0.0;
  double penalty = 0.0;
  std::int64_t wallclock_ms = 0;
};

inline constexpr const char* kTrainLogHeader = "step,epoch,critic_loss,generator_loss,penalty,wallclock_ms";
std::string format_train_log(const std::vector<TrainLogRecord>& records);
void write_train_log(const std::filesystem::path& path, const std::vector<TrainLogRecord>& records);

struct CriticStepResult {
  double loss = 0.0;     // total objective, penalty included
  double penalty = 0.0;  // 0 in bce mode
};

struct TrainCounters {
  std::int64_t critic_steps = 0;
  std::int64_t generator_steps = 0;
  // Critic steps since the last generator step (per_round schedule).
  int pending_critic = 0;
  int epochs_completed = 0;
  // Sums over the current log round.
  double round_critic_loss = 0.0;
  double round_penalty = 0.0;
  int round_critic_count = 0;

  friend bool operator==(const TrainCounters&, const TrainCounters&) = default;
};

struct Checkpoint {
  GanSpec spec;
  TrainConfig config;
  std::string class_label;
  std::map<std::string, Tensor> generator;
  std::map<std::string, Tensor> critic;
  OptimizerState generator_optimizer;
  OptimizerState critic_optimizer;
  std::string rng_state;
  TrainCounters counters;
};

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
TensorArchive checkpoint_to_archive(const Checkpoint& checkpoint);
Checkpoint checkpoint_from_archive(const TensorArchive& archive);

// Produces the real batches of one epoch, normalized to [-1, 1].
using EpochSource = std::function<BatchStream(int epoch)>;
// Shuffled batches of an in-memory [0,1] image set, seeded by cfg.seed.
EpochSource epoch_source(const ImageSet& images, const TrainConfig& cfg);

class GanTrainer {
 public:
  GanTrainer(GanSpec spec, TrainConfig cfg);
  explicit GanTrainer(const Checkpoint& checkpoint);

  // One critic update on a real batch in [-1, 1].
  CriticStepResult critic_step(const Tensor& real_batch);
  // One generator update on a fresh latent batch of cfg.batch_size.
  double generator_step();

  using CheckpointHook = std::function<void(const Checkpoint&)>;
  // Trains epochs [epochs_completed, until_epoch). Calls `on_checkpoint`
  // every checkpoint_every epochs and after the last one. Throws
  // NumericError on a non-finite loss; the log keeps every record so far.
  void train(const EpochSource& source, int until_epoch, const CheckpointHook& on_checkpoint = {});
  void train(const EpochSource& source, const CheckpointHook& on_checkpoint = {}) {
    train(source, config_.epochs, on_checkpoint);
  }

  Checkpoint checkpoint() const;

  Generator& generator() { return generator_; }
  Critic& critic() { return critic_; }
  const GanSpec& spec() const { return generator_.spec(); }
  const TrainConfig& config() const { return config_; }
  const TrainCounters& counters() const { return counters_; }
  const std::vector<TrainLogRecord>& log() const { return log_; }
  std::string class_label;

 private:
  Tensor fake_batch(int count, ForwardMode mode);
  void critic_optimizer_step();
  void append_log(int epoch, double critic_loss, double generator_loss, double penalty);

  TrainConfig config_;
  Generator generator_;
  Critic critic_;
  Adam generator_opt_;
  RMSProp critic_rmsprop_;
  Adam critic_adam_;
  Rng rng_;
  TrainCounters counters_;
  std::vector<TrainLogRecord> log_;
  std::chrono::steady_clock::time_point started_;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<TrainLogRecord> log;
};

TrainResult train_gan(const ImageSet& images, const GanSpec& spec, const TrainConfig& cfg);

// count x C x S x S samples in [-1, 1] from the checkpoint's generator
// (running batch statistics). Deterministic in seed.
Tensor generate_samples(const Checkpoint& checkpoint, int count, std::uint64_t seed);

}  // namespace balgan
