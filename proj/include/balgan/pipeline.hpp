#pragma once

// Pipeline stages behind the command-line tool. Each command returns its
// process exit code: 0 success, 2 configuration error, 3 data error,
// 4 numeric abort during training.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace balgan {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

// Runs `body`, reporting any exception on `err` and translating it into an
// exit code.
int run_guarded(const std::function<int()>& body, std::ostream& err);

struct TrainGanOptions {
  std::filesystem::path config;  // empty: defaults
  std::filesystem::path data_manifest;
  std::string class_label;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
  // Checkpoint to continue from. Its spec and training config win; a given
  // --config only sets the epoch count to train until.
  std::filesystem::path resume;
};

struct GenerateOptions {
  std::filesystem::path checkpoint;
  int count = 0;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;
};

struct RebalanceOptions {
  std::filesystem::path config;
  std::filesystem::path manifest;
  // "path" (class taken from the checkpoint) or "label=path".
  std::vector<std::string> checkpoints;
  std::optional<int> target;
  std::filesystem::path out_dir;
  std::optional<std::uint64_t> seed;
};

struct TrainClassifierOptions {
  std::filesystem::path config;
  std::filesystem::path manifest;
  std::filesystem::path validation_manifest;
  std::filesystem::path init_model;  // starting weights for fine-tuning
  std::string positive_class;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
};

struct EvaluateOptions {
  std::filesystem::path model;
  std::filesystem::path manifest;
  std::filesystem::path out;
  double threshold = 0.5;
  bool include_synthetic = false;
};

struct ReportOptions {
  std::filesystem::path config;
  std::filesystem::path manifest;
  std::filesystem::path out;
  std::string positive_class;
  std::optional<int> folds;
  std::optional<std::uint64_t> seed;
  // When given, each training fold is rebalanced with these generators.
  std::vector<std::string> gan_checkpoints;
  std::optional<int> target;
};

int cmd_train_gan(const TrainGanOptions& options, std::ostream& out, std::ostream& err);
int cmd_generate(const GenerateOptions& options, std::ostream& out, std::ostream& err);
int cmd_rebalance(const RebalanceOptions& options, std::ostream& out, std::ostream& err);
int cmd_train_classifier(const TrainClassifierOptions& options, std::ostream& out, std::ostream& err);
int cmd_evaluate(const EvaluateOptions& options, std::ostream& out, std::ostream& err);
int cmd_report(const ReportOptions& options, std::ostream& out, std::ostream& err);

}  // namespace balgan
