#pragma once

// Pipeline configuration file (JSON). Every section is optional; unknown
// keys anywhere are rejected.
//
//   {
//     "gan":                 GanSpec fields,
//     "gan_training":        TrainConfig fields,
//     "classifier":          ClassifierSpec fields,
//     "classifier_training": ClassifierTraining fields,
//     "rebalance":           {"target": 0 (= min(largest class, cap)), "cap": 30000, "seed": 0},
//     "cross_validation":    {"k": 5, "seed": 0, "stratified": true, "real_only_eval": true,
//                             "per_fold_target": 0},
//     "freeze_prefixes":     []   parameter-name prefixes kept fixed during classifier training
//   }

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "balgan/classifier.hpp"
#include "balgan/gan_training.hpp"
#include "json.hpp"

namespace balgan {

struct RebalanceConfig {
  int target = 0;
  int cap = 30000;
  std::uint64_t seed = 0;
};

struct CrossValidationConfig {
  int k = 5;
  std::uint64_t seed = 0;
  bool stratified = true;
  bool real_only_eval = true;
  // Per-fold rebalancing target when a generator checkpoint is supplied;
  // 0 = the fold's largest class count.
  int per_fold_target = 0;
};

struct RunConfig {
  GanSpec gan;
  TrainConfig gan_training;
  ClassifierSpec classifier;
  ClassifierTraining classifier_training;
  RebalanceConfig rebalance;
  CrossValidationConfig cross_validation;
  std::vector<std::string> freeze_prefixes;

  void validate() const;
  // Sets every seed in the configuration.
  void set_seed(std::uint64_t seed);
};

nlohmann::json to_json(const RunConfig& config);
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
// Pretty-printed JSON with every default filled in.
std::string resolved_config_text(const RunConfig& config);
void write_resolved_config(const RunConfig& config, const std::filesystem::path& out_dir);

}  // namespace balgan
