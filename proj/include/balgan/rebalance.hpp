#pragma once

// Class rebalancing: seeded random under-sampling of classes above the target
// and generator-synthesized oversampling of classes below it.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "balgan/gan_training.hpp"
#include "balgan/manifest.hpp"

namespace balgan {

struct ClassPlan {
  int available_real = 0;
  int keep_real = 0;
  int drop_real = 0;
  int synthesize = 0;
  int target = 0;

  friend bool operator==(const ClassPlan&, const ClassPlan&) = default;
};

struct RebalancePlan {
  std::map<std::string, ClassPlan> classes;

  int total_synthesize() const;
  int total_drop() const;
};

RebalancePlan compute_plan(const std::map<std::string, int>& counts, int target);
// min(largest class count, cap)
int default_target(const std::map<std::string, int>& counts, int cap = 30000);

// Keeps keep_real records of each class, drawn uniformly without replacement;
// survivors keep their original order. Throws ContractError when the plan
// does not describe the manifest's real records.
DatasetManifest random_under_sample(const DatasetManifest& manifest, const RebalancePlan& plan, std::uint64_t seed);

// Generators to draw from, keyed by class label.
using CheckpointMap = std::map<std::string, Checkpoint>;

// Writes plan.synthesize images per class as 8-bit PNGs named
// synth_<class>_<index>.png into out_dir and appends synthetic records.
// Record paths are relative to the returned manifest's root, which is kept
// from the input. image_size is the working geometry checkpoints must match.
DatasetManifest synth_oversample(const DatasetManifest& manifest, const RebalancePlan& plan,
                                 const CheckpointMap& checkpoints, const std::filesystem::path& out_dir,
                                 std::uint64_t seed, int image_size);

struct AuditCounts {
  int real = 0;
  int synthetic = 0;
  int total() const { return real + synthetic; }

  friend bool operator==(const AuditCounts&, const AuditCounts&) = default;
};

std::map<std::string, AuditCounts> audit(const DatasetManifest& manifest);

std::string format_plan(const RebalancePlan& plan);
std::string format_audit(const std::map<std::string, AuditCounts>& counts);

// File-name-safe form of a class label.
std::string sanitize_label(const std::string& label);

}  // namespace balgan
