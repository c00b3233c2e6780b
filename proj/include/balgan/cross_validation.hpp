#pragma once

// Stratified k-fold splitting and the per-fold train / evaluate protocol.

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "balgan/classifier.hpp"
#include "balgan/manifest.hpp"

namespace balgan {

struct Fold {
  DatasetManifest train;
  DatasetManifest test;
};

// k disjoint test folds covering the manifest; fold i trains on the rest.
// Records keep manifest order inside each split. Stratified splitting deals
// every class out round-robin so each fold holds floor or ceil of
// count/k of it. Throws ContractError when a class has fewer than k records.
std::vector<Fold> k_fold_split(const DatasetManifest& manifest, int k, std::uint64_t seed, bool stratified = true);

struct CrossValidationOptions {
  int k = 5;
  std::uint64_t seed = 0;
  bool stratified = true;
  // Synthetic records never enter a test fold; they are added to every
  // training fold instead.
  bool real_only_eval = true;
  std::string positive_class;
  FreezeSpec freeze;
  // Optional per-fold training-set transform (e.g. rebalancing). Receives the
  // fold's training manifest and fold index; may add synthetic records.
  std::function<DatasetManifest(const DatasetManifest& train, int fold)> train_transform;
  // Per-fold progress callback.
  std::function<void(int fold, const MetricsReport&)> on_fold;
};

struct FoldResult {
  int fold = 0;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  MetricsReport report;
};

struct SummaryStat {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 with fewer than two values
  double min = 0.0;
  double max = 0.0;
  int defined = 0;   // folds where the metric was defined
};

struct CrossValidationResult {
  std::vector<FoldResult> folds;
  std::map<std::string, SummaryStat> summary;  // accuracy, precision, recall, f1, auc
};

// Labels: positive_class -> 1, every other class -> 0. Fold f trains a fresh
// model seeded with hyper.seed + f.
CrossValidationResult cross_validate(const DatasetManifest& manifest, const ClassifierSpec& spec,
                                     const ClassifierTraining& hyper, const CrossValidationOptions& options);

SummaryStat summarize(const std::vector<double>& values);
std::map<std::string, SummaryStat> summarize_folds(const std::vector<FoldResult>& folds);

inline constexpr const char* kMetricsHeader = "fold,accuracy,precision,recall,f1,auc";
inline constexpr const char* kCurvesHeader = "fold,epoch,train_loss,train_acc,val_loss,val_acc";
// Undefined metrics are written as empty fields.
std::string format_metrics_csv(const std::vector<FoldResult>& folds);
std::string format_curves_csv(const std::vector<FoldResult>& folds);
std::string format_summary(const CrossValidationResult& result);

// The class with fewer real records (ties: the later name).
std::string default_positive_class(const DatasetManifest& manifest);

// Loads a two-class manifest with positive_class -> 1 and the other -> 0.
ImageSet load_binary_set(const DatasetManifest& manifest, int image_size, const std::string& positive_class);

}  // namespace balgan
