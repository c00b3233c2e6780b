#pragma once

// Compact binary CNN classifier built from three block motifs: uniform
// convolution stacks, residual units with a shortcut, and depthwise-separable
// convolutions. Supports freezing parameters by name prefix for fine-tuning.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "balgan/dataset_io.hpp"
#include "balgan/autograd.hpp"
#include "balgan/metrics.hpp"
#include "json.hpp"

namespace balgan {

enum class BlockKind { plain_conv, residual, separable };

std::string to_string(BlockKind kind);
BlockKind block_kind_from_string(const std::string& s);

// `repeat` units with `channels` outputs each, followed by 2x2 average pooling.
struct BlockSpec {
  BlockKind kind = BlockKind::plain_conv;
  int channels = 8;
  int repeat = 1;

  friend bool operator==(const BlockSpec&, const BlockSpec&) = default;
};

struct ClassifierSpec {
  int input_size = 64;
  int input_channels = 1;
  std::vector<BlockSpec> blocks = {{BlockKind::plain_conv, 8, 1},
                                   {BlockKind::residual, 16, 1},
                                   {BlockKind::separable, 32, 1}};
  int kernel_size = 3;
  int head_units = 32;
  bool batch_norm = true;
  // Zero-initialize the last convolution of each residual branch so every
  // residual unit starts as its shortcut.
  bool zero_init_residual = false;

  void validate() const;
  // Spatial extent entering the head.
  int final_extent() const;

  friend bool operator==(const ClassifierSpec&, const ClassifierSpec&) = default;
};

nlohmann::json to_json(const ClassifierSpec& spec);
ClassifierSpec classifier_spec_from_json(const nlohmann::json& j);

// Parameter names:
//   cls.b<i>.u<j>.conv / .bn                         plain unit: conv, norm, relu
//   cls.b<i>.u<j>.bn1 .conv1 .bn2 .conv2 [.proj]      residual unit, pre-activation:
//                                                    y = conv2(relu(bn2(conv1(relu(bn1(x)))))) + W_s x
//   cls.b<i>.u<j>.depthwise .bn1 .pointwise .bn2      separable unit, relu after bn2
//   cls.head.fc1, cls.head.fc2                        dense -> relu -> dense -> sigmoid
// Without batch_norm every conv carries a bias instead.
class Classifier {
 public:
  Classifier(ClassifierSpec spec, std::uint64_t seed);

  // Logits (N). `training` uses batch statistics in every norm layer whose
  // scale and shift are trainable; frozen norm layers always run on their
  // running statistics.
  Var logits(const Var& images, bool training);
  // Output of the last block (N x C x e x e), before the head.
  Var features(const Var& images, bool training);
  // Probabilities (N) for [0,1] images, inference mode, no graph.
  Tensor predict(const Tensor& images);

  const ClassifierSpec& spec() const { return spec_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

 private:
  Var norm(const std::string& prefix, const Var& x, bool training);
  Var conv(const std::string& prefix, const Var& x, int stride, int padding, int groups = 1);
  Var unit(const BlockSpec& block, const std::string& prefix, const Var& x, int in_channels, bool training);

  ClassifierSpec spec_;
  ParamSet params_;
};

struct FreezeSpec {
  std::vector<std::string> frozen_prefixes;
};

// Marks every parameter whose name starts with one of the prefixes as
// non-trainable and returns the matched names (possibly none).
std::vector<std::string> apply_freeze(ParamSet& params, const FreezeSpec& freeze);

struct ClassifierTraining {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int epochs = 20;
  int batch_size = 32;
  std::uint64_t seed = 0;
  double threshold = 0.5;

  void validate() const;
};

nlohmann::json to_json(const ClassifierTraining& hyper);
ClassifierTraining classifier_training_from_json(const nlohmann::json& j);

struct TrainedClassifier {
  Classifier model;
  std::vector<EpochCurve> curves;
};

// Minimizes binary cross entropy with Adam. `initial` optionally supplies
// starting values (transfer learning); `validation` feeds the val_* curve
// columns. Throws ContractError if the training set lacks a class.
TrainedClassifier train_classifier(const ImageSet& train, const ClassifierSpec& spec, const FreezeSpec& freeze,
                                   const ClassifierTraining& hyper, const ImageSet* validation = nullptr,
                                   const ParamSet* initial = nullptr);

// Mean BCE and accuracy of `model` on `set` in inference mode.
struct LossAccuracy {
  double loss = 0.0;
  double accuracy = 0.0;
};
LossAccuracy loss_and_accuracy(Classifier& model, const ImageSet& set, double threshold = 0.5);

MetricsReport evaluate(Classifier& model, const ImageSet& set, double threshold = 0.5);

// Model file: tensor archive with the spec and class names in its metadata.
struct ClassifierFile {
  ClassifierSpec spec;
  std::string positive_class;
  std::string negative_class;
  std::map<std::string, Tensor> values;
};
void save_classifier(const std::filesystem::path& path, const Classifier& model, const std::string& positive_class,
                     const std::string& negative_class);
ClassifierFile load_classifier_file(const std::filesystem::path& path);
Classifier classifier_from_file(const ClassifierFile& file);

}  // namespace balgan
