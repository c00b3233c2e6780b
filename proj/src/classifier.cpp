#include "balgan/classifier.hpp"

#include <algorithm>
#include <cmath>

#include "balgan/errors.hpp"
#include "balgan/ops.hpp"
#include "balgan/optim.hpp"
#include "balgan/rng.hpp"
#include "balgan/tensor_archive.hpp"

namespace balgan {

namespace {

Tensor he_normal(Shape shape, int fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double stddev = std::sqrt(2.0 / fan_in);
  for (float& v : t.data()) v = static_cast<float>(rng.normal(0.0, stddev));
  return t;
}

Tensor glorot_uniform(Shape shape, int fan_in, int fan_out, Rng& rng) {
  Tensor t(std::move(shape));
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  for (float& v : t.data()) v = static_cast<float>(rng.uniform(-limit, limit));
  return t;
}

struct Builder {
  ParamSet& params;
  Rng& rng;
  bool batch_norm;

  void conv(const std::string& prefix, int out, int in_per_group, int k, bool zero = false) {
    Tensor w = zero ? Tensor(Shape{out, in_per_group, k, k}) : he_normal({out, in_per_group, k, k}, in_per_group * k * k, rng);
    params.add(prefix + ".weight", std::move(w));
    if (!batch_norm) params.add(prefix + ".bias", Tensor(Shape{out}));
  }

  void norm(const std::string& prefix, int channels) {
    if (!batch_norm) return;
    params.add(prefix + ".gamma", Tensor(Shape{channels}, 1.0f));
    params.add(prefix + ".beta", Tensor(Shape{channels}, 0.0f));
    params.add_buffer(prefix + ".running_mean", Tensor(Shape{channels}, 0.0f));
    params.add_buffer(prefix + ".running_var", Tensor(Shape{channels}, 1.0f));
  }
};

std::string unit_prefix(std::size_t block, int unit) {
  return "cls.b" + std::to_string(block) + ".u" + std::to_string(unit);
}

}  // namespace

std::string to_string(BlockKind kind) {
  switch (kind) {
    case BlockKind::plain_conv:
      return "plain_conv";
    case BlockKind::residual:
      return "residual";
    case BlockKind::separable:
      return "separable";
  }
  return "?";
}

BlockKind block_kind_from_string(const std::string& s) {
  if (s == "plain_conv") return BlockKind::plain_conv;
  if (s == "residual") return BlockKind::residual;
  if (s == "separable") return BlockKind::separable;
  throw ConfigError("unknown block kind '" + s + "' (expected plain_conv, residual or separable)");
}

void ClassifierSpec::validate() const {
  if (input_size < 1) throw ConfigError("classifier input_size must be >= 1");
  if (input_channels < 1) throw ConfigError("classifier input_channels must be >= 1");
  if (kernel_size < 1 || kernel_size % 2 == 0) throw ConfigError("classifier kernel_size must be odd and >= 1");
  if (head_units < 1) throw ConfigError("classifier head_units must be >= 1");
  for (const auto& b : blocks) {
    if (b.channels < 1 || b.repeat < 1) throw ConfigError("block channels and repeat must be >= 1");
  }
  if (final_extent() < 1) {
    throw ConfigError("input_size " + std::to_string(input_size) + " cannot be halved " +
                      std::to_string(blocks.size()) + " times");
  }
}

int ClassifierSpec::final_extent() const {
  int extent = input_size;
  for (std::size_t i = 0; i < blocks.size(); ++i) extent /= 2;
  return extent;
}

nlohmann::json to_json(const ClassifierSpec& s) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : s.blocks) blocks.push_back({{"kind", to_string(b.kind)}, {"channels", b.channels}, {"repeat", b.repeat}});
  return {{"input_size", s.input_size},         {"input_channels", s.input_channels},
          {"blocks", blocks},                   {"kernel_size", s.kernel_size},
          {"head_units", s.head_units},         {"batch_norm", s.batch_norm},
          {"zero_init_residual", s.zero_init_residual}};
}

ClassifierSpec classifier_spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("classifier must be an object");
  ClassifierSpec s;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "input_size") {
        s.input_size = value.get<int>();
      } else if (key == "input_channels") {
        s.input_channels = value.get<int>();
      } else if (key == "kernel_size") {
        s.kernel_size = value.get<int>();
      } else if (key == "head_units") {
        s.head_units = value.get<int>();
      } else if (key == "batch_norm") {
        s.batch_norm = value.get<bool>();
      } else if (key == "zero_init_residual") {
        s.zero_init_residual = value.get<bool>();
      } else if (key == "blocks") {
        s.blocks.clear();
        for (const auto& b : value) {
          BlockSpec block;
          for (const auto& [bk, bv] : b.items()) {
            if (bk == "kind") {
              block.kind = block_kind_from_string(bv.get<std::string>());
            } else if (bk == "channels") {
              block.channels = bv.get<int>();
            } else if (bk == "repeat") {
              block.repeat = bv.get<int>();
            } else {
              throw ConfigError("unknown key 'classifier.blocks[]." + bk + "'");
            }
          }
          s.blocks.push_back(block);
        }
      } else {
        throw ConfigError("unknown key 'classifier." + key + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("classifier." + key + ": " + e.what());
    }
  }
  return s;
}

Classifier::Classifier(ClassifierSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  spec_.validate();
  Rng rng(seed);
  Builder b{params_, rng, spec_.batch_norm};
  const int k = spec_.kernel_size;
  int in = spec_.input_channels;
  for (std::size_t i = 0; i < spec_.blocks.size(); ++i) {
    const BlockSpec& block = spec_.blocks[i];
    for (int u = 0; u < block.repeat; ++u) {
      const std::string p = unit_prefix(i, u);
      const int out = block.channels;
      switch (block.kind) {
        case BlockKind::plain_conv:
          b.conv(p + ".conv", out, in, k);
          b.norm(p + ".bn", out);
          break;
        case BlockKind::residual:
          b.norm(p + ".bn1", in);
          b.conv(p + ".conv1", out, in, k);
          b.norm(p + ".bn2", out);
          b.conv(p + ".conv2", out, out, k, spec_.zero_init_residual);
          if (in != out) params_.add(p + ".proj.weight", he_normal({out, in, 1, 1}, in, rng));
          break;
        case BlockKind::separable:
          b.conv(p + ".depthwise", in, 1, k);
          b.norm(p + ".bn1", in);
          b.conv(p + ".pointwise", out, in, 1);
          b.norm(p + ".bn2", out);
          break;
      }
      in = block.channels;
    }
  }
  const int extent = spec_.final_extent();
  const int features = in * extent * extent;
  params_.add("cls.head.fc1.weight", he_normal({features, spec_.head_units}, features, rng));
  params_.add("cls.head.fc1.bias", Tensor(Shape{spec_.head_units}));
  params_.add("cls.head.fc2.weight", glorot_uniform({spec_.head_units, 1}, spec_.head_units, 1, rng));
  params_.add("cls.head.fc2.bias", Tensor(Shape{1}));
}

Var Classifier::norm(const std::string& prefix, const Var& x, bool training) {
  if (!spec_.batch_norm) return x;
  BatchNormOptions opt;
  // Frozen norm layers keep their statistics as well as their affine terms.
  opt.training = training && params_.trainable(prefix + ".gamma") && x.value().dim(0) >= 2;
  return batch_norm(x, params_.var(prefix + ".gamma"), params_.var(prefix + ".beta"),
                    &params_.value(prefix + ".running_mean"), &params_.value(prefix + ".running_var"), opt);
}

Var Classifier::conv(const std::string& prefix, const Var& x, int stride, int padding, int groups) {
  Var y = conv2d(x, params_.var(prefix + ".weight"), stride, padding, groups);
  if (!spec_.batch_norm) y = add_bias(y, params_.var(prefix + ".bias"));
  return y;
}

Var Classifier::unit(const BlockSpec& block, const std::string& p, const Var& x, int in, bool training) {
  const int pad = spec_.kernel_size / 2;
  switch (block.kind) {
    case BlockKind::plain_conv:
      return relu(norm(p + ".bn", conv(p + ".conv", x, 1, pad), training));
    case BlockKind::residual: {
      Var f = conv(p + ".conv1", relu(norm(p + ".bn1", x, training)), 1, pad);
      f = conv(p + ".conv2", relu(norm(p + ".bn2", f, training)), 1, pad);
      const Var shortcut = in == block.channels ? x : conv2d(x, params_.var(p + ".proj.weight"), 1, 0);
      return add(f, shortcut);
    }
    case BlockKind::separable: {
      Var h = norm(p + ".bn1", conv(p + ".depthwise", x, 1, pad, in), training);
      return relu(norm(p + ".bn2", conv(p + ".pointwise", h, 1, 0), training));
    }
  }
  throw ContractError("unknown block kind");
}

Var Classifier::features(const Var& images, bool training) {
  const Tensor& v = images.value();
  if (v.rank() != 4 || v.dim(1) != spec_.input_channels || v.dim(2) != spec_.input_size ||
      v.dim(3) != spec_.input_size) {
    throw ShapeError("classifier expects N x " + std::to_string(spec_.input_channels) + " x " +
                     std::to_string(spec_.input_size) + " x " + std::to_string(spec_.input_size) + " images, got " +
                     shape_to_string(v.shape()));
  }
  Var h = images;
  int in = spec_.input_channels;
  for (std::size_t i = 0; i < spec_.blocks.size(); ++i) {
    const BlockSpec& block = spec_.blocks[i];
    for (int u = 0; u < block.repeat; ++u) {
      h = unit(block, unit_prefix(i, u), h, in, training);
      in = block.channels;
    }
    h = avg_pool2(h);
  }
  return h;
}

Var Classifier::logits(const Var& images, bool training) {
  const int batch = images.value().rank() > 0 ? images.value().dim(0) : 0;
  Var h = features(images, training);
  const int channels = spec_.blocks.empty() ? spec_.input_channels : spec_.blocks.back().channels;
  h = reshape(h, {batch, channels * spec_.final_extent() * spec_.final_extent()});
  h = relu(dense(h, params_.var("cls.head.fc1.weight"), params_.var("cls.head.fc1.bias")));
  h = dense(h, params_.var("cls.head.fc2.weight"), params_.var("cls.head.fc2.bias"));
  return reshape(h, {batch});
}

Tensor Classifier::predict(const Tensor& images) {
  NoGradGuard no_grad;
  const int n = images.rank() > 0 ? images.dim(0) : 0;
  Tensor out(Shape{n});
  constexpr int kChunk = 256;
  for (int begin = 0; begin < n; begin += kChunk) {
    const int end = std::min(n, begin + kChunk);
    const Var p = sigmoid(logits(Var::constant(images.slice_rows(begin, end)), false));
    std::copy(p.value().data().begin(), p.value().data().end(), out.ptr() + begin);
  }
  return out;
}

std::vector<std::string> apply_freeze(ParamSet& params, const FreezeSpec& freeze) {
  std::vector<std::string> matched;
  for (const auto& name : params.names()) {
    if (params.is_buffer(name)) continue;
    for (const auto& prefix : freeze.frozen_prefixes) {
      if (name.compare(0, prefix.size(), prefix) == 0) {
        params.set_trainable(name, false);
        matched.push_back(name);
        break;
      }
    }
  }
  return matched;
}

void ClassifierTraining::validate() const {
  if (!(lr >= 0.0)) throw ConfigError("classifier learning rate must be non-negative");
  if (epochs < 1) throw ConfigError("classifier epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("classifier batch_size must be >= 1");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("decision threshold must lie in (0, 1)");
}

nlohmann::json to_json(const ClassifierTraining& h) {
  return {{"lr", h.lr},         {"beta1", h.beta1},           {"beta2", h.beta2}, {"eps", h.eps},
          {"epochs", h.epochs}, {"batch_size", h.batch_size}, {"seed", h.seed},   {"threshold", h.threshold}};
}

ClassifierTraining classifier_training_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("classifier_training must be an object");
  ClassifierTraining h;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "lr") {
        h.lr = value.get<double>();
      } else if (key == "beta1") {
        h.beta1 = value.get<double>();
      } else if (key == "beta2") {
        h.beta2 = value.get<double>();
      } else if (key == "eps") {
        h.eps = value.get<double>();
      } else if (key == "epochs") {
        h.epochs = value.get<int>();
      } else if (key == "batch_size") {
        h.batch_size = value.get<int>();
      } else if (key == "seed") {
        h.seed = value.get<std::uint64_t>();
      } else if (key == "threshold") {
        h.threshold = value.get<double>();
      } else {
        throw ConfigError("unknown key 'classifier_training." + key + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("classifier_training." + key + ": " + e.what());
    }
  }
  return h;
}

LossAccuracy loss_and_accuracy(Classifier& model, const ImageSet& set, double threshold) {
  if (set.size() == 0) throw ContractError("cannot score an empty image set");
  const Tensor p = model.predict(set.images);
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const double q = std::clamp(static_cast<double>(p[i]), 1e-7, 1.0 - 1e-7);
    loss -= set.labels[i] == 1 ? std::log(q) : std::log(1.0 - q);
    correct += (p[i] >= threshold) == (set.labels[i] == 1);
  }
  return {loss / static_cast<double>(set.size()), static_cast<double>(correct) / static_cast<double>(set.size())};
}

TrainedClassifier train_classifier(const ImageSet& train, const ClassifierSpec& spec, const FreezeSpec& freeze,
                                   const ClassifierTraining& hyper, const ImageSet* validation,
                                   const ParamSet* initial) {
  hyper.validate();
  if (spec.input_size != train.image_size()) {
    throw ShapeError("classifier input_size " + std::to_string(spec.input_size) + " differs from image size " +
                     std::to_string(train.image_size()));
  }
  const bool has_neg = std::count(train.labels.begin(), train.labels.end(), 0) > 0;
  const bool has_pos = std::count(train.labels.begin(), train.labels.end(), 1) > 0;
  if (!has_neg || !has_pos) throw ContractError("classifier training set must contain both classes");
  for (int l : train.labels) {
    if (l != 0 && l != 1) throw ContractError("classifier labels must be 0 or 1");
  }

  TrainedClassifier result{Classifier(spec, mix_seed(hyper.seed, 11)), {}};
  Classifier& model = result.model;
  if (initial) model.params().load_values(*initial);
  apply_freeze(model.params(), freeze);
  Adam adam(AdamConfig{hyper.lr, hyper.beta1, hyper.beta2, hyper.eps});

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    BatchStream batches = make_batches(train, hyper.batch_size, mix_seed(hyper.seed, 12), epoch,
                                       Normalization::classifier);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    while (auto batch = batches.next()) {
      const Var logit = model.logits(Var::constant(batch->images), true);
      const Var loss = bce_with_logits(logit, batch->labels);
      const double value = loss.value().item();
      if (!std::isfinite(value)) throw NumericError("non-finite classifier loss in epoch " + std::to_string(epoch));
      const std::size_t n = batch->indices.size();
      loss_sum += value * static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) {
        const bool predicted = 1.0 / (1.0 + std::exp(-static_cast<double>(logit.value()[i]))) >= hyper.threshold;
        correct += predicted == (batch->labels[i] == 1.0f);
      }
      model.params().zero_grad();
      backward(loss, model.params());
      adam.step(model.params());
    }
    EpochCurve curve;
    curve.epoch = epoch + 1;
    curve.train_loss = loss_sum / static_cast<double>(train.size());
    curve.train_acc = static_cast<double>(correct) / static_cast<double>(train.size());
    if (validation && validation->size() > 0) {
      const LossAccuracy v = loss_and_accuracy(model, *validation, hyper.threshold);
      curve.val_loss = v.loss;
      curve.val_acc = v.accuracy;
    }
    result.curves.push_back(curve);
  }
  return result;
}

MetricsReport evaluate(Classifier& model, const ImageSet& set, double threshold) {
  if (set.size() == 0) throw ContractError("cannot evaluate on an empty image set");
  const Tensor p = model.predict(set.images);
  return compute_metrics(p.data(), set.labels, threshold);
}

void save_classifier(const std::filesystem::path& path, const Classifier& model, const std::string& positive_class,
                     const std::string& negative_class) {
  TensorArchive a;
  a.meta = {{"kind", "classifier"},
            {"spec", to_json(model.spec())},
            {"positive_class", positive_class},
            {"negative_class", negative_class}};
  for (const auto& [name, e] : model.params().entries()) a.tensors.emplace(name, e.var.value());
  write_archive(path, a);
}

ClassifierFile load_classifier_file(const std::filesystem::path& path) {
  const TensorArchive a = read_archive(path);
  try {
    if (a.meta.value("kind", "") != "classifier") throw CheckpointError(path.string() + " is not a classifier model");
    ClassifierFile f;
    f.spec = classifier_spec_from_json(a.meta.at("spec"));
    f.positive_class = a.meta.at("positive_class").get<std::string>();
    f.negative_class = a.meta.at("negative_class").get<std::string>();
    f.values = a.tensors;
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("malformed classifier metadata in " + path.string() + ": " + e.what());
  }
}

Classifier classifier_from_file(const ClassifierFile& file) {
  Classifier model(file.spec, 0);
  for (const auto& [name, e] : model.params().entries()) {
    auto it = file.values.find(name);
    if (it == file.values.end() || it->second.shape() != e.var.value().shape()) {
      throw CheckpointError("classifier model file does not match its spec at '" + name + "'");
    }
  }
  if (file.values.size() != model.params().entries().size()) {
    throw CheckpointError("classifier model file has unexpected tensors");
  }
  for (const auto& [name, t] : file.values) model.params().value(name) = t;
  return model;
}

}  // namespace balgan
