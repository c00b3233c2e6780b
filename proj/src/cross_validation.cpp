#include "balgan/cross_validation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "balgan/errors.hpp"
#include "balgan/rng.hpp"

namespace balgan {

namespace {

DatasetManifest pick(const DatasetManifest& m, const std::vector<std::size_t>& indices) {
  DatasetManifest out;
  out.root = m.root;
  for (std::size_t i : indices) out.records.push_back(m.records[i]);
  return out;
}

std::string fmt(double v, const char* format = "%.6f") {
  char buf[48];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

std::string field(const Metric& m) { return m.defined() ? fmt(*m.value, "%.9g") : std::string(); }

}  // namespace

std::vector<Fold> k_fold_split(const DatasetManifest& manifest, int k, std::uint64_t seed, bool stratified) {
  if (k < 2) throw ConfigError("k must be >= 2");
  std::map<std::string, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) by_class[manifest.records[i].label].push_back(i);
  for (const auto& [label, idx] : by_class) {
    if (static_cast<int>(idx.size()) < k) {
      throw ContractError("class '" + label + "' has " + std::to_string(idx.size()) + " records, fewer than k = " +
                          std::to_string(k));
    }
  }
  if (manifest.empty()) throw ContractError("cannot split an empty manifest");

  std::vector<std::size_t> deal;
  Rng rng(mix_seed(seed, 0xf01d));
  auto shuffle = [&rng](std::vector<std::size_t>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
  };
  if (stratified) {
    for (auto& [label, idx] : by_class) {
      shuffle(idx);
      deal.insert(deal.end(), idx.begin(), idx.end());
    }
  } else {
    deal.resize(manifest.size());
    for (std::size_t i = 0; i < deal.size(); ++i) deal[i] = i;
    shuffle(deal);
  }
  std::vector<int> fold_of(manifest.size());
  for (std::size_t p = 0; p < deal.size(); ++p) fold_of[deal[p]] = static_cast<int>(p % static_cast<std::size_t>(k));

  std::vector<Fold> folds(static_cast<std::size_t>(k));
  for (int f = 0; f < k; ++f) {
    std::vector<std::size_t> train, test;
    for (std::size_t i = 0; i < manifest.size(); ++i) (fold_of[i] == f ? test : train).push_back(i);
    folds[static_cast<std::size_t>(f)] = {pick(manifest, train), pick(manifest, test)};
  }
  return folds;
}

std::string default_positive_class(const DatasetManifest& manifest) {
  const auto counts = manifest.real_counts();
  if (counts.empty()) throw DataError("manifest has no real records");
  std::string best;
  int best_count = 0;
  for (const auto& [label, count] : counts) {
    if (best.empty() || count <= best_count) {
      best = label;
      best_count = count;
    }
  }
  return best;
}

ImageSet load_binary_set(const DatasetManifest& manifest, int image_size, const std::string& positive_class) {
  const auto names = manifest.class_names();
  if (names.size() != 2) {
    throw DataError("binary classification needs exactly two classes, manifest has " + std::to_string(names.size()));
  }
  if (std::find(names.begin(), names.end(), positive_class) == names.end()) {
    throw DataError("positive class '" + positive_class + "' not in manifest (classes: " + names[0] + ", " +
                    names[1] + ")");
  }
  std::map<std::string, int> index;
  for (const auto& n : names) index[n] = n == positive_class ? 1 : 0;
  return load_image_set(manifest, image_size, index);
}

SummaryStat summarize(const std::vector<double>& values) {
  SummaryStat s;
  s.defined = static_cast<int>(values.size());
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  s.min = *std::min_element(values.begin(), values.end());
  s.max = *std::max_element(values.begin(), values.end());
  return s;
}

std::map<std::string, SummaryStat> summarize_folds(const std::vector<FoldResult>& folds) {
  std::map<std::string, std::vector<double>> values;
  for (const auto& f : folds) {
    values["accuracy"].push_back(f.report.accuracy);
    for (const auto& [name, m] : {std::pair<const char*, const Metric*>{"precision", &f.report.precision},
                                  {"recall", &f.report.recall},
                                  {"f1", &f.report.f1},
                                  {"auc", &f.report.auc}}) {
      auto& v = values[name];
      if (m->defined()) v.push_back(*m->value);
    }
  }
  std::map<std::string, SummaryStat> out;
  for (const auto& [name, v] : values) out[name] = summarize(v);
  return out;
}

CrossValidationResult cross_validate(const DatasetManifest& manifest, const ClassifierSpec& spec,
                                     const ClassifierTraining& hyper, const CrossValidationOptions& options) {
  hyper.validate();
  spec.validate();
  const std::string positive =
      options.positive_class.empty() ? default_positive_class(manifest) : options.positive_class;
  const DatasetManifest real = options.real_only_eval ? manifest.filter(Origin::real) : manifest;
  const DatasetManifest synthetic = options.real_only_eval ? manifest.filter(Origin::synthetic) : DatasetManifest{};

  // Decode every image once; per-fold transforms may add more.
  const ImageSet all = load_binary_set(manifest, spec.input_size, positive);
  std::map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < manifest.size(); ++i) position[manifest.resolve(manifest.records[i]).string()] = i;
  const auto names = manifest.class_names();
  std::map<std::string, int> label_index;
  for (const auto& n : names) label_index[n] = n == positive ? 1 : 0;

  auto materialize = [&](const DatasetManifest& m) {
    std::vector<std::size_t> known;
    DatasetManifest extra;
    extra.root = m.root;
    for (const auto& r : m.records) {
      auto it = position.find(m.resolve(r).string());
      if (it != position.end()) {
        known.push_back(it->second);
      } else {
        extra.records.push_back(r);
      }
    }
    ImageSet set = all.subset(known);
    if (!extra.empty()) set = concat(set, load_image_set(extra, spec.input_size, label_index));
    return set;
  };

  const auto folds = k_fold_split(real, options.k, options.seed, options.stratified);
  CrossValidationResult result;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    const int fold = static_cast<int>(f);
    try {
      DatasetManifest train = folds[f].train;
      train.records.insert(train.records.end(), synthetic.records.begin(), synthetic.records.end());
      if (options.train_transform) train = options.train_transform(train, fold);
      const ImageSet train_set = materialize(train);
      const ImageSet test_set = materialize(folds[f].test);
      ClassifierTraining fold_hyper = hyper;
      fold_hyper.seed = hyper.seed + static_cast<std::uint64_t>(f);
      TrainedClassifier trained = train_classifier(train_set, spec, options.freeze, fold_hyper, &test_set);
      FoldResult fr;
      fr.fold = fold;
      fr.train_size = train_set.size();
      fr.test_size = test_set.size();
      fr.report = evaluate(trained.model, test_set, hyper.threshold);
      fr.report.curves = std::move(trained.curves);
      if (options.on_fold) options.on_fold(fold, fr.report);
      result.folds.push_back(std::move(fr));
    } catch (const DataError& e) {
      throw DataError("fold " + std::to_string(fold) + ": " + e.what());
    } catch (const NumericError& e) {
      throw NumericError("fold " + std::to_string(fold) + ": " + e.what());
    } catch (const ContractError& e) {
      throw ContractError("fold " + std::to_string(fold) + ": " + e.what());
    }
  }
  result.summary = summarize_folds(result.folds);
  return result;
}

std::string format_metrics_csv(const std::vector<FoldResult>& folds) {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const auto& f : folds) {
    out += std::to_string(f.fold) + "," + fmt(f.report.accuracy, "%.9g") + "," + field(f.report.precision) + "," +
           field(f.report.recall) + "," + field(f.report.f1) + "," + field(f.report.auc) + "\n";
  }
  return out;
}

std::string format_curves_csv(const std::vector<FoldResult>& folds) {
  std::string out = std::string(kCurvesHeader) + "\n";
  for (const auto& f : folds) {
    for (const auto& c : f.report.curves) {
      out += std::to_string(f.fold) + "," + std::to_string(c.epoch) + "," + fmt(c.train_loss, "%.9g") + "," +
             fmt(c.train_acc, "%.9g") + "," + (c.val_loss ? fmt(*c.val_loss, "%.9g") : "") + "," +
             (c.val_acc ? fmt(*c.val_acc, "%.9g") : "") + "\n";
    }
  }
  return out;
}

std::string format_summary(const CrossValidationResult& result) {
  std::ostringstream os;
  const int k = static_cast<int>(result.folds.size());
  os << "cross-validation over " << k << " folds (mean +/- std)\n";
  for (const char* name : {"accuracy", "precision", "recall", "f1", "auc"}) {
    auto it = result.summary.find(name);
    os << "  " << name << std::string(10 - std::string(name).size(), ' ');
    if (it == result.summary.end() || it->second.defined == 0) {
      os << "undefined in every fold\n";
      continue;
    }
    os << fmt(it->second.mean, "%.4f") << " +/- " << fmt(it->second.std, "%.4f");
    if (it->second.defined < k) os << "  (defined in " << it->second.defined << " of " << k << " folds)";
    os << '\n';
  }
  for (const auto& f : result.folds) {
    for (const auto& [name, m] : {std::pair<const char*, const Metric*>{"precision", &f.report.precision},
                                  {"recall", &f.report.recall},
                                  {"f1", &f.report.f1},
                                  {"auc", &f.report.auc}}) {
      if (!m->defined()) os << "  fold " << f.fold << ": " << name << " undefined (" << m->reason << ")\n";
    }
  }
  return os.str();
}

}  // namespace balgan
