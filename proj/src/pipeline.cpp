#include "balgan/pipeline.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

#include "balgan/cross_validation.hpp"
#include "balgan/errors.hpp"
#include "balgan/image_codec.hpp"
#include "balgan/rebalance.hpp"
#include "balgan/run_config.hpp"

namespace balgan {

namespace fs = std::filesystem;

namespace {

constexpr const char* kCheckpointName = "checkpoint.ckpt";
constexpr const char* kModelName = "model.clf";

RunConfig config_or_default(const fs::path& path) {
  RunConfig c = path.empty() ? RunConfig{} : load_run_config(path);
  c.validate();
  return c;
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("failed writing " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : ", ") + s;
  return out;
}

DatasetManifest class_records(const DatasetManifest& manifest, const std::string& label) {
  DatasetManifest out;
  out.root = manifest.root;
  for (const auto& r : manifest.records) {
    if (r.label == label && r.origin == Origin::real) out.records.push_back(r);
  }
  if (out.empty()) {
    throw DataError("class '" + label + "' has no real records; available classes: " + join(manifest.class_names()));
  }
  return out;
}

// Keeps rows of an earlier log up to `last_step` so a resumed run's log
// continues the original one.
std::vector<std::string> log_rows_until(const fs::path& path, std::int64_t last_step) {
  std::vector<std::string> rows;
  if (!fs::exists(path)) return rows;
  std::istringstream in(read_text(path));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (std::stoll(line.substr(0, line.find(','))) <= last_step) rows.push_back(line);
  }
  return rows;
}

CheckpointMap load_checkpoint_args(const std::vector<std::string>& args) {
  CheckpointMap map;
  for (const auto& arg : args) {
    const auto eq = arg.find('=');
    const fs::path path = eq == std::string::npos ? fs::path(arg) : fs::path(arg.substr(eq + 1));
    Checkpoint ck = load_checkpoint(path);
    std::string label = eq == std::string::npos ? ck.class_label : arg.substr(0, eq);
    if (label.empty()) throw DataError("checkpoint " + path.string() + " has no class label; pass it as LABEL=PATH");
    if (map.count(label)) throw ConfigError("two checkpoints given for class '" + label + "'");
    map.emplace(label, std::move(ck));
  }
  return map;
}

int checkpoint_image_size(const CheckpointMap& checkpoints, int fallback) {
  int size = 0;
  for (const auto& [label, ck] : checkpoints) {
    if (size != 0 && ck.spec.image_size != size) throw ConfigError("checkpoints disagree on image size");
    size = ck.spec.image_size;
  }
  return size == 0 ? fallback : size;
}

struct RebalanceOutcome {
  RebalancePlan plan;
  DatasetManifest manifest;
};

RebalanceOutcome rebalance_manifest(const DatasetManifest& manifest, const CheckpointMap& checkpoints, int target,
                                    const fs::path& synth_dir, std::uint64_t seed, int image_size) {
  for (const auto& r : manifest.records) {
    if (r.origin != Origin::real) {
      throw DataError("input manifest already contains synthetic record '" + r.path + "'");
    }
  }
  RebalanceOutcome o;
  o.plan = compute_plan(manifest.real_counts(), target);
  const DatasetManifest kept = random_under_sample(manifest, o.plan, seed);
  o.manifest = synth_oversample(kept, o.plan, checkpoints, synth_dir, seed, image_size);
  return o;
}

std::string metric_line(const char* name, const Metric& m) {
  std::ostringstream os;
  os << "  " << name << ": ";
  if (m.defined()) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", *m.value);
    os << buf;
  } else {
    os << "undefined (" << m.reason << ")";
  }
  return os.str() + "\n";
}

std::string format_report(const MetricsReport& r) {
  std::ostringstream os;
  const auto& c = r.confusion;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", r.accuracy);
  os << "  confusion: TP=" << c.tp << " FP=" << c.fp << " FN=" << c.fn << " TN=" << c.tn << "\n";
  os << "  accuracy: " << buf << "\n";
  os << metric_line("precision", r.precision) << metric_line("recall", r.recall) << metric_line("f1", r.f1)
     << metric_line("auc", r.auc);
  return os.str();
}

}  // namespace

int run_guarded(const std::function<int()>& body, std::ostream& err) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ShapeError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const ContractError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericError& e) {
    err << "training aborted: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

int cmd_train_gan(const TrainGanOptions& o, std::ostream& out, std::ostream& err) {
  return run_guarded(
      [&] {
        RunConfig config = config_or_default(o.config);
        if (o.seed) config.set_seed(*o.seed);
        const DatasetManifest manifest = load_manifest(o.data_manifest);
        const DatasetManifest records = class_records(manifest, o.class_label);
        make_dir(o.out);

        std::optional<GanTrainer> trainer;
        std::vector<std::string> earlier_rows;
        int until_epoch = config.gan_training.epochs;
        if (!o.resume.empty()) {
          const Checkpoint ck = load_checkpoint(o.resume);
          if (ck.class_label != o.class_label) {
            throw ConfigError("checkpoint was trained on class '" + ck.class_label + "', not '" + o.class_label + "'");
          }
          trainer.emplace(ck);
          config.gan = ck.spec;
          config.gan_training = ck.config;
          if (!o.config.empty()) config.gan_training.epochs = until_epoch;
          until_epoch = config.gan_training.epochs;
          earlier_rows = log_rows_until(o.out / "train_log.csv", ck.counters.generator_steps);
        } else {
          trainer.emplace(config.gan, config.gan_training);
          trainer->class_label = o.class_label;
        }
        write_resolved_config(config, o.out);
        out << "training GAN on " << records.size() << " '" << o.class_label << "' images for "
            << config.gan_training.epochs << " epochs\n";
        const ImageSet images = load_image_set(records, config.gan.image_size);

        auto write_log = [&] {
          std::string text = format_train_log(trainer->log());
          std::string rows;
          for (const auto& r : earlier_rows) rows += r + "\n";
          text.insert(text.find('\n') + 1, rows);
          write_text(o.out / "train_log.csv", text);
        };
        const int every = config.gan_training.checkpoint_every;
        try {
          trainer->train(epoch_source(images, config.gan_training), until_epoch, [&](const Checkpoint& ck) {
            const int epoch = ck.counters.epochs_completed;
            if (every > 0 && epoch % every == 0) {
              save_checkpoint(ck, o.out / ("checkpoint_epoch" + std::to_string(epoch) + ".ckpt"));
            }
            if (epoch == until_epoch) save_checkpoint(ck, o.out / kCheckpointName);
            out << "epoch " << epoch << " done (" << ck.counters.critic_steps << " critic / "
                << ck.counters.generator_steps << " generator steps)\n";
          });
        } catch (const NumericError&) {
          write_log();
          throw;
        }
        write_log();
        out << "wrote " << (o.out / kCheckpointName).string() << "\n";
        return kExitOk;
      },
      err);
}

int cmd_generate(const GenerateOptions& o, std::ostream& out, std::ostream& err) {
  return run_guarded(
      [&] {
        if (o.count < 0) throw ConfigError("--count must be >= 0");
        const Checkpoint ck = load_checkpoint(o.checkpoint);
        make_dir(o.out_dir);
        const Tensor samples = from_gan_range(generate_samples(ck, o.count, o.seed));
        const int s = ck.spec.image_size;
        const std::size_t per = static_cast<std::size_t>(ck.spec.channels) * s * s;
        DatasetManifest m;
        m.root = o.out_dir;
        const std::string label = ck.class_label.empty() ? "generated" : ck.class_label;
        for (int i = 0; i < o.count; ++i) {
          const Tensor img(Shape{s, s}, std::vector<float>(samples.ptr() + i * per, samples.ptr() + i * per + s * s));
          const std::string name = "sample_" + std::to_string(i) + ".png";
          write_png_gray8(o.out_dir / name, to_gray_image(img));
          m.records.push_back({name, label, Origin::synthetic});
        }
        save_manifest(m, o.out_dir / "samples.csv");
        out << "wrote " << o.count << " samples to " << o.out_dir.string() << "\n";
        return kExitOk;
      },
      err);
}

int cmd_rebalance(const RebalanceOptions& o, std::ostream& out, std::ostream& err) {
  return run_guarded(
      [&] {
        RunConfig config = config_or_default(o.config);
        if (o.seed) config.set_seed(*o.seed);
        if (o.target) config.rebalance.target = *o.target;
        config.validate();
        const DatasetManifest manifest = load_manifest(o.manifest);
        const CheckpointMap checkpoints = load_checkpoint_args(o.checkpoints);
        const auto counts = manifest.real_counts();
        const int target = config.rebalance.target > 0 ? config.rebalance.target
                                                       : default_target(counts, config.rebalance.cap);
        make_dir(o.out_dir);
        write_resolved_config(config, o.out_dir);
        const int image_size = checkpoint_image_size(checkpoints, config.gan.image_size);
        const RebalanceOutcome r =
            rebalance_manifest(manifest, checkpoints, target, o.out_dir / "synthetic", config.rebalance.seed, image_size);
        out << "rebalance plan (target " << target << " per class)\n";
        for (const auto& [label, c] : r.plan.classes) {
          out << "  " << label << ": " << c.available_real << " -> " << c.target << " (keep " << c.keep_real
              << ", drop " << c.drop_real << ", synthesize " << c.synthesize << ")\n";
        }
        write_text(o.out_dir / "plan.csv", format_plan(r.plan));
        write_text(o.out_dir / "audit.csv", format_audit(audit(r.manifest)));
        save_manifest(r.manifest, o.out_dir / "manifest.csv");
        out << "wrote " << (o.out_dir / "manifest.csv").string() << "\n";
        return kExitOk;
      },
      err);
}

int cmd_train_classifier(const TrainClassifierOptions& o, std::ostream& out, std::ostream& err) {
  return run_guarded(
      [&] {
        RunConfig config = config_or_default(o.config);
        if (o.seed) config.set_seed(*o.seed);
        const DatasetManifest manifest = load_manifest(o.manifest);
        const std::string positive = o.positive_class.empty() ? default_positive_class(manifest) : o.positive_class;
        const ImageSet train = load_binary_set(manifest, config.classifier.input_size, positive);
        std::string negative;
        for (const auto& n : manifest.class_names()) {
          if (n != positive) negative = n;
        }
        std::optional<ImageSet> validation;
        if (!o.validation_manifest.empty()) {
          DatasetManifest v = load_manifest(o.validation_manifest);
          validation = load_binary_set(v.filter(Origin::real), config.classifier.input_size, positive);
        }
        std::optional<ParamSet> initial;
        if (!o.init_model.empty()) {
          const ClassifierFile f = load_classifier_file(o.init_model);
          if (!(f.spec == config.classifier)) throw ConfigError("--init-model was built with a different classifier spec");
          initial = classifier_from_file(f).params().clone();
        }
        make_dir(o.out);
        write_resolved_config(config, o.out);
        out << "training classifier on " << train.size() << " images (positive class '" << positive << "')\n";
        TrainedClassifier trained =
            train_classifier(train, config.classifier, FreezeSpec{config.freeze_prefixes}, config.classifier_training,
                             validation ? &*validation : nullptr, initial ? &*initial : nullptr);
        save_classifier(o.out / kModelName, trained.model, positive, negative);
        FoldResult fr;
        fr.report.curves = trained.curves;
        write_text(o.out / "curves.csv", format_curves_csv({fr}));
        const auto& last = trained.curves.back();
        char buf[96];
        std::snprintf(buf, sizeof buf, "final epoch %d: train_loss %.4f train_acc %.4f\n", last.epoch, last.train_loss,
                      last.train_acc);
        out << buf << "wrote " << (o.out / kModelName).string() << "\n";
        return kExitOk;
      },
      err);
}

int cmd_evaluate(const EvaluateOptions& o, std::ostream& out, std::ostream& err) {
  return run_guarded(
      [&] {
        if (!(o.threshold > 0.0 && o.threshold < 1.0)) throw ConfigError("--threshold must lie in (0, 1)");
        const ClassifierFile file = load_classifier_file(o.model);
        Classifier model = classifier_from_file(file);
        DatasetManifest manifest = load_manifest(o.manifest);
        if (!o.include_synthetic) manifest = manifest.filter(Origin::real);
        if (manifest.empty()) throw DataError("nothing to evaluate: manifest has no usable records");
        std::map<std::string, int> index{{file.positive_class, 1}, {file.negative_class, 0}};
        for (const auto& n : manifest.class_names()) {
          if (!index.count(n)) {
            throw DataError("class '" + n + "' is unknown to the model (classes: " + file.negative_class + ", " +
                            file.positive_class + ")");
          }
        }
        const ImageSet set = load_image_set(manifest, file.spec.input_size, index);
        FoldResult fr;
        fr.test_size = set.size();
        fr.report = evaluate(model, set, o.threshold);
        const std::string text = "evaluation on " + std::to_string(set.size()) + " records (positive class '" +
                                 file.positive_class + "')\n" + format_report(fr.report);
        out << text;
        if (!o.out.empty()) {
          make_dir(o.out);
          write_text(o.out / "metrics.csv", format_metrics_csv({fr}));
          write_text(o.out / "evaluation.txt", text);
        }
        return kExitOk;
      },
      err);
}

int cmd_report(const ReportOptions& o, std::ostream& out, std::ostream& err) {
  return run_guarded(
      [&] {
        RunConfig config = config_or_default(o.config);
        if (o.seed) config.set_seed(*o.seed);
        if (o.folds) config.cross_validation.k = *o.folds;
        if (o.target) config.cross_validation.per_fold_target = *o.target;
        config.validate();
        const DatasetManifest manifest = load_manifest(o.manifest);
        if (manifest.class_names().size() != 2) {
          throw DataError("report needs a two-class manifest; classes: " + join(manifest.class_names()));
        }
        make_dir(o.out);
        write_resolved_config(config, o.out);
        const CheckpointMap checkpoints = load_checkpoint_args(o.gan_checkpoints);

        CrossValidationOptions cv;
        cv.k = config.cross_validation.k;
        cv.seed = config.cross_validation.seed;
        cv.stratified = config.cross_validation.stratified;
        cv.real_only_eval = config.cross_validation.real_only_eval;
        cv.positive_class = o.positive_class.empty() ? default_positive_class(manifest) : o.positive_class;
        cv.freeze = FreezeSpec{config.freeze_prefixes};
        if (!checkpoints.empty()) {
          const int image_size = checkpoint_image_size(checkpoints, config.gan.image_size);
          cv.train_transform = [&, image_size](const DatasetManifest& train, int fold) {
            const DatasetManifest real = train.filter(Origin::real);
            const auto counts = real.real_counts();
            const int target = config.cross_validation.per_fold_target > 0 ? config.cross_validation.per_fold_target
                                                                            : default_target(counts, config.rebalance.cap);
            const fs::path dir = o.out / ("fold" + std::to_string(fold)) / "synthetic";
            DatasetManifest balanced = rebalance_manifest(real, checkpoints, target, dir,
                                                          config.rebalance.seed + static_cast<std::uint64_t>(fold),
                                                          image_size)
                                           .manifest;
            const DatasetManifest given = train.filter(Origin::synthetic);
            balanced.records.insert(balanced.records.end(), given.records.begin(), given.records.end());
            return balanced;
          };
        }
        cv.on_fold = [&](int fold, const MetricsReport& r) {
          char buf[64];
          std::snprintf(buf, sizeof buf, "fold %d: accuracy %.4f\n", fold, r.accuracy);
          out << buf;
        };
        const CrossValidationResult result =
            cross_validate(manifest, config.classifier, config.classifier_training, cv);

        std::ostringstream summary;
        summary << "dataset audit (class,real,synthetic,total)\n";
        for (const auto& [label, c] : audit(manifest)) {
          summary << "  " << label << ": " << c.real << " real + " << c.synthetic << " synthetic = " << c.total()
                  << "\n";
        }
        summary << "positive class: " << cv.positive_class << "\n";
        summary << format_summary(result);
        write_text(o.out / "metrics.csv", format_metrics_csv(result.folds));
        write_text(o.out / "curves.csv", format_curves_csv(result.folds));
        write_text(o.out / "summary.txt", summary.str());
        out << summary.str();
        return kExitOk;
      },
      err);
}

}  // namespace balgan
