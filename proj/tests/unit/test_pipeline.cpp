#include <cstdlib>
#include <sstream>

#include "balgan/cross_validation.hpp"
#include "balgan/errors.hpp"
#include "balgan/gan_training.hpp"
#include "balgan/image_codec.hpp"
#include "balgan/pipeline.hpp"
#include "balgan/rebalance.hpp"
#include "balgan/run_config.hpp"
#include "doctest.h"
#include "fixtures.hpp"

using namespace balgan;
using namespace balgan::testing;
namespace fs = std::filesystem;

namespace {

nlohmann::json tiny_config(int epochs = 2) {
  return {{"gan", {{"image_size", 16}, {"base_feature_maps", 4}, {"latent_dim", 8}}},
          {"gan_training", {{"batch_size", 16}, {"epochs", epochs}, {"log_wallclock", true}}},
          {"classifier",
           {{"input_size", 16},
            {"head_units", 8},
            {"blocks",
             {{{"kind", "plain_conv"}, {"channels", 4}},
              {{"kind", "residual"}, {"channels", 6}},
              {{"kind", "separable"}, {"channels", 8}}}}}},
          {"classifier_training", {{"epochs", 6}, {"batch_size", 16}, {"lr", 0.003}}},
          {"cross_validation", {{"k", 4}}}};
}

fs::path write_config(const TempDir& dir, const nlohmann::json& j, const std::string& name = "config.json") {
  write_file(dir / name, j.dump(2));
  return dir / name;
}

// Drops the trailing wallclock column of every row.
std::string without_wallclock(const std::string& csv) {
  std::istringstream in(csv);
  std::string line, out;
  while (std::getline(in, line)) out += line.substr(0, line.rfind(',')) + "\n";
  return out;
}

struct Captured {
  int code;
  std::string out, err;
};

template <class Options>
Captured run(int (*cmd)(const Options&, std::ostream&, std::ostream&), const Options& o) {
  std::ostringstream out, err;
  const int code = cmd(o, out, err);
  return {code, out.str(), err.str()};
}

int run_binary(const std::string& args, const TempDir& dir) {
  const std::string cmd = std::string(BALGAN_CLI_PATH) + " " + args + " >" + (dir / "stdout.txt").string() + " 2>" +
                          (dir / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TrainGanOptions gan_options(const TempDir& dir, const std::string& out) {
  TrainGanOptions o;
  o.config = dir / "config.json";
  o.data_manifest = dir / "data" / "manifest.csv";
  o.class_label = "square";
  o.out = dir / out;
  o.seed = 7;
  return o;
}

}  // namespace

TEST_SUITE("run config") {
  TEST_CASE("defaults round trip and every key is resolved") {
    const RunConfig c;
    const RunConfig back = run_config_from_json(nlohmann::json::parse(resolved_config_text(c)));
    CHECK(resolved_config_text(back) == resolved_config_text(c));
    const auto j = to_json(c);
    for (const char* section : {"gan", "gan_training", "classifier", "classifier_training", "rebalance",
                                "cross_validation", "freeze_prefixes"}) {
      CHECK_MESSAGE(j.contains(section), section);
    }
  }

  TEST_CASE("unknown keys are rejected at every level") {
    CHECK_THROWS_AS(run_config_from_json({{"typo", 1}}), ConfigError);
    CHECK_THROWS_AS(run_config_from_json({{"gan", {{"imagesize", 16}}}}), ConfigError);
    CHECK_THROWS_AS(run_config_from_json({{"rebalance", {{"targett", 3}}}}), ConfigError);
    CHECK_THROWS_AS(run_config_from_json({{"cross_validation", {{"k", "five"}}}}), ConfigError);
  }

  TEST_CASE("set_seed reaches every stream") {
    RunConfig c;
    c.set_seed(99);
    CHECK(c.gan_training.seed == 99);
    CHECK(c.classifier_training.seed == 99);
    CHECK(c.rebalance.seed == 99);
    CHECK(c.cross_validation.seed == 99);
  }

  TEST_CASE("file errors") {
    TempDir dir("cfg");
    write_file(dir / "bad.json", "{ not json");
    CHECK_THROWS_AS(load_run_config(dir / "bad.json"), ConfigError);
    CHECK_THROWS_AS(load_run_config(dir / "missing.json"), ConfigError);
    RunConfig c = run_config_from_json(tiny_config());
    c.validate();
    CHECK(c.gan.image_size == 16);
    CHECK(c.classifier.blocks.size() == 3);
    c.gan.loss_mode = LossMode::bce;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }
}

TEST_SUITE("pipeline commands") {
  TEST_CASE("train-gan smoke, determinism and resume") {
    TempDir dir("tg");
    write_config(dir, tiny_config());
    write_shape_dataset(dir / "data", {{"circle", 40}, {"square", 64}}, 16, 3);

    TrainGanOptions missing = gan_options(dir, "missing");
    missing.class_label = "triangle";
    const Captured m = run(cmd_train_gan, missing);
    CHECK(m.code == kExitData);
    CHECK(m.err.find("available classes: circle, square") != std::string::npos);

    const Captured a = run(cmd_train_gan, gan_options(dir, "a"));
    REQUIRE_MESSAGE(a.code == 0, a.err);
    const Captured b = run(cmd_train_gan, gan_options(dir, "b"));
    REQUIRE(b.code == 0);
    const Checkpoint ck = load_checkpoint(dir / "a" / "checkpoint.ckpt");
    CHECK(ck.class_label == "square");
    CHECK(ck.counters.epochs_completed == 2);
    CHECK(read_file(dir / "a" / "checkpoint.ckpt") == read_file(dir / "b" / "checkpoint.ckpt"));
    CHECK(without_wallclock(read_file(dir / "a" / "train_log.csv")) ==
          without_wallclock(read_file(dir / "b" / "train_log.csv")));
    CHECK(read_file(dir / "a" / "run.resolved.config") == read_file(dir / "b" / "run.resolved.config"));
    const RunConfig resolved = load_run_config(dir / "a" / "run.resolved.config");
    CHECK(resolved.gan_training.seed == 7);
    CHECK(resolved.gan.base_feature_maps == 4);

    // Interrupted after epoch 1, then resumed.
    auto cfg = tiny_config(1);
    write_config(dir, cfg, "one.json");
    TrainGanOptions first = gan_options(dir, "r");
    first.config = dir / "one.json";
    REQUIRE(run(cmd_train_gan, first).code == 0);
    TrainGanOptions second = gan_options(dir, "r");
    fs::copy_file(dir / "r" / "checkpoint.ckpt", dir / "r1.ckpt");
    second.resume = dir / "r1.ckpt";
    const Captured resumed = run(cmd_train_gan, second);
    REQUIRE_MESSAGE(resumed.code == 0, resumed.err);
    const Checkpoint resumed_ck = load_checkpoint(dir / "r" / "checkpoint.ckpt");
    CHECK(resumed_ck.generator == ck.generator);
    CHECK(resumed_ck.critic == ck.critic);
    CHECK(resumed_ck.rng_state == ck.rng_state);
    CHECK(resumed_ck.counters.generator_steps == ck.counters.generator_steps);
    CHECK(without_wallclock(read_file(dir / "r" / "train_log.csv")) ==
          without_wallclock(read_file(dir / "a" / "train_log.csv")));

    TrainGanOptions wrong = second;
    wrong.class_label = "circle";
    CHECK(run(cmd_train_gan, wrong).code == kExitConfig);
  }

  TEST_CASE("generate and rebalance") {
    TempDir dir("rb");
    write_config(dir, tiny_config(1));
    write_shape_dataset(dir / "data", {{"circle", 30}, {"square", 16}}, 16, 4);
    REQUIRE(run(cmd_train_gan, gan_options(dir, "gan")).code == 0);

    GenerateOptions g;
    g.checkpoint = dir / "gan" / "checkpoint.ckpt";
    g.count = 5;
    g.seed = 2;
    g.out_dir = dir / "gen";
    REQUIRE(run(cmd_generate, g).code == 0);
    const DatasetManifest samples = load_manifest(dir / "gen" / "samples.csv");
    CHECK(samples.size() == 5);
    for (const auto& r : samples.records) {
      CHECK(r.origin == Origin::synthetic);
      CHECK(r.label == "square");
      CHECK(fs::exists(samples.resolve(r)));
    }
    g.count = -1;
    CHECK(run(cmd_generate, g).code == kExitConfig);

    RebalanceOptions o;
    o.config = dir / "config.json";
    o.manifest = dir / "data" / "manifest.csv";
    o.checkpoints = {(dir / "gan" / "checkpoint.ckpt").string()};
    o.target = 25;
    o.seed = 3;
    o.out_dir = dir / "bal_a";
    const Captured a = run(cmd_rebalance, o);
    REQUIRE_MESSAGE(a.code == 0, a.err);
    CHECK(a.out.find("circle: 30 -> 25 (keep 25, drop 5, synthesize 0)") != std::string::npos);
    CHECK(a.out.find("square: 16 -> 25 (keep 16, drop 0, synthesize 9)") != std::string::npos);
    const auto counts = audit(load_manifest(dir / "bal_a" / "manifest.csv"));
    CHECK(counts.at("circle").total() == 25);
    CHECK(counts.at("square").total() == 25);
    CHECK(counts.at("square").real == 16);
    CHECK(fs::exists(dir / "bal_a" / "plan.csv"));
    CHECK(fs::exists(dir / "bal_a" / "audit.csv"));

    o.out_dir = dir / "bal_b";
    REQUIRE(run(cmd_rebalance, o).code == 0);
    for (const auto& entry : fs::recursive_directory_iterator(dir / "bal_a")) {
      if (!entry.is_regular_file()) continue;
      const fs::path rel = fs::relative(entry.path(), dir / "bal_a");
      CHECK_MESSAGE(read_file(entry.path()) == read_file(dir / "bal_b" / rel), rel.string());
    }

    o.target = 10;
    o.out_dir = dir / "under";
    o.checkpoints.clear();
    const Captured u = run(cmd_rebalance, o);
    REQUIRE_MESSAGE(u.code == 0, u.err);
    const auto under = audit(load_manifest(dir / "under" / "manifest.csv"));
    CHECK(under.at("circle").synthetic == 0);
    CHECK(under.at("square").synthetic == 0);
    CHECK(under.at("square").total() == 10);

    o.target = 25;
    o.out_dir = dir / "nockpt";
    CHECK(run(cmd_rebalance, o).code == kExitData);
  }

  TEST_CASE("train-classifier, evaluate and report") {
    TempDir dir("cls");
    write_config(dir, tiny_config());
    write_shape_dataset(dir / "data", {{"circle", 40}, {"square", 40}}, 16, 8);
    write_shape_dataset(dir / "held", {{"circle", 20}, {"square", 20}}, 16, 9);

    TrainClassifierOptions t;
    t.config = dir / "config.json";
    t.manifest = dir / "data" / "manifest.csv";
    t.validation_manifest = dir / "held" / "manifest.csv";
    t.positive_class = "square";
    t.out = dir / "model";
    t.seed = 1;
    const Captured trained = run(cmd_train_classifier, t);
    REQUIRE_MESSAGE(trained.code == 0, trained.err);
    const std::string curves = read_file(dir / "model" / "curves.csv");
    CHECK(curves.rfind(std::string(kCurvesHeader) + "\n", 0) == 0);
    t.out = dir / "model2";
    REQUIRE(run(cmd_train_classifier, t).code == 0);
    CHECK(read_file(dir / "model" / "model.clf") == read_file(dir / "model2" / "model.clf"));

    EvaluateOptions e;
    e.model = dir / "model" / "model.clf";
    e.manifest = dir / "held" / "manifest.csv";
    e.out = dir / "eval";
    const Captured ev = run(cmd_evaluate, e);
    REQUIRE_MESSAGE(ev.code == 0, ev.err);
    CHECK(ev.out.find("evaluation on 40 records (positive class 'square')") != std::string::npos);
    const std::string metrics = read_file(dir / "eval" / "metrics.csv");
    CHECK(metrics.rfind(std::string(kMetricsHeader) + "\n", 0) == 0);
    e.threshold = 1.5;
    CHECK(run(cmd_evaluate, e).code == kExitConfig);

    write_shape_dataset(dir / "single", {{"square", 12}}, 16, 2);
    TrainClassifierOptions single = t;
    single.manifest = dir / "single" / "manifest.csv";
    single.validation_manifest.clear();
    single.out = dir / "single_out";
    CHECK(run(cmd_train_classifier, single).code == kExitData);

    ReportOptions r;
    r.config = dir / "config.json";
    r.manifest = dir / "data" / "manifest.csv";
    r.out = dir / "report";
    r.seed = 2;
    const Captured rep = run(cmd_report, r);
    REQUIRE_MESSAGE(rep.code == 0, rep.err);
    CHECK(rep.out.find("circle: 40 real + 0 synthetic = 40") != std::string::npos);
    CHECK(rep.out.find("positive class: square") != std::string::npos);
    CHECK(rep.out.find("cross-validation over 4 folds") != std::string::npos);
    CHECK(fs::exists(dir / "report" / "metrics.csv"));
    CHECK(fs::exists(dir / "report" / "curves.csv"));
    CHECK(fs::exists(dir / "report" / "run.resolved.config"));
    r.out = dir / "report2";
    REQUIRE(run(cmd_report, r).code == 0);
    for (const char* name : {"metrics.csv", "curves.csv", "summary.txt", "run.resolved.config"}) {
      CHECK_MESSAGE(read_file(dir / "report" / name) == read_file(dir / "report2" / name), name);
    }
    r.manifest = dir / "single" / "manifest.csv";
    r.out = dir / "report3";
    CHECK(run(cmd_report, r).code == kExitData);
  }

  TEST_CASE("report on a separable corpus") {
    TempDir dir("sep");
    // Bright squares against dark circles: the label is visible in mean intensity alone.
    write_config(dir, tiny_config());
    DatasetManifest m;
    m.root = dir.path();
    Rng rng(5);
    for (int i = 0; i < 80; ++i) {
      const bool square = i % 2 == 1;
      Tensor img = render_shape(16, square, rng);
      for (auto& v : img.data()) v = square ? 0.5f + 0.5f * v : 0.5f * v;
      const std::string name = (square ? "bright/" : "dark/") + std::to_string(i) + ".png";
      fs::create_directories(dir / (square ? "bright" : "dark"));
      write_png_gray8(dir / name, to_gray_image(img));
      m.records.push_back({name, square ? "bright" : "dark", Origin::real});
    }
    save_manifest(m, dir / "manifest.csv");
    ReportOptions r;
    r.config = dir / "config.json";
    r.manifest = dir / "manifest.csv";
    r.out = dir / "report";
    r.positive_class = "bright";
    const Captured rep = run(cmd_report, r);
    REQUIRE_MESSAGE(rep.code == 0, rep.err);
    const std::string summary = read_file(dir / "report" / "summary.txt");
    const auto at = summary.find("accuracy");
    REQUIRE(at != std::string::npos);
    CHECK(std::stod(summary.substr(at + 10)) >= 0.95);
  }
}

TEST_SUITE("command line") {
  TEST_CASE("exit codes") {
    TempDir dir("cli");
    CHECK(run_binary("", dir) == kExitConfig);
    CHECK(run_binary("--help", dir) == 0);
    CHECK(run_binary("train-gan --bogus", dir) == kExitConfig);
    CHECK(run_binary("report --manifest x.csv", dir) == kExitConfig);
    write_file(dir / "bad.json", "{\"gan\": {\"image_size\": 20}}");
    write_shape_dataset(dir / "data", {{"circle", 4}, {"square", 4}}, 16, 1);
    const std::string data = (dir / "data" / "manifest.csv").string();
    CHECK(run_binary("train-gan --config " + (dir / "bad.json").string() + " --data-manifest " + data +
                         " --class square --out " + (dir / "o").string(),
                     dir) == kExitConfig);
    CHECK(run_binary("train-gan --data-manifest " + (dir / "none.csv").string() + " --class square --out " +
                         (dir / "o").string(),
                     dir) == kExitData);
    CHECK(run_binary("train-gan --data-manifest " + data + " --class dog --out " + (dir / "o").string(), dir) ==
          kExitData);
    CHECK(read_file(dir / "stderr.txt").find("available classes: circle, square") != std::string::npos);

    // A huge learning rate drives the weights to overflow.
    auto cfg = tiny_config(3);
    cfg["gan_training"]["critic_optimizer"] = {{"kind", "rmsprop"}, {"lr", 1e30}};
    cfg["gan_training"]["generator_optimizer"] = {{"lr", 1e30}};
    cfg["gan_training"]["batch_size"] = 4;
    write_config(dir, cfg, "explode.json");
    CHECK(run_binary("train-gan --config " + (dir / "explode.json").string() + " --data-manifest " + data +
                         " --class square --out " + (dir / "boom").string(),
                     dir) == kExitNumeric);
    CHECK(fs::exists(dir / "boom" / "train_log.csv"));
  }
}
