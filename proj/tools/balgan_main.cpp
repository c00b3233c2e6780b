#include <iostream>

#include "CLI11.hpp"
#include "balgan/pipeline.hpp"

int main(int argc, char** argv) {
  using namespace balgan;
  CLI::App app{"Class-imbalance correction with WGAN-GP synthesis and CNN cross-validation"};
  app.require_subcommand(1);

  TrainGanOptions train_gan;
  std::uint64_t train_gan_seed = 0;
  auto* tg = app.add_subcommand("train-gan", "Train a generator on one class's real images");
  tg->add_option("--config", train_gan.config, "JSON run configuration")->check(CLI::ExistingFile);
  tg->add_option("--data-manifest", train_gan.data_manifest, "Dataset manifest CSV")->required();
  tg->add_option("--class", train_gan.class_label, "Class to model")->required();
  tg->add_option("--out", train_gan.out, "Output directory")->required();
  auto* tg_seed = tg->add_option("--seed", train_gan_seed, "Seed for every random stream");
  tg->add_option("--resume", train_gan.resume, "Checkpoint to continue from")->check(CLI::ExistingFile);

  GenerateOptions generate;
  auto* gen = app.add_subcommand("generate", "Write generator samples as PNG files");
  gen->add_option("--checkpoint", generate.checkpoint)->required()->check(CLI::ExistingFile);
  gen->add_option("--count", generate.count)->required();
  gen->add_option("--seed", generate.seed);
  gen->add_option("--out-dir", generate.out_dir)->required();

  RebalanceOptions rebalance;
  int rebalance_target = 0;
  std::uint64_t rebalance_seed = 0;
  auto* rb = app.add_subcommand("rebalance", "Under-sample large classes and synthesize small ones to a target");
  rb->add_option("--config", rebalance.config)->check(CLI::ExistingFile);
  rb->add_option("--manifest", rebalance.manifest)->required();
  rb->add_option("--checkpoint", rebalance.checkpoints, "Generator checkpoint, PATH or LABEL=PATH (repeatable)");
  auto* rb_target = rb->add_option("--target", rebalance_target, "Records per class after rebalancing");
  rb->add_option("--out-dir", rebalance.out_dir)->required();
  auto* rb_seed = rb->add_option("--seed", rebalance_seed);

  TrainClassifierOptions train_cls;
  std::uint64_t train_cls_seed = 0;
  auto* tc = app.add_subcommand("train-classifier", "Train the CNN classifier on a manifest");
  tc->add_option("--config", train_cls.config)->check(CLI::ExistingFile);
  tc->add_option("--manifest", train_cls.manifest)->required();
  tc->add_option("--validation-manifest", train_cls.validation_manifest);
  tc->add_option("--init-model", train_cls.init_model, "Starting weights (fine-tuning)")->check(CLI::ExistingFile);
  tc->add_option("--positive-class", train_cls.positive_class);
  tc->add_option("--out", train_cls.out)->required();
  auto* tc_seed = tc->add_option("--seed", train_cls_seed);

  EvaluateOptions evaluate;
  auto* ev = app.add_subcommand("evaluate", "Score a trained classifier on a manifest");
  ev->add_option("--model", evaluate.model)->required()->check(CLI::ExistingFile);
  ev->add_option("--manifest", evaluate.manifest)->required();
  ev->add_option("--out", evaluate.out);
  ev->add_option("--threshold", evaluate.threshold, "Decision threshold")->capture_default_str();
  ev->add_flag("--include-synthetic", evaluate.include_synthetic, "Also score synthetic records");

  ReportOptions report;
  int report_folds = 0, report_target = 0;
  std::uint64_t report_seed = 0;
  auto* rp = app.add_subcommand("report", "Audit a manifest and cross-validate the classifier on it");
  rp->add_option("--config", report.config)->check(CLI::ExistingFile);
  rp->add_option("--manifest", report.manifest)->required();
  rp->add_option("--out", report.out)->required();
  rp->add_option("--positive-class", report.positive_class);
  auto* rp_folds = rp->add_option("--folds", report_folds);
  auto* rp_seed = rp->add_option("--seed", report_seed);
  rp->add_option("--gan-checkpoint", report.gan_checkpoints, "Rebalance each training fold with this generator");
  auto* rp_target = rp->add_option("--target", report_target, "Per-fold rebalance target");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  if (*tg) {
    if (*tg_seed) train_gan.seed = train_gan_seed;
    return cmd_train_gan(train_gan, std::cout, std::cerr);
  }
  if (*gen) return cmd_generate(generate, std::cout, std::cerr);
  if (*rb) {
    if (*rb_seed) rebalance.seed = rebalance_seed;
    if (*rb_target) rebalance.target = rebalance_target;
    return cmd_rebalance(rebalance, std::cout, std::cerr);
  }
  if (*tc) {
    if (*tc_seed) train_cls.seed = train_cls_seed;
    return cmd_train_classifier(train_cls, std::cout, std::cerr);
  }
  if (*ev) return cmd_evaluate(evaluate, std::cout, std::cerr);
  if (*rp) {
    if (*rp_seed) report.seed = report_seed;
    if (*rp_folds) report.folds = report_folds;
    if (*rp_target) report.target = report_target;
    return cmd_report(report, std::cout, std::cerr);
  }
  return kExitFailure;
}
