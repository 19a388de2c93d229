#include <exception>
#include <iostream>

#include <CLI11.hpp>

#include "cli_commands.hpp"

using namespace umd;
using namespace umd::cli;

namespace {

void add_victim_flags(CLI::App* cmd, VictimOptions& v) {
  auto& c = v.victim;
  cmd->add_option("--classes", c.num_classes, "number of classes K");
  cmd->add_option("--dim", c.input_dim, "input dimension (square layout)");
  cmd->add_option("--separation", c.separation, "blob separation; noise sd = 0.25/separation");
  cmd->add_option("--train-per-class", c.train_per_class);
  cmd->add_option("--test-per-class", c.test_per_class);
  cmd->add_option("--clean-per-class", c.clean_per_class, "size of the defender's clean set per class");
  cmd->add_option("--poison", c.poison_per_source, "poisoned samples per source class");
  cmd->add_option("--magnitude", c.trigger_magnitude, "perturbation trigger magnitude");
  cmd->add_option("--patch-side", c.patch_side, "patch trigger side length");
  cmd->add_option("--trigger", v.trigger, "perturbation or patch")->check(CLI::IsMember({"perturbation", "pert", "patch"}));
  cmd->add_option("--epochs", c.train.epochs, "training epochs");
  cmd->add_option("--success-asr", c.success_asr, "ASR below which the attack is flagged unsuccessful");
}

int guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return validation_error;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return validation_error;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return runtime_failure;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Backdoor detection for small classifiers", "umd"};
  app.require_subcommand(1);

  ForgeOptions forge;
  auto* f = app.add_subcommand("forge", "train a (possibly backdoored) victim and write its artifacts");
  add_victim_flags(f, forge.v);
  f->add_option("--setting", forge.setting, "benign, a2o, o2o, x2x or a2ar")
      ->check(CLI::IsMember({"benign", "a2o", "o2o", "x2x", "a2ar"}));
  f->add_option("--num-pairs", forge.num_pairs, "pair count for x2x");
  f->add_option("--seed", forge.seed, "master seed");
  f->add_option("--out-dir", forge.out_dir, "output directory (default $UMD_WORKDIR or .)");

  DetectOptions det;
  auto* d = app.add_subcommand("detect", "run detection on a trained model");
  d->add_option("--model", det.model, "model file")->required();
  d->add_option("--clean", det.clean, "clean dataset file")->required();
  d->add_option("--out", det.out, "report path (default $UMD_WORKDIR/report.json)");
  d->add_option("--mode", det.mode)->check(CLI::IsMember({"perturbation", "pert", "patch", "intermediate", "combined"}));
  d->add_option("--method", det.method)->check(CLI::IsMember({"umd", "dagger", "ddagger"}));
  d->add_option("--beta", det.beta, "false-detection budget");
  d->add_option("--pi", det.pi, "targeted misclassification fraction");
  d->add_option("--lr", det.learning_rate, "search step size (0 = mode default)");
  d->add_option("--images-per-class", det.images_per_class, "0 = mode default");
  d->add_option("--max-steps", det.max_steps);
  d->add_option("--restarts", det.restarts, "patch restarts");
  d->add_option("--layer-index", det.layer_index, "split point for intermediate mode");
  d->add_option("--max-clusters", det.max_clusters);
  d->add_option("--workers", det.workers);
  d->add_option("--seed", det.seed, "master seed");
  d->add_flag("--emit-tr", det.emit_tr, "include the TR matrix in the report");
  d->add_option("--tr-csv", det.tr_csv, "also write the TR matrix as CSV");

  MitigateOptions mit;
  auto* m = app.add_subcommand("mitigate", "unlearn the backdoor named by a detection report");
  m->add_option("--model", mit.model)->required();
  m->add_option("--report", mit.report)->required();
  m->add_option("--clean", mit.clean)->required();
  m->add_option("--test", mit.test, "test set for the before/after summary");
  m->add_option("--attack", mit.attack, "attack spec for ASR in the summary");
  m->add_option("--out", mit.out, "mitigated model path");
  m->add_option("--summary", mit.summary);
  m->add_option("--epochs", mit.epochs);
  m->add_option("--lr", mit.learning_rate);
  m->add_option("--seed", mit.seed);

  BenchOptions bench;
  auto* b = app.add_subcommand("bench", "forge and inspect a suite of victims");
  add_victim_flags(b, bench.v);
  b->add_option("--out", bench.out, "result path (default $UMD_WORKDIR/bench.json)");
  b->add_option("--attacked", bench.attacked);
  b->add_option("--benign", bench.benign);
  b->add_option("--settings", bench.settings, "attack settings to cycle through")->delimiter(',');
  b->add_option("--num-pairs", bench.num_pairs);
  b->add_option("--mode", bench.mode)->check(CLI::IsMember({"perturbation", "pert", "patch", "intermediate"}));
  b->add_option("--beta", bench.beta);
  b->add_option("--workers", bench.workers, "threads per detection");
  b->add_option("--model-workers", bench.model_workers, "victims processed in parallel");
  b->add_option("--seed", bench.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ok : usage_error;
  }

  if (f->parsed()) return guarded([&] { return run_forge(forge); });
  if (d->parsed()) return guarded([&] { return run_detect(det); });
  if (m->parsed()) return guarded([&] { return run_mitigate(mit); });
  return guarded([&] { return run_bench(bench); });
}
