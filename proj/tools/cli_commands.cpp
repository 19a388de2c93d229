#include "cli_commands.hpp"

#include <cstdlib>
#include <iostream>

namespace umd::cli {

std::filesystem::path default_workdir() {
  if (const char* dir = std::getenv("UMD_WORKDIR"); dir && *dir) return dir;
  return std::filesystem::current_path();
}

void VictimOptions::apply() {
  if (trigger == "perturbation" || trigger == "pert")
    victim.trigger_kind = TriggerKind::perturbation;
  else if (trigger == "patch")
    victim.trigger_kind = TriggerKind::patch;
  else
    throw InputError("unknown trigger kind '" + trigger + "'");
}

namespace {

ReConfig re_config(const DetectOptions& o, ReMode mode) {
  ReConfig re = ReConfig::defaults(mode);
  re.pi = o.pi;
  if (o.learning_rate > 0.0) re.learning_rate = o.learning_rate;
  if (o.images_per_class > 0) re.images_per_class = o.images_per_class;
  re.max_steps = o.max_steps;
  re.restarts = o.restarts;
  re.layer_index = o.layer_index;
  re.seed = o.seed;
  return re;
}

DetectConfig detect_config(const DetectOptions& o, ReMode mode) {
  DetectConfig dc;
  dc.re = re_config(o, mode);
  dc.beta = o.beta;
  dc.workers = o.workers;
  dc.keep_tr = o.emit_tr || !o.tr_csv.empty();
  return dc;
}

void print_report(const DetectionReport& r) {
  std::cout << "attacked=" << (r.attacked ? "true" : "false") << " score=" << r.score
            << " threshold=" << r.threshold << " mode=" << to_string(r.mode) << " pairs=";
  for (const auto& p : (r.attacked ? r.detected : r.selected.pairs)) std::cout << to_string(p);
  std::cout << '\n';
}

void export_tr(const DetectOptions& o, DetectionReport& r) {
  if (!o.tr_csv.empty() && r.tr) write_text(o.tr_csv, tr_to_csv(*r.tr));
  if (!o.emit_tr) r.tr.reset();
  for (auto& aux : r.auxiliary)
    if (!o.emit_tr) aux.tr.reset();
}

}  // namespace

int run_forge(ForgeOptions opts) {
  opts.v.apply();
  if (opts.out_dir.empty()) opts.out_dir = default_workdir();
  std::filesystem::create_directories(opts.out_dir);

  VictimJob job;
  job.seed = opts.seed;
  job.num_pairs = opts.num_pairs;
  if (opts.setting != "benign") job.setting = parse_attack_setting(opts.setting);
  const Victim v = forge_victim(opts.v.victim, job);

  save_model(opts.out_dir / "model.bin", v.net);
  save_dataset(opts.out_dir / "train.bin", v.train);
  save_dataset(opts.out_dir / "test.bin", v.test);
  save_dataset(opts.out_dir / "clean.bin", v.clean);
  if (v.attack) save_json(opts.out_dir / "attack.json", to_json(*v.attack));
  Json summary = forge_summary(v);
  save_json(opts.out_dir / "summary.json", summary);

  std::cout << "setting=" << opts.setting << " seed=" << opts.seed << " acc=" << v.accuracy;
  if (v.asr) {
    std::cout << " asr=" << v.asr->overall;
    if (!v.attack_successful) std::cout << " (attack unsuccessful)";
  }
  std::cout << '\n';
  return ok;
}

int run_detect(const DetectOptions& o) {
  if (o.max_clusters == 0) throw InputError("max-clusters must be at least 1");
  const Network net = load_model(o.model);
  const LabeledDataset clean = load_dataset(o.clean);
  const std::filesystem::path out = o.out.empty() ? default_workdir() / "report.json" : o.out;

  if (o.mode == "combined") {
    if (o.method != "umd" || o.max_clusters != 1)
      throw InputError("combined mode supports only the default method with one cluster");
    auto r = detect_combined(net, clean, detect_config(o, ReMode::perturbation),
                             detect_config(o, ReMode::patch));
    export_tr(o, r);
    save_json(out, to_json(r));
    print_report(r);
    return ok;
  }

  const ReMode mode = parse_re_mode(o.mode);
  const DetectConfig dc = detect_config(o, mode);
  if (o.max_clusters > 1) {
    if (o.method != "umd") throw InputError("multi-cluster detection uses the default method");
    auto reports = detect_multi(net, clean, mode, dc, o.max_clusters);
    Json doc;
    doc["clusters"] = Json::array();
    for (auto& r : reports) {
      export_tr(o, r);
      doc["clusters"].push_back(to_json(r));
      print_report(r);
    }
    save_json(out, doc);
    return ok;
  }

  DetectionReport r;
  if (o.method == "umd") {
    r = detect(net, clean, mode, dc);
  } else if (o.method == "dagger") {
    r = baseline_dagger(net, clean, mode, dc);
  } else if (o.method == "ddagger") {
    dc.validate();
    const EstimateMap est = reverse_engineer_all_pairs(net, clean, mode, dc.re, dc.workers);
    TRMatrix tr = tr_matrix(net, est, clean, dc.workers);
    r = baseline_ddagger(est, tr, dc.beta);
    r.mode = detect_mode_of(mode);
    r.seed = dc.re.seed;
    if (dc.keep_tr) r.tr = std::move(tr);
  } else {
    throw InputError("unknown method '" + o.method + "'");
  }
  export_tr(o, r);
  save_json(out, to_json(r));
  print_report(r);
  return ok;
}

int run_mitigate(const MitigateOptions& o) {
  const Network net = load_model(o.model);
  const DetectionReport report = report_from_json(load_json(o.report));
  const LabeledDataset clean = load_dataset(o.clean);
  if (!report.attacked) throw InputError("report does not flag an attack; nothing to mitigate");

  MitigationConfig mc;
  mc.train.epochs = o.epochs;
  mc.train.learning_rate = o.learning_rate;
  mc.train.seed = o.seed;
  const Network fixed = mitigate(net, report, clean, mc);
  const auto out = o.out.empty() ? default_workdir() / "mitigated.bin" : o.out;
  save_model(out, fixed);

  Json summary;
  summary["seed"] = o.seed;
  summary["epochs"] = o.epochs;
  summary["pairs"] = Json::array();
  for (const auto& p : report.detected) summary["pairs"].push_back(to_json(p));
  if (!o.test.empty()) {
    const LabeledDataset test = load_dataset(o.test);
    summary["accuracy_before"] = accuracy(net, test);
    summary["accuracy_after"] = accuracy(fixed, test);
    if (!o.attack.empty()) {
      const AttackSpec attack = attack_from_json(load_json(o.attack));
      summary["asr_before"] = attack_success_rate(net, test, attack).overall;
      summary["asr_after"] = attack_success_rate(fixed, test, attack).overall;
    }
  }
  const auto summary_path = o.summary.empty() ? out.parent_path() / "mitigation.json" : o.summary;
  save_json(summary_path, summary);
  std::cout << summary.dump() << '\n';
  return ok;
}

int run_bench(BenchOptions opts) {
  opts.v.apply();
  std::vector<AttackSetting> settings;
  for (const auto& s : opts.settings) settings.push_back(parse_attack_setting(s));

  BenchConfig cfg;
  cfg.victim = opts.v.victim;
  cfg.mode = parse_re_mode(opts.mode);
  cfg.detect.re = ReConfig::defaults(cfg.mode);
  cfg.detect.beta = opts.beta;
  cfg.detect.workers = opts.workers;
  cfg.model_workers = opts.model_workers;

  const auto jobs = standard_suite(opts.seed, opts.attacked, opts.benign, settings, opts.num_pairs);
  const auto outcomes = run_suite(cfg, jobs);
  Json doc = bench_document(cfg, outcomes);
  doc["seed"] = opts.seed;
  const auto out = opts.out.empty() ? default_workdir() / "bench.json" : opts.out;
  save_json(out, doc);
  std::cout << "umd " << doc["umd"].dump() << '\n';
  return ok;
}

}  // namespace umd::cli
