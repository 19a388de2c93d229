#include "umd/bench.hpp"

#include <cmath>
#include <set>

namespace umd {

namespace {

std::size_t layout_side(std::size_t d) {
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(d))));
  if (side * side != d) throw InputError("input_dim must be a square image layout");
  return side;
}

std::vector<std::size_t> widths_of(const VictimConfig& cfg) {
  std::vector<std::size_t> w{cfg.input_dim};
  w.insert(w.end(), cfg.hidden.begin(), cfg.hidden.end());
  w.push_back(cfg.num_classes);
  return w;
}

BlobGenerator generator_of(const VictimConfig& cfg, std::uint64_t seed) {
  return BlobGenerator(cfg.num_classes, cfg.input_dim, cfg.separation, derive_seed(seed, 1));
}

Network fit(const VictimConfig& cfg, const LabeledDataset& data, std::uint64_t seed) {
  const auto widths = widths_of(cfg);
  TrainConfig tc = cfg.train;
  tc.seed = derive_seed(seed, 9);
  return train(Network::glorot(widths, derive_seed(seed, 8)), data, tc);
}

}  // namespace

void VictimConfig::validate() const {
  if (num_classes < 3) throw InputError("victims need K >= 3");
  layout_side(input_dim);
  if (train_per_class == 0 || test_per_class == 0 || clean_per_class == 0)
    throw InputError("per-class sample counts must be positive");
  if (!(trigger_magnitude > 0.0)) throw InputError("trigger magnitude must be positive");
  if (!(success_asr >= 0.0 && success_asr <= 1.0)) throw InputError("success_asr must lie in [0,1]");
  train.validate();
}

Victim forge_victim(const VictimConfig& cfg, const VictimJob& job) {
  cfg.validate();
  Victim v;
  v.job = job;
  const auto gen = generator_of(cfg, job.seed);
  v.train = gen.sample(cfg.train_per_class, derive_seed(job.seed, 2));
  v.test = gen.sample(cfg.test_per_class, derive_seed(job.seed, 3));
  v.clean = gen.sample(cfg.clean_per_class, derive_seed(job.seed, 4));

  LabeledDataset fit_data = v.train;
  if (job.setting) {
    const std::size_t side = layout_side(cfg.input_dim);
    TriggerSpec trigger = cfg.trigger_kind == TriggerKind::perturbation
                              ? x_diagonal_trigger(side, cfg.trigger_magnitude)
                              : random_patch_trigger(side, cfg.patch_side, derive_seed(job.seed, 5));
    v.attack = build_attack_spec(*job.setting, cfg.num_classes, std::move(trigger),
                                 derive_seed(job.seed, 6), job.num_pairs, cfg.poison_per_source);
    fit_data = poison(v.train, *v.attack, derive_seed(job.seed, 7));
  }
  v.net = fit(cfg, fit_data, job.seed);
  v.accuracy = accuracy(v.net, v.test);
  if (v.attack) {
    v.asr = attack_success_rate(v.net, v.test, *v.attack);
    v.attack_successful = v.asr->overall >= cfg.success_asr;
  }
  return v;
}

Network train_clean_twin(const VictimConfig& cfg, const Victim& victim) {
  return fit(cfg, victim.train, victim.job.seed);
}

Json forge_summary(const Victim& victim) {
  Json j;
  j["seed"] = victim.job.seed;
  j["setting"] = victim.job.setting ? to_string(*victim.job.setting) : "benign";
  j["accuracy"] = victim.accuracy;
  if (victim.asr) {
    j["asr"] = victim.asr->overall;
    Json per = Json::array();
    for (const auto& [pair, rate] : victim.asr->per_pair) {
      Json p = to_json(pair);
      p["asr"] = rate;
      per.push_back(std::move(p));
    }
    j["per_pair_asr"] = std::move(per);
    j["attack_successful"] = victim.attack_successful;
  }
  return j;
}

void BenchConfig::validate() const {
  victim.validate();
  detect.validate();
  if (model_workers == 0) throw InputError("model_workers must be at least 1");
}

std::vector<ModelOutcome> run_suite(const BenchConfig& cfg, const std::vector<VictimJob>& jobs) {
  cfg.validate();
  if (jobs.empty()) throw InputError("benchmark suite is empty");
  std::vector<ModelOutcome> outcomes(jobs.size());
  parallel_for(jobs.size(), cfg.model_workers, [&](std::size_t i) {
    const Victim v = forge_victim(cfg.victim, jobs[i]);
    DetectConfig dc = cfg.detect;
    dc.re.seed = derive_seed(jobs[i].seed, 0xde7ec7);
    const EstimateMap estimates = reverse_engineer_all_pairs(v.net, v.clean, cfg.mode, dc.re, dc.workers);
    const TRMatrix tr = tr_matrix(v.net, estimates, v.clean, dc.workers);

    ModelOutcome& out = outcomes[i];
    out.job = jobs[i];
    out.attack = v.attack;
    out.accuracy = v.accuracy;
    out.asr = v.asr ? v.asr->overall : 0.0;
    out.report = infer(estimates, tr, dc, cfg.mode);
    if (cfg.baselines) {
      out.dagger = baseline_dagger(estimates, cfg.victim.num_classes, dc.beta);
      out.dagger->mode = detect_mode_of(cfg.mode);
      out.dagger->seed = dc.re.seed;
      out.ddagger = baseline_ddagger(estimates, tr, dc.beta);
      out.ddagger->mode = detect_mode_of(cfg.mode);
      out.ddagger->seed = dc.re.seed;
    }
  });
  return outcomes;
}

Verdict verdict_of(const DetectionReport& report, const std::optional<AttackSpec>& attack) {
  Verdict v;
  v.attacked = report.attacked;
  v.detected = report.detected;
  if (attack) v.planted = attack->pairs;
  return v;
}

Json to_json(const BenchmarkResult& result) {
  Json j;
  j["mia"] = result.mia;
  j["attacked_mia"] = result.attacked_mia;
  j["benign_mia"] = result.benign_mia;
  j["n_attacked"] = result.n_attacked;
  j["n_benign"] = result.n_benign;
  j["pdr"] = result.pdr;
  j["mean_pdr"] = result.mean_pdr;
  return j;
}

Json bench_document(const BenchConfig& cfg, const std::vector<ModelOutcome>& outcomes) {
  std::vector<Verdict> umd, dagger, ddagger;
  Json models = Json::array();
  for (const auto& o : outcomes) {
    umd.push_back(verdict_of(o.report, o.attack));
    Json m;
    m["seed"] = o.job.seed;
    m["setting"] = o.job.setting ? to_string(*o.job.setting) : "benign";
    m["planted"] = Json::array();
    if (o.attack)
      for (const auto& p : o.attack->pairs) m["planted"].push_back(to_json(p));
    m["accuracy"] = o.accuracy;
    if (o.attack) m["asr"] = o.asr;
    m["attacked"] = o.report.attacked;
    m["score"] = o.report.score;
    if (std::isinf(o.report.score)) m["score"] = "inf";
    m["threshold"] = o.report.threshold;
    m["detected"] = Json::array();
    for (const auto& p : o.report.detected) m["detected"].push_back(to_json(p));
    if (o.attack && o.attack->pairs.size() == 1 && o.report.attacked) {
      // One-to-one attacks: note whether the flagged pairs hit the planted target.
      bool shares = false;
      for (const auto& p : o.report.detected) shares |= p.target == o.attack->pairs.front().target;
      m["detected_shares_target"] = shares;
    }
    if (o.dagger) {
      dagger.push_back(verdict_of(*o.dagger, o.attack));
      m["dagger_attacked"] = o.dagger->attacked;
    }
    if (o.ddagger) {
      ddagger.push_back(verdict_of(*o.ddagger, o.attack));
      m["ddagger_attacked"] = o.ddagger->attacked;
    }
    models.push_back(std::move(m));
  }
  Json j;
  j["mode"] = to_string(cfg.mode);
  j["beta"] = cfg.detect.beta;
  j["umd"] = to_json(evaluate_benchmark(umd));
  if (!dagger.empty()) j["umd_dagger"] = to_json(evaluate_benchmark(dagger));
  if (!ddagger.empty()) j["umd_ddagger"] = to_json(evaluate_benchmark(ddagger));
  j["models"] = std::move(models);
  return j;
}

std::vector<VictimJob> standard_suite(std::uint64_t master_seed, std::size_t attacked,
                                      std::size_t benign,
                                      const std::vector<AttackSetting>& settings,
                                      std::size_t num_pairs) {
  if (attacked + benign == 0) throw InputError("benchmark suite is empty");
  if (attacked > 0 && settings.empty()) throw InputError("attacked models need a setting");
  std::vector<VictimJob> jobs;
  for (std::size_t i = 0; i < attacked; ++i)
    jobs.push_back({settings[i % settings.size()], derive_seed(master_seed, 0xa7, i), num_pairs});
  for (std::size_t i = 0; i < benign; ++i)
    jobs.push_back({std::nullopt, derive_seed(master_seed, 0xbe, i), 0});
  return jobs;
}

}  // namespace umd
