#include "umd/detector.hpp"

#include <algorithm>
#include <limits>
#include <set>

namespace umd {

std::string to_string(DetectMode mode) {
  switch (mode) {
    case DetectMode::perturbation: return "perturbation";
    case DetectMode::patch: return "patch";
    case DetectMode::intermediate: return "intermediate";
    case DetectMode::combined: return "combined";
  }
  return "unknown";
}

DetectMode parse_detect_mode(const std::string& text) {
  if (text == "combined") return DetectMode::combined;
  return detect_mode_of(parse_re_mode(text));
}

DetectMode detect_mode_of(ReMode mode) {
  switch (mode) {
    case ReMode::perturbation: return DetectMode::perturbation;
    case ReMode::patch: return DetectMode::patch;
    case ReMode::intermediate: return DetectMode::intermediate;
  }
  return DetectMode::perturbation;
}

std::string to_string(Method method) {
  switch (method) {
    case Method::umd: return "umd";
    case Method::umd_dagger: return "umd-dagger";
    case Method::umd_ddagger: return "umd-ddagger";
  }
  return "unknown";
}

void DetectConfig::validate() const {
  re.validate();
  if (!(beta > 0.0 && beta < 1.0)) throw InputError("beta must lie in (0, 1)");
  if (selection_restarts == 0) throw InputError("selection_restarts must be at least 1");
}

SizeMap DetectionReport::sizes() const {
  SizeMap out;
  for (const auto& [pair, est] : estimates) out.emplace(pair, est.size);
  return out;
}

namespace {

SizeMap sizes_of(const EstimateMap& estimates) {
  SizeMap out;
  for (const auto& [pair, est] : estimates) out.emplace(pair, est.size);
  return out;
}

std::size_t classes_of(const EstimateMap& estimates) {
  int top = -1;
  for (const auto& [pair, est] : estimates) top = std::max({top, pair.source, pair.target});
  return static_cast<std::size_t>(top + 1);
}

}  // namespace

std::vector<DetectionReport> infer_multi(const EstimateMap& estimates, const TRMatrix& tr,
                                         const DetectConfig& cfg, ReMode mode,
                                         std::size_t max_clusters) {
  cfg.validate();
  if (max_clusters == 0) throw InputError("max_clusters must be at least 1");
  std::vector<std::size_t> remaining(tr.size());
  for (std::size_t i = 0; i < remaining.size(); ++i) remaining[i] = i;

  std::vector<CandidateSet> clusters;
  while (clusters.size() < max_clusters) {
    if (remaining.size() < 3) break;
    CandidateSet picked;
    try {
      picked = agglomerative_select(tr.restricted(remaining), cfg.selection_restarts);
    } catch (const InputError&) {
      if (clusters.empty()) throw;
      break;
    }
    const std::set<ClassPair> taken(picked.pairs.begin(), picked.pairs.end());
    std::erase_if(remaining, [&](std::size_t i) { return taken.contains(tr.pairs[i]); });
    clusters.push_back(std::move(picked));
  }
  if (clusters.empty()) throw InputError("not enough class pairs to select a candidate set");

  const SizeMap sizes = sizes_of(estimates);
  std::vector<double> null_sizes;
  for (auto i : remaining) null_sizes.push_back(sizes.at(tr.pairs[i]));

  std::vector<DetectionReport> reports;
  for (auto& cluster : clusters) {
    DetectionReport r;
    r.method = Method::umd;
    r.mode = detect_mode_of(mode);
    r.beta = cfg.beta;
    r.seed = cfg.re.seed;
    r.n_null = null_sizes.size();
    std::vector<double> cand;
    for (const auto& p : cluster.pairs) cand.push_back(sizes.at(p));
    r.score = anomaly_score(cand, null_sizes);
    r.threshold = threshold(cfg.beta, r.n_null);
    r.attacked = r.score > r.threshold;
    r.selected = cluster;
    if (r.attacked) r.detected = cluster.pairs;
    r.estimates = estimates;
    if (cfg.keep_tr) r.tr = tr;
    reports.push_back(std::move(r));
  }
  return reports;
}

DetectionReport infer(const EstimateMap& estimates, const TRMatrix& tr, const DetectConfig& cfg,
                      ReMode mode) {
  return infer_multi(estimates, tr, cfg, mode, 1).front();
}

DetectionReport detect(const Network& net, const LabeledDataset& clean, ReMode mode,
                       const DetectConfig& cfg) {
  cfg.validate();
  const EstimateMap estimates = reverse_engineer_all_pairs(net, clean, mode, cfg.re, cfg.workers);
  const TRMatrix tr = tr_matrix(net, estimates, clean, cfg.workers);
  return infer(estimates, tr, cfg, mode);
}

std::vector<DetectionReport> detect_multi(const Network& net, const LabeledDataset& clean,
                                          ReMode mode, const DetectConfig& cfg,
                                          std::size_t max_clusters) {
  cfg.validate();
  const EstimateMap estimates = reverse_engineer_all_pairs(net, clean, mode, cfg.re, cfg.workers);
  const TRMatrix tr = tr_matrix(net, estimates, clean, cfg.workers);
  return infer_multi(estimates, tr, cfg, mode, max_clusters);
}

DetectionReport combine_reports(DetectionReport perturbation, DetectionReport patch) {
  if (perturbation.attacked) {
    perturbation.mode = DetectMode::perturbation;
    if (patch.attacked) perturbation.auxiliary.push_back(std::move(patch));
    return perturbation;
  }
  if (patch.attacked) {
    patch.mode = DetectMode::patch;
    return patch;
  }
  perturbation.mode = DetectMode::combined;
  perturbation.auxiliary.push_back(std::move(patch));
  return perturbation;
}

DetectionReport detect_combined(const Network& net, const LabeledDataset& clean,
                                const DetectConfig& perturbation_cfg,
                                const DetectConfig& patch_cfg) {
  return combine_reports(detect(net, clean, ReMode::perturbation, perturbation_cfg),
                         detect(net, clean, ReMode::patch, patch_cfg));
}

// ---------------------------------------------------------------------------
// Ablation baselines

DetectionReport baseline_dagger(const EstimateMap& estimates, std::size_t num_classes,
                                double beta) {
  if (estimates.empty()) throw InputError("baseline needs trigger estimates");
  std::vector<ClassPair> pairs;
  std::vector<double> sizes;
  for (const auto& [pair, est] : estimates) {
    pairs.push_back(pair);
    sizes.push_back(est.size);
  }
  const auto recips = reciprocals(sizes);
  const double center = median(recips);
  const double sigma = mad_of_reciprocals(sizes);

  std::vector<double> scores(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const double num = recips[i] - center;
    if (std::isinf(center)) {
      scores[i] = 0.0;
    } else if (sigma == 0.0) {
      scores[i] = num > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    } else {
      scores[i] = num / (kMadScale * sigma);
    }
  }

  DetectionReport r;
  r.method = Method::umd_dagger;
  r.beta = beta;
  r.n_null = pairs.size();
  r.threshold = threshold(beta, r.n_null);
  r.score = *std::max_element(scores.begin(), scores.end());
  r.attacked = r.score > r.threshold;
  r.estimates = estimates;

  // Highest scores first; std::map order already makes ties lexicographic.
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  const std::size_t top = std::min(num_classes, order.size());
  for (std::size_t k = 0; k < top; ++k) r.selected.pairs.push_back(pairs[order[k]]);
  std::sort(r.selected.pairs.begin(), r.selected.pairs.end());
  r.selected.objective = r.score;
  if (r.attacked) r.detected = r.selected.pairs;
  return r;
}

DetectionReport baseline_dagger(const Network& net, const LabeledDataset& clean, ReMode mode,
                                const DetectConfig& cfg) {
  cfg.validate();
  auto r = baseline_dagger(reverse_engineer_all_pairs(net, clean, mode, cfg.re, cfg.workers),
                           net.output_dim(), cfg.beta);
  r.mode = detect_mode_of(mode);
  r.seed = cfg.re.seed;
  return r;
}

DetectionReport baseline_ddagger(const EstimateMap& estimates, const TRMatrix& tr, double beta) {
  const std::size_t K = tr.num_classes ? tr.num_classes : classes_of(estimates);
  DetectionReport r = baseline_dagger(estimates, K, beta);
  r.method = Method::umd_ddagger;

  // Maximum mutual TR of every pair with any other pair.
  std::vector<double> mutual(tr.size(), -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < tr.size(); ++i)
    for (std::size_t j = 0; j < tr.size(); ++j)
      if (i != j) mutual[i] = std::max(mutual[i], tr.at(i, j) + tr.at(j, i));
  std::vector<std::size_t> order(tr.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return mutual[a] > mutual[b]; });
  std::set<ClassPair> top_mutual;
  for (std::size_t k = 0; k < std::min(K, order.size()); ++k) top_mutual.insert(tr.pairs[order[k]]);

  std::vector<ClassPair> survivors;
  for (const auto& p : r.detected)
    if (top_mutual.contains(p)) survivors.push_back(p);
  r.attacked = !survivors.empty();
  r.detected = survivors;
  if (r.attacked) r.selected.pairs = survivors;
  return r;
}

DetectionReport baseline_ddagger(const Network& net, const LabeledDataset& clean, ReMode mode,
                                 const DetectConfig& cfg) {
  cfg.validate();
  const EstimateMap estimates = reverse_engineer_all_pairs(net, clean, mode, cfg.re, cfg.workers);
  auto r = baseline_ddagger(estimates, tr_matrix(net, estimates, clean, cfg.workers), cfg.beta);
  r.mode = detect_mode_of(mode);
  r.seed = cfg.re.seed;
  return r;
}

// ---------------------------------------------------------------------------
// Mitigation

LabeledDataset unlearning_set(const DetectionReport& report, const LabeledDataset& clean) {
  if (!report.attacked || report.detected.empty())
    throw InputError("mitigation needs a report that detected an attack");
  LabeledDataset out = clean;
  for (const auto& pair : report.detected) {
    const auto it = report.estimates.find(pair);
    if (it == report.estimates.end())
      throw InputError("report has no trigger estimate for detected pair " + to_string(pair));
    const TriggerEstimate& est = it->second;
    if (est.mode == ReMode::intermediate)
      throw InputError("feature-space triggers cannot be embedded for unlearning");
    const Matrix rows = clean.class_rows(pair.source);
    if (rows.rows() == 0)
      throw InputError("no clean samples of source class " + std::to_string(pair.source));
    out.append(embed_rows(rows, est.trigger), pair.source);
  }
  return out;
}

Network mitigate(const Network& net, const DetectionReport& report, const LabeledDataset& clean,
                 const MitigationConfig& cfg) {
  return train(net, unlearning_set(report, clean), cfg.train);
}

// ---------------------------------------------------------------------------
// Metrics

BenchmarkResult evaluate_benchmark(const std::vector<Verdict>& verdicts) {
  if (verdicts.empty()) throw InputError("benchmark needs at least one verdict");
  BenchmarkResult out;
  std::size_t correct = 0;
  std::size_t attacked_correct = 0;
  std::size_t benign_correct = 0;
  for (const auto& v : verdicts) {
    const bool truth = v.planted.has_value();
    const bool ok = v.attacked == truth;
    correct += ok;
    if (truth) {
      ++out.n_attacked;
      attacked_correct += ok;
      if (v.attacked) {
        const std::set<ClassPair> planted(v.planted->begin(), v.planted->end());
        std::size_t hit = 0;
        for (const auto& p : std::set<ClassPair>(v.detected.begin(), v.detected.end()))
          hit += planted.contains(p);
        out.pdr.push_back(static_cast<double>(hit) / static_cast<double>(planted.size()));
      }
    } else {
      ++out.n_benign;
      benign_correct += ok;
    }
  }
  out.mia = static_cast<double>(correct) / static_cast<double>(verdicts.size());
  out.attacked_mia = out.n_attacked ? static_cast<double>(attacked_correct) / out.n_attacked : 0.0;
  out.benign_mia = out.n_benign ? static_cast<double>(benign_correct) / out.n_benign : 0.0;
  if (!out.pdr.empty()) {
    double sum = 0.0;
    for (double p : out.pdr) sum += p;
    out.mean_pdr = sum / static_cast<double>(out.pdr.size());
  }
  return out;
}

}  // namespace umd
