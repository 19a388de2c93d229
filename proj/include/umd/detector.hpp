#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "umd/anomaly.hpp"
#include "umd/pair_select.hpp"
#include "umd/tr_stats.hpp"
#include "umd/trigger_re.hpp"

namespace umd {

enum class DetectMode { perturbation, patch, intermediate, combined };

std::string to_string(DetectMode mode);
DetectMode parse_detect_mode(const std::string& text);
DetectMode detect_mode_of(ReMode mode);

/// Which inference rule produced a report.
enum class Method { umd, umd_dagger, umd_ddagger };
std::string to_string(Method method);

struct DetectConfig {
  ReConfig re;
  double beta = 0.05;
  std::size_t selection_restarts = 5;
  std::size_t workers = 1;
  bool keep_tr = false;  // attach the TR map to the report

  void validate() const;
};

struct DetectionReport {
  Method method = Method::umd;
  DetectMode mode = DetectMode::perturbation;
  bool attacked = false;
  CandidateSet selected;             // the candidate set, inspected either way
  std::vector<ClassPair> detected;   // equals selected.pairs iff attacked
  double score = 0.0;
  double threshold = 0.0;
  double beta = 0.05;
  std::size_t n_null = 0;
  std::uint64_t seed = 0;
  EstimateMap estimates;
  std::optional<TRMatrix> tr;
  std::vector<DetectionReport> auxiliary;

  SizeMap sizes() const;
};

/// Selection plus anomaly detection on precomputed RE results and TR map.
DetectionReport infer(const EstimateMap& estimates, const TRMatrix& tr, const DetectConfig& cfg,
                      ReMode mode);

DetectionReport detect(const Network& net, const LabeledDataset& clean, ReMode mode,
                       const DetectConfig& cfg);

/// Runs perturbation- and patch-mode detection; attacked if either claims
/// it. The perturbation report wins when both detect, with the patch report
/// attached as auxiliary.
DetectionReport combine_reports(DetectionReport perturbation, DetectionReport patch);
DetectionReport detect_combined(const Network& net, const LabeledDataset& clean,
                                const DetectConfig& perturbation_cfg,
                                const DetectConfig& patch_cfg);

/// Repeatedly selects clusters among not-yet-clustered pairs, then scores
/// every cluster against the shared null of pairs in no cluster.
std::vector<DetectionReport> infer_multi(const EstimateMap& estimates, const TRMatrix& tr,
                                         const DetectConfig& cfg, ReMode mode,
                                         std::size_t max_clusters);
std::vector<DetectionReport> detect_multi(const Network& net, const LabeledDataset& clean,
                                          ReMode mode, const DetectConfig& cfg,
                                          std::size_t max_clusters);

/// Per-pair MAD scores over all statistics, without TR. Attack if any score
/// exceeds theta(beta, K(K-1)); the K highest-scoring pairs are reported.
DetectionReport baseline_dagger(const EstimateMap& estimates, std::size_t num_classes,
                                double beta);
DetectionReport baseline_dagger(const Network& net, const LabeledDataset& clean, ReMode mode,
                                const DetectConfig& cfg);

/// Keeps the dagger pairs whose maximum mutual TR ranks in the top K.
DetectionReport baseline_ddagger(const EstimateMap& estimates, const TRMatrix& tr, double beta);
DetectionReport baseline_ddagger(const Network& net, const LabeledDataset& clean, ReMode mode,
                                 const DetectConfig& cfg);

struct MitigationConfig {
  TrainConfig train{10, 0.02, 32, 0, Optimizer::plain_gradient};
};

/// Fine-tunes on clean samples plus source-class samples carrying each
/// detected pair's reverse-engineered trigger, labeled with their true class.
Network mitigate(const Network& net, const DetectionReport& report, const LabeledDataset& clean,
                 const MitigationConfig& cfg);

/// The fine-tuning set used by `mitigate`.
LabeledDataset unlearning_set(const DetectionReport& report, const LabeledDataset& clean);

struct Verdict {
  bool attacked = false;
  std::vector<ClassPair> detected;
  std::optional<std::vector<ClassPair>> planted;  // nullopt for benign models
};

struct BenchmarkResult {
  double mia = 0.0;
  double attacked_mia = 0.0;
  double benign_mia = 0.0;
  std::size_t n_attacked = 0;
  std::size_t n_benign = 0;
  std::vector<double> pdr;  // one per true positive
  double mean_pdr = 0.0;
};

BenchmarkResult evaluate_benchmark(const std::vector<Verdict>& verdicts);

}  // namespace umd
