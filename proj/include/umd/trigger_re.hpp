#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "umd/attack.hpp"
#include "umd/nn.hpp"

namespace umd {

enum class ReMode { perturbation, patch, intermediate };

std::string to_string(ReMode mode);
ReMode parse_re_mode(const std::string& text);

/// How a perturbation-style update turns the surrogate gradient into a step.
/// `normalized` moves a fixed L2 distance of learning_rate per step, which
/// keeps the search alive when the target posterior (and hence its gradient)
/// is vanishingly small at v = 0.
enum class StepRule { plain, normalized };

struct ReConfig {
  double pi = 0.9;              // targeted misclassification fraction
  double learning_rate = 0.003;
  std::size_t max_steps = 1000; // per restart
  std::size_t images_per_class = 10;
  std::size_t restarts = 5;     // patch only
  double lambda_init = 1e-3;    // patch only
  std::size_t layer_index = 2;  // intermediate only
  std::size_t check_every = 10;
  StepRule step_rule = StepRule::normalized;
  std::uint64_t seed = 0;

  static ReConfig defaults(ReMode mode);
  void validate() const;
};

struct TriggerEstimate {
  ClassPair pair{0, 1};
  ReMode mode = ReMode::perturbation;
  TriggerSpec trigger;        // perturbation or patch (mask relaxed to [0,1])
  Vector feature_shift;       // intermediate mode
  std::size_t layer_index = 0;
  double size = 0.0;          // ||v||_2, ||m||_1 or ||w||_2
  bool converged = false;
  std::size_t steps_used = 0;
  double achieved_fraction = 0.0;
  // Patch: size of the best pi-meeting candidate at each check once one
  // exists. Shift searches stop at the first feasible iterate and record it.
  std::vector<double> best_size_history;
};

using EstimateMap = std::map<ClassPair, TriggerEstimate>;

struct SurrogateValue {
  double value = 0.0;
  Vector gradient;
};

/// J(v) = -mean_x p(t | clip(x + v)) and its gradient in v.
SurrogateValue perturbation_surrogate(const Network& net, const Matrix& source_rows, int target,
                                      const Vector& v);

/// J(w) = -mean_x p'(t | f1(x) + w) over precomputed features f1(x).
SurrogateValue intermediate_surrogate(const Network& suffix, const Matrix& features, int target,
                                      const Vector& w);

struct PatchSurrogateValue {
  double value = 0.0;
  Vector grad_pattern;
  Vector grad_mask;
};

/// J(u, m) = -mean_x log p(t | (1 - m) * x + m * u) + lambda * ||m||_1, m >= 0.
PatchSurrogateValue patch_surrogate(const Network& net, const Matrix& source_rows, int target,
                                    const Vector& pattern, const Vector& mask, double lambda);

TriggerEstimate reverse_engineer_perturbation(const Network& net, const Matrix& source_rows,
                                              ClassPair pair, const ReConfig& cfg);

TriggerEstimate reverse_engineer_patch(const Network& net, const Matrix& source_rows,
                                       ClassPair pair, const ReConfig& cfg);

/// `prefix`/`suffix` come from Network::split_at(cfg.layer_index).
TriggerEstimate reverse_engineer_intermediate(const Network& prefix, const Network& suffix,
                                              const Matrix& source_rows, ClassPair pair,
                                              const ReConfig& cfg);

/// First `per_class` samples of every class that `net` classifies correctly.
std::vector<Matrix> clean_images_per_class(const Network& net, const LabeledDataset& data,
                                           std::size_t per_class);

/// One estimate for every ordered pair (s, t), s != t. Per-pair seeds are
/// derived from cfg.seed so the result does not depend on `workers`.
EstimateMap reverse_engineer_all_pairs(const Network& net, const LabeledDataset& clean,
                                       ReMode mode, const ReConfig& cfg, std::size_t workers = 1);

/// Predictions for `rows` after applying an estimate's trigger (input space
/// for perturbation/patch, feature space for intermediate).
std::vector<int> predict_triggered(const Network& net, const TriggerEstimate& est,
                                   const Matrix& rows);

}  // namespace umd
