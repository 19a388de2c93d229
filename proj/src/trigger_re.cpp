#include "umd/trigger_re.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace umd {

std::string to_string(ReMode mode) {
  switch (mode) {
    case ReMode::perturbation: return "perturbation";
    case ReMode::patch: return "patch";
    case ReMode::intermediate: return "intermediate";
  }
  return "unknown";
}

ReMode parse_re_mode(const std::string& text) {
  if (text == "perturbation" || text == "pert") return ReMode::perturbation;
  if (text == "patch") return ReMode::patch;
  if (text == "intermediate") return ReMode::intermediate;
  throw InputError("unknown reverse-engineering mode '" + text + "'");
}

ReConfig ReConfig::defaults(ReMode mode) {
  ReConfig cfg;
  if (mode == ReMode::patch) {
    cfg.images_per_class = 20;
    cfg.learning_rate = 0.05;
  }
  return cfg;
}

void ReConfig::validate() const {
  if (!(pi > 0.0 && pi <= 1.0)) throw InputError("pi must lie in (0, 1]");
  if (max_steps == 0) throw InputError("max_steps must be at least 1");
  if (!(learning_rate > 0.0)) throw InputError("learning_rate must be positive");
  if (check_every == 0) throw InputError("check_every must be at least 1");
  if (images_per_class == 0) throw InputError("images_per_class must be at least 1");
  if (restarts == 0) throw InputError("restarts must be at least 1");
}

namespace {

double fraction_to(const std::vector<int>& pred, int target) {
  if (pred.empty()) return 0.0;
  return static_cast<double>(std::count(pred.begin(), pred.end(), target)) /
         static_cast<double>(pred.size());
}

Matrix shift_rows(const Matrix& rows, const Vector& shift) {
  Matrix out = rows;
  out.rowwise() += shift.transpose();
  return out;
}

Matrix clip_unit(const Matrix& m) { return m.cwiseMax(0.0).cwiseMin(1.0); }

// Mean-of-negative-posterior surrogate shared by the input-space and
// feature-space searches. `clip` selects [.]_c on the shifted inputs.
SurrogateValue neg_posterior_surrogate(const Network& net, const Matrix& rows, int target,
                                       const Vector& shift, bool clip) {
  if (rows.rows() == 0) throw InputError("surrogate needs at least one sample");
  if (shift.size() != rows.cols()) throw InputError("shift dimension does not match samples");
  const Matrix shifted = shift_rows(rows, shift);
  const Matrix inputs = clip ? clip_unit(shifted) : shifted;
  const Matrix p = net.forward(inputs);
  const auto n = static_cast<double>(rows.rows());
  const Matrix g_logits = objective_logit_grad(p, PosteriorObjective::neg_posterior, target) / n;
  Matrix g_in = net.backprop_input(inputs, g_logits);
  if (clip) {
    g_in = g_in.cwiseProduct(
        ((shifted.array() > 0.0) && (shifted.array() < 1.0)).cast<double>().matrix());
  }
  SurrogateValue out;
  out.value = -p.col(target).mean();
  out.gradient = g_in.colwise().sum().transpose();
  return out;
}

struct ShiftSearch {
  Vector shift;
  double fraction = 0.0;
  bool converged = false;
  std::size_t steps = 0;
};

// Descend the surrogate from shift = 0 until the fraction of rows sent to
// `target` reaches pi, checking every cfg.check_every steps. On failure the
// lowest-objective iterate is kept.
template <typename Surrogate, typename Fraction>
ShiftSearch descend_shift(Eigen::Index dim, const ReConfig& cfg, Surrogate surrogate,
                          Fraction fraction) {
  ShiftSearch out;
  Vector v = Vector::Zero(dim);
  out.fraction = fraction(v);
  if (out.fraction >= cfg.pi) {
    out.shift = v;
    out.converged = true;
    return out;
  }
  Vector best = v;
  double best_value = std::numeric_limits<double>::infinity();
  std::size_t step = 0;
  for (; step < cfg.max_steps; ++step) {
    const SurrogateValue s = surrogate(v);
    if (s.value < best_value) {
      best_value = s.value;
      best = v;
    }
    const double gnorm = s.gradient.norm();
    if (!(gnorm > 0.0) || !std::isfinite(gnorm)) break;
    if (cfg.step_rule == StepRule::normalized) {
      v -= (cfg.learning_rate / gnorm) * s.gradient;
    } else {
      v -= cfg.learning_rate * s.gradient;
    }
    if ((step + 1) % cfg.check_every == 0) {
      const double frac = fraction(v);
      if (frac >= cfg.pi) {
        out.shift = v;
        out.fraction = frac;
        out.converged = true;
        out.steps = step + 1;
        return out;
      }
    }
  }
  out.steps = step;
  if (surrogate(v).value < best_value) best = v;
  out.shift = best;
  out.fraction = fraction(best);
  return out;
}

}  // namespace

SurrogateValue perturbation_surrogate(const Network& net, const Matrix& source_rows, int target,
                                      const Vector& v) {
  return neg_posterior_surrogate(net, source_rows, target, v, /*clip=*/true);
}

SurrogateValue intermediate_surrogate(const Network& suffix, const Matrix& features, int target,
                                      const Vector& w) {
  return neg_posterior_surrogate(suffix, features, target, w, /*clip=*/false);
}

PatchSurrogateValue patch_surrogate(const Network& net, const Matrix& source_rows, int target,
                                    const Vector& pattern, const Vector& mask, double lambda) {
  if (source_rows.rows() == 0) throw InputError("surrogate needs at least one sample");
  if (pattern.size() != source_rows.cols() || mask.size() != source_rows.cols())
    throw InputError("patch dimension does not match samples");
  TriggerSpec relaxed;
  relaxed.kind = TriggerKind::patch;
  relaxed.pattern = pattern;
  relaxed.mask = mask;
  const Matrix inputs = embed_rows(source_rows, relaxed);
  const Matrix p = net.forward(inputs);
  const auto n = static_cast<double>(source_rows.rows());
  const Matrix g_logits = objective_logit_grad(p, PosteriorObjective::neg_log_posterior, target) / n;
  const Matrix g_in = net.backprop_input(inputs, g_logits);

  PatchSurrogateValue out;
  double nll = 0.0;
  for (Eigen::Index r = 0; r < p.rows(); ++r) nll -= std::log(p(r, target));
  out.value = nll / n + lambda * mask.cwiseAbs().sum();
  out.grad_pattern = (g_in.colwise().sum().transpose().array() * mask.array()).matrix();
  // d/dm of (1 - m) x + m u is (u - x), row by row.
  Matrix diff = (-source_rows).rowwise() + pattern.transpose();
  out.grad_mask = g_in.cwiseProduct(diff).colwise().sum().transpose();
  out.grad_mask.array() += lambda * mask.array().sign();
  return out;
}

TriggerEstimate reverse_engineer_perturbation(const Network& net, const Matrix& source_rows,
                                              ClassPair pair, const ReConfig& cfg) {
  cfg.validate();
  if (source_rows.rows() == 0) throw InputError("no source samples for " + to_string(pair));
  const int t = pair.target;
  auto surrogate = [&](const Vector& v) { return perturbation_surrogate(net, source_rows, t, v); };
  auto fraction = [&](const Vector& v) {
    return fraction_to(net.predict(clip_unit(shift_rows(source_rows, v))), t);
  };
  ShiftSearch s = descend_shift(source_rows.cols(), cfg, surrogate, fraction);

  TriggerEstimate est;
  est.pair = pair;
  est.mode = ReMode::perturbation;
  est.size = s.shift.norm();
  est.trigger = TriggerSpec::perturbation(std::move(s.shift));
  est.converged = s.converged;
  est.steps_used = s.steps;
  est.achieved_fraction = s.fraction;
  est.best_size_history = {est.size};
  return est;
}

TriggerEstimate reverse_engineer_intermediate(const Network& prefix, const Network& suffix,
                                              const Matrix& source_rows, ClassPair pair,
                                              const ReConfig& cfg) {
  cfg.validate();
  if (source_rows.rows() == 0) throw InputError("no source samples for " + to_string(pair));
  if (prefix.output_dim() != suffix.input_dim())
    throw InputError("prefix and suffix do not compose");
  const Matrix features = prefix.outputs(source_rows);
  const int t = pair.target;
  auto surrogate = [&](const Vector& w) { return intermediate_surrogate(suffix, features, t, w); };
  auto fraction = [&](const Vector& w) {
    return fraction_to(suffix.predict(shift_rows(features, w)), t);
  };
  ShiftSearch s = descend_shift(features.cols(), cfg, surrogate, fraction);

  TriggerEstimate est;
  est.pair = pair;
  est.mode = ReMode::intermediate;
  est.layer_index = prefix.num_layers();
  est.size = s.shift.norm();
  est.feature_shift = std::move(s.shift);
  est.converged = s.converged;
  est.steps_used = s.steps;
  est.achieved_fraction = s.fraction;
  est.best_size_history = {est.size};
  return est;
}

TriggerEstimate reverse_engineer_patch(const Network& net, const Matrix& source_rows,
                                       ClassPair pair, const ReConfig& cfg) {
  cfg.validate();
  if (source_rows.rows() == 0) throw InputError("no source samples for " + to_string(pair));
  constexpr double beta1 = 0.9;
  constexpr double beta2 = 0.999;
  constexpr double eps = 1e-8;
  constexpr std::size_t patience = 5;
  constexpr double lambda_factor = 1.5;

  const Eigen::Index d = source_rows.cols();
  const int t = pair.target;
  auto fraction = [&](const Vector& u, const Vector& m) {
    TriggerSpec relaxed;
    relaxed.kind = TriggerKind::patch;
    relaxed.pattern = u;
    relaxed.mask = m;
    return fraction_to(net.predict(embed_rows(source_rows, relaxed)), t);
  };

  struct RunResult {
    Vector pattern, mask;
    double fraction = 0.0;
    bool met = false;
  };

  TriggerEstimate est;
  est.pair = pair;
  est.mode = ReMode::patch;
  bool have_winner = false;
  RunResult winner;
  RunResult fallback;
  fallback.fraction = -1.0;
  double best_l1 = std::numeric_limits<double>::infinity();

  for (std::size_t restart = 0; restart < cfg.restarts; ++restart) {
    std::mt19937_64 rng(derive_seed(cfg.seed, restart));
    std::uniform_real_distribution<double> init(0.4, 0.6);
    Vector u(d), m(d);
    for (Eigen::Index i = 0; i < d; ++i) u(i) = init(rng);
    for (Eigen::Index i = 0; i < d; ++i) m(i) = init(rng);

    Vector mu = Vector::Zero(d), vu = Vector::Zero(d);
    Vector mm = Vector::Zero(d), vm = Vector::Zero(d);
    double lambda = cfg.lambda_init;
    std::size_t met_streak = 0;
    std::size_t miss_streak = 0;

    RunResult run_best;           // min ||m||_1 among pi-meeting checks
    RunResult run_top;            // highest fraction seen
    run_top.fraction = -1.0;
    double run_best_l1 = std::numeric_limits<double>::infinity();

    for (std::size_t step = 0; step < cfg.max_steps; ++step) {
      const PatchSurrogateValue s = patch_surrogate(net, source_rows, t, u, m, lambda);
      const auto k = static_cast<double>(step + 1);
      const double c1 = 1.0 - std::pow(beta1, k);
      const double c2 = 1.0 - std::pow(beta2, k);
      mu = beta1 * mu + (1.0 - beta1) * s.grad_pattern;
      vu = beta2 * vu + (1.0 - beta2) * s.grad_pattern.cwiseProduct(s.grad_pattern);
      mm = beta1 * mm + (1.0 - beta1) * s.grad_mask;
      vm = beta2 * vm + (1.0 - beta2) * s.grad_mask.cwiseProduct(s.grad_mask);
      u.array() -= cfg.learning_rate * (mu.array() / c1) / ((vu.array() / c2).sqrt() + eps);
      m.array() -= cfg.learning_rate * (mm.array() / c1) / ((vm.array() / c2).sqrt() + eps);
      u = u.cwiseMax(0.0).cwiseMin(1.0);
      m = m.cwiseMax(0.0).cwiseMin(1.0);
      ++est.steps_used;

      if ((step + 1) % cfg.check_every != 0) continue;
      const double frac = fraction(u, m);
      const double l1 = m.sum();
      if (frac > run_top.fraction) run_top = {u, m, frac, frac >= cfg.pi};
      if (frac >= cfg.pi) {
        ++met_streak;
        miss_streak = 0;
        if (l1 < run_best_l1) {
          run_best_l1 = l1;
          run_best = {u, m, frac, true};
        }
      } else {
        ++miss_streak;
        met_streak = 0;
      }
      if (met_streak >= patience) {
        lambda *= lambda_factor;
        met_streak = 0;
      } else if (miss_streak >= patience) {
        lambda /= lambda_factor;
        miss_streak = 0;
      }
      const double so_far = std::min(best_l1, run_best_l1);
      if (std::isfinite(so_far)) est.best_size_history.push_back(so_far);
    }

    if (run_best.met && run_best_l1 < best_l1) {
      best_l1 = run_best_l1;
      winner = run_best;
      have_winner = true;
    }
    if (run_top.fraction > fallback.fraction) fallback = run_top;
  }

  const RunResult& chosen = have_winner ? winner : fallback;
  est.converged = have_winner;
  est.achieved_fraction = chosen.fraction;
  est.trigger.kind = TriggerKind::patch;
  est.trigger.pattern = chosen.pattern;
  est.trigger.mask = chosen.mask;
  est.size = chosen.mask.sum();
  return est;
}

std::vector<Matrix> clean_images_per_class(const Network& net, const LabeledDataset& data,
                                           std::size_t per_class) {
  if (data.num_classes() != net.output_dim())
    throw InputError("clean set class count does not match the model");
  const auto pred = net.predict(data.inputs());
  const auto K = data.num_classes();
  std::vector<std::vector<Eigen::Index>> picked(K);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const int y = data.labels()[i];
    auto& bucket = picked[static_cast<std::size_t>(y)];
    if (pred[i] == y && bucket.size() < per_class) bucket.push_back(static_cast<Eigen::Index>(i));
  }
  std::vector<Matrix> out;
  out.reserve(K);
  for (std::size_t k = 0; k < K; ++k) {
    if (picked[k].size() < per_class)
      throw InputError("class " + std::to_string(k) + " has only " +
                       std::to_string(picked[k].size()) +
                       " correctly classified clean samples, need " + std::to_string(per_class));
    Matrix rows(static_cast<Eigen::Index>(per_class), data.inputs().cols());
    for (std::size_t r = 0; r < per_class; ++r)
      rows.row(static_cast<Eigen::Index>(r)) = data.inputs().row(picked[k][r]);
    out.push_back(std::move(rows));
  }
  return out;
}

EstimateMap reverse_engineer_all_pairs(const Network& net, const LabeledDataset& clean,
                                       ReMode mode, const ReConfig& cfg, std::size_t workers) {
  cfg.validate();
  const auto pools = clean_images_per_class(net, clean, cfg.images_per_class);
  const int K = static_cast<int>(net.output_dim());
  std::vector<ClassPair> pairs;
  for (int s = 0; s < K; ++s)
    for (int t = 0; t < K; ++t)
      if (s != t) pairs.emplace_back(s, t);

  std::pair<Network, Network> split;
  if (mode == ReMode::intermediate) split = net.split_at(cfg.layer_index);

  std::vector<TriggerEstimate> results(pairs.size());
  parallel_for(pairs.size(), workers, [&](std::size_t i) {
    const ClassPair p = pairs[i];
    ReConfig local = cfg;
    local.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(p.source),
                             static_cast<std::uint64_t>(p.target));
    const Matrix& rows = pools[static_cast<std::size_t>(p.source)];
    switch (mode) {
      case ReMode::perturbation:
        results[i] = reverse_engineer_perturbation(net, rows, p, local);
        break;
      case ReMode::patch:
        results[i] = reverse_engineer_patch(net, rows, p, local);
        break;
      case ReMode::intermediate:
        results[i] = reverse_engineer_intermediate(split.first, split.second, rows, p, local);
        break;
    }
  });
  EstimateMap out;
  for (std::size_t i = 0; i < pairs.size(); ++i) out.emplace(pairs[i], std::move(results[i]));
  return out;
}

std::vector<int> predict_triggered(const Network& net, const TriggerEstimate& est,
                                   const Matrix& rows) {
  if (est.mode == ReMode::intermediate) {
    const auto [prefix, suffix] = net.split_at(est.layer_index);
    return suffix.predict(shift_rows(prefix.outputs(rows), est.feature_shift));
  }
  return net.predict(embed_rows(rows, est.trigger));
}

}  // namespace umd
