#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "umd/detector.hpp"
#include "umd/io.hpp"

namespace umd {

/// Recipe for one synthetic victim: blob data, optional planted attack,
/// training. Every random draw is derived from the victim seed.
struct VictimConfig {
  std::size_t num_classes = 5;
  std::size_t input_dim = 64;
  std::vector<std::size_t> hidden{64, 32};
  double separation = 1.6;
  std::size_t train_per_class = 600;
  std::size_t test_per_class = 200;
  std::size_t clean_per_class = 40;  // defender's D_c
  std::size_t poison_per_source = 400;
  double trigger_magnitude = 0.2;
  std::size_t patch_side = 2;        // patch triggers only
  TriggerKind trigger_kind = TriggerKind::perturbation;
  TrainConfig train{60, 1e-3, 32, 0, Optimizer::adaptive_moment};
  double success_asr = 0.78;

  void validate() const;
};

struct VictimJob {
  std::optional<AttackSetting> setting;  // nullopt: benign
  std::uint64_t seed = 0;
  std::size_t num_pairs = 0;             // X2X only
};

struct Victim {
  VictimJob job;
  Network net;
  LabeledDataset train;
  LabeledDataset test;
  LabeledDataset clean;
  std::optional<AttackSpec> attack;
  double accuracy = 0.0;
  std::optional<AttackSuccess> asr;
  bool attack_successful = false;
};

Victim forge_victim(const VictimConfig& cfg, const VictimJob& job);

/// The same recipe trained without poisoning.
Network train_clean_twin(const VictimConfig& cfg, const Victim& victim);

Json forge_summary(const Victim& victim);

struct BenchConfig {
  VictimConfig victim;
  DetectConfig detect;
  ReMode mode = ReMode::perturbation;
  bool baselines = true;
  std::size_t model_workers = 1;

  void validate() const;
};

struct ModelOutcome {
  VictimJob job;
  std::optional<AttackSpec> attack;
  double accuracy = 0.0;
  double asr = 0.0;
  DetectionReport report;
  std::optional<DetectionReport> dagger;
  std::optional<DetectionReport> ddagger;
};

/// Runs every job; outcomes keep job order whatever model_workers is.
std::vector<ModelOutcome> run_suite(const BenchConfig& cfg, const std::vector<VictimJob>& jobs);

Verdict verdict_of(const DetectionReport& report, const std::optional<AttackSpec>& attack);

Json to_json(const BenchmarkResult& result);
Json bench_document(const BenchConfig& cfg, const std::vector<ModelOutcome>& outcomes);

/// `attacked` jobs cycling through the given settings, then `benign` jobs.
std::vector<VictimJob> standard_suite(std::uint64_t master_seed, std::size_t attacked,
                                      std::size_t benign,
                                      const std::vector<AttackSetting>& settings,
                                      std::size_t num_pairs);

}  // namespace umd
