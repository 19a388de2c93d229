#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "umd/bench.hpp"

namespace umd::cli {

enum ExitCode : int { ok = 0, usage_error = 1, validation_error = 2, runtime_failure = 3 };

/// Default directory for artifacts: $UMD_WORKDIR, else the current directory.
std::filesystem::path default_workdir();

struct VictimOptions {
  VictimConfig victim;
  std::string trigger = "perturbation";  // or "patch"
  void apply();                          // copy `trigger` into victim.trigger_kind
};

struct ForgeOptions {
  VictimOptions v;
  std::string setting = "x2x";  // benign, a2o, o2o, x2x, a2ar
  std::size_t num_pairs = 2;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;
};

struct DetectOptions {
  std::filesystem::path model;
  std::filesystem::path clean;
  std::filesystem::path out;
  std::string mode = "perturbation";
  std::string method = "umd";  // umd, dagger, ddagger
  double beta = 0.05;
  double pi = 0.9;
  double learning_rate = 0.0;  // 0: mode default
  std::size_t images_per_class = 0;
  std::size_t max_steps = 1000;
  std::size_t restarts = 5;
  std::size_t layer_index = 2;
  std::size_t max_clusters = 1;
  std::size_t workers = 1;
  std::uint64_t seed = 0;
  bool emit_tr = false;
  std::filesystem::path tr_csv;
};

struct MitigateOptions {
  std::filesystem::path model;
  std::filesystem::path report;
  std::filesystem::path clean;
  std::filesystem::path test;    // optional, for the before/after summary
  std::filesystem::path attack;  // optional, for ASR in the summary
  std::filesystem::path out;
  std::filesystem::path summary;
  std::size_t epochs = 10;
  double learning_rate = 0.02;
  std::uint64_t seed = 0;
};

struct BenchOptions {
  VictimOptions v;
  std::filesystem::path out;
  std::size_t attacked = 10;
  std::size_t benign = 10;
  std::vector<std::string> settings{"x2x", "a2ar"};
  std::size_t num_pairs = 2;
  std::string mode = "perturbation";
  double beta = 0.05;
  std::size_t workers = 1;
  std::size_t model_workers = 1;
  std::uint64_t seed = 0;
};

int run_forge(ForgeOptions opts);
int run_detect(const DetectOptions& opts);
int run_mitigate(const MitigateOptions& opts);
int run_bench(BenchOptions opts);

}  // namespace umd::cli
