#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace umd {

// Row-major so that a dataset row or a weight row is contiguous in memory and
// serializes in the on-disk order without a transpose.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Raised when a caller violates a documented precondition.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a persisted artifact is malformed or has an unsupported version.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// SplitMix64 finalizer. Used to derive independent child seeds from a master
// seed so results never depend on the order in which work is scheduled.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a,
                                    std::uint64_t b = 0) noexcept {
  return mix_seed(mix_seed(mix_seed(master) ^ (a + 0x632be59bd9b4e019ULL)) ^
                  (b + 0x85157af5ULL));
}

/// Runs body(i) for i in [0, count) on up to `workers` threads. Each index is
/// processed exactly once; the body must write only to its own slot.
void parallel_for(std::size_t count, std::size_t workers,
                  const std::function<void(std::size_t)>& body);

}  // namespace umd
