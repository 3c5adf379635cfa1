#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace wpcn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Error taxonomy. Precondition violations use std::invalid_argument and
// std::domain_error directly; the types below cover the remaining failure
// classes surfaced by the simulator.

/// A caller handed the environment an action that breaks the EH budget.
class ConstraintError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Non-finite gradient, TD error or parameter.
class NumericError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Object used out of order (e.g. backward on a stale forward cache).
class StateError : public std::logic_error {
  using std::logic_error::logic_error;
};

/// Backhaul exchange incomplete or inconsistent.
class ProtocolError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Problem size outside what a solver supports.
class UnsupportedError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed configuration, checkpoint or metrics input.
class ConfigError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Rng = std::mt19937_64;

/// Independent random streams used by one experiment.
enum class Stream : std::uint32_t {
  channel = 1,
  warmup_channel = 2,
  test_channel = 3,
  weight_init = 4,
  policy = 5,
  eval_policy = 6,
  instances = 7,
};

/// Derives a generator for (seed, stream, index). Distinct triples give
/// statistically independent sequences; identical triples give identical
/// sequences.
inline Rng make_rng(std::uint64_t seed, Stream stream, std::uint64_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(index & 0xffffffffu),
                    static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

}  // namespace wpcn
