#pragma once

#include <cstddef>
#include <vector>

#include "wpcn/actions.hpp"
#include "wpcn/env.hpp"

namespace wpcn::baselines {

/// Result of a centralized per-slot solve.
struct SolverReport {
  double objective = 0.0;  ///< (1/T) sum_i R_i, nats/s
  std::vector<double> tau;
  std::vector<double> power;
  std::vector<std::size_t> ordering;
  std::size_t iterations = 0;
  double wall_time = 0.0;  ///< seconds
};

/// tau_i = T/2 for all cells, every user spends its whole harvest.
SolverReport naive_policy(const env::LinkGains& gains, const env::SystemParams& params);

struct PgdOptions {
  double precision = 1e-2;     ///< relative objective change that ends the alternation
  double inner_tolerance = 1e-6;
  std::size_t max_outer = 50;
  std::size_t max_inner = 200;
  std::size_t max_halvings = 30;
  double fd_step = 1e-6;       ///< central-difference step on normalized variables
};

/// Largest N accepted by pgd_solve (outer loop enumerates N! orderings).
inline constexpr std::size_t kPgdMaxCells = 7;

/// Alternating projected-gradient ascent over power fractions and normalized
/// time splits, repeated for every H-AP ordering; returns the best local
/// optimum found. Throws UnsupportedError above kPgdMaxCells.
SolverReport pgd_solve(const env::LinkGains& gains, const env::SystemParams& params,
                       const PgdOptions& options = {});

/// Largest N * K_T^N * K_P^N accepted by brute_force_oracle.
inline constexpr double kOracleBudget = 1e7;

/// Exact maximizer of the sum rate over the agents' discrete action grid.
/// Ties resolve to the lexicographically first (time, power) index vector.
SolverReport brute_force_oracle(const env::LinkGains& gains, const env::SystemParams& params,
                                const agent::ActionSpaces& spaces);

/// Isotonic (nondecreasing) least-squares fit by pool-adjacent-violators.
std::vector<double> isotonic_fit(std::vector<double> y);

}  // namespace wpcn::baselines
