#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "wpcn/config.hpp"

namespace wpcn::testing {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

/// `quick` shrinks sample counts for the CLI selftest; thresholds stay put.
enum class Budget { full, quick };

/// Hyperparameters that learn within 2e4 slots on a desktop CPU.
runner::ExperimentConfig desk_config(std::size_t cells, env::EhKind eh = env::EhKind::linear);

CriterionResult gradient_suite(Budget budget = Budget::full);
CriterionResult physics_equivalence(Budget budget = Budget::full);
CriterionResult eh_safety(Budget budget = Budget::full);
CriterionResult bandit_sanity(Budget budget = Budget::full);
CriterionResult learning_beats_naive(Budget budget = Budget::full);
CriterionResult pgd_dominance(Budget budget = Budget::full);
CriterionResult eh_robustness(Budget budget = Budget::full);
CriterionResult time_scaling(Budget budget = Budget::full);
CriterionResult determinism(Budget budget = Budget::full);

std::string format_result(const CriterionResult& r);

}  // namespace wpcn::testing
