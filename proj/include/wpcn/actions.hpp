#pragma once

#include <cstddef>

#include "wpcn/env.hpp"

namespace wpcn::agent {

/// Discrete time and power grids shared by every agent.
///
/// Time grid: k (T - eps_tau) / (K_T - 1), k = 0 .. K_T - 1.
/// Power grid: k E / ((K_P - 1)(T - tau)), k = 0 .. K_P - 1, i.e. evenly
/// spaced fractions of the EH budget measured after tau is fixed.
struct ActionSpaces {
  std::size_t time_levels = 20;   ///< K_T
  std::size_t power_levels = 20;  ///< K_P
  double eps_tau = 0.0002;
  double slot = 0.02;

  static ActionSpaces from(const env::SystemParams& params, std::size_t k_t, std::size_t k_p);

  /// Throws std::invalid_argument unless K_T, K_P >= 2 and 0 < eps_tau < T.
  void validate() const;

  double time_value(std::size_t k_tau) const;
  double power_value(std::size_t k_p, double energy, double tau) const;
};

struct RealizedAction {
  double tau = 0.0;    ///< seconds
  double power = 0.0;  ///< watts
};

/// Maps grid indices to physical values. `energy` is the E_i measured after
/// every H-AP committed its time split.
RealizedAction realize_action(std::size_t k_tau, std::size_t k_p, double energy, const ActionSpaces& spaces);

}  // namespace wpcn::agent
