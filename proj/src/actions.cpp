#include "wpcn/actions.hpp"

#include <stdexcept>

namespace wpcn::agent {

ActionSpaces ActionSpaces::from(const env::SystemParams& params, std::size_t k_t, std::size_t k_p) {
  ActionSpaces s{k_t, k_p, params.eps_tau, params.slot};
  s.validate();
  return s;
}

void ActionSpaces::validate() const {
  if (time_levels < 2 || power_levels < 2) throw std::invalid_argument("ActionSpaces: need K_T, K_P >= 2");
  if (!(eps_tau > 0.0 && eps_tau < slot)) throw std::invalid_argument("ActionSpaces: need 0 < eps_tau < T");
}

double ActionSpaces::time_value(std::size_t k_tau) const {
  if (k_tau >= time_levels) throw std::invalid_argument("time index out of range");
  // Endpoint exact so that tau never exceeds T - eps_tau by rounding.
  if (k_tau == time_levels - 1) return slot - eps_tau;
  return static_cast<double>(k_tau) * (slot - eps_tau) / static_cast<double>(time_levels - 1);
}

double ActionSpaces::power_value(std::size_t k_p, double energy, double tau) const {
  if (k_p >= power_levels) throw std::invalid_argument("power index out of range");
  if (!(energy >= 0.0)) throw std::invalid_argument("harvested energy must be nonnegative");
  const double budget = energy / (slot - tau);
  if (k_p == power_levels - 1) return budget;
  return static_cast<double>(k_p) * budget / static_cast<double>(power_levels - 1);
}

RealizedAction realize_action(std::size_t k_tau, std::size_t k_p, double energy, const ActionSpaces& spaces) {
  const double tau = spaces.time_value(k_tau);
  return {tau, spaces.power_value(k_p, energy, tau)};
}

}  // namespace wpcn::agent
