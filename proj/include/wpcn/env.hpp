#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "wpcn/channel.hpp"
#include "wpcn/common.hpp"

namespace wpcn::env {

using channel::LinkGains;

/// Ordering of the N time splits and the N + 1 intervals they induce.
///
/// Intervals are indexed 0..N here. Interval n spans
/// [boundaries[n], boundaries[n + 1]) and H-AP i receives uplink data in it
/// (wit(n, i) == true) iff tau_i < boundaries[n + 1]; otherwise it radiates
/// energy.
struct SlotSchedule {
  std::vector<double> tau;
  std::vector<std::size_t> order;  ///< cells sorted by (tau, index)
  std::vector<double> boundaries;  ///< N + 2 entries, 0 .. T
  double slot = 0.0;

  std::size_t cells() const { return tau.size(); }
  std::size_t intervals() const { return tau.size() + 1; }
  double duration(std::size_t n) const { return boundaries[n + 1] - boundaries[n]; }
  bool wit(std::size_t n, std::size_t i) const { return tau[i] < boundaries[n + 1]; }
};

/// Largest admissible time split: T - eps_tau.
SlotSchedule build_schedule(std::span<const double> tau, double slot_s, double eps_tau_s);

enum class EhKind { linear, nonlinear };

/// Input-output map of the user's energy-harvesting circuit (watts -> watts).
struct EhModel {
  EhKind kind = EhKind::linear;
  double eta = 0.5;
  double a1 = 1.5e3;
  double a2 = 3.3;
  double a3 = 2.8e-3;

  static EhModel linear(double eta) { return {EhKind::linear, eta}; }
  static EhModel nonlinear(double a1, double a2, double a3) {
    return {EhKind::nonlinear, 0.5, a1, a2, a3};
  }
};

/// Delta(x). Linear: eta x. Non-linear: a3 (1 - e^{-a1 x}) / (1 + e^{-a1 x + a2}).
/// Throws std::domain_error for negative x.
double eh_transfer(const EhModel& model, double x);

/// Physical constants shared by every cell.
struct SystemParams {
  double slot = 0.02;          ///< T, seconds
  double eps_tau = 0.0002;     ///< seconds; WET never fills the whole slot
  double hap_power = 1.0;      ///< P, watts
  double noise = 1e-8;         ///< sigma^2, watts
  double wet_leakage = 1e-5;   ///< beta, residual cross-link WET attenuation
  EhModel eh{};

  double max_tau() const { return slot - eps_tau; }
};

struct Interference {
  double wit = 0.0;  ///< I_nji
  double wet = 0.0;  ///< D_nji
};

/// Interference from cell j onto H-AP i during interval n.
Interference interference(const SlotSchedule& sched, const LinkGains& gains, std::span<const double> p,
                          const SystemParams& params, std::size_t n, std::size_t j, std::size_t i);

/// Uplink rate of user i over the slot in nats (not divided by T). With
/// `exclude`, cell `*exclude` is removed from the interference sum.
double rate(const SlotSchedule& sched, const LinkGains& gains, std::span<const double> p,
            const SystemParams& params, std::size_t i, std::optional<std::size_t> exclude = {});

/// Energy in joules harvested by user i over the slot, Delta applied per
/// (interval, H-AP) contribution.
double harvested_energy(const SlotSchedule& sched, const LinkGains& gains, const SystemParams& params,
                        std::size_t i);

std::vector<double> harvested_energies(const SlotSchedule& sched, const LinkGains& gains,
                                       const SystemParams& params);

/// (1/T) sum_i R_i in nats/s; the objective of the sum-rate problem.
double sum_rate(const SlotSchedule& sched, const LinkGains& gains, std::span<const double> p,
                const SystemParams& params);

struct SlotOutcome {
  SlotSchedule schedule;
  std::vector<double> power;
  std::vector<double> rates;     ///< R_i, nats per slot
  Matrix rates_excl;             ///< (j, i) -> R_{j\i}; diagonal holds R_j
  std::vector<double> energies;  ///< E_i, joules
  std::vector<double> rewards;   ///< r_i, nats per slot
  std::vector<Matrix> wit_interference;  ///< [n](j, i) -> I_nji
  std::vector<Matrix> wet_interference;  ///< [n](j, i) -> D_nji

  double sum_rate(double slot_s) const;
};

/// Budget slack tolerated by `step`, joules.
inline constexpr double kEhTolerance = 1e-12;

/// Price-based reward r_i = R_i - sum_{j != i} (R_{j\i} - R_j).
std::vector<double> price_rewards(std::span<const double> rates, const Matrix& rates_excl);

/// Evaluates one slot. Throws ConstraintError if some user spends more than
/// it harvested (beyond kEhTolerance).
SlotOutcome step(const LinkGains& gains, std::span<const double> tau, std::span<const double> p,
                 const SystemParams& params);

}  // namespace wpcn::env
