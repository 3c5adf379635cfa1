#include "wpcn/env.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace wpcn::env {

SlotSchedule build_schedule(std::span<const double> tau, double slot_s, double eps_tau_s) {
  if (tau.empty()) throw std::invalid_argument("build_schedule: no cells");
  if (!(slot_s > 0.0) || !(eps_tau_s > 0.0) || eps_tau_s >= slot_s) {
    throw std::invalid_argument("build_schedule: need 0 < eps_tau < T");
  }
  const double max_tau = slot_s - eps_tau_s;
  for (std::size_t i = 0; i < tau.size(); ++i) {
    if (!(tau[i] >= 0.0 && tau[i] <= max_tau)) {
      std::ostringstream msg;
      msg << "build_schedule: tau[" << i << "] = " << tau[i] << " outside [0, " << max_tau << "]";
      throw std::domain_error(msg.str());
    }
  }
  SlotSchedule s;
  s.slot = slot_s;
  s.tau.assign(tau.begin(), tau.end());
  s.order.resize(tau.size());
  std::iota(s.order.begin(), s.order.end(), std::size_t{0});
  std::stable_sort(s.order.begin(), s.order.end(),
                   [&](std::size_t a, std::size_t b) { return s.tau[a] < s.tau[b]; });
  s.boundaries.reserve(tau.size() + 2);
  s.boundaries.push_back(0.0);
  for (std::size_t k : s.order) s.boundaries.push_back(s.tau[k]);
  s.boundaries.push_back(slot_s);
  return s;
}

double eh_transfer(const EhModel& model, double x) {
  if (!(x >= 0.0)) throw std::domain_error("eh_transfer: input power must be nonnegative");
  if (model.kind == EhKind::linear) return model.eta * x;
  const double decay = std::exp(-model.a1 * x);
  return model.a3 * (1.0 - decay) / (1.0 + decay * std::exp(model.a2));
}

Interference interference(const SlotSchedule& sched, const LinkGains& gains, std::span<const double> p,
                          const SystemParams& params, std::size_t n, std::size_t j, std::size_t i) {
  if (i == j) throw std::invalid_argument("interference: a cell does not interfere with itself");
  if (n >= sched.intervals() || i >= sched.cells() || j >= sched.cells()) {
    throw std::invalid_argument("interference: index out of range");
  }
  if (sched.wit(n, j)) return {gains.h(j, i) * p[j], 0.0};
  return {0.0, params.wet_leakage * gains.g(j, i) * params.hap_power};
}

namespace {

// sum_{j != i, j != exclude} (I_nji + D_nji)
double interference_sum(const SlotSchedule& sched, const LinkGains& gains, std::span<const double> p,
                        const SystemParams& params, std::size_t n, std::size_t i,
                        std::optional<std::size_t> exclude) {
  double total = 0.0;
  for (std::size_t j = 0; j < sched.cells(); ++j) {
    if (j == i || (exclude && *exclude == j)) continue;
    const Interference f = interference(sched, gains, p, params, n, j, i);
    total += f.wit + f.wet;
  }
  return total;
}

void check_sizes(const SlotSchedule& sched, const LinkGains& gains, std::span<const double> p) {
  if (gains.cells() != sched.cells() || p.size() != sched.cells()) {
    throw std::invalid_argument("cell count mismatch between schedule, gains and powers");
  }
}

}  // namespace

double rate(const SlotSchedule& sched, const LinkGains& gains, std::span<const double> p,
            const SystemParams& params, std::size_t i, std::optional<std::size_t> exclude) {
  check_sizes(sched, gains, p);
  if (!(params.noise > 0.0)) throw std::invalid_argument("rate: noise power must be positive");
  const double signal = gains.h(i, i) * p[i];
  if (signal == 0.0) return 0.0;
  double total = 0.0;
  for (std::size_t n = 0; n < sched.intervals(); ++n) {
    const double dur = sched.duration(n);
    if (dur == 0.0 || !sched.wit(n, i)) continue;
    const double sinr = signal / (params.noise + interference_sum(sched, gains, p, params, n, i, exclude));
    total += dur * std::log1p(sinr);
  }
  return total;
}

double harvested_energy(const SlotSchedule& sched, const LinkGains& gains, const SystemParams& params,
                        std::size_t i) {
  double total = 0.0;
  for (std::size_t n = 0; n < sched.intervals(); ++n) {
    const double dur = sched.duration(n);
    if (dur == 0.0 || sched.wit(n, i)) continue;
    double per_interval = 0.0;
    for (std::size_t j = 0; j < sched.cells(); ++j) {
      if (sched.wit(n, j)) continue;
      per_interval += eh_transfer(params.eh, params.hap_power * gains.h(i, j));
    }
    total += dur * per_interval;
  }
  return total;
}

std::vector<double> harvested_energies(const SlotSchedule& sched, const LinkGains& gains,
                                       const SystemParams& params) {
  std::vector<double> e(sched.cells());
  for (std::size_t i = 0; i < e.size(); ++i) e[i] = harvested_energy(sched, gains, params, i);
  return e;
}

double sum_rate(const SlotSchedule& sched, const LinkGains& gains, std::span<const double> p,
                const SystemParams& params) {
  double total = 0.0;
  for (std::size_t i = 0; i < sched.cells(); ++i) total += rate(sched, gains, p, params, i);
  return total / sched.slot;
}

double SlotOutcome::sum_rate(double slot_s) const {
  return std::accumulate(rates.begin(), rates.end(), 0.0) / slot_s;
}

std::vector<double> price_rewards(std::span<const double> rates, const Matrix& rates_excl) {
  const std::size_t n = rates.size();
  std::vector<double> r(n);
  for (std::size_t i = 0; i < n; ++i) {
    double price = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) price += rates_excl(j, i) - rates[j];
    }
    r[i] = rates[i] - price;
  }
  return r;
}

SlotOutcome step(const LinkGains& gains, std::span<const double> tau, std::span<const double> p,
                 const SystemParams& params) {
  SlotOutcome out;
  out.schedule = build_schedule(tau, params.slot, params.eps_tau);
  const SlotSchedule& sched = out.schedule;
  check_sizes(sched, gains, p);
  const std::size_t n = sched.cells();
  out.power.assign(p.begin(), p.end());

  out.energies = harvested_energies(sched, gains, params);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(p[i] >= 0.0) || (params.slot - tau[i]) * p[i] > out.energies[i] + kEhTolerance) {
      std::ostringstream msg;
      msg << "EH constraint violated at cell " << i << ": spends " << (params.slot - tau[i]) * p[i]
          << " J, harvested " << out.energies[i] << " J";
      throw ConstraintError(msg.str());
    }
  }

  out.wit_interference.assign(sched.intervals(), Matrix::Zero(n, n));
  out.wet_interference.assign(sched.intervals(), Matrix::Zero(n, n));
  for (std::size_t k = 0; k < sched.intervals(); ++k) {
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t i = 0; i < n; ++i) {
        if (i == j) continue;
        const Interference f = interference(sched, gains, p, params, k, j, i);
        out.wit_interference[k](j, i) = f.wit;
        out.wet_interference[k](j, i) = f.wet;
      }
    }
  }

  out.rates.resize(n);
  out.rates_excl = Matrix::Zero(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    out.rates[j] = rate(sched, gains, p, params, j);
    out.rates_excl(j, j) = out.rates[j];
    for (std::size_t i = 0; i < n; ++i) {
      if (i != j) out.rates_excl(j, i) = rate(sched, gains, p, params, j, i);
    }
  }
  out.rewards = price_rewards(out.rates, out.rates_excl);
  return out;
}

}  // namespace wpcn::env
