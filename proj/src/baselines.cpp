#include "wpcn/baselines.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace wpcn::baselines {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::vector<double> full_budget_powers(const env::SlotSchedule& sched, std::span<const double> energies,
                                       std::span<const double> fractions) {
  std::vector<double> p(sched.cells());
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = fractions[i] * energies[i] / (sched.slot - sched.tau[i]);
  }
  return p;
}

// One ordering's alternating solve. Variables: x = tau / T, constrained to
// x[order[0]] <= ... <= x[order[N-1]] within [0, x_max], and per-user power
// fractions f in [0, 1] of the EH budget E_i(tau) / (T - tau_i).
class OrderedProblem {
 public:
  OrderedProblem(const env::LinkGains& gains, const env::SystemParams& params,
                 std::vector<std::size_t> order, const PgdOptions& options)
      : gains_(gains), params_(params), order_(std::move(order)), options_(options),
        x_max_(params.max_tau() / params.slot) {}

  double objective(const std::vector<double>& x, const std::vector<double>& f) const {
    std::vector<double> tau(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) tau[i] = std::clamp(x[i], 0.0, x_max_) * params_.slot;
    const env::SlotSchedule sched = env::build_schedule(tau, params_.slot, params_.eps_tau);
    const std::vector<double> energies = env::harvested_energies(sched, gains_, params_);
    const std::vector<double> p = full_budget_powers(sched, energies, f);
    return env::sum_rate(sched, gains_, p, params_);
  }

  std::vector<double> project_time(const std::vector<double>& x) const {
    std::vector<double> seq(x.size());
    for (std::size_t k = 0; k < order_.size(); ++k) seq[k] = x[order_[k]];
    seq = isotonic_fit(std::move(seq));
    std::vector<double> out(x.size());
    for (std::size_t k = 0; k < order_.size(); ++k) out[order_[k]] = std::clamp(seq[k], 0.0, x_max_);
    return out;
  }

  static std::vector<double> project_fraction(std::vector<double> f) {
    for (double& v : f) v = std::clamp(v, 0.0, 1.0);
    return f;
  }

  SolverReport solve() {
    const std::size_t n = order_.size();
    std::vector<double> x(n, 0.5);
    std::vector<double> f(n, 0.5);
    double value = objective(x, f);
    std::size_t iterations = 0;
    for (std::size_t outer = 0; outer < options_.max_outer; ++outer) {
      const double before = value;
      value = ascend_block(x, f, /*time_block=*/false, value, iterations);
      value = ascend_block(x, f, /*time_block=*/true, value, iterations);
      if (value - before <= options_.precision * std::max(std::abs(before), 1e-300)) break;
    }
    SolverReport report;
    report.tau.resize(n);
    for (std::size_t i = 0; i < n; ++i) report.tau[i] = std::clamp(x[i], 0.0, x_max_) * params_.slot;
    const env::SlotSchedule sched = env::build_schedule(report.tau, params_.slot, params_.eps_tau);
    report.power = full_budget_powers(sched, env::harvested_energies(sched, gains_, params_), f);
    report.objective = env::sum_rate(sched, gains_, report.power, params_);
    report.ordering = order_;
    report.iterations = iterations;
    return report;
  }

 private:
  double ascend_block(std::vector<double>& x, std::vector<double>& f, bool time_block, double value,
                      std::size_t& iterations) const {
    std::vector<double>& var = time_block ? x : f;
    const double upper = time_block ? x_max_ : 1.0;
    double step = 0.25;
    for (std::size_t it = 0; it < options_.max_inner; ++it) {
      // Central differences, shrunk to one side at the box boundary.
      std::vector<double> grad(var.size());
      double grad_norm = 0.0;
      for (std::size_t i = 0; i < var.size(); ++i) {
        const double v = var[i];
        const double hi = std::min(v + options_.fd_step, upper);
        const double lo = std::max(v - options_.fd_step, 0.0);
        var[i] = hi;
        const double f_hi = objective(x, f);
        var[i] = lo;
        const double f_lo = objective(x, f);
        var[i] = v;
        grad[i] = (f_hi - f_lo) / (hi - lo);
        grad_norm = std::max(grad_norm, std::abs(grad[i]));
      }
      if (!(grad_norm > 0.0) || !std::isfinite(grad_norm)) break;

      bool accepted = false;
      double trial_step = std::min(2.0 * step, 1.0);
      for (std::size_t h = 0; h <= options_.max_halvings; ++h, trial_step *= 0.5) {
        std::vector<double> cand(var.size());
        for (std::size_t i = 0; i < var.size(); ++i) cand[i] = var[i] + trial_step * grad[i] / grad_norm;
        cand = time_block ? project_time(cand) : project_fraction(std::move(cand));
        std::vector<double> saved = var;
        var = cand;
        const double trial = objective(x, f);
        if (trial > value) {
          const double gain = trial - value;
          value = trial;
          step = trial_step;
          accepted = true;
          ++iterations;
          if (gain <= options_.inner_tolerance * std::abs(value)) return value;
          break;
        }
        var = std::move(saved);
      }
      if (!accepted) break;
    }
    return value;
  }

  const env::LinkGains& gains_;
  const env::SystemParams& params_;
  std::vector<std::size_t> order_;
  PgdOptions options_;
  double x_max_;
};

}  // namespace

std::vector<double> isotonic_fit(std::vector<double> y) {
  // Blocks of (sum, count); merge while the monotonicity is violated.
  std::vector<double> sums;
  std::vector<std::size_t> counts;
  for (double v : y) {
    sums.push_back(v);
    counts.push_back(1);
    while (sums.size() > 1 &&
           sums[sums.size() - 2] / static_cast<double>(counts[counts.size() - 2]) >
               sums.back() / static_cast<double>(counts.back())) {
      sums[sums.size() - 2] += sums.back();
      counts[counts.size() - 2] += counts.back();
      sums.pop_back();
      counts.pop_back();
    }
  }
  std::size_t k = 0;
  for (std::size_t b = 0; b < sums.size(); ++b) {
    const double mean = sums[b] / static_cast<double>(counts[b]);
    for (std::size_t c = 0; c < counts[b]; ++c) y[k++] = mean;
  }
  return y;
}

SolverReport naive_policy(const env::LinkGains& gains, const env::SystemParams& params) {
  const auto start = Clock::now();
  const std::size_t n = gains.cells();
  SolverReport report;
  report.tau.assign(n, params.slot / 2.0);
  const env::SlotSchedule sched = env::build_schedule(report.tau, params.slot, params.eps_tau);
  const std::vector<double> energies = env::harvested_energies(sched, gains, params);
  report.power = full_budget_powers(sched, energies, std::vector<double>(n, 1.0));
  report.objective = env::sum_rate(sched, gains, report.power, params);
  report.ordering = sched.order;
  report.wall_time = seconds_since(start);
  return report;
}

SolverReport pgd_solve(const env::LinkGains& gains, const env::SystemParams& params,
                       const PgdOptions& options) {
  const std::size_t n = gains.cells();
  if (n > kPgdMaxCells) throw UnsupportedError("pgd_solve: N! ordering search limited to N <= 7");
  if (!(options.precision > 0.0)) throw std::invalid_argument("pgd_solve: precision must be positive");
  const auto start = Clock::now();

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  SolverReport best;
  bool have_best = false;
  std::size_t iterations = 0;
  do {
    SolverReport candidate = OrderedProblem(gains, params, order, options).solve();
    iterations += candidate.iterations;
    if (!have_best || candidate.objective > best.objective) {
      best = std::move(candidate);
      have_best = true;
    }
  } while (std::next_permutation(order.begin(), order.end()));
  best.iterations = iterations;
  best.wall_time = seconds_since(start);
  return best;
}

SolverReport brute_force_oracle(const env::LinkGains& gains, const env::SystemParams& params,
                                const agent::ActionSpaces& spaces) {
  spaces.validate();
  const std::size_t n = gains.cells();
  const double work = static_cast<double>(n) * std::pow(static_cast<double>(spaces.time_levels), n) *
                      std::pow(static_cast<double>(spaces.power_levels), n);
  if (work > kOracleBudget) throw UnsupportedError("brute_force_oracle: N K^(2N) exceeds 1e7");
  const auto start = Clock::now();

  SolverReport best;
  best.objective = -1.0;
  std::vector<std::size_t> kt(n, 0);
  std::vector<double> tau(n);
  std::vector<double> p(n);
  std::size_t evaluations = 0;
  for (bool more_t = true; more_t;) {
    for (std::size_t i = 0; i < n; ++i) tau[i] = spaces.time_value(kt[i]);
    const env::SlotSchedule sched = env::build_schedule(tau, params.slot, params.eps_tau);
    const std::vector<double> energies = env::harvested_energies(sched, gains, params);
    std::vector<std::size_t> kp(n, 0);
    for (bool more_p = true; more_p;) {
      for (std::size_t i = 0; i < n; ++i) p[i] = spaces.power_value(kp[i], energies[i], tau[i]);
      const double value = env::sum_rate(sched, gains, p, params);
      ++evaluations;
      if (value > best.objective) {
        best.objective = value;
        best.tau = tau;
        best.power = p;
        best.ordering = sched.order;
      }
      // Odometer increment, last index fastest.
      more_p = false;
      for (std::size_t i = n; i-- > 0;) {
        if (++kp[i] < spaces.power_levels) { more_p = true; break; }
        kp[i] = 0;
      }
    }
    more_t = false;
    for (std::size_t i = n; i-- > 0;) {
      if (++kt[i] < spaces.time_levels) { more_t = true; break; }
      kt[i] = 0;
    }
  }
  best.iterations = evaluations;
  best.wall_time = seconds_since(start);
  return best;
}

}  // namespace wpcn::baselines
