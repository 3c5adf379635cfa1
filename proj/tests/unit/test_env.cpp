#include <doctest.h>

#include <cmath>
#include <vector>

#include "support/oracles.hpp"
#include "wpcn/env.hpp"

using namespace wpcn;
using namespace wpcn::env;

namespace {

LinkGains single(double h) {
  return {Matrix::Constant(1, 1, h), Matrix::Zero(1, 1)};
}

LinkGains random_gains(std::size_t n, Rng& rng) {
  const auto scale = channel::large_scale_gains(channel::Geometry::circular(n));
  return channel::compose(scale, channel::FadingProcess::stationary(n, rng));
}

}  // namespace

TEST_CASE("schedule of three staggered splits") {
  const std::vector<double> tau{0.005, 0.010, 0.015};
  const SlotSchedule s = build_schedule(tau, 0.02, 0.0002);
  REQUIRE(s.intervals() == 4);
  for (std::size_t n = 0; n < 4; ++n) CHECK(s.duration(n) == doctest::Approx(0.005).epsilon(1e-12));
  const bool expected[4][3] = {{false, false, false}, {true, false, false}, {true, true, false}, {true, true, true}};
  for (std::size_t n = 0; n < 4; ++n) {
    for (std::size_t i = 0; i < 3; ++i) CHECK(s.wit(n, i) == expected[n][i]);
  }
}

TEST_CASE("schedule degenerate cases") {
  SUBCASE("no energy transfer") {
    const std::vector<double> tau{0.0, 0.0};
    const SlotSchedule s = build_schedule(tau, 0.02, 0.0002);
    CHECK(s.duration(0) == 0.0);
    CHECK(s.duration(1) == 0.0);
    CHECK(s.duration(2) == 0.02);
    CHECK(s.wit(2, 0));
    CHECK(s.wit(2, 1));
  }
  SUBCASE("tie") {
    const std::vector<double> tau{0.01, 0.01};
    const SlotSchedule s = build_schedule(tau, 0.02, 0.0002);
    CHECK(s.order == std::vector<std::size_t>{0, 1});
    CHECK(s.duration(1) == 0.0);
    CHECK(s.duration(0) == 0.01);
    CHECK_FALSE(s.wit(0, 0));
    CHECK(s.wit(2, 1));
  }
  SUBCASE("out of range") {
    CHECK_THROWS_AS(build_schedule(std::vector<double>{0.0199}, 0.02, 0.0002), std::domain_error);
    CHECK_THROWS_AS(build_schedule(std::vector<double>{-1e-9}, 0.02, 0.0002), std::domain_error);
  }
}

TEST_CASE("schedule invariants on random splits") {
  Rng rng(3);
  std::uniform_real_distribution<double> u(0.0, 0.0198);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> tau(1 + trial % 6);
    for (double& t : tau) t = u(rng);
    const SlotSchedule s = build_schedule(tau, 0.02, 0.0002);
    CHECK(s.boundaries.front() == 0.0);
    CHECK(s.boundaries.back() == 0.02);
    double total = 0.0;
    for (std::size_t n = 0; n < s.intervals(); ++n) {
      CHECK(s.duration(n) >= 0.0);
      total += s.duration(n);
      for (std::size_t i = 0; i < tau.size(); ++i) CHECK(s.wit(n, i) == (tau[i] < s.boundaries[n + 1]));
    }
    CHECK(total == doctest::Approx(0.02).epsilon(1e-15));
  }
}

TEST_CASE("interference terms") {
  const std::vector<double> tau{0.0, 0.0};
  const SlotSchedule all_wit = build_schedule(tau, 0.02, 0.0002);
  LinkGains gains{Matrix::Zero(2, 2), Matrix::Zero(2, 2)};
  gains.h(1, 0) = 1e-3;
  gains.g(1, 0) = 2.963e-4;
  SystemParams params;
  std::vector<double> p{0.0, 5e-4};
  Interference f = interference(all_wit, gains, p, params, 2, 1, 0);
  CHECK(f.wit == doctest::Approx(5e-7).epsilon(1e-12));
  CHECK(f.wet == 0.0);

  const std::vector<double> tau2{0.0, 0.01};
  const SlotSchedule s = build_schedule(tau2, 0.02, 0.0002);
  f = interference(s, gains, p, params, 1, 1, 0);
  CHECK(f.wit == 0.0);
  CHECK(f.wet == doctest::Approx(2.963e-9).epsilon(1e-12));

  p[1] = 0.0;
  f = interference(all_wit, gains, p, params, 2, 1, 0);
  CHECK(f.wit == 0.0);
  CHECK(f.wet == 0.0);
  CHECK_THROWS_AS(interference(all_wit, gains, p, params, 2, 0, 0), std::invalid_argument);
}

TEST_CASE("single-cell rate") {
  const SystemParams params;
  const std::vector<double> tau{0.01};
  const SlotSchedule s = build_schedule(tau, 0.02, 0.0002);
  const std::vector<double> p{5e-4};
  CHECK(rate(s, single(1e-3), p, params, 0) == doctest::Approx(0.01 * std::log(51.0)).epsilon(1e-12));
  CHECK(rate(s, single(1e-3), p, params, 0) == doctest::Approx(0.039318).epsilon(1e-5));
  const std::vector<double> zero{0.0};
  CHECK(rate(s, single(1e-3), zero, params, 0) == 0.0);
}

TEST_CASE("excluding the only interferer gives the single-cell rate") {
  Rng rng(11);
  const SystemParams params;
  for (int trial = 0; trial < 20; ++trial) {
    const LinkGains g = random_gains(2, rng);
    const std::vector<double> tau{0.004 + 0.0005 * trial, 0.012};
    const std::vector<double> p{3e-4, 2e-4};
    const SlotSchedule s2 = build_schedule(tau, 0.02, 0.0002);
    const SlotSchedule s1 = build_schedule(std::vector<double>{tau[0]}, 0.02, 0.0002);
    const double alone = rate(s1, single(g.h(0, 0)), std::vector<double>{p[0]}, params, 0);
    CHECK(rate(s2, g, p, params, 0, 1) == doctest::Approx(alone).epsilon(1e-13));
  }
}

TEST_CASE("energy-harvesting circuits") {
  CHECK(eh_transfer(EhModel::linear(0.5), 1e-3) == doctest::Approx(5e-4).epsilon(1e-15));
  const EhModel nl = EhModel::nonlinear(1.5e3, 3.3, 2.8e-3);
  CHECK(eh_transfer(nl, 0.0) == 0.0);
  const double expected = 2.8e-3 * (1.0 - std::exp(-1.5)) / (1.0 + std::exp(1.8));
  CHECK(eh_transfer(nl, 1e-3) == doctest::Approx(expected).epsilon(1e-13));
  CHECK(eh_transfer(nl, 1e-3) == doctest::Approx(3.09e-4).epsilon(2e-3));
  CHECK(eh_transfer(nl, 10.0) <= 2.8e-3);
  CHECK_THROWS_AS(eh_transfer(nl, -1.0), std::domain_error);
  double prev = 0.0;
  for (double x = 1e-6; x < 1.0; x *= 1.5) {
    CHECK(eh_transfer(nl, x) >= prev);
    prev = eh_transfer(nl, x);
  }
}

TEST_CASE("harvested energy") {
  SystemParams params;
  const std::vector<double> tau{0.01};
  CHECK(harvested_energy(build_schedule(tau, 0.02, 0.0002), single(1e-3), params, 0) ==
        doctest::Approx(5e-6).epsilon(1e-12));
  CHECK(harvested_energy(build_schedule(std::vector<double>{0.0}, 0.02, 0.0002), single(1e-3), params, 0) == 0.0);

  Rng rng(4);
  for (const EhModel& eh : {EhModel::linear(0.5), EhModel::nonlinear(1.5e3, 3.3, 2.8e-3)}) {
    params.eh = eh;
    const LinkGains g = random_gains(2, rng);
    const std::vector<double> tie{0.01, 0.01};
    const double want = 0.01 * (eh_transfer(eh, g.h(0, 0)) + eh_transfer(eh, g.h(0, 1)));
    CHECK(harvested_energy(build_schedule(tie, 0.02, 0.0002), g, params, 0) == doctest::Approx(want).epsilon(1e-13));
  }
}

TEST_CASE("step on one cell pays no price") {
  const SystemParams params;
  const std::vector<double> tau{0.01}, p{5e-4};
  const SlotOutcome out = step(single(1e-3), tau, p, params);
  CHECK(out.rewards[0] == out.rates[0]);
  CHECK(out.energies[0] == doctest::Approx(5e-6).epsilon(1e-12));
  CHECK(out.sum_rate(0.02) == doctest::Approx(0.01 * std::log(51.0) / 0.02).epsilon(1e-12));
}

TEST_CASE("silent neighbour leaves the reward equal to the rate") {
  Rng rng(9);
  const SystemParams params;
  const LinkGains g = random_gains(2, rng);
  const std::vector<double> tau{0.01, 0.0};
  const double e0 = harvested_energy(build_schedule(tau, 0.02, 0.0002), g, params, 0);
  const std::vector<double> p{e0 / 0.01, 0.0};
  const SlotOutcome out = step(g, tau, p, params);
  CHECK(out.rewards[0] == doctest::Approx(out.rates[0]).epsilon(1e-15));
}

TEST_CASE("step invariants on random instances") {
  Rng rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + trial % 5;
    SystemParams params;
    if (trial % 2) params.eh = EhModel::nonlinear(1.5e3, 3.3, 2.8e-3);
    const LinkGains g = random_gains(n, rng);
    std::vector<double> tau(n), p(n);
    for (double& t : tau) t = u(rng) * params.max_tau();
    const auto e = harvested_energies(build_schedule(tau, params.slot, params.eps_tau), g, params);
    for (std::size_t i = 0; i < n; ++i) p[i] = u(rng) * e[i] / (params.slot - tau[i]);
    const SlotOutcome out = step(g, tau, p, params);
    double sum_r = 0.0, sum_rates = 0.0, sum_prices = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(out.rates[i] >= 0.0);
      CHECK(out.energies[i] >= 0.0);
      sum_r += out.rewards[i];
      sum_rates += out.rates[i];
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        CHECK(out.rates_excl(j, i) >= out.rates[j]);
        sum_prices += out.rates_excl(j, i) - out.rates[j];
      }
    }
    CHECK(sum_r == doctest::Approx(sum_rates - sum_prices).epsilon(1e-12));
    CHECK(out.sum_rate(params.slot) == doctest::Approx(sum_rate(out.schedule, g, p, params)).epsilon(1e-14));
  }
}

TEST_CASE("step enforces the harvest budget") {
  const SystemParams params;
  const std::vector<double> tau{0.01};
  CHECK_THROWS_AS(step(single(1e-3), tau, std::vector<double>{5e-4 * 1.001}, params), ConstraintError);
  CHECK_NOTHROW(step(single(1e-3), tau, std::vector<double>{5e-4}, params));
}

TEST_CASE("two-cell step matches the straight-line oracle") {
  Rng rng(33);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SystemParams params;
  for (int trial = 0; trial < 200; ++trial) {
    params.eh = trial % 2 ? EhModel::nonlinear(1.5e3, 3.3, 2.8e-3) : EhModel::linear(0.5);
    const LinkGains g = random_gains(2, rng);
    const std::array<double, 2> tau{u(rng) * params.max_tau(), trial % 7 == 0 ? 0.0 : u(rng) * params.max_tau()};
    const auto e = wpcn::testing::oracle_energies(g, tau, params);
    const std::array<double, 2> p{u(rng) * e[0] / (0.02 - tau[0]), u(rng) * e[1] / (0.02 - tau[1])};
    const auto want = wpcn::testing::oracle_two_cell(g, tau, p, params);
    const SlotOutcome got = step(g, tau, p, params);
    for (int i = 0; i < 2; ++i) {
      CHECK(got.rates[i] == doctest::Approx(want.rates[i]).epsilon(1e-12));
      CHECK(got.energies[i] == doctest::Approx(want.energies[i]).epsilon(1e-12));
      CHECK(got.rates_excl(1 - i, i) == doctest::Approx(want.rates_alone[1 - i]).epsilon(1e-12));
    }
  }
}
