#include <doctest.h>

#include <cmath>
#include <sstream>

#include "wpcn/actions.hpp"
#include "wpcn/agent.hpp"

using namespace wpcn;
using namespace wpcn::agent;

namespace {

env::LinkGains random_gains(std::size_t n, Rng& rng) {
  const auto scale = channel::large_scale_gains(channel::Geometry::circular(n));
  return channel::compose(scale, channel::FadingProcess::stationary(n, rng));
}

PreviousSlot previous(const env::LinkGains& gains, std::vector<double> tau, std::vector<double> p,
                      const env::SystemParams& params) {
  env::SlotOutcome out = env::step(gains, tau, p, params);
  return {out.schedule, p, out.rates, gains};
}

Topology small_topology() { return {{8}, {6}, {8, 4}}; }

Agent make_agent(std::size_t index, std::size_t cells, std::uint64_t seed) {
  const env::SystemParams params;
  return Agent(index, cells, ActionSpaces::from(params, 5, 4), small_topology(), LearningRates{0.01, 0.01, 0.5},
               StateNormalizer(cells, params.slot, 0.1), make_rng(seed, Stream::weight_init, index),
               make_rng(seed, Stream::policy, index));
}

}  // namespace

TEST_CASE("action grids") {
  const env::SystemParams params;
  const ActionSpaces s = ActionSpaces::from(params, 20, 20);
  RealizedAction a = realize_action(0, 0, 5e-6, s);
  CHECK(a.tau == 0.0);
  CHECK(a.power == 0.0);
  CHECK(s.time_value(19) == doctest::Approx(0.0198).epsilon(1e-15));
  CHECK(s.time_value(19) == params.slot - params.eps_tau);
  CHECK(s.power_value(19, 5e-6, 0.01) == doctest::Approx(5e-4).epsilon(1e-15));
  CHECK((params.slot - 0.01) * s.power_value(19, 5e-6, 0.01) <= 5e-6 + env::kEhTolerance);
  for (std::size_t k = 0; k < 20; ++k) {
    const RealizedAction r = realize_action(k, 19, 3e-6, s);
    CHECK((params.slot - r.tau) * r.power == doctest::Approx(3e-6).epsilon(1e-14));
  }
  ActionSpaces bad = s;
  bad.time_levels = 1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  CHECK_THROWS_AS(s.time_value(20), std::invalid_argument);
}

TEST_CASE("state width and slot-0 state") {
  CHECK(state_width(1) == 5);
  CHECK(state_width(5) == 17);
  Rng rng(1);
  const env::LinkGains g = random_gains(3, rng);
  const Agent agent = make_agent(1, 3, 0);
  const AgentState s = agent.make_state(observe(1, nullptr, g, env::SystemParams{}));
  CHECK(s.normalized.size() == 11);
  CHECK(s.normalized.isZero());
}

TEST_CASE("sensed harvest for a tie in the previous slot") {
  Rng rng(2);
  const env::SystemParams params;
  const env::LinkGains prev_gains = random_gains(2, rng);
  const env::LinkGains now = random_gains(2, rng);
  const PreviousSlot prev = previous(prev_gains, {0.01, 0.01}, {1e-6, 2e-6}, params);
  const LocalObservation obs = observe(0, &prev, now, params);
  REQUIRE(obs.external.size() == 1);
  CHECK(obs.external[0].energy == doctest::Approx(0.5 * 1.0 * 0.01 * now.h(0, 1)).epsilon(1e-14));
  CHECK(obs.external[0].wit == doctest::Approx(0.01 * now.h(1, 0) * 2e-6).epsilon(1e-14));
  CHECK(obs.external[0].wet == doctest::Approx(1e-5 * 0.01 * now.g(1, 0)).epsilon(1e-14));
  CHECK(obs.internal.prev_tau == 0.01);
  CHECK(obs.internal.gain == now.h(0, 0));
  CHECK(obs.internal.prev_gain == prev_gains.h(0, 0));
  CHECK(obs.internal.prev_rate == prev.rates[0]);
}

TEST_CASE("silent neighbours cause no sensed WIT interference") {
  Rng rng(3);
  const env::SystemParams params;
  const env::LinkGains g = random_gains(3, rng);
  const PreviousSlot prev = previous(g, {0.002, 0.015, 0.008}, {1e-6, 0.0, 0.0}, params);
  const LocalObservation obs = observe(0, &prev, g, params);
  CHECK(obs.external[0].wit == 0.0);
  CHECK(obs.external[1].wit == 0.0);
  CHECK(obs.external[0].wet > 0.0);
}

TEST_CASE("normalizer calibration") {
  Rng rng(4);
  const env::SystemParams params;
  std::vector<LocalObservation> samples;
  std::uniform_real_distribution<double> u(0.0, params.max_tau());
  env::LinkGains g = random_gains(2, rng);
  for (int t = 0; t < 500; ++t) {
    const env::LinkGains next = random_gains(2, rng);
    const double t0 = u(rng), t1 = u(rng);
    const auto e = env::harvested_energies(env::build_schedule(std::vector<double>{t0, t1}, 0.02, 0.0002), g, params);
    const PreviousSlot prev = previous(g, {t0, t1}, {0.5 * e[0] / (0.02 - t0), 0.5 * e[1] / (0.02 - t1)}, params);
    samples.push_back(observe(0, &prev, next, params));
    g = next;
  }
  StateNormalizer n(2, params.slot, rate_scale(params, 1e-3));
  n.calibrate(samples);
  Vector mean = Vector::Zero(8);
  for (const auto& s : samples) {
    const Vector x = n.normalize(s);
    CHECK(x.cwiseAbs().maxCoeff() <= StateNormalizer::kClip);
    mean += x;
  }
  mean /= static_cast<double>(samples.size());
  for (Eigen::Index k : {1, 2, 3, 5, 6, 7}) CHECK(std::fabs(mean(k)) < 0.2);
  CHECK(n.normalize(samples[0])(0) == doctest::Approx(samples[0].internal.prev_tau / 0.02));
  CHECK(rate_scale(params, 1e-3) == doctest::Approx(std::log1p(1e5) * 0.02));

  std::stringstream ss;
  n.save(ss);
  const StateNormalizer back = StateNormalizer::load(ss);
  CHECK(back.normalize(samples[3]) == n.normalize(samples[3]));
}

TEST_CASE("sampling") {
  Rng rng(5);
  Vector degenerate = Vector::Zero(6);
  degenerate(3) = 1.0;
  for (int t = 0; t < 1000; ++t) CHECK(sample_index(degenerate, rng) == 3);

  const Vector uniform = Vector::Constant(4, 0.25);
  std::vector<int> counts(4, 0);
  constexpr int kDraws = 100000;
  for (int t = 0; t < kDraws; ++t) ++counts[sample_index(uniform, rng)];
  for (int c : counts) CHECK(std::fabs(static_cast<double>(c) / kDraws - 0.25) < 0.01);

  Rng init(6);
  const nn::TwoHeadActorNet actor = nn::TwoHeadActorNet::create(3, {4}, {}, 5, 5, init);
  Rng a(9), b(9);
  const Vector s = Vector::Ones(3);
  for (int t = 0; t < 20; ++t) {
    const SampledAction x = sample_action(actor, s, a), y = sample_action(actor, s, b);
    CHECK(x.k_tau == y.k_tau);
    CHECK(x.k_p == y.k_p);
  }
}

TEST_CASE("td error") {
  const nn::DenseNet zero = nn::DenseNet::zeros({2, 3, 1}, {nn::Activation::tanh, nn::Activation::linear});
  CHECK(td_error(zero, Vector::Ones(2), Vector::Zero(2), 0.37, 0.5) == 0.37);
  nn::DenseNet c = nn::DenseNet::zeros({1, 1}, {nn::Activation::linear});
  c.layer(0).weight(0, 0) = 1.0;
  CHECK(td_error(c, Vector::Constant(1, 1.0), Vector::Constant(1, 1.0), 0.0, 1.0) == 0.0);
  CHECK(td_error(c, Vector::Constant(1, 1.0), Vector::Constant(1, 2.0), 0.5, 0.5) == doctest::Approx(0.5));
}

TEST_CASE("actor-critic update") {
  Rng rng(7);
  nn::TwoHeadActorNet actor = nn::TwoHeadActorNet::create(1, {3}, {}, 2, 2, rng);
  const Vector s = Vector::Constant(1, 1.0), s_next = Vector::Zero(1);

  SUBCASE("zero advantage changes nothing") {
    nn::DenseNet critic = nn::DenseNet::zeros({1, 1}, {nn::Activation::linear});
    const nn::DenseNet critic0 = critic;
    const nn::DenseNet trunk0 = actor.trunk();
    const UpdateResult r = update(critic, actor, s, actor.forward(s), 1, 0, s_next, 0.0, {0.1, 0.1, 0.5});
    CHECK(r.td_error == 0.0);
    CHECK(critic == critic0);
    CHECK(actor.trunk() == trunk0);
  }
  SUBCASE("single-weight critic") {
    nn::DenseNet critic = nn::DenseNet::zeros({1, 1}, {nn::Activation::linear});
    critic.layer(0).weight(0, 0) = 0.3;
    const nn::DenseNet time0 = actor.time_head();
    update(critic, actor, s, actor.forward(s), 1, 0, s_next, 1.0, {0.1, 0.0, 0.0});
    CHECK(critic.layers()[0].weight(0, 0) == doctest::Approx(0.3 + 0.1 * (1.0 - 0.3)).epsilon(1e-15));
    CHECK(actor.time_head() == time0);
  }
  SUBCASE("positive advantage raises the chosen probability") {
    nn::DenseNet critic = nn::DenseNet::zeros({1, 1}, {nn::Activation::linear});
    const double before = actor.forward(s).time_probs()(1);
    update(critic, actor, s, actor.forward(s), 1, 0, s_next, 1.0, {0.1, 0.1, 0.0});
    CHECK(actor.forward(s).time_probs()(1) > before);
  }
  SUBCASE("non-finite reward is skipped") {
    nn::DenseNet critic = nn::DenseNet::zeros({1, 1}, {nn::Activation::linear});
    const UpdateResult r =
        update(critic, actor, s, actor.forward(s), 1, 0, s_next, std::nan(""), {0.1, 0.1, 0.0});
    CHECK(r.status == UpdateStatus::skipped_nonfinite);
  }
}

TEST_CASE("agent protocol order") {
  Agent a = make_agent(0, 2, 1);
  Rng rng(8);
  const env::LinkGains g = random_gains(2, rng);
  const AgentState s = a.make_state(observe(0, nullptr, g, env::SystemParams{}));
  CHECK_THROWS_AS(a.choose_power(1e-6), StateError);
  CHECK_THROWS_AS(a.learn(s, 0.0), StateError);
  const double tau = a.choose_time(s);
  CHECK(tau >= 0.0);
  CHECK(tau <= 0.0198);
  const double p = a.choose_power(1e-6);
  CHECK((0.02 - tau) * p <= 1e-6 + 1e-18);
  CHECK(a.learn(s, 0.01).status == UpdateStatus::applied);
}

TEST_CASE("agent checkpoints") {
  Agent a = make_agent(1, 3, 2);
  std::stringstream ss;
  a.save(ss);
  Agent b = make_agent(1, 3, 99);
  b.load(ss);
  CHECK(b.critic() == a.critic());
  CHECK(b.actor().trunk() == a.actor().trunk());
  CHECK(b.actor().power_head() == a.actor().power_head());

  std::stringstream again;
  a.save(again);
  Agent wrong_index = make_agent(0, 3, 2);
  CHECK_THROWS_AS(wrong_index.load(again), ConfigError);
  std::stringstream junk("not a checkpoint");
  CHECK_THROWS_AS(b.load(junk), ConfigError);
}

TEST_CASE("price exchange") {
  const env::SystemParams params;
  SUBCASE("single cell") {
    const env::LinkGains g{Matrix::Constant(1, 1, 1e-3), Matrix::Zero(1, 1)};
    const env::SlotOutcome out = env::step(g, std::vector<double>{0.01}, std::vector<double>{5e-4}, params);
    CHECK(exchange_prices(out, 0) == std::vector<double>{out.rates[0]});
  }
  SUBCASE("no cross links") {
    env::LinkGains g{Matrix::Zero(3, 3), Matrix::Zero(3, 3)};
    for (Eigen::Index i = 0; i < 3; ++i) g.h(i, i) = 1e-3;
    const std::vector<double> tau{0.005, 0.01, 0.015};
    const auto e = env::harvested_energies(env::build_schedule(tau, 0.02, 0.0002), g, params);
    std::vector<double> p(3);
    for (std::size_t i = 0; i < 3; ++i) p[i] = e[i] / (0.02 - tau[i]);
    const env::SlotOutcome out = env::step(g, tau, p, params);
    const auto r = exchange_prices(out, 4);
    for (std::size_t i = 0; i < 3; ++i) CHECK(r[i] == out.rates[i]);
  }
  SUBCASE("matches the central reward bit for bit") {
    Rng rng(10);
    for (std::size_t n : {2u, 3u, 5u}) {
      const env::LinkGains g = random_gains(n, rng);
      std::vector<double> tau(n), p(n);
      for (std::size_t i = 0; i < n; ++i) tau[i] = 0.002 * static_cast<double>(i + 1);
      const auto e = env::harvested_energies(env::build_schedule(tau, 0.02, 0.0002), g, params);
      for (std::size_t i = 0; i < n; ++i) p[i] = 0.7 * e[i] / (0.02 - tau[i]);
      const env::SlotOutcome out = env::step(g, tau, p, params);
      CHECK(exchange_prices(out, 1) == out.rewards);
    }
  }
  SUBCASE("protocol violations") {
    Rng rng(11);
    const env::LinkGains g = random_gains(3, rng);
    const env::SlotOutcome out =
        env::step(g, std::vector<double>{0.01, 0.01, 0.01}, std::vector<double>{0.0, 0.0, 0.0}, params);
    std::vector<PriceMessage> inbox;
    for (std::size_t j : {1u, 2u}) {
      for (const auto& m : price_messages(j, out, 7)) {
        if (m.to == 0) inbox.push_back(m);
      }
    }
    CHECK_NOTHROW(reward_from_prices(0, out.rates[0], 3, inbox, 7));
    CHECK_THROWS_AS(reward_from_prices(0, out.rates[0], 3, inbox, 8), ProtocolError);
    auto dup = inbox;
    dup.push_back(inbox[0]);
    CHECK_THROWS_AS(reward_from_prices(0, out.rates[0], 3, dup, 7), ProtocolError);
    auto missing = inbox;
    missing.pop_back();
    CHECK_THROWS_AS(reward_from_prices(0, out.rates[0], 3, missing, 7), ProtocolError);
    auto wrong = inbox;
    wrong[0].to = 1;
    CHECK_THROWS_AS(reward_from_prices(0, out.rates[0], 3, wrong, 7), ProtocolError);
  }
}
