#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <vector>

#include "wpcn/actions.hpp"
#include "wpcn/env.hpp"
#include "wpcn/nn.hpp"

namespace wpcn::agent {

/// What H-AP i learns from its own link: previous action, own-link gain in
/// the previous and current slot, previous own rate.
struct InternalObservation {
  double prev_tau = 0.0;
  double prev_power = 0.0;
  double prev_gain = 0.0;
  double gain = 0.0;
  double prev_rate = 0.0;
};

/// Sensed footprint of cell j at H-AP/user i, using j's previous action and
/// the current channel: estimated harvest, WIT interference and WET
/// interference, each integrated over the slot.
struct ExternalTriple {
  double energy = 0.0;
  double wit = 0.0;
  double wet = 0.0;
};

struct LocalObservation {
  InternalObservation internal;
  std::vector<ExternalTriple> external;  ///< one per j != i, ascending j
  bool initial = false;                  ///< slot 0: no previous slot exists
};

/// The previous slot as it physically happened; input to sensing.
struct PreviousSlot {
  env::SlotSchedule schedule;
  std::vector<double> power;
  std::vector<double> rates;
  env::LinkGains gains;
};

/// 5 + 3 (N - 1).
std::size_t state_width(std::size_t cells);

/// Measures the external triples of cell i. Ehat uses the linear eta model
/// regardless of the environment's EH circuit.
std::vector<ExternalTriple> sense_external(std::size_t i, const PreviousSlot& prev, const env::LinkGains& current,
                                           const env::SystemParams& params);

/// Local observation of agent i at the start of a slot. `prev == nullptr`
/// marks slot 0.
LocalObservation observe(std::size_t i, const PreviousSlot* prev, const env::LinkGains& current,
                         const env::SystemParams& params);

/// Maps observations to a bounded network input.
///
/// Layout: [tau / T, P(p), P(h_prev), P(h), R / R_scale, then per j:
/// P(Ehat), P(Ihat), P(Dhat)] where P(x) = (log10(x + 1e-30) - mean) / sd
/// with per-feature mean and sd frozen after calibration, clipped to
/// +/- kClip.
class StateNormalizer {
 public:
  static constexpr double kFloor = 1e-30;
  static constexpr double kClip = 5.0;

  StateNormalizer() = default;
  StateNormalizer(std::size_t cells, double slot_s, double rate_scale);

  std::size_t width() const { return width_; }
  bool calibrated() const { return calibrated_; }

  /// Feature vector before the affine map (log10 for log features).
  Vector raw(const LocalObservation& obs) const;

  void calibrate(std::span<const LocalObservation> samples);
  Vector normalize(const LocalObservation& obs) const;

  void save(std::ostream& out) const;
  static StateNormalizer load(std::istream& in);

  const Vector& mean() const { return mean_; }
  const Vector& scale() const { return scale_; }

 private:
  bool is_log_feature(std::size_t k) const;

  std::size_t width_ = 0;
  double slot_ = 0.0;
  double rate_scale_ = 1.0;
  Vector mean_;
  Vector scale_;
  bool calibrated_ = false;
};

/// ln(1 + P h / sigma^2) T for a reference own-link gain h.
double rate_scale(const env::SystemParams& params, double reference_gain);

struct AgentState {
  LocalObservation observation;
  Vector normalized;
};

/// Draws an index from a probability vector by inverse CDF.
std::size_t sample_index(const Vector& probs, Rng& rng);

struct SampledAction {
  std::size_t k_tau = 0;
  std::size_t k_p = 0;
  nn::ActorForward forward;
  double log_prob = 0.0;
};

/// Both indices drawn independently from the two heads.
SampledAction sample_action(const nn::TwoHeadActorNet& actor, const Vector& state, Rng& rng);

/// Greedy counterpart: argmax of each head.
SampledAction greedy_action(const nn::TwoHeadActorNet& actor, const Vector& state);

/// delta = r + gamma V(s') - V(s).
double td_error(const nn::DenseNet& critic, const Vector& state, const Vector& next_state, double reward,
                double gamma);

struct LearningRates {
  double critic = 1e-5;
  double actor = 1e-5;
  double gamma = 0.5;
};

enum class UpdateStatus { applied, skipped_nonfinite };

struct UpdateResult {
  double td_error = 0.0;
  UpdateStatus status = UpdateStatus::applied;
};

/// One A2C step from a single transition. delta is computed with the
/// pre-update parameters; the critic ascends delta grad V(s), the actor
/// ascends delta grad [log pi_time(k_tau|s) + log pi_power(k_p|s)].
/// `actor_forward` must be the forward pass of `state` on the current actor.
UpdateResult update(nn::DenseNet& critic, nn::TwoHeadActorNet& actor, const Vector& state,
                    const nn::ActorForward& actor_forward, std::size_t k_tau, std::size_t k_p,
                    const Vector& next_state, double reward, const LearningRates& rates);

/// Network sizes of one agent.
struct Topology {
  std::vector<std::size_t> actor_trunk{200, 200};
  std::vector<std::size_t> actor_head{200, 200};
  std::vector<std::size_t> critic{200, 200, 100, 70};
};

/// H-AP i's decision entity. Owns its networks, normalizer and random
/// streams; sees the world only through LocalObservation, its own measured
/// E_i and the price messages delivered to it.
class Agent {
 public:
  Agent(std::size_t index, std::size_t cells, const ActionSpaces& spaces, const Topology& topology,
        const LearningRates& rates, StateNormalizer normalizer, Rng init_rng, Rng policy_rng);

  std::size_t index() const { return index_; }
  std::size_t cells() const { return cells_; }

  AgentState make_state(const LocalObservation& obs) const;

  /// Phase 1: run the actor on the state and draw the time index.
  double choose_time(const AgentState& state, bool greedy = false);
  /// Phase 3: draw the power index given the measured harvest.
  double choose_power(double energy, bool greedy = false);

  std::size_t last_time_index() const { return k_tau_; }
  std::size_t last_power_index() const { return k_p_; }
  const nn::ActorForward& last_forward() const { return forward_; }

  /// Phase 5: learn from (s_t, a_t, r, s_{t+1}).
  UpdateResult learn(const AgentState& next_state, double reward);

  const nn::TwoHeadActorNet& actor() const { return actor_; }
  nn::TwoHeadActorNet& actor() { return actor_; }
  const nn::DenseNet& critic() const { return critic_; }
  nn::DenseNet& critic() { return critic_; }
  const StateNormalizer& normalizer() const { return normalizer_; }
  StateNormalizer& normalizer() { return normalizer_; }
  const ActionSpaces& spaces() const { return spaces_; }
  void set_policy_rng(Rng rng) { policy_rng_ = std::move(rng); }

  void save(std::ostream& out) const;
  /// Restores networks and normalizer; throws ConfigError on topology
  /// mismatch with this agent.
  void load(std::istream& in);

 private:
  std::size_t index_;
  std::size_t cells_;
  ActionSpaces spaces_;
  LearningRates rates_;
  StateNormalizer normalizer_;
  nn::TwoHeadActorNet actor_;
  nn::DenseNet critic_;
  Rng policy_rng_;

  bool pending_ = false;
  bool greedy_ = false;
  Vector state_;
  nn::ActorForward forward_;
  std::size_t k_tau_ = 0;
  std::size_t k_p_ = 0;
  double tau_ = 0.0;
};

/// Backhaul message from H-AP `from` to H-AP `to`: R_from and
/// R_{from \ to}, the rate `from`'s user would get without `to`.
struct PriceMessage {
  std::size_t from = 0;
  std::size_t to = 0;
  double rate = 0.0;
  double value = 0.0;
  std::uint64_t slot = 0;
};

/// Messages H-AP j sends after slot `slot`.
std::vector<PriceMessage> price_messages(std::size_t from, const env::SlotOutcome& outcome, std::uint64_t slot);

/// r_i = R_i - sum_{j != i} (R_{j\i} - R_j) from exactly one message per
/// other cell. Throws ProtocolError if a message is missing, duplicated,
/// misaddressed or from another slot.
double reward_from_prices(std::size_t i, double own_rate, std::size_t cells, std::span<const PriceMessage> inbox,
                          std::uint64_t slot);

/// Point-to-point mailbox between H-APs.
class Backhaul {
 public:
  void send(const PriceMessage& msg);
  std::vector<PriceMessage> collect(std::size_t to);

 private:
  std::map<std::size_t, std::vector<PriceMessage>> inbox_;
};

/// Full exchange round for one slot; returns every agent's reward.
std::vector<double> exchange_prices(const env::SlotOutcome& outcome, std::uint64_t slot);

}  // namespace wpcn::agent
