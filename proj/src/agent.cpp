#include "wpcn/agent.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace wpcn::agent {

namespace {

constexpr char kCheckpointMagic[8] = {'W', 'P', 'C', 'N', 'A', 'G', 'T', '1'};
constexpr std::size_t kInternalWidth = 5;

void write_f64(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  char bytes[8];
  for (int b = 0; b < 8; ++b) bytes[b] = static_cast<char>((bits >> (8 * b)) & 0xff);
  out.write(bytes, 8);
}

double read_f64(std::istream& in) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw ConfigError("checkpoint truncated");
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
  return std::bit_cast<double>(bits);
}

void write_u64(std::ostream& out, std::uint64_t v) { write_f64(out, std::bit_cast<double>(v)); }
std::uint64_t read_u64(std::istream& in) { return std::bit_cast<std::uint64_t>(read_f64(in)); }

nn::DenseNet make_critic(std::size_t input, const std::vector<std::size_t>& hidden, Rng& rng) {
  std::vector<std::size_t> widths{input};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(1);
  std::vector<nn::Activation> acts(hidden.size(), nn::Activation::tanh);
  acts.push_back(nn::Activation::linear);
  return nn::DenseNet(widths, acts, rng);
}

std::size_t argmax(const Vector& v) {
  Eigen::Index k = 0;
  v.maxCoeff(&k);
  return static_cast<std::size_t>(k);
}

}  // namespace

std::size_t state_width(std::size_t cells) {
  if (cells == 0) throw std::invalid_argument("state_width: no cells");
  return kInternalWidth + 3 * (cells - 1);
}

std::vector<ExternalTriple> sense_external(std::size_t i, const PreviousSlot& prev, const env::LinkGains& current,
                                           const env::SystemParams& params) {
  const env::SlotSchedule& s = prev.schedule;
  const std::size_t n = s.cells();
  std::vector<ExternalTriple> out;
  out.reserve(n - 1);
  for (std::size_t j = 0; j < n; ++j) {
    if (j == i) continue;
    ExternalTriple t;
    for (std::size_t k = 0; k < s.intervals(); ++k) {
      const double dur = s.duration(k);
      const bool i_wit = s.wit(k, i);
      const bool j_wit = s.wit(k, j);
      if (!i_wit && !j_wit) t.energy += dur * current.h(i, j);
      if (j_wit) t.wit += dur * current.h(j, i) * prev.power[j];
      else t.wet += dur * current.g(j, i);
    }
    t.energy *= params.eh.eta * params.hap_power;
    t.wet *= params.wet_leakage;
    out.push_back(t);
  }
  return out;
}

LocalObservation observe(std::size_t i, const PreviousSlot* prev, const env::LinkGains& current,
                         const env::SystemParams& params) {
  LocalObservation obs;
  const std::size_t n = current.cells();
  if (prev == nullptr) {
    obs.initial = true;
    obs.internal.gain = current.h(i, i);
    obs.external.assign(n - 1, ExternalTriple{});
    return obs;
  }
  obs.internal.prev_tau = prev->schedule.tau[i];
  obs.internal.prev_power = prev->power[i];
  obs.internal.prev_gain = prev->gains.h(i, i);
  obs.internal.gain = current.h(i, i);
  obs.internal.prev_rate = prev->rates[i];
  obs.external = sense_external(i, *prev, current, params);
  return obs;
}

double rate_scale(const env::SystemParams& params, double reference_gain) {
  return std::log1p(params.hap_power * reference_gain / params.noise) * params.slot;
}

StateNormalizer::StateNormalizer(std::size_t cells, double slot_s, double rate_scale)
    : width_(state_width(cells)), slot_(slot_s), rate_scale_(rate_scale),
      mean_(Vector::Zero(static_cast<Eigen::Index>(width_))), scale_(Vector::Ones(static_cast<Eigen::Index>(width_))) {
  if (!(slot_s > 0.0) || !(rate_scale > 0.0)) throw std::invalid_argument("StateNormalizer: scales must be positive");
}

bool StateNormalizer::is_log_feature(std::size_t k) const { return k != 0 && k != 4; }

Vector StateNormalizer::raw(const LocalObservation& obs) const {
  if (kInternalWidth + 3 * obs.external.size() != width_) {
    throw std::invalid_argument("StateNormalizer: observation does not match cell count");
  }
  Vector x(static_cast<Eigen::Index>(width_));
  auto lg = [](double v) { return std::log10(std::max(v, 0.0) + kFloor); };
  x(0) = obs.internal.prev_tau / slot_;
  x(1) = lg(obs.internal.prev_power);
  x(2) = lg(obs.internal.prev_gain);
  x(3) = lg(obs.internal.gain);
  x(4) = obs.internal.prev_rate / rate_scale_;
  Eigen::Index k = kInternalWidth;
  for (const ExternalTriple& t : obs.external) {
    x(k++) = lg(t.energy);
    x(k++) = lg(t.wit);
    x(k++) = lg(t.wet);
  }
  return x;
}

void StateNormalizer::calibrate(std::span<const LocalObservation> samples) {
  if (samples.empty()) throw std::invalid_argument("StateNormalizer::calibrate: no samples");
  const auto w = static_cast<Eigen::Index>(width_);
  Vector sum = Vector::Zero(w);
  Vector sq = Vector::Zero(w);
  for (const auto& obs : samples) {
    const Vector x = raw(obs);
    sum += x;
    sq += x.cwiseProduct(x);
  }
  const double count = static_cast<double>(samples.size());
  mean_ = sum / count;
  Vector var = (sq / count - mean_.cwiseProduct(mean_)).cwiseMax(0.0);
  for (Eigen::Index k = 0; k < w; ++k) {
    if (!is_log_feature(static_cast<std::size_t>(k))) {
      mean_(k) = 0.0;
      scale_(k) = 1.0;
      continue;
    }
    const double sd = std::sqrt(var(k));
    scale_(k) = sd > 1e-3 ? sd : 1.0;
  }
  calibrated_ = true;
}

Vector StateNormalizer::normalize(const LocalObservation& obs) const {
  if (obs.initial) return Vector::Zero(static_cast<Eigen::Index>(width_));
  Vector x = raw(obs);
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    if (!is_log_feature(static_cast<std::size_t>(k))) continue;
    x(k) = std::clamp((x(k) - mean_(k)) / scale_(k), -kClip, kClip);
  }
  return x;
}

void StateNormalizer::save(std::ostream& out) const {
  write_u64(out, width_);
  write_f64(out, slot_);
  write_f64(out, rate_scale_);
  write_u64(out, calibrated_ ? 1 : 0);
  for (Eigen::Index k = 0; k < mean_.size(); ++k) write_f64(out, mean_(k));
  for (Eigen::Index k = 0; k < scale_.size(); ++k) write_f64(out, scale_(k));
}

StateNormalizer StateNormalizer::load(std::istream& in) {
  StateNormalizer s;
  const std::uint64_t width = read_u64(in);
  if (width < kInternalWidth || (width - kInternalWidth) % 3 != 0 || width > 1u << 16) {
    throw ConfigError("checkpoint: bad normalizer width");
  }
  s.width_ = static_cast<std::size_t>(width);
  s.slot_ = read_f64(in);
  s.rate_scale_ = read_f64(in);
  s.calibrated_ = read_u64(in) != 0;
  s.mean_.resize(static_cast<Eigen::Index>(width));
  s.scale_.resize(static_cast<Eigen::Index>(width));
  for (Eigen::Index k = 0; k < s.mean_.size(); ++k) s.mean_(k) = read_f64(in);
  for (Eigen::Index k = 0; k < s.scale_.size(); ++k) s.scale_(k) = read_f64(in);
  return s;
}

std::size_t sample_index(const Vector& probs, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u = unit(rng);
  double cumulative = 0.0;
  std::size_t last_positive = 0;
  for (Eigen::Index k = 0; k < probs.size(); ++k) {
    if (probs(k) <= 0.0) continue;
    last_positive = static_cast<std::size_t>(k);
    cumulative += probs(k);
    if (u < cumulative) return last_positive;
  }
  return last_positive;  // u beyond the rounded total mass
}

SampledAction sample_action(const nn::TwoHeadActorNet& actor, const Vector& state, Rng& rng) {
  SampledAction a;
  a.forward = actor.forward(state);
  a.k_tau = sample_index(a.forward.time_probs(), rng);
  a.k_p = sample_index(a.forward.power_probs(), rng);
  a.log_prob = actor.log_prob(a.forward, a.k_tau, a.k_p);
  return a;
}

SampledAction greedy_action(const nn::TwoHeadActorNet& actor, const Vector& state) {
  SampledAction a;
  a.forward = actor.forward(state);
  a.k_tau = argmax(a.forward.time_probs());
  a.k_p = argmax(a.forward.power_probs());
  a.log_prob = actor.log_prob(a.forward, a.k_tau, a.k_p);
  return a;
}

double td_error(const nn::DenseNet& critic, const Vector& state, const Vector& next_state, double reward,
                double gamma) {
  return reward + gamma * critic.predict(next_state)(0) - critic.predict(state)(0);
}

UpdateResult update(nn::DenseNet& critic, nn::TwoHeadActorNet& actor, const Vector& state,
                    const nn::ActorForward& actor_forward, std::size_t k_tau, std::size_t k_p,
                    const Vector& next_state, double reward, const LearningRates& rates) {
  const nn::ForwardCache critic_fwd = critic.forward(state);
  const double delta = reward + rates.gamma * critic.predict(next_state)(0) - critic_fwd.output()(0);
  if (!std::isfinite(delta)) return {delta, UpdateStatus::skipped_nonfinite};

  nn::Gradients value_grad = critic.backward(critic_fwd, Vector::Ones(1));
  nn::ActorGradients policy_grad = actor.log_prob_gradient(actor_forward, k_tau, k_p);
  value_grad *= delta;
  policy_grad.trunk *= delta;
  policy_grad.time *= delta;
  policy_grad.power *= delta;
  if (!value_grad.all_finite() || !policy_grad.trunk.all_finite() || !policy_grad.time.all_finite() ||
      !policy_grad.power.all_finite()) {
    return {delta, UpdateStatus::skipped_nonfinite};
  }
  critic.sgd_step(value_grad, rates.critic, nn::Direction::ascent);
  actor.sgd_step(policy_grad, rates.actor, nn::Direction::ascent);
  return {delta, UpdateStatus::applied};
}

Agent::Agent(std::size_t index, std::size_t cells, const ActionSpaces& spaces, const Topology& topology,
             const LearningRates& rates, StateNormalizer normalizer, Rng init_rng, Rng policy_rng)
    : index_(index), cells_(cells), spaces_(spaces), rates_(rates), normalizer_(std::move(normalizer)),
      policy_rng_(std::move(policy_rng)) {
  if (index >= cells) throw std::invalid_argument("Agent: index out of range");
  spaces_.validate();
  const std::size_t width = state_width(cells);
  if (normalizer_.width() != width) throw std::invalid_argument("Agent: normalizer width mismatch");
  actor_ = nn::TwoHeadActorNet::create(width, topology.actor_trunk, topology.actor_head, spaces.time_levels,
                                       spaces.power_levels, init_rng);
  critic_ = make_critic(width, topology.critic, init_rng);
}

AgentState Agent::make_state(const LocalObservation& obs) const { return {obs, normalizer_.normalize(obs)}; }

double Agent::choose_time(const AgentState& state, bool greedy) {
  state_ = state.normalized;
  forward_ = actor_.forward(state_);
  greedy_ = greedy;
  k_tau_ = greedy ? argmax(forward_.time_probs()) : sample_index(forward_.time_probs(), policy_rng_);
  tau_ = spaces_.time_value(k_tau_);
  pending_ = true;
  return tau_;
}

double Agent::choose_power(double energy, bool greedy) {
  if (!pending_) throw StateError("Agent::choose_power called before choose_time");
  k_p_ = greedy ? argmax(forward_.power_probs()) : sample_index(forward_.power_probs(), policy_rng_);
  return spaces_.power_value(k_p_, energy, tau_);
}

UpdateResult Agent::learn(const AgentState& next_state, double reward) {
  if (!pending_) throw StateError("Agent::learn called without a pending action");
  pending_ = false;
  return update(critic_, actor_, state_, forward_, k_tau_, k_p_, next_state.normalized, reward, rates_);
}

void Agent::save(std::ostream& out) const {
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  write_u64(out, index_);
  write_u64(out, cells_);
  normalizer_.save(out);
  actor_.save(out);
  critic_.save(out);
  if (!out) throw ConfigError("checkpoint write failed");
}

void Agent::load(std::istream& in) {
  char magic[sizeof kCheckpointMagic];
  if (!in.read(magic, sizeof magic) || !std::equal(magic, magic + sizeof magic, kCheckpointMagic)) {
    throw ConfigError("checkpoint: not an agent checkpoint");
  }
  const std::uint64_t index = read_u64(in);
  const std::uint64_t cells = read_u64(in);
  if (index != index_ || cells != cells_) throw ConfigError("checkpoint: agent index or cell count mismatch");
  StateNormalizer normalizer = StateNormalizer::load(in);
  nn::TwoHeadActorNet actor = nn::TwoHeadActorNet::load(in);
  nn::DenseNet critic = nn::DenseNet::load(in);
  auto same_shape = [](const nn::DenseNet& a, const nn::DenseNet& b) {
    return a.widths() == b.widths() && a.activations() == b.activations();
  };
  if (normalizer.width() != normalizer_.width() || !same_shape(actor.trunk(), actor_.trunk()) ||
      !same_shape(actor.time_head(), actor_.time_head()) || !same_shape(actor.power_head(), actor_.power_head()) ||
      !same_shape(critic, critic_)) {
    throw ConfigError("checkpoint: topology does not match the configured agent");
  }
  normalizer_ = std::move(normalizer);
  actor_ = std::move(actor);
  critic_ = std::move(critic);
  pending_ = false;
}

std::vector<PriceMessage> price_messages(std::size_t from, const env::SlotOutcome& outcome, std::uint64_t slot) {
  const std::size_t n = outcome.rates.size();
  std::vector<PriceMessage> out;
  for (std::size_t to = 0; to < n; ++to) {
    if (to == from) continue;
    out.push_back({from, to, outcome.rates[from], outcome.rates_excl(from, to), slot});
  }
  return out;
}

double reward_from_prices(std::size_t i, double own_rate, std::size_t cells, std::span<const PriceMessage> inbox,
                          std::uint64_t slot) {
  std::vector<const PriceMessage*> by_sender(cells, nullptr);
  for (const PriceMessage& m : inbox) {
    if (m.to != i || m.slot != slot || m.from >= cells || m.from == i) {
      throw ProtocolError("price message misaddressed or from another slot");
    }
    if (by_sender[m.from] != nullptr) throw ProtocolError("duplicate price message from cell " + std::to_string(m.from));
    by_sender[m.from] = &m;
  }
  double price = 0.0;
  for (std::size_t j = 0; j < cells; ++j) {
    if (j == i) continue;
    if (by_sender[j] == nullptr) throw ProtocolError("missing price message from cell " + std::to_string(j));
    price += by_sender[j]->value - by_sender[j]->rate;
  }
  return own_rate - price;
}

void Backhaul::send(const PriceMessage& msg) { inbox_[msg.to].push_back(msg); }

std::vector<PriceMessage> Backhaul::collect(std::size_t to) {
  auto it = inbox_.find(to);
  if (it == inbox_.end()) return {};
  std::vector<PriceMessage> out = std::move(it->second);
  inbox_.erase(it);
  return out;
}

std::vector<double> exchange_prices(const env::SlotOutcome& outcome, std::uint64_t slot) {
  const std::size_t n = outcome.rates.size();
  Backhaul backhaul;
  for (std::size_t j = 0; j < n; ++j) {
    for (const PriceMessage& m : price_messages(j, outcome, slot)) backhaul.send(m);
  }
  std::vector<double> rewards(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::vector<PriceMessage> inbox = backhaul.collect(i);
    rewards[i] = reward_from_prices(i, outcome.rates[i], n, inbox, slot);
  }
  return rewards;
}

}  // namespace wpcn::agent
