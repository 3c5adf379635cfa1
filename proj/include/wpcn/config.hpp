#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "wpcn/actions.hpp"
#include "wpcn/agent.hpp"
#include "wpcn/channel.hpp"
#include "wpcn/env.hpp"

namespace wpcn::runner {

enum class Policy { madrl, naive, pgd, oracle };

std::string to_string(Policy p);
Policy parse_policy(const std::string& s);

/// Every knob of an experiment. Defaults reproduce the published setup:
/// N = 5, T = 20 ms, f_d = 10 Hz, P = 30 dBm, sigma^2 = -50 dBm,
/// beta = -50 dB, eta = 0.5, K_T = K_P = 20, learning rates 1e-5,
/// gamma = 0.5, 1e5 training and 1e4 test slots, 50 seeds.
struct ExperimentConfig {
  std::size_t cells = 5;
  double slot_s = 0.02;
  double doppler_hz = 10.0;
  double hap_power_dbm = 30.0;
  double noise_dbm = -50.0;
  double wet_leakage_db = -50.0;
  env::EhKind eh_model = env::EhKind::linear;
  double eta = 0.5;
  double a1 = 1.5e3;
  double a2 = 3.3;
  double a3 = 2.8e-3;
  std::size_t time_levels = 20;
  std::size_t power_levels = 20;
  double eps_tau_fraction = 0.01;
  double critic_lr = 1e-5;
  double actor_lr = 1e-5;
  double gamma = 0.5;
  std::size_t train_slots = 100000;
  std::size_t test_slots = 10000;
  std::size_t warmup_slots = 1000;
  std::vector<std::uint64_t> seeds = default_seeds();
  Policy policy = Policy::madrl;
  std::vector<std::size_t> actor_trunk{200, 200};
  std::vector<std::size_t> actor_head{200, 200};
  std::vector<std::size_t> critic_hidden{200, 200, 100, 70};
  bool greedy_eval = false;
  bool parallel_agents = false;
  double hap_user_m = 10.0;
  double hap_spacing_m = 15.0;
  double pathloss_exponent = 3.0;
  double pgd_precision = 1e-2;
  std::size_t ma_window = 1000;
  std::string out_dir = "runs";

  static std::vector<std::uint64_t> default_seeds();

  /// Applies one key=value setting; throws ConfigError on unknown keys or
  /// unparsable values.
  void set(const std::string& key, const std::string& value);

  /// Parses `key = value` lines; '#' starts a comment.
  void read(std::istream& in);
  static ExperimentConfig from_file(const std::string& path);

  /// Throws ConfigError if the values cannot describe a run.
  void validate() const;

  /// Canonical `key=value` lines in a fixed order. `with_seeds = false`
  /// omits the seed list (used to compare runs across seeds).
  std::string serialize(bool with_seeds = true) const;

  env::SystemParams system() const;
  agent::ActionSpaces spaces() const;
  agent::Topology topology() const;
  agent::LearningRates learning_rates() const;
  channel::Geometry geometry() const;
  double rho() const;
};

}  // namespace wpcn::runner
