#pragma once

#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "wpcn/agent.hpp"
#include "wpcn/baselines.hpp"
#include "wpcn/channel.hpp"
#include "wpcn/config.hpp"
#include "wpcn/env.hpp"

namespace wpcn::runner {

/// Runs fn(0) .. fn(count - 1), either inline or on one persistent thread per
/// index. run() returns once every call finished (a slot-phase barrier) and
/// rethrows the first exception raised by any call.
class AgentExecutor {
 public:
  AgentExecutor(std::size_t workers, bool parallel);
  ~AgentExecutor();
  AgentExecutor(const AgentExecutor&) = delete;
  AgentExecutor& operator=(const AgentExecutor&) = delete;

  void run(const std::function<void(std::size_t)>& fn);
  bool parallel() const { return !threads_.empty(); }

 private:
  void worker(std::size_t index);

  std::size_t count_;
  std::vector<std::thread> threads_;
  std::mutex mutex_;
  std::condition_variable start_cv_;
  std::condition_variable done_cv_;
  const std::function<void(std::size_t)>* job_ = nullptr;
  std::uint64_t generation_ = 0;
  std::size_t remaining_ = 0;
  bool stop_ = false;
  std::exception_ptr error_;
};

enum class Phase { state, time, energy, power, outcome };

struct PhaseEvent {
  Phase phase;
  std::size_t agent;  ///< cell index; environment phases use the cell count
};

/// The N agents of one seed together with the environment glue of the
/// five-phase slot protocol. Only observations, the measured E_i and
/// price messages cross the agent boundary.
class MadrlNetwork {
 public:
  MadrlNetwork(const ExperimentConfig& config, std::uint64_t seed);

  std::vector<agent::Agent>& agents() { return agents_; }
  const std::vector<agent::Agent>& agents() const { return agents_; }
  const env::SystemParams& params() const { return params_; }

  struct SlotResult {
    env::SlotOutcome outcome;
    std::vector<double> rewards;
    std::size_t updates = 0;
    std::size_t skipped = 0;
    std::size_t eh_violations = 0;
  };

  /// One slot on `gains`. With `learn`, each agent first completes the
  /// update for the previous slot using the state it observes now.
  SlotResult run_slot(const env::LinkGains& gains, bool learn, bool greedy = false);

  /// Completes the pending update after the last training slot.
  std::pair<std::size_t, std::size_t> finish(const env::LinkGains& next_gains);

  /// Forgets the previous slot (next slot starts from the zero state).
  void reset_episode();

  void set_parallel(bool parallel);
  /// Restarts every agent's sampling stream from (seed, stream, agent).
  void reseed_policies(std::uint64_t seed, Stream stream);
  void enable_trace(bool on) { trace_enabled_ = on; trace_.clear(); }
  const std::vector<PhaseEvent>& trace() const { return trace_; }

  /// Wall-clock seconds spent in the most recent decision phases (state
  /// construction, time choice, power choice).
  double last_decision_seconds() const { return last_decision_seconds_; }

  void save_checkpoints(const std::filesystem::path& dir, std::uint64_t slot) const;
  void load_checkpoints(const std::filesystem::path& dir, std::uint64_t slot);

 private:
  void record(Phase phase, std::size_t who);

  ExperimentConfig config_;
  env::SystemParams params_;
  agent::ActionSpaces spaces_;
  std::vector<agent::Agent> agents_;
  std::unique_ptr<AgentExecutor> executor_;
  std::optional<agent::PreviousSlot> prev_;
  std::vector<double> prev_rewards_;
  std::uint64_t slot_ = 0;
  bool trace_enabled_ = false;
  std::vector<PhaseEvent> trace_;
  std::mutex trace_mutex_;
  double last_decision_seconds_ = 0.0;
};

/// Calibrates per-agent state normalizers from naive-policy warm-up slots on
/// a dedicated channel stream.
std::vector<agent::StateNormalizer> calibrate_normalizers(const ExperimentConfig& config, std::uint64_t seed);

/// Channel model for (config, seed, stream).
channel::ChannelModel make_channel(const ExperimentConfig& config, std::uint64_t seed, Stream stream);

struct MetricsRow {
  std::uint64_t slot = 0;
  Policy policy = Policy::madrl;
  std::uint64_t seed = 0;
  double sum_rate = 0.0;     ///< nats/s
  double ma_sum_rate = 0.0;  ///< moving average over the configured window
  std::vector<double> rewards;
  std::vector<double> rates;  ///< nats per slot
};

using RowSink = std::function<void(const MetricsRow&)>;

class MovingAverage {
 public:
  explicit MovingAverage(std::size_t window) : window_(window) {}
  double push(double v);

 private:
  std::size_t window_;
  std::deque<double> values_;
  double sum_ = 0.0;
};

/// CSV writer: two comment lines (format tag, config), a header, one row per
/// slot. Flushes every 1000 rows and on close.
class MetricsWriter {
 public:
  MetricsWriter(const std::filesystem::path& path, const ExperimentConfig& config);
  void write(const MetricsRow& row);
  void close();

 private:
  std::ofstream out_;
  std::size_t cells_;
  std::size_t pending_ = 0;
};

std::string csv_header(std::size_t cells);
std::string format_row(const MetricsRow& row);

struct MetricsFile {
  std::string config;  ///< serialized config without seeds
  std::vector<std::string> columns;
  std::vector<std::uint64_t> slots;
  std::vector<double> sum_rate;
  std::vector<double> ma_sum_rate;
};

MetricsFile read_metrics(const std::filesystem::path& path);

struct AggregateRow {
  std::uint64_t slot = 0;
  std::size_t count = 0;
  double mean_sum_rate = 0.0;
  double sd_sum_rate = 0.0;
  double mean_ma_sum_rate = 0.0;
  double sd_ma_sum_rate = 0.0;
};

/// Per-slot mean and sample standard deviation across files. Throws
/// ConfigError if the files disagree on config, columns or slots.
std::vector<AggregateRow> aggregate(const std::vector<MetricsFile>& files);
void write_aggregate(std::ostream& out, const std::vector<AggregateRow>& rows);

struct TrainResult {
  std::uint64_t seed = 0;
  std::size_t slots = 0;
  std::size_t updates = 0;
  std::size_t skipped_updates = 0;
  std::size_t eh_violations = 0;
  double mean_sum_rate = 0.0;
  double final_ma_sum_rate = 0.0;
  bool failed = false;
};

/// Maximum fraction of skipped updates before a run counts as failed.
inline constexpr double kMaxSkippedFraction = 0.01;

/// Distributed training for one seed. Emits one MetricsRow per slot; when
/// `checkpoint_dir` is set, writes initial and final agent checkpoints.
TrainResult train(const ExperimentConfig& config, std::uint64_t seed, const RowSink& sink,
                  const std::optional<std::filesystem::path>& checkpoint_dir = {});

/// Same as train() on a caller-owned network.
TrainResult train_network(MadrlNetwork& network, const ExperimentConfig& config, std::uint64_t seed,
                          const RowSink& sink);

struct EvalSummary {
  Policy policy = Policy::madrl;
  std::uint64_t seed = 0;
  std::size_t slots = 0;
  double mean_sum_rate = 0.0;
  double naive_mean_sum_rate = 0.0;  ///< naive policy on the same trajectory
  std::vector<double> sum_rates;
};

/// Test-time run of frozen actors over `config.test_slots` slots of the
/// test channel stream. Critics are not used.
EvalSummary evaluate_network(MadrlNetwork& network, const ExperimentConfig& config, std::uint64_t seed);

/// Loads checkpoints written by train() (final slot) and evaluates them.
/// With policy naive, evaluates the naive baseline instead.
EvalSummary evaluate(const ExperimentConfig& config, std::uint64_t seed, const std::filesystem::path& checkpoint_dir);

struct BaselineResult {
  Policy policy = Policy::naive;
  std::uint64_t seed = 0;
  std::size_t slots = 0;
  double mean_sum_rate = 0.0;
  double mean_solve_seconds = 0.0;
};

/// Per-slot centralized solve on the training channel stream.
BaselineResult run_baseline(const ExperimentConfig& config, std::uint64_t seed, Policy policy, std::size_t slots,
                            const RowSink& sink);

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::size_t agent, std::uint64_t slot);
std::filesystem::path metrics_path(const std::filesystem::path& dir, Policy policy, std::uint64_t seed);

}  // namespace wpcn::runner
