#include "wpcn/runner.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <iostream>
#include <numeric>
#include <sstream>

namespace wpcn::runner {

namespace {

using Clock = std::chrono::steady_clock;

std::string fmt(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

double parse_number(const std::string& s, const std::filesystem::path& path) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw ConfigError("metrics file " + path.string() + ": bad number '" + s + "'");
  }
  return v;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  return out;
}

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n') c = ';';
  }
  if (!s.empty() && s.back() == ';') s.pop_back();
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// AgentExecutor

AgentExecutor::AgentExecutor(std::size_t workers, bool parallel) : count_(workers) {
  if (!parallel || workers < 2) return;
  threads_.reserve(workers);
  for (std::size_t i = 0; i < workers; ++i) threads_.emplace_back(&AgentExecutor::worker, this, i);
}

AgentExecutor::~AgentExecutor() {
  {
    std::lock_guard lock(mutex_);
    stop_ = true;
  }
  start_cv_.notify_all();
  for (auto& t : threads_) t.join();
}

void AgentExecutor::run(const std::function<void(std::size_t)>& fn) {
  if (threads_.empty()) {
    for (std::size_t i = 0; i < count_; ++i) fn(i);
    return;
  }
  std::unique_lock lock(mutex_);
  job_ = &fn;
  remaining_ = count_;
  error_ = nullptr;
  ++generation_;
  start_cv_.notify_all();
  done_cv_.wait(lock, [&] { return remaining_ == 0; });
  job_ = nullptr;
  if (error_) std::rethrow_exception(std::exchange(error_, nullptr));
}

void AgentExecutor::worker(std::size_t index) {
  std::uint64_t seen = 0;
  for (;;) {
    const std::function<void(std::size_t)>* job = nullptr;
    {
      std::unique_lock lock(mutex_);
      start_cv_.wait(lock, [&] { return stop_ || generation_ != seen; });
      if (stop_) return;
      seen = generation_;
      job = job_;
    }
    std::exception_ptr failure;
    try {
      (*job)(index);
    } catch (...) {
      failure = std::current_exception();
    }
    std::lock_guard lock(mutex_);
    if (failure && !error_) error_ = failure;
    if (--remaining_ == 0) done_cv_.notify_one();
  }
}

// ---------------------------------------------------------------------------
// Network of agents

channel::ChannelModel make_channel(const ExperimentConfig& config, std::uint64_t seed, Stream stream) {
  return channel::ChannelModel(config.geometry(), config.rho(), make_rng(seed, stream));
}

std::vector<agent::StateNormalizer> calibrate_normalizers(const ExperimentConfig& config, std::uint64_t seed) {
  const env::SystemParams params = config.system();
  const std::size_t n = config.cells;
  channel::ChannelModel chan = make_channel(config, seed, Stream::warmup_channel);
  std::vector<agent::StateNormalizer> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.emplace_back(n, params.slot, agent::rate_scale(params, chan.scale().h(i, i)));
  }
  std::vector<std::vector<agent::LocalObservation>> samples(n);
  std::optional<agent::PreviousSlot> prev;
  for (std::size_t t = 0; t < config.warmup_slots; ++t) {
    const env::LinkGains& gains = chan.gains();
    if (prev) {
      for (std::size_t i = 0; i < n; ++i) samples[i].push_back(agent::observe(i, &*prev, gains, params));
    }
    const baselines::SolverReport naive = baselines::naive_policy(gains, params);
    env::SlotOutcome outcome = env::step(gains, naive.tau, naive.power, params);
    prev = agent::PreviousSlot{std::move(outcome.schedule), naive.power, std::move(outcome.rates), gains};
    chan.advance();
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!samples[i].empty()) out[i].calibrate(samples[i]);
  }
  return out;
}

MadrlNetwork::MadrlNetwork(const ExperimentConfig& config, std::uint64_t seed)
    : config_(config), params_(config.system()), spaces_(config.spaces()) {
  config_.validate();
  std::vector<agent::StateNormalizer> normalizers = calibrate_normalizers(config_, seed);
  agents_.reserve(config_.cells);
  for (std::size_t i = 0; i < config_.cells; ++i) {
    agents_.emplace_back(i, config_.cells, spaces_, config_.topology(), config_.learning_rates(),
                         std::move(normalizers[i]), make_rng(seed, Stream::weight_init, i),
                         make_rng(seed, Stream::policy, i));
  }
  executor_ = std::make_unique<AgentExecutor>(config_.cells, config_.parallel_agents);
}

void MadrlNetwork::set_parallel(bool parallel) {
  executor_ = std::make_unique<AgentExecutor>(config_.cells, parallel);
}

void MadrlNetwork::reseed_policies(std::uint64_t seed, Stream stream) {
  for (std::size_t i = 0; i < agents_.size(); ++i) agents_[i].set_policy_rng(make_rng(seed, stream, i));
}

void MadrlNetwork::reset_episode() {
  prev_.reset();
  prev_rewards_.clear();
}

void MadrlNetwork::record(Phase phase, std::size_t who) {
  if (!trace_enabled_) return;
  std::lock_guard lock(trace_mutex_);
  trace_.push_back({phase, who});
}

MadrlNetwork::SlotResult MadrlNetwork::run_slot(const env::LinkGains& gains, bool learn, bool greedy) {
  const std::size_t n = agents_.size();
  if (gains.cells() != n) throw std::invalid_argument("run_slot: gains do not match the cell count");
  SlotResult result;
  std::vector<agent::AgentState> states(n);
  std::vector<double> tau(n);
  std::vector<double> power(n);
  const agent::PreviousSlot* prev = prev_ ? &*prev_ : nullptr;

  // Phase 0: every agent senses its local state.
  auto start = Clock::now();
  executor_->run([&](std::size_t i) {
    record(Phase::state, i);
    states[i] = agents_[i].make_state(agent::observe(i, prev, gains, params_));
  });
  double decision = std::chrono::duration<double>(Clock::now() - start).count();

  // Phase 5 of the previous slot, performed right before the new decisions.
  if (learn && prev != nullptr) {
    std::vector<agent::UpdateStatus> status(n);
    executor_->run([&](std::size_t i) { status[i] = agents_[i].learn(states[i], prev_rewards_[i]).status; });
    for (auto s : status) {
      ++result.updates;
      if (s != agent::UpdateStatus::applied) ++result.skipped;
    }
  }

  // Phase 1: time splits.
  start = Clock::now();
  executor_->run([&](std::size_t i) {
    record(Phase::time, i);
    tau[i] = agents_[i].choose_time(states[i], greedy);
  });
  decision += std::chrono::duration<double>(Clock::now() - start).count();

  // Phase 2: WET happens; each user measures its harvest.
  record(Phase::energy, n);
  const env::SlotSchedule sched = env::build_schedule(tau, params_.slot, params_.eps_tau);
  const std::vector<double> energies = env::harvested_energies(sched, gains, params_);

  // Phase 3: uplink powers from each agent's own measured budget.
  start = Clock::now();
  executor_->run([&](std::size_t i) {
    record(Phase::power, i);
    power[i] = agents_[i].choose_power(energies[i], greedy);
  });
  decision += std::chrono::duration<double>(Clock::now() - start).count();
  last_decision_seconds_ = decision;

  for (std::size_t i = 0; i < n; ++i) {
    if ((params_.slot - tau[i]) * power[i] > energies[i] + env::kEhTolerance) ++result.eh_violations;
  }

  // Phase 4: uplink, then the backhaul price exchange.
  record(Phase::outcome, n);
  result.outcome = env::step(gains, tau, power, params_);
  result.rewards = agent::exchange_prices(result.outcome, slot_);

  prev_ = agent::PreviousSlot{result.outcome.schedule, power, result.outcome.rates, gains};
  prev_rewards_ = result.rewards;
  ++slot_;
  return result;
}

std::pair<std::size_t, std::size_t> MadrlNetwork::finish(const env::LinkGains& next_gains) {
  if (!prev_) return {0, 0};
  const std::size_t n = agents_.size();
  std::vector<agent::UpdateStatus> status(n);
  executor_->run([&](std::size_t i) {
    const agent::AgentState next = agents_[i].make_state(agent::observe(i, &*prev_, next_gains, params_));
    status[i] = agents_[i].learn(next, prev_rewards_[i]).status;
  });
  std::size_t skipped = 0;
  for (auto s : status) skipped += s != agent::UpdateStatus::applied;
  reset_episode();
  return {n, skipped};
}

void MadrlNetwork::save_checkpoints(const std::filesystem::path& dir, std::uint64_t slot) const {
  std::filesystem::create_directories(dir);
  for (const agent::Agent& a : agents_) {
    const auto path = checkpoint_path(dir, a.index(), slot);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write checkpoint " + path.string());
    a.save(out);
  }
}

void MadrlNetwork::load_checkpoints(const std::filesystem::path& dir, std::uint64_t slot) {
  for (agent::Agent& a : agents_) {
    const auto path = checkpoint_path(dir, a.index(), slot);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("missing checkpoint " + path.string());
    a.load(in);
  }
}

// ---------------------------------------------------------------------------
// Metrics

double MovingAverage::push(double v) {
  values_.push_back(v);
  sum_ += v;
  if (values_.size() > window_) {
    sum_ -= values_.front();
    values_.pop_front();
  }
  return sum_ / static_cast<double>(values_.size());
}

std::string csv_header(std::size_t cells) {
  std::string h = "slot,policy,seed,sum_rate,ma_sum_rate";
  for (std::size_t i = 0; i < cells; ++i) h += ",reward_" + std::to_string(i);
  for (std::size_t i = 0; i < cells; ++i) h += ",rate_" + std::to_string(i);
  return h;
}

std::string format_row(const MetricsRow& row) {
  std::string s = std::to_string(row.slot) + ',' + to_string(row.policy) + ',' + std::to_string(row.seed) + ',' +
                  fmt(row.sum_rate) + ',' + fmt(row.ma_sum_rate);
  for (double r : row.rewards) s += ',' + fmt(r);
  for (double r : row.rates) s += ',' + fmt(r);
  return s;
}

MetricsWriter::MetricsWriter(const std::filesystem::path& path, const ExperimentConfig& config)
    : cells_(config.cells) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  out_.open(path, std::ios::binary | std::ios::trunc);
  if (!out_) throw ConfigError("cannot open metrics file " + path.string());
  out_ << "# wpcn-metrics v1\n";
  out_ << "# config: " << one_line(config.serialize(false)) << '\n';
  out_ << csv_header(cells_) << '\n';
}

void MetricsWriter::write(const MetricsRow& row) {
  if (row.rewards.size() != cells_ || row.rates.size() != cells_) {
    throw std::invalid_argument("MetricsWriter: row width does not match the cell count");
  }
  out_ << format_row(row) << '\n';
  if (++pending_ >= 1000) {
    out_.flush();
    pending_ = 0;
  }
}

void MetricsWriter::close() {
  out_.flush();
  out_.close();
}

MetricsFile read_metrics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open metrics file " + path.string());
  MetricsFile f;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.rfind("# config: ", 0) == 0) {
      f.config = line.substr(10);
      continue;
    }
    if (line[0] == '#') continue;
    if (!have_header) {
      f.columns = split(line, ',');
      if (f.columns.size() < 5 || f.columns[0] != "slot" || f.columns[3] != "sum_rate" ||
          f.columns[4] != "ma_sum_rate") {
        throw ConfigError("metrics file " + path.string() + ": unexpected header");
      }
      have_header = true;
      continue;
    }
    const auto cols = split(line, ',');
    if (cols.size() != f.columns.size()) throw ConfigError("metrics file " + path.string() + ": ragged row");
    f.slots.push_back(static_cast<std::uint64_t>(parse_number(cols[0], path)));
    f.sum_rate.push_back(parse_number(cols[3], path));
    f.ma_sum_rate.push_back(parse_number(cols[4], path));
  }
  if (!have_header) throw ConfigError("metrics file " + path.string() + ": no header");
  return f;
}

std::vector<AggregateRow> aggregate(const std::vector<MetricsFile>& files) {
  if (files.empty()) throw ConfigError("aggregate: no metrics files");
  const MetricsFile& ref = files.front();
  for (const MetricsFile& f : files) {
    if (f.config != ref.config) throw ConfigError("aggregate: metrics files come from different configs");
    if (f.columns != ref.columns) throw ConfigError("aggregate: metrics files have different columns");
    if (f.slots != ref.slots) throw ConfigError("aggregate: metrics files cover different slots");
  }
  const double count = static_cast<double>(files.size());
  auto moments = [&](auto member, std::size_t k) {
    double mean = 0.0;
    for (const MetricsFile& f : files) mean += (f.*member)[k];
    mean /= count;
    double ss = 0.0;
    for (const MetricsFile& f : files) ss += ((f.*member)[k] - mean) * ((f.*member)[k] - mean);
    const double sd = files.size() > 1 ? std::sqrt(ss / (count - 1.0)) : 0.0;
    return std::pair{mean, sd};
  };
  std::vector<AggregateRow> rows(ref.slots.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    rows[k].slot = ref.slots[k];
    rows[k].count = files.size();
    std::tie(rows[k].mean_sum_rate, rows[k].sd_sum_rate) = moments(&MetricsFile::sum_rate, k);
    std::tie(rows[k].mean_ma_sum_rate, rows[k].sd_ma_sum_rate) = moments(&MetricsFile::ma_sum_rate, k);
  }
  return rows;
}

void write_aggregate(std::ostream& out, const std::vector<AggregateRow>& rows) {
  out << "slot,count,mean_sum_rate,sd_sum_rate,mean_ma_sum_rate,sd_ma_sum_rate\n";
  for (const auto& r : rows) {
    out << r.slot << ',' << r.count << ',' << fmt(r.mean_sum_rate) << ',' << fmt(r.sd_sum_rate) << ','
        << fmt(r.mean_ma_sum_rate) << ',' << fmt(r.sd_ma_sum_rate) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Experiments

TrainResult train_network(MadrlNetwork& network, const ExperimentConfig& config, std::uint64_t seed,
                          const RowSink& sink) {
  TrainResult result;
  result.seed = seed;
  channel::ChannelModel chan = make_channel(config, seed, Stream::channel);
  MovingAverage ma(config.ma_window);
  double total = 0.0;
  network.reset_episode();
  for (std::size_t t = 0; t < config.train_slots; ++t) {
    MadrlNetwork::SlotResult slot = network.run_slot(chan.gains(), /*learn=*/true);
    if (slot.skipped > 0 && result.skipped_updates == 0) {
      std::cerr << "seed " << seed << " slot " << t << ": first non-finite update skipped\n";
    }
    result.updates += slot.updates;
    result.skipped_updates += slot.skipped;
    result.eh_violations += slot.eh_violations;
    MetricsRow row;
    row.slot = t;
    row.policy = Policy::madrl;
    row.seed = seed;
    row.sum_rate = slot.outcome.sum_rate(config.slot_s);
    row.ma_sum_rate = ma.push(row.sum_rate);
    row.rewards = std::move(slot.rewards);
    row.rates = slot.outcome.rates;
    total += row.sum_rate;
    result.final_ma_sum_rate = row.ma_sum_rate;
    if (sink) sink(row);
    chan.advance();
  }
  if (config.train_slots > 0) {
    const auto [updates, skipped] = network.finish(chan.gains());
    result.updates += updates;
    result.skipped_updates += skipped;
  }
  result.slots = config.train_slots;
  result.mean_sum_rate = config.train_slots > 0 ? total / static_cast<double>(config.train_slots) : 0.0;
  result.failed = result.updates > 0 && static_cast<double>(result.skipped_updates) >
                                            kMaxSkippedFraction * static_cast<double>(result.updates);
  return result;
}

TrainResult train(const ExperimentConfig& config, std::uint64_t seed, const RowSink& sink,
                  const std::optional<std::filesystem::path>& checkpoint_dir) {
  MadrlNetwork network(config, seed);
  if (checkpoint_dir) network.save_checkpoints(*checkpoint_dir, 0);
  TrainResult result = train_network(network, config, seed, sink);
  if (checkpoint_dir) network.save_checkpoints(*checkpoint_dir, config.train_slots);
  return result;
}

EvalSummary evaluate_network(MadrlNetwork& network, const ExperimentConfig& config, std::uint64_t seed) {
  EvalSummary summary;
  summary.policy = Policy::madrl;
  summary.seed = seed;
  network.reset_episode();
  network.reseed_policies(seed, Stream::eval_policy);
  channel::ChannelModel chan = make_channel(config, seed, Stream::test_channel);
  const env::SystemParams params = config.system();
  double naive_total = 0.0;
  for (std::size_t t = 0; t < config.test_slots; ++t) {
    const MadrlNetwork::SlotResult slot = network.run_slot(chan.gains(), /*learn=*/false, config.greedy_eval);
    summary.sum_rates.push_back(slot.outcome.sum_rate(config.slot_s));
    naive_total += baselines::naive_policy(chan.gains(), params).objective;
    chan.advance();
  }
  network.reset_episode();
  summary.slots = config.test_slots;
  if (summary.slots > 0) {
    summary.mean_sum_rate = std::accumulate(summary.sum_rates.begin(), summary.sum_rates.end(), 0.0) /
                            static_cast<double>(summary.slots);
    summary.naive_mean_sum_rate = naive_total / static_cast<double>(summary.slots);
  }
  return summary;
}

EvalSummary evaluate(const ExperimentConfig& config, std::uint64_t seed, const std::filesystem::path& checkpoint_dir) {
  if (config.policy == Policy::naive) {
    EvalSummary summary;
    summary.policy = Policy::naive;
    summary.seed = seed;
    channel::ChannelModel chan = make_channel(config, seed, Stream::test_channel);
    const env::SystemParams params = config.system();
    for (std::size_t t = 0; t < config.test_slots; ++t) {
      summary.sum_rates.push_back(baselines::naive_policy(chan.gains(), params).objective);
      chan.advance();
    }
    summary.slots = config.test_slots;
    if (summary.slots > 0) {
      summary.mean_sum_rate = std::accumulate(summary.sum_rates.begin(), summary.sum_rates.end(), 0.0) /
                              static_cast<double>(summary.slots);
    }
    summary.naive_mean_sum_rate = summary.mean_sum_rate;
    return summary;
  }
  if (config.policy != Policy::madrl) throw ConfigError("eval supports policies madrl and naive");
  MadrlNetwork network(config, seed);
  network.load_checkpoints(checkpoint_dir, config.train_slots);
  return evaluate_network(network, config, seed);
}

BaselineResult run_baseline(const ExperimentConfig& config, std::uint64_t seed, Policy policy, std::size_t slots,
                            const RowSink& sink) {
  if (policy == Policy::madrl) throw ConfigError("run_baseline: madrl is not a centralized baseline");
  config.validate();
  const env::SystemParams params = config.system();
  const agent::ActionSpaces spaces = config.spaces();
  baselines::PgdOptions pgd;
  pgd.precision = config.pgd_precision;
  channel::ChannelModel chan = make_channel(config, seed, Stream::channel);
  MovingAverage ma(config.ma_window);
  BaselineResult result;
  result.policy = policy;
  result.seed = seed;
  double total = 0.0;
  double solve_time = 0.0;
  for (std::size_t t = 0; t < slots; ++t) {
    const env::LinkGains& gains = chan.gains();
    baselines::SolverReport report;
    switch (policy) {
      case Policy::naive: report = baselines::naive_policy(gains, params); break;
      case Policy::pgd: report = baselines::pgd_solve(gains, params, pgd); break;
      case Policy::oracle: report = baselines::brute_force_oracle(gains, params, spaces); break;
      case Policy::madrl: break;
    }
    solve_time += report.wall_time;
    const env::SlotOutcome outcome = env::step(gains, report.tau, report.power, params);
    MetricsRow row;
    row.slot = t;
    row.policy = policy;
    row.seed = seed;
    row.sum_rate = outcome.sum_rate(config.slot_s);
    row.ma_sum_rate = ma.push(row.sum_rate);
    row.rewards = outcome.rewards;
    row.rates = outcome.rates;
    total += row.sum_rate;
    if (sink) sink(row);
    chan.advance();
  }
  result.slots = slots;
  if (slots > 0) {
    result.mean_sum_rate = total / static_cast<double>(slots);
    result.mean_solve_seconds = solve_time / static_cast<double>(slots);
  }
  return result;
}

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::size_t agent, std::uint64_t slot) {
  return dir / ("agent_" + std::to_string(agent) + "_slot_" + std::to_string(slot) + ".ckpt");
}

std::filesystem::path metrics_path(const std::filesystem::path& dir, Policy policy, std::uint64_t seed) {
  return dir / (to_string(policy) + "_seed_" + std::to_string(seed) + ".csv");
}

}  // namespace wpcn::runner
