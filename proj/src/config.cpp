#include "wpcn/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace wpcn::runner {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
  throw ConfigError("config: cannot parse value '" + value + "' for key '" + key + "'");
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) bad_value(key, v);
    return d;
  } catch (const std::logic_error&) {
    bad_value(key, v);
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) bad_value(key, v);
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v);
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& v) {
  std::vector<T> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(static_cast<T>(parse_u64(key, item)));
  }
  return out;
}

// Seeds: comma list, or a range "a..b" (inclusive).
std::vector<std::uint64_t> parse_seeds(const std::string& key, const std::string& v) {
  const auto dots = v.find("..");
  if (dots == std::string::npos) return parse_list<std::uint64_t>(key, v);
  const std::uint64_t lo = parse_u64(key, trim(v.substr(0, dots)));
  const std::uint64_t hi = parse_u64(key, trim(v.substr(dots + 2)));
  if (hi < lo) bad_value(key, v);
  std::vector<std::uint64_t> out;
  for (std::uint64_t s = lo; s <= hi; ++s) out.push_back(s);
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

}  // namespace

std::string to_string(Policy p) {
  switch (p) {
    case Policy::madrl: return "madrl";
    case Policy::naive: return "naive";
    case Policy::pgd: return "pgd";
    case Policy::oracle: return "oracle";
  }
  return "?";
}

Policy parse_policy(const std::string& s) {
  if (s == "madrl") return Policy::madrl;
  if (s == "naive") return Policy::naive;
  if (s == "pgd") return Policy::pgd;
  if (s == "oracle") return Policy::oracle;
  throw ConfigError("unknown policy '" + s + "' (expected madrl, naive, pgd or oracle)");
}

std::vector<std::uint64_t> ExperimentConfig::default_seeds() {
  std::vector<std::uint64_t> s(50);
  for (std::uint64_t i = 0; i < s.size(); ++i) s[i] = i;
  return s;
}

void ExperimentConfig::set(const std::string& raw_key, const std::string& raw_value) {
  std::string key = trim(raw_key);
  for (char& c : key) {
    if (c == '-') c = '_';
  }
  const std::string v = trim(raw_value);
  using Setter = std::function<void()>;
  const std::map<std::string, Setter> setters{
      {"n_cells", [&] { cells = parse_u64(key, v); }},
      {"cells", [&] { cells = parse_u64(key, v); }},
      {"slot_s", [&] { slot_s = parse_double(key, v); }},
      {"doppler_hz", [&] { doppler_hz = parse_double(key, v); }},
      {"hap_power_dbm", [&] { hap_power_dbm = parse_double(key, v); }},
      {"noise_dbm", [&] { noise_dbm = parse_double(key, v); }},
      {"wet_leakage_db", [&] { wet_leakage_db = parse_double(key, v); }},
      {"eh_model",
       [&] {
         if (v == "linear") eh_model = env::EhKind::linear;
         else if (v == "nonlinear") eh_model = env::EhKind::nonlinear;
         else bad_value(key, v);
       }},
      {"eta", [&] { eta = parse_double(key, v); }},
      {"a1", [&] { a1 = parse_double(key, v); }},
      {"a2", [&] { a2 = parse_double(key, v); }},
      {"a3", [&] { a3 = parse_double(key, v); }},
      {"time_levels", [&] { time_levels = parse_u64(key, v); }},
      {"power_levels", [&] { power_levels = parse_u64(key, v); }},
      {"eps_tau_fraction", [&] { eps_tau_fraction = parse_double(key, v); }},
      {"critic_lr", [&] { critic_lr = parse_double(key, v); }},
      {"actor_lr", [&] { actor_lr = parse_double(key, v); }},
      {"gamma", [&] { gamma = parse_double(key, v); }},
      {"train_slots", [&] { train_slots = parse_u64(key, v); }},
      {"test_slots", [&] { test_slots = parse_u64(key, v); }},
      {"warmup_slots", [&] { warmup_slots = parse_u64(key, v); }},
      {"seeds", [&] { seeds = parse_seeds(key, v); }},
      {"seed", [&] { seeds = {parse_u64(key, v)}; }},
      {"policy", [&] { policy = parse_policy(v); }},
      {"actor_trunk", [&] { actor_trunk = parse_list<std::size_t>(key, v); }},
      {"actor_head", [&] { actor_head = parse_list<std::size_t>(key, v); }},
      {"critic_hidden", [&] { critic_hidden = parse_list<std::size_t>(key, v); }},
      {"greedy_eval", [&] { greedy_eval = parse_bool(key, v); }},
      {"parallel_agents", [&] { parallel_agents = parse_bool(key, v); }},
      {"hap_user_m", [&] { hap_user_m = parse_double(key, v); }},
      {"hap_spacing_m", [&] { hap_spacing_m = parse_double(key, v); }},
      {"pathloss_exponent", [&] { pathloss_exponent = parse_double(key, v); }},
      {"pgd_precision", [&] { pgd_precision = parse_double(key, v); }},
      {"ma_window", [&] { ma_window = parse_u64(key, v); }},
      {"out_dir", [&] { out_dir = v; }},
  };
  const auto it = setters.find(key);
  if (it == setters.end()) throw ConfigError("config: unknown key '" + raw_key + "'");
  it->second();
}

void ExperimentConfig::read(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    set(line.substr(0, eq), line.substr(eq + 1));
  }
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  ExperimentConfig c;
  c.read(in);
  return c;
}

void ExperimentConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("config: ") + what);
  };
  require(cells >= 1, "n_cells must be >= 1");
  require(slot_s > 0.0, "slot_s must be > 0");
  require(doppler_hz >= 0.0, "doppler_hz must be >= 0");
  require(eps_tau_fraction > 0.0 && eps_tau_fraction < 1.0, "eps_tau_fraction must lie in (0, 1)");
  require(eta > 0.0 && eta <= 1.0, "eta must lie in (0, 1]");
  require(a1 > 0.0 && a3 > 0.0, "a1 and a3 must be positive");
  require(time_levels >= 2 && power_levels >= 2, "time_levels and power_levels must be >= 2");
  require(critic_lr >= 0.0 && actor_lr >= 0.0, "learning rates must be >= 0");
  require(gamma > 0.0 && gamma <= 1.0, "gamma must lie in (0, 1]");
  require(!seeds.empty(), "at least one seed is required");
  require(!actor_trunk.empty(), "actor_trunk needs at least one layer");
  require(hap_user_m > 0.0 && hap_spacing_m > 0.0, "distances must be positive");
  require(pgd_precision > 0.0, "pgd_precision must be positive");
  require(ma_window >= 1, "ma_window must be >= 1");
  for (auto w : actor_trunk) require(w > 0, "layer widths must be positive");
  for (auto w : actor_head) require(w > 0, "layer widths must be positive");
  for (auto w : critic_hidden) require(w > 0, "layer widths must be positive");
}

std::string ExperimentConfig::serialize(bool with_seeds) const {
  std::ostringstream out;
  out << "n_cells=" << cells << '\n'
      << "slot_s=" << format_double(slot_s) << '\n'
      << "doppler_hz=" << format_double(doppler_hz) << '\n'
      << "hap_power_dbm=" << format_double(hap_power_dbm) << '\n'
      << "noise_dbm=" << format_double(noise_dbm) << '\n'
      << "wet_leakage_db=" << format_double(wet_leakage_db) << '\n'
      << "eh_model=" << (eh_model == env::EhKind::linear ? "linear" : "nonlinear") << '\n'
      << "eta=" << format_double(eta) << '\n'
      << "a1=" << format_double(a1) << '\n'
      << "a2=" << format_double(a2) << '\n'
      << "a3=" << format_double(a3) << '\n'
      << "time_levels=" << time_levels << '\n'
      << "power_levels=" << power_levels << '\n'
      << "eps_tau_fraction=" << format_double(eps_tau_fraction) << '\n'
      << "critic_lr=" << format_double(critic_lr) << '\n'
      << "actor_lr=" << format_double(actor_lr) << '\n'
      << "gamma=" << format_double(gamma) << '\n'
      << "train_slots=" << train_slots << '\n'
      << "test_slots=" << test_slots << '\n'
      << "warmup_slots=" << warmup_slots << '\n';
  if (with_seeds) out << "seeds=" << join(seeds) << '\n';
  out << "policy=" << to_string(policy) << '\n'
      << "actor_trunk=" << join(actor_trunk) << '\n'
      << "actor_head=" << join(actor_head) << '\n'
      << "critic_hidden=" << join(critic_hidden) << '\n'
      << "greedy_eval=" << (greedy_eval ? "true" : "false") << '\n'
      << "hap_user_m=" << format_double(hap_user_m) << '\n'
      << "hap_spacing_m=" << format_double(hap_spacing_m) << '\n'
      << "pathloss_exponent=" << format_double(pathloss_exponent) << '\n'
      << "pgd_precision=" << format_double(pgd_precision) << '\n'
      << "ma_window=" << ma_window << '\n';
  return out.str();
}

env::SystemParams ExperimentConfig::system() const {
  env::SystemParams p;
  p.slot = slot_s;
  p.eps_tau = eps_tau_fraction * slot_s;
  p.hap_power = channel::dbm_to_watts(hap_power_dbm);
  p.noise = channel::dbm_to_watts(noise_dbm);
  p.wet_leakage = channel::db_to_ratio(wet_leakage_db);
  p.eh = eh_model == env::EhKind::linear ? env::EhModel::linear(eta) : env::EhModel::nonlinear(a1, a2, a3);
  p.eh.eta = eta;
  return p;
}

agent::ActionSpaces ExperimentConfig::spaces() const {
  return agent::ActionSpaces::from(system(), time_levels, power_levels);
}

agent::Topology ExperimentConfig::topology() const { return {actor_trunk, actor_head, critic_hidden}; }

agent::LearningRates ExperimentConfig::learning_rates() const { return {critic_lr, actor_lr, gamma}; }

channel::Geometry ExperimentConfig::geometry() const {
  return channel::Geometry::circular(cells, hap_user_m, hap_spacing_m, pathloss_exponent);
}

double ExperimentConfig::rho() const { return channel::time_correlation(doppler_hz, slot_s); }

}  // namespace wpcn::runner
