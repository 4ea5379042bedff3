#include "config.hpp"

#include <fstream>
#include <set>

#include <fmt/format.h>

#include "dcvr/feeder_io.hpp"

namespace dcvr::app {

using nlohmann::json;

json default_config() {
  const SyntheticFeederSpec spec = reference_fixture_spec();
  const AdmmConfig admm = reference_admm_config();
  const Multipliers snap = reference_snapshot();
  return json{
      {"feeder",
       {{"path", nullptr},
        {"n_primary_buses", spec.n_primary_buses},
        {"n_secondaries", spec.n_secondaries},
        {"buses_per_secondary", spec.buses_per_secondary},
        {"phase_config", "mixed"},
        {"feeder_seed", nullptr},
        {"v_substation", spec.v_substation},
        {"inverter_share", spec.inverter_share},
        {"inverter_oversize", spec.inverter_oversize},
        {"triplex_segment_m", spec.triplex_segment_m},
        {"peak_load", nullptr}}},
      {"scenario", {{"path", nullptr}, {"start", 0}, {"steps", 0}, {"stride", 1}}},
      {"snapshot", {{"load_p", snap.load_p}, {"load_q", snap.load_q}, {"pv", snap.pv}}},
      {"admm",
       {{"rho0", admm.rho0},
        {"mu", admm.mu},
        {"tau_inc", admm.tau_inc},
        {"tau_dec", admm.tau_dec},
        {"partial_barrier", admm.partial_barrier},
        {"bounded_delay", admm.bounded_delay},
        {"primal_tol", admm.primal_tol},
        {"dual_tol", admm.dual_tol},
        {"max_iter", admm.max_iter},
        {"max_clock", admm.max_clock},
        {"mode", "sync"},
        {"online", admm.online},
        {"voltage_margin", admm.build.voltage_margin},
        {"reactive_weight", admm.build.reactive_weight},
        {"qp_tol", admm.qp.tol}}},
      {"bus",
       {{"policy", "random_subset"},
        {"latency_min", 0},
        {"latency_max", 0},
        {"drop_probability", 0.0},
        {"failures", json::array()}}},
      {"limits", {{"v_low", 0.95}, {"v_high", 1.05}}},
      {"strategies", {"base", "ccvr", "dscvr", "dacvr:4"}},
      {"sweep", {{"partial_barriers", json::array()}, {"latency_max", {0}}, {"seeds", json::array()}}},
      {"output", "out"}};
}

namespace {

/// Recursive merge that rejects keys the defaults do not know.
void merge(json& base, const json& user, const std::string& where) {
  if (!user.is_object()) throw ConfigError(fmt::format("{} must be an object", where.empty() ? "config" : where));
  for (const auto& [key, value] : user.items()) {
    const auto path = where.empty() ? key : where + "." + key;
    if (!base.contains(key)) throw ConfigError("unknown config key " + path);
    auto& slot = base[key];
    if (slot.is_object() && value.is_object()) merge(slot, value, path);
    else slot = value;
  }
}

template <class T>
T get(const json& j, const char* key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(fmt::format("config key {}.{} has the wrong type", where, key));
  }
}

template <class T>
std::optional<T> get_optional(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return get<T>(j, key, where);
}

AgentId parse_agent(const json& j) {
  if (j.is_string() && j.get<std::string>() == "leader") return kLeader;
  if (j.is_number_integer() && j.get<int>() >= 0) return j.get<int>();
  throw ConfigError("failure agent must be \"leader\" or a follower index");
}

}  // namespace

void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key.path=value: " + assignment);
  const auto path = assignment.substr(0, eq);
  const auto text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &config;
  std::size_t start = 0;
  for (;;) {
    const auto dot = path.find('.', start);
    const auto key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("empty key in override " + path);
    if (!node->is_object()) *node = json::object();
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

AppConfig parse_config(const json& user) {
  if (!user.is_object()) throw ConfigError("config must be a JSON object");
  if (!user.contains("seed") || !user.at("seed").is_number_integer() || user.at("seed").get<std::int64_t>() < 0)
    throw ConfigError("config needs a non-negative integer seed");
  AppConfig c;
  json merged = default_config();
  json rest = user;
  c.seed = rest.at("seed").get<std::uint64_t>();
  rest.erase("seed");
  merge(merged, rest, "");
  merged["seed"] = c.seed;
  c.effective = merged;

  const auto& fj = merged.at("feeder");
  if (auto p = get_optional<std::string>(fj, "path", "feeder")) c.feeder_path = *p;
  auto& spec = c.feeder_spec;
  spec = reference_fixture_spec();
  spec.n_primary_buses = get<int>(fj, "n_primary_buses", "feeder");
  spec.n_secondaries = get<int>(fj, "n_secondaries", "feeder");
  spec.buses_per_secondary = get<int>(fj, "buses_per_secondary", "feeder");
  spec.phase_config = parse_phase_config(get<std::string>(fj, "phase_config", "feeder"));
  spec.seed = get_optional<std::uint64_t>(fj, "feeder_seed", "feeder").value_or(c.seed);
  spec.v_substation = get<double>(fj, "v_substation", "feeder");
  spec.inverter_share = get<double>(fj, "inverter_share", "feeder");
  spec.inverter_oversize = get<double>(fj, "inverter_oversize", "feeder");
  spec.triplex_segment_m = get<double>(fj, "triplex_segment_m", "feeder");
  spec.peak_load = get_optional<double>(fj, "peak_load", "feeder");

  const auto& sj = merged.at("scenario");
  if (auto p = get_optional<std::string>(sj, "path", "scenario")) c.scenario_path = *p;
  c.scenario_start = get<std::size_t>(sj, "start", "scenario");
  c.scenario_steps = get<std::size_t>(sj, "steps", "scenario");
  c.scenario_stride = get<std::size_t>(sj, "stride", "scenario");
  if (c.scenario_stride == 0) throw ConfigError("scenario.stride must be positive");

  const auto& snap = merged.at("snapshot");
  c.snapshot = {get<double>(snap, "load_p", "snapshot"), get<double>(snap, "load_q", "snapshot"),
                get<double>(snap, "pv", "snapshot")};
  if (c.snapshot.load_p < 0 || c.snapshot.load_q < 0 || c.snapshot.pv < 0)
    throw ConfigError("snapshot multipliers must not be negative");

  const auto& aj = merged.at("admm");
  auto& a = c.bench.admm;
  a.rho0 = get<double>(aj, "rho0", "admm");
  a.mu = get<double>(aj, "mu", "admm");
  a.tau_inc = get<double>(aj, "tau_inc", "admm");
  a.tau_dec = get<double>(aj, "tau_dec", "admm");
  a.partial_barrier = get<int>(aj, "partial_barrier", "admm");
  a.bounded_delay = get<int>(aj, "bounded_delay", "admm");
  a.primal_tol = get<double>(aj, "primal_tol", "admm");
  a.dual_tol = get<double>(aj, "dual_tol", "admm");
  a.max_iter = get<int>(aj, "max_iter", "admm");
  a.max_clock = get<int>(aj, "max_clock", "admm");
  const auto mode = get<std::string>(aj, "mode", "admm");
  if (mode != "sync" && mode != "async") throw ConfigError("admm.mode must be sync or async");
  a.mode = mode == "sync" ? AdmmMode::Sync : AdmmMode::Async;
  a.online = get<bool>(aj, "online", "admm");
  a.build.voltage_margin = get<double>(aj, "voltage_margin", "admm");
  a.build.reactive_weight = get<double>(aj, "reactive_weight", "admm");
  if (a.build.voltage_margin < 0 || a.build.reactive_weight < 0)
    throw ConfigError("admm.voltage_margin and admm.reactive_weight must not be negative");
  a.qp.tol = get<double>(aj, "qp_tol", "admm");
  if (!(a.qp.tol > 0)) throw ConfigError("admm.qp_tol must be positive");

  const auto& bj = merged.at("bus");
  auto& b = c.bench.bus;
  const auto policy = get<std::string>(bj, "policy", "bus");
  if (policy != "random_subset" && policy != "latency") throw ConfigError("bus.policy must be random_subset or latency");
  b.policy = policy == "latency" ? AsyncPolicy::Latency : AsyncPolicy::RandomSubset;
  b.latency_min = get<int>(bj, "latency_min", "bus");
  b.latency_max = get<int>(bj, "latency_max", "bus");
  b.drop_probability = get<double>(bj, "drop_probability", "bus");
  if (!bj.at("failures").is_array()) throw ConfigError("bus.failures must be an array");
  for (const auto& w : bj.at("failures")) {
    if (!w.is_object() || !w.contains("agent") || !w.contains("start") || !w.contains("end"))
      throw ConfigError("each bus.failures entry needs agent, start and end");
    b.failures.push_back({parse_agent(w.at("agent")), get<int>(w, "start", "bus.failures"), get<int>(w, "end", "bus.failures")});
  }
  b.latency_policy(c.seed).validate();

  const auto& lj = merged.at("limits");
  c.bench.v_low = get<double>(lj, "v_low", "limits");
  c.bench.v_high = get<double>(lj, "v_high", "limits");
  if (!(c.bench.v_low < c.bench.v_high)) throw ConfigError("limits.v_low must be below limits.v_high");
  c.bench.seed = c.seed;

  for (const auto& s : get<std::vector<std::string>>(merged, "strategies", "config")) c.strategies.push_back(Strategy::parse(s));
  std::set<std::string> names;
  for (const auto& s : c.strategies)
    if (!names.insert(s.name()).second) throw ConfigError("strategy listed twice: " + s.name());

  const auto& wj = merged.at("sweep");
  c.sweep.partial_barriers = get<std::vector<int>>(wj, "partial_barriers", "sweep");
  c.sweep.latency_max = get<std::vector<int>>(wj, "latency_max", "sweep");
  c.sweep.seeds = get<std::vector<std::uint64_t>>(wj, "seeds", "sweep");
  if (c.sweep.latency_max.empty()) throw ConfigError("sweep.latency_max must not be empty");

  c.output = get<std::string>(merged, "output", "config");
  return c;
}

Feeder AppConfig::load_feeder_or_generate() const {
  return feeder_path ? load_feeder(*feeder_path) : generate_synthetic_feeder(feeder_spec);
}

ScenarioTimeSeries AppConfig::load_series_or_bundled() const {
  const auto full = scenario_path ? load_series(*scenario_path) : bundled_daily_profile();
  return full.slice(scenario_start, scenario_steps, scenario_stride);
}

std::string AppConfig::hash() const {
  auto hashed = effective;
  hashed.erase("output");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : hashed.dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return fmt::format("{:016x}", h);
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config {}", path.string()));
  try {
    return json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

}  // namespace dcvr::app
