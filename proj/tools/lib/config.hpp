#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "benchmark.hpp"
#include "dcvr/synthetic.hpp"

namespace dcvr::app {

struct SweepSettings {
  std::vector<int> partial_barriers;  ///< empty means {25%, 50%, 100%} of the followers
  std::vector<int> latency_max{0};
  std::vector<std::uint64_t> seeds;   ///< empty means the top-level seed only
};

struct AppConfig {
  nlohmann::json effective;  ///< merged defaults, file and overrides
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> feeder_path;
  SyntheticFeederSpec feeder_spec;
  std::optional<std::filesystem::path> scenario_path;
  std::size_t scenario_start = 0;
  std::size_t scenario_steps = 0;  ///< 0 means the whole series
  std::size_t scenario_stride = 1;
  Multipliers snapshot;
  BenchmarkConfig bench;
  std::vector<Strategy> strategies;
  SweepSettings sweep;
  std::filesystem::path output = "out";

  Feeder load_feeder_or_generate() const;
  ScenarioTimeSeries load_series_or_bundled() const;
  /// FNV-1a of the effective configuration without `output`, 16 hex digits.
  std::string hash() const;
};

/// Every recognised key with its default. `seed` is absent and mandatory.
nlohmann::json default_config();

/// Applies `path=value` where path is dot separated and value is JSON
/// (bare words are taken as strings).
void apply_override(nlohmann::json& config, const std::string& assignment);

/// Merges `user` over the defaults and validates. Throws ConfigError naming
/// the offending key, including unknown keys and a missing seed.
AppConfig parse_config(const nlohmann::json& user);

nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace dcvr::app
