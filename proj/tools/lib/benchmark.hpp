#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dcvr/coordinator.hpp"
#include "scenario.hpp"

namespace dcvr::app {

enum class StrategyKind { Base, Ccvr, Dscvr, Dacvr };

struct Strategy {
  StrategyKind kind = StrategyKind::Base;
  int partial_barrier = 0;  ///< dacvr only; 0 means every follower

  /// "base", "ccvr", "dscvr", "dacvr" or "dacvr:<N>".
  static Strategy parse(const std::string& text);
  std::string name() const;
};

/// Message bus settings applied to every async step.
struct BusSettings {
  int latency_min = 0;
  int latency_max = 0;
  double drop_probability = 0.0;
  std::vector<FailureWindow> failures;
  AsyncPolicy policy = AsyncPolicy::RandomSubset;

  LatencyPolicy latency_policy(std::uint64_t seed) const;
};

struct BenchmarkConfig {
  AdmmConfig admm = reference_admm_config();
  BusSettings bus;
  std::uint64_t seed = 0;
  double v_low = 0.95;
  double v_high = 1.05;
  double base_kva = 100.0;
};

struct StepRecord {
  int minute = 0;
  double p_sub_kw = 0.0;
  std::array<double, kPhases> vmin{}, vmax{};  ///< NaN on phases the feeder lacks
  int iterations = 0;
  bool converged = true;
  int violations = 0;  ///< bus-phase voltages outside the band
};

struct RunReport {
  std::string strategy;
  std::vector<StepRecord> steps;
  double energy_kwh = 0.0;
  double reduction_pct = 0.0;  ///< against the paired base run; 0 for base itself
  int failed_step = -1;        ///< minute of the first oracle failure
  std::string error;
  std::string config_hash;
  /// Leaf-bus voltages per step, long format rows (minute, bus, phase, v).
  struct Sample {
    int minute;
    BusId bus;
    std::size_t phase;
    double v;
  };
  std::vector<Sample> edge_voltages;

  bool failed() const { return failed_step >= 0; }
  int violation_steps() const;
  int nonconverged_steps() const;
  double min_voltage() const;
  double max_voltage() const;
};

/// Runs one strategy over the series. Base applies q_g = 0; ccvr solves the
/// centralized problem without loss terms once per step, linearized at the
/// state left by its own previous dispatch; dscvr and dacvr run the
/// coordinator loop warm-started from the previous minute. Every metric
/// comes from the oracle. Stops at the first oracle failure.
RunReport run_benchmark(const Partition& part, const ScenarioTimeSeries& series, const Strategy& strategy,
                        const BenchmarkConfig& config);

/// Sets energy reductions of `reports` against the entry named "base".
void pair_with_base(std::vector<RunReport>& reports);

/// Buses without outgoing branches: the grid edge of each secondary.
std::vector<std::size_t> leaf_buses(const Feeder& feeder);

}  // namespace dcvr::app
