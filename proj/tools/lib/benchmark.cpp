#include "benchmark.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include <fmt/format.h>

namespace dcvr::app {

Strategy Strategy::parse(const std::string& text) {
  Strategy s;
  if (text == "base") return s;
  if (text == "ccvr") {
    s.kind = StrategyKind::Ccvr;
    return s;
  }
  if (text == "dscvr") {
    s.kind = StrategyKind::Dscvr;
    return s;
  }
  if (text.rfind("dacvr", 0) == 0) {
    s.kind = StrategyKind::Dacvr;
    if (text.size() == 5) return s;
    if (text[5] != ':') throw ConfigError("unknown strategy " + text);
    try {
      std::size_t used = 0;
      s.partial_barrier = std::stoi(text.substr(6), &used);
      if (used != text.size() - 6 || s.partial_barrier < 1) throw ConfigError("");
    } catch (const std::exception&) {
      throw ConfigError("dacvr needs a positive follower count, got " + text);
    }
    return s;
  }
  throw ConfigError("unknown strategy " + text);
}

std::string Strategy::name() const {
  switch (kind) {
    case StrategyKind::Base: return "base";
    case StrategyKind::Ccvr: return "ccvr";
    case StrategyKind::Dscvr: return "dscvr";
    case StrategyKind::Dacvr: return partial_barrier ? fmt::format("dacvr{}", partial_barrier) : "dacvr";
  }
  return "?";
}

LatencyPolicy BusSettings::latency_policy(std::uint64_t seed) const {
  LatencyPolicy p;
  p.default_latency = Latency::uniform(latency_min, latency_max);
  p.drop_probability = drop_probability;
  p.failures = failures;
  p.seed = seed;
  return p;
}

int RunReport::violation_steps() const {
  return static_cast<int>(std::count_if(steps.begin(), steps.end(), [](const StepRecord& s) { return s.violations > 0; }));
}

int RunReport::nonconverged_steps() const {
  return static_cast<int>(std::count_if(steps.begin(), steps.end(), [](const StepRecord& s) { return !s.converged; }));
}

double RunReport::min_voltage() const {
  double v = std::numeric_limits<double>::infinity();
  for (const auto& s : steps)
    for (double x : s.vmin)
      if (!std::isnan(x)) v = std::min(v, x);
  return v;
}

double RunReport::max_voltage() const {
  double v = -std::numeric_limits<double>::infinity();
  for (const auto& s : steps)
    for (double x : s.vmax)
      if (!std::isnan(x)) v = std::max(v, x);
  return v;
}

std::vector<std::size_t> leaf_buses(const Feeder& feeder) {
  std::vector<bool> feeds(feeder.buses.size(), false);
  for (const auto& br : feeder.branches) feeds[feeder.bus_index(br.from)] = true;
  for (const auto& l : feeder.boundary_links) feeds[feeder.bus_index(l.primary_bus)] = true;
  std::vector<std::size_t> out;
  for (std::size_t b = 0; b < feeder.buses.size(); ++b)
    if (!feeds[b]) out.push_back(b);
  return out;
}

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Oracle metrics for one applied dispatch.
StepRecord observe(const Feeder& f, const MeasurementSet& m, const Multipliers& mult, const BenchmarkConfig& config,
                   const std::vector<std::size_t>& leaves, int minute, RunReport& report) {
  StepRecord r;
  r.minute = minute;
  double p = 0.0;
  for (std::size_t k = 0; k < f.branches.size(); ++k)
    if (f.branches[k].from == f.substation_bus) p += m.s_branch[k].sum().real();
  const auto sub = f.bus_index(f.substation_bus);
  p += zip_load_p(f.buses[sub], m.v_bus[sub], mult.load_p).sum();
  r.p_sub_kw = p * config.base_kva;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  r.vmin.fill(nan);
  r.vmax.fill(nan);
  for (std::size_t b = 0; b < f.buses.size(); ++b)
    for (std::size_t ph = 0; ph < kPhases; ++ph) {
      if (!f.buses[b].phases.has(ph)) continue;
      const double v = m.v_bus[b][ph];
      r.vmin[ph] = std::isnan(r.vmin[ph]) ? v : std::min(r.vmin[ph], v);
      r.vmax[ph] = std::isnan(r.vmax[ph]) ? v : std::max(r.vmax[ph], v);
      if (v < config.v_low || v > config.v_high) ++r.violations;
    }
  for (auto b : leaves)
    for (std::size_t ph = 0; ph < kPhases; ++ph)
      if (f.buses[b].phases.has(ph)) report.edge_voltages.push_back({minute, f.buses[b].id, ph, m.v_bus[b][ph]});
  return r;
}

/// Minutes until the next sample, or since the previous one at the end.
double step_hours(const ScenarioTimeSeries& s, std::size_t k) {
  int gap = 1;
  if (k + 1 < s.size()) gap = s.minute[k + 1] - s.minute[k];
  else if (k > 0) gap = s.minute[k] - s.minute[k - 1];
  return gap / 60.0;
}

}  // namespace

RunReport run_benchmark(const Partition& part, const ScenarioTimeSeries& series, const Strategy& strategy,
                        const BenchmarkConfig& config) {
  series.validate();
  const auto& f = *part.feeder;
  const auto leaves = leaf_buses(f);
  RunReport report;
  report.strategy = strategy.name();

  AdmmConfig admm = config.admm;
  if (strategy.kind == StrategyKind::Dscvr) admm.mode = AdmmMode::Sync;
  if (strategy.kind == StrategyKind::Dacvr) {
    admm.mode = AdmmMode::Async;
    admm.async_policy = config.bus.policy;
    admm.partial_barrier = strategy.partial_barrier;
  }
  admm.validate(part.follower_count());

  Dispatch applied = zero_dispatch(f);
  std::unique_ptr<AdmmState> previous;
  QpSolution central_warm;

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto mult = series.at(k);
    const int minute = series.minute[k];
    int iterations = 0;
    bool converged = true;
    try {
      switch (strategy.kind) {
        case StrategyKind::Base: break;
        case StrategyKind::Ccvr: {
          const auto m = solve_powerflow(f, applied, mult, admm.oracle).measurements;
          const auto lin = Linearization::at(f, m, mult);
          const auto sp = build_centralized(part, lin, EpsMode::DropEps, admm.build);
          const auto sol = solve(sp.qp, central_warm.x.size() ? &central_warm : nullptr, admm.qp);
          iterations = 1;
          converged = sol.optimal();
          if (converged) {
            extract_dispatch(sp, sol.x, applied);
            central_warm = sol;
          }
          break;
        }
        case StrategyKind::Dscvr:
        case StrategyKind::Dacvr: {
          StepContext ctx{&part, mult};
          MessageBus bus(config.bus.latency_policy(mix(config.seed ^ mix(static_cast<std::uint64_t>(minute)))));
          auto r = run_iteration_loop(ctx, admm, &bus, previous.get());
          if (r.aborted) throw DivergenceError(r.error, 0.0);
          iterations = r.state.iterations;
          converged = r.converged;
          applied = r.state.dispatch;
          previous = std::make_unique<AdmmState>(std::move(r.state));
          break;
        }
      }
      const auto m = solve_powerflow(f, applied, mult, admm.oracle).measurements;
      auto rec = observe(f, m, mult, config, leaves, minute, report);
      rec.iterations = iterations;
      rec.converged = converged;
      report.energy_kwh += rec.p_sub_kw * step_hours(series, k);
      report.steps.push_back(rec);
    } catch (const std::exception& e) {
      report.failed_step = minute;
      report.error = e.what();
      break;
    }
  }
  return report;
}

void pair_with_base(std::vector<RunReport>& reports) {
  auto base = std::find_if(reports.begin(), reports.end(), [](const RunReport& r) { return r.strategy == "base"; });
  if (base == reports.end() || base->failed() || base->energy_kwh == 0.0) return;
  for (auto& r : reports)
    r.reduction_pct = &r == &*base ? 0.0 : 100.0 * (base->energy_kwh - r.energy_kwh) / base->energy_kwh;
}

}  // namespace dcvr::app
