#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "benchmark.hpp"
#include "config.hpp"
#include "dcvr/feeder_io.hpp"
#include "report.hpp"

namespace fs = std::filesystem;
using namespace dcvr;
using namespace dcvr::app;

namespace {

struct Common {
  std::string config_file;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config_file, "JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "seed (required here or in the config)");
  cmd->add_option("--set", c.overrides, "override, e.g. admm.rho0=0.1 (repeatable)");
  cmd->add_option("-o,--out", c.out, "output directory");
}

AppConfig load(const Common& c, const std::vector<std::string>& extra = {}) {
  nlohmann::json j = c.config_file.empty() ? nlohmann::json::object() : read_json_file(c.config_file);
  if (c.seed) j["seed"] = *c.seed;
  for (const auto& o : c.overrides) apply_override(j, o);
  for (const auto& o : extra) apply_override(j, o);
  if (!c.out.empty()) j["output"] = c.out;
  return parse_config(j);
}

void save_effective(const AppConfig& cfg) {
  fs::create_directories(cfg.output);
  auto out = open_output(cfg.output / "config.json");
  out << cfg.effective.dump(2) << '\n';
}

int cmd_generate(const AppConfig& cfg, const std::string& feeder_file, bool with_series) {
  const auto feeder = cfg.load_feeder_or_generate();
  fs::create_directories(cfg.output);
  const fs::path path = feeder_file.empty() ? cfg.output / "feeder.txt" : fs::path(feeder_file);
  save_feeder(path, feeder);
  std::cout << fmt::format("wrote {} ({} buses, {} branches, {} inverters, {} secondaries)\n", path.string(),
                           feeder.buses.size(), feeder.branches.size(), feeder.inverters.size(),
                           feeder.boundary_links.size());
  if (with_series) {
    const auto series_path = cfg.output / "series.csv";
    auto out = open_output(series_path);
    write_series_csv(out, bundled_daily_profile());
    std::cout << "wrote " << series_path.string() << '\n';
  }
  return 0;
}

int cmd_run(const AppConfig& cfg) {
  auto feeder = std::make_shared<const Feeder>(cfg.load_feeder_or_generate());
  const auto part = partition(feeder);
  const auto series = cfg.load_series_or_bundled();
  const auto hash = cfg.hash();
  std::vector<RunReport> reports;
  for (const auto& s : cfg.strategies) {
    std::cerr << fmt::format("running {} over {} steps\n", s.name(), series.size());
    auto r = run_benchmark(part, series, s, cfg.bench);
    r.config_hash = hash;
    reports.push_back(std::move(r));
  }
  pair_with_base(reports);
  save_effective(cfg);
  emit_report(reports, cfg.output);
  int status = 0;
  std::cout << fmt::format("{:<10} {:>14} {:>10} {:>8} {:>8} {:>6} {:>6}\n", "strategy", "energy_kwh", "reduct_%",
                           "vmin", "vmax", "viol", "nconv");
  for (const auto& r : reports) {
    std::cout << fmt::format("{:<10} {:>14.4f} {:>10.4f} {:>8.4f} {:>8.4f} {:>6} {:>6}\n", r.strategy, r.energy_kwh,
                             r.reduction_pct, r.min_voltage(), r.max_voltage(), r.violation_steps(),
                             r.nonconverged_steps());
    if (r.failed()) {
      std::cerr << fmt::format("{} failed at minute {}: {}\n", r.strategy, r.failed_step, r.error);
      status = 1;
    }
  }
  std::cout << "config hash " << hash << ", reports in " << cfg.output.string() << '\n';
  return status;
}

int first_below(const std::vector<IterationRecord>& h, double tol) {
  for (const auto& r : h)
    if (r.r_norm < tol) return r.iteration;
  return -1;
}

int cmd_sweep(const AppConfig& cfg) {
  auto feeder = std::make_shared<const Feeder>(cfg.load_feeder_or_generate());
  const auto part = partition(feeder);
  const int nf = static_cast<int>(part.follower_count());
  auto barriers = cfg.sweep.partial_barriers;
  if (barriers.empty()) barriers = {std::max(1, nf / 4), std::max(1, nf / 2), nf};
  auto seeds = cfg.sweep.seeds;
  if (seeds.empty()) seeds = {cfg.seed};
  const StepContext ctx{&part, cfg.snapshot};
  save_effective(cfg);
  auto summary = open_output(cfg.output / "sweep.csv");
  auto trace = open_output(cfg.output / "sweep_trace.csv");
  summary << "partial_barrier,latency_max,seed,iterations,leader_clocks,first_r_below_tol,converged,objective,r_norm,"
             "s_norm,config_hash\n";
  trace << "partial_barrier,latency_max,seed,";
  write_iteration_csv(trace, {}, true);
  const auto hash = cfg.hash();
  int status = 0;
  for (int nb : barriers)
    for (int lat : cfg.sweep.latency_max)
      for (auto seed : seeds) {
        auto admm = cfg.bench.admm;
        admm.mode = AdmmMode::Async;
        admm.async_policy = cfg.bench.bus.policy;
        admm.partial_barrier = nb;
        auto bus_settings = cfg.bench.bus;
        bus_settings.latency_max = std::max(lat, bus_settings.latency_min);
        MessageBus bus(bus_settings.latency_policy(seed));
        const auto r = run_iteration_loop(ctx, admm, &bus);
        if (r.aborted) {
          std::cerr << fmt::format("barrier {} latency {} seed {}: {}\n", nb, lat, seed, r.error);
          status = 1;
          continue;
        }
        const auto& h = r.state.history;
        summary << nb << ',' << lat << ',' << seed << ',' << r.state.iterations << ',' << r.state.leader_clock << ','
                << first_below(h, admm.primal_tol) << ',' << (r.converged ? 1 : 0) << ','
                << (h.empty() ? "" : format_double(h.back().objective)) << ','
                << (h.empty() ? "" : format_double(h.back().r_norm)) << ','
                << (h.empty() ? "" : format_double(h.back().s_norm)) << ',' << hash << '\n';
        for (const auto& rec : h) {
          trace << nb << ',' << lat << ',' << seed << ',';
          write_iteration_csv(trace, {rec}, false);
        }
        std::cout << fmt::format("barrier {:>3} latency {:>2} seed {:>6}: {:>4} iterations, converged {}\n", nb, lat,
                                 seed, r.state.iterations, r.converged);
      }
  if (!summary || !trace) throw std::runtime_error("write failed in " + cfg.output.string());
  return status;
}

int cmd_trace(const AppConfig& cfg, bool dump_qp) {
  auto feeder = std::make_shared<const Feeder>(cfg.load_feeder_or_generate());
  const auto part = partition(feeder);
  const StepContext ctx{&part, cfg.snapshot};
  auto admm = cfg.bench.admm;
  admm.async_policy = cfg.bench.bus.policy;
  MessageBus bus(cfg.bench.bus.latency_policy(cfg.seed));
  const auto r = run_iteration_loop(ctx, admm, &bus);
  save_effective(cfg);
  {
    auto out = open_output(cfg.output / "iterations.csv");
    write_iteration_csv(out, r.state.history);
  }
  {
    auto out = open_output(cfg.output / "events.csv");
    bus.write_trace_csv(out);
  }
  if (!r.aborted) {
    const auto m = solve_powerflow(*feeder, r.state.dispatch, cfg.snapshot, admm.oracle).measurements;
    auto out = open_output(cfg.output / "measurements.csv");
    write_measurement_csv(out, *feeder, m);
  }
  if (dump_qp && r.state.leader_problem) {
    auto out = open_output(cfg.output / "leader.qp");
    r.state.leader_problem->qp.write_text(out);
    for (const auto& f : r.state.followers) {
      if (!f.problem) continue;
      auto fo = open_output(cfg.output / fmt::format("follower_{}.qp", f.secondary_id));
      f.problem->qp.write_text(fo);
    }
    auto co = open_output(cfg.output / "centralized.qp");
    build_centralized(part, r.state.lin, EpsMode::WithEps, admm.build).qp.write_text(co);
  }
  const auto c = bus.counts();
  std::cout << fmt::format("{} mode: {} iterations over {} leader clocks, converged {}\n", to_string(admm.mode),
                           r.state.iterations, r.state.leader_clock, r.converged);
  std::cout << fmt::format("messages: {} posted, {} delivered, {} dropped, {} suppressed; {} bound-violation clocks\n",
                           c.posted, c.delivered, c.dropped, c.suppressed, r.state.violation_clocks.size());
  if (r.aborted) {
    std::cerr << "oracle failure: " << r.error << '\n';
    return 1;
  }
  if (!r.converged) {
    std::cerr << "did not converge within max_iter\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed CVR dispatch of smart inverters: feeder generation, benchmarks and ADMM traces"};
  app.require_subcommand(1);

  Common gen_opts, run_opts, sweep_opts, trace_opts;
  std::string feeder_file;
  bool with_series = false;
  auto* gen = app.add_subcommand("generate", "write a synthetic feeder in the feeder text format");
  add_common(gen, gen_opts);
  gen->add_option("--feeder-file", feeder_file, "destination (default <out>/feeder.txt)");
  gen->add_flag("--series", with_series, "also write the bundled daily series as CSV");

  std::vector<std::string> strategies;
  std::optional<std::size_t> steps, stride, start;
  auto* run = app.add_subcommand("run", "run benchmark strategies over the time series");
  add_common(run, run_opts);
  run->add_option("--strategy", strategies, "base, ccvr, dscvr, dacvr or dacvr:<N> (repeatable)");
  run->add_option("--steps", steps, "number of steps (0 = all)");
  run->add_option("--stride", stride, "take every n-th minute");
  run->add_option("--start", start, "first step");

  std::vector<int> barriers;
  auto* sweep = app.add_subcommand("sweep", "partial barrier and latency sweep on the snapshot");
  add_common(sweep, sweep_opts);
  sweep->add_option("--barrier", barriers, "partial barrier values (repeatable)");

  bool dump_qp = false;
  auto* trace = app.add_subcommand("trace", "single snapshot convergence trace with the configured bus");
  add_common(trace, trace_opts);
  trace->add_flag("--dump-qp", dump_qp, "write the final subproblems in the QP text format");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_generate(load(gen_opts), feeder_file, with_series);
    if (run->parsed()) {
      std::vector<std::string> extra;
      if (!strategies.empty()) extra.push_back("strategies=" + nlohmann::json(strategies).dump());
      if (steps) extra.push_back(fmt::format("scenario.steps={}", *steps));
      if (stride) extra.push_back(fmt::format("scenario.stride={}", *stride));
      if (start) extra.push_back(fmt::format("scenario.start={}", *start));
      return cmd_run(load(run_opts, extra));
    }
    if (sweep->parsed()) {
      std::vector<std::string> extra;
      if (!barriers.empty()) extra.push_back("sweep.partial_barriers=" + nlohmann::json(barriers).dump());
      return cmd_sweep(load(sweep_opts, extra));
    }
    if (trace->parsed()) return cmd_trace(load(trace_opts), dump_qp);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
