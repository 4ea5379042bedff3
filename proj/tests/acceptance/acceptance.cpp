// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.
// Usage: dcvr_acceptance <path to the dcvr executable> [scratch dir]

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <memory>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "benchmark.hpp"
#include "dcvr/coordinator.hpp"
#include "dcvr/random.hpp"
#include "dcvr/synthetic.hpp"
#include "fixtures.hpp"
#include "oracle_check.hpp"
#include "state_vector.hpp"

namespace fs = std::filesystem;
using namespace dcvr;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Reference {
  std::shared_ptr<const Feeder> feeder = std::make_shared<const Feeder>(generate_synthetic_feeder(reference_fixture_spec()));
  Partition part = partition(feeder);
  StepContext ctx{&part, reference_snapshot()};
};

const Reference& reference() {
  static const Reference r;
  return r;
}

Outcome oracle_correctness() {
  const auto t0 = Clock::now();
  Rng rng(1);
  double worst = 0.0;
  for (int k = 0; k < 50; ++k) {
    const auto f = test::random_radial(rng, 3 + k % 12);
    const Multipliers mult{rng.uniform(0.3, 1.2), rng.uniform(0.3, 1.2), 0.0};
    const auto res = solve_powerflow(f, zero_dispatch(f), mult);
    worst = std::max(worst, test::nonlinear_residual(f, res.measurements, zero_dispatch(f), mult));
  }
  // Squared receiving voltage u solves u^2 - (v0^2 - 2(rP + xQ)) u + |z|^2 |S|^2 = 0.
  double closed = 0.0;
  for (int k = 0; k < 30; ++k) {
    const double r = rng.uniform(0.002, 0.03), x = rng.uniform(0.004, 0.06);
    const double p = rng.uniform(0.05, 0.9), q = rng.uniform(-0.2, 0.4);
    const auto phase = static_cast<std::size_t>(k % 3);
    auto f = test::two_bus(PhaseMask::single(phase), {r, x}, {}, p, q);
    f.v_substation = rng.uniform(0.97, 1.05);
    const auto res = solve_powerflow(f, zero_dispatch(f), {});
    const double v0 = f.v_substation;
    const double b = v0 * v0 - 2.0 * (r * p + x * q);
    const double c = (r * r + x * x) * (p * p + q * q);
    const double vj = (b + std::sqrt(b * b - 4.0 * c)) / 2.0;
    closed = std::max(closed, std::abs(res.measurements.v_bus[1][phase] - std::sqrt(vj)));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-8 && closed <= 1e-9 && secs < 10.0,
          fmt::format("balance {:.1e} (<=1e-8), two-bus {:.1e} (<=1e-9), {:.2f} s (<10)", worst, closed, secs)};
}

Outcome feedback_anchoring() {
  Rng rng(2);
  double worst = 0.0;
  const std::vector<Feeder> feeders{generate_synthetic_feeder(reference_fixture_spec()), test::one_secondary(),
                                    test::one_secondary(PhaseMask::single(1))};
  for (int k = 0; k < 100; ++k) {
    auto feeder = std::make_shared<const Feeder>(feeders[static_cast<std::size_t>(k % 3)]);
    const auto part = partition(feeder);
    const Multipliers mult{rng.uniform(0.3, 1.1), rng.uniform(0.3, 1.1), rng.uniform(0.0, 1.0)};
    Dispatch q = zero_dispatch(*feeder);
    for (std::size_t g = 0; g < q.size(); ++g) {
      const auto cap = feeder->inverters[g].q_cap(mult.pv);
      for (std::size_t p = 0; p < kPhases; ++p) q[g].set(p, rng.uniform(-1.0, 1.0) * cap[p]);
    }
    const auto m = solve_powerflow(*feeder, q, mult).measurements;
    const auto c = build_centralized(part, Linearization::at(*feeder, m, mult), EpsMode::WithEps);
    const auto x = test::state_vector(c.qp, *feeder, m, q);
    worst = std::max(worst, (c.qp.equality_matrix() * x - c.qp.equality_rhs()).lpNorm<Eigen::Infinity>());
  }
  return {worst <= 1e-10, fmt::format("worst linearized row residual {:.1e} over 100 states (<=1e-10)", worst)};
}

Outcome zip_linearization() {
  Rng rng(3);
  double tangent = 0.0, band = 0.0;
  for (int k = 0; k < 100; ++k) {
    auto bus = test::plain_bus(1, Zone::primary(), PhaseMask::abc());
    const double kz = rng.uniform(-1.0, 2.0), ki = rng.uniform(-1.5, 1.5);
    bus.zip_p = {kz, ki, 1.0 - kz - ki};
    bus.zip_q = {rng.uniform(0.0, 7.0), rng.uniform(-11.0, 0.0), 0.0};
    bus.zip_q.p = 1.0 - bus.zip_q.z - bus.zip_q.i;
    const double mp = rng.uniform(0.01, 0.3), mq = rng.uniform(0.01, 0.2);
    bus.load_mult_p = PhaseVector::uniform(PhaseMask::abc(), mp);
    bus.load_mult_q = PhaseVector::uniform(PhaseMask::abc(), mq);
    const double v0 = rng.uniform(0.92, 1.06);
    const auto lin = linearize_zip(bus, PhaseVector::uniform(PhaseMask::abc(), v0));
    const double h = 1e-6;
    for (int which = 0; which < 2; ++which) {
      const auto& k3 = which == 0 ? bus.zip_p : bus.zip_q;
      const double m = which == 0 ? mp : mq;
      const double a = which == 0 ? lin.a_p[0] : lin.a_q[0];
      const double b = which == 0 ? lin.b_p[0] : lin.b_q[0];
      // Affine in squared magnitude u = |V|^2.
      auto truth = [&](double u) { return test::zip_true(m, k3, std::sqrt(u)); };
      const double u0 = v0 * v0;
      const double fd = (truth(u0 + h) - truth(u0 - h)) / (2.0 * h);
      tangent = std::max({tangent, std::abs(a * u0 + b - truth(u0)), std::abs(a - fd)});
      for (double dv = -0.005; dv <= 0.005 + 1e-12; dv += 0.0005) {
        const double u = (v0 + dv) * (v0 + dv);
        band = std::max(band, std::abs(a * u + b - truth(u)));
      }
    }
  }
  return {tangent <= 1e-6 && band <= 1e-4,
          fmt::format("tangency {:.1e} (<=1e-6), error within 0.005 p.u. {:.1e} (<=1e-4)", tangent, band)};
}

Outcome distributed_equals_centralized() {
  const auto t0 = Clock::now();
  const auto& ref = reference();
  auto c = reference_admm_config();
  c.online = false;
  c.primal_tol = c.dual_tol = 1e-6;
  c.max_iter = 1000;
  const auto r = run_iteration_loop(ref.ctx, c);
  const auto central = build_centralized(ref.part, r.state.lin, EpsMode::WithEps, c.build);
  const auto point = centralized_point(central, r.state);
  const auto kkt = check_kkt(central.qp, point);
  const auto opt = solve(central.qp);
  const double gap = std::abs(point.objective - opt.objective);
  const double secs = seconds_since(t0);
  return {r.converged && kkt.ok(1e-4) && opt.optimal() && gap <= 1e-4 && secs < 60.0,
          fmt::format("converged {} in {} iterations, KKT {:.1e} (<=1e-4), objective gap {:.1e} (<=1e-4), {:.2f} s",
                      r.converged, r.state.iterations, kkt.relative_max(), gap, secs)};
}

int first_below(const std::vector<IterationRecord>& h, double tol) {
  for (const auto& rec : h)
    if (rec.r_norm < tol) return rec.iteration;
  return -1;
}

Outcome convergence_speed() {
  const auto& ref = reference();
  const int nf = static_cast<int>(ref.part.follower_count());
  bool pass = true;
  std::string detail;
  const auto sync = run_iteration_loop(ref.ctx, reference_admm_config());
  const int s = first_below(sync.state.history, 1e-3);
  pass = pass && s > 0 && s <= 30;
  detail += fmt::format("sync {}", s);
  for (int nb = (nf + 1) / 2; nb <= nf; ++nb) {
    auto c = reference_admm_config();
    c.mode = AdmmMode::Async;
    c.async_policy = AsyncPolicy::RandomSubset;
    c.partial_barrier = nb;
    MessageBus bus;
    const auto r = run_iteration_loop(ref.ctx, c, &bus);
    const int k = first_below(r.state.history, 1e-3);
    pass = pass && k > 0 && k <= 30;
    detail += fmt::format(", N~={} {}", nb, k);
  }
  auto c = reference_admm_config();
  c.mode = AdmmMode::Async;
  c.async_policy = AsyncPolicy::RandomSubset;
  c.partial_barrier = std::max(1, nf / 4);
  MessageBus bus;
  const auto q = run_iteration_loop(ref.ctx, c, &bus);
  pass = pass && q.converged && q.state.iterations <= 200;
  detail += fmt::format(" (<=30); N~={} converged {} at {} (<=200)", c.partial_barrier, q.converged, q.state.iterations);
  return {pass, "iterations to |r| < 1e-3: " + detail};
}

Outcome leader_failure() {
  const auto& ref = reference();
  auto c = reference_admm_config();
  c.mode = AdmmMode::Async;
  c.partial_barrier = 4;
  c.primal_tol = c.dual_tol = 1e-7;
  c.max_iter = 1000;
  auto run = [&](bool outage) {
    LatencyPolicy policy;
    policy.default_latency = Latency::uniform(1, 4);
    policy.seed = 11;
    if (outage) policy.failures.push_back({kLeader, 30, 50});
    MessageBus bus(policy);
    return run_iteration_loop(ref.ctx, c, &bus);
  };
  const auto clean = run(false);
  const auto hit = run(true);
  double gap = (clean.state.x - hit.state.x).lpNorm<Eigen::Infinity>();
  for (std::size_t n = 0; n < ref.part.follower_count(); ++n)
    gap = std::max(gap, (clean.state.followers[n].z_b - hit.state.followers[n].z_b).lpNorm<Eigen::Infinity>());
  for (std::size_t g = 0; g < clean.state.dispatch.size(); ++g)
    for (std::size_t p = 0; p < kPhases; ++p)
      gap = std::max(gap, std::abs(clean.state.dispatch[g][p] - hit.state.dispatch[g][p]));
  const bool spans = hit.state.leader_clock > 50;
  return {clean.converged && hit.converged && spans && gap <= 1e-4,
          fmt::format("outage run converged {} at clock {}, max per-variable gap {:.1e} (<=1e-4)", hit.converged,
                      hit.state.leader_clock, gap)};
}

Outcome coincidence() {
  const auto& ref = reference();
  auto c = reference_admm_config();
  c.primal_tol = c.dual_tol = 1e-300;
  c.max_iter = 50;
  const auto sync = run_iteration_loop(ref.ctx, c);
  c.mode = AdmmMode::Async;
  c.async_policy = AsyncPolicy::Latency;
  c.partial_barrier = 0;
  c.bounded_delay = 1;
  MessageBus bus;
  const auto async = run_iteration_loop(ref.ctx, c, &bus);
  bool same = sync.state.history.size() == 50 && async.state.history.size() == 50 && sync.state.x == async.state.x;
  for (std::size_t k = 0; same && k < 50; ++k) {
    const auto& a = sync.state.history[k];
    const auto& b = async.state.history[k];
    same = a.r_norm == b.r_norm && a.s_norm == b.s_norm && a.rho == b.rho && a.objective == b.objective;
  }
  for (std::size_t n = 0; same && n < ref.part.follower_count(); ++n)
    same = sync.state.followers[n].z_b == async.state.followers[n].z_b &&
           sync.state.followers[n].lambda == async.state.followers[n].lambda;
  return {same, fmt::format("{} of 50 iterations compared, iterates {}", async.state.history.size(),
                            same ? "bitwise equal" : "differ")};
}

Outcome penalty_rule() {
  AdmmConfig c;
  const double r[] = {1.0, 1.0, 0.02, 0.02, 1.0, 1.0, 0.1, 5.0};
  const double s[] = {0.01, 0.01, 1.0, 1.0, 0.5, 0.1, 1.0, 0.0};
  const double expect[] = {0.25, 1.25, 0.25, 0.05, 0.05, 0.05, 0.05, 0.25};
  double rho = c.rho0;
  int matched = 0;
  for (int k = 0; k < 8; ++k) {
    rho = next_penalty(rho, r[k], s[k], c);
    matched += rho == expect[k];
  }
  return {matched == 8, fmt::format("{} of 8 scripted steps exact", matched)};
}

Outcome cvr_effect() {
  const auto t0 = Clock::now();
  const auto& ref = reference();
  const auto series = app::bundled_daily_profile();
  app::BenchmarkConfig cfg;
  cfg.seed = 2021;
  std::vector<app::RunReport> reports;
  for (const auto* name : {"base", "ccvr", "dscvr", "dacvr:4"})
    reports.push_back(app::run_benchmark(ref.part, series, app::Strategy::parse(name), cfg));
  app::pair_with_base(reports);
  bool pass = reports[0].violation_steps() > 0 && !reports[0].failed();
  std::string detail = fmt::format("base vmin {:.4f} with {} violating minutes", reports[0].min_voltage(),
                                   reports[0].violation_steps());
  for (std::size_t k = 1; k < reports.size(); ++k) {
    const auto& r = reports[k];
    pass = pass && !r.failed() && r.steps.size() == series.size() && r.reduction_pct > 0.0 && r.min_voltage() >= 0.95 &&
           r.max_voltage() <= 1.05;
    detail += fmt::format("; {} {:+.4f}% in [{:.4f}, {:.4f}]", r.strategy, r.reduction_pct, r.min_voltage(),
                          r.max_voltage());
  }
  const double secs = seconds_since(t0);
  pass = pass && secs < 900.0;
  detail += fmt::format("; {:.0f} s (<900); dscvr >= dacvr4 {}", secs,
                        reports[2].reduction_pct >= reports[3].reduction_pct ? "yes" : "no (qualitative only)");
  return {pass, detail};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome determinism(const std::string& exe, const fs::path& scratch) {
  if (exe.empty()) return {false, "no dcvr executable given"};
  const auto cfg = scratch / "determinism.json";
  {
    std::ofstream out(cfg);
    out << R"({"seed": 77, "scenario": {"stride": 20},
 "bus": {"latency_max": 2, "drop_probability": 0.05},
 "sweep": {"partial_barriers": [2, 4, 8], "latency_max": [0, 3], "seeds": [1, 2]}})";
  }
  std::vector<std::string> files;
  for (int pass = 0; pass < 2; ++pass) {
    const auto dir = scratch / fmt::format("run{}", pass);
    fs::remove_all(dir);
    for (const auto* sub : {"run", "sweep"}) {
      const auto cmd = fmt::format("\"{}\" {} -c \"{}\" -o \"{}\" > \"{}\" 2>&1", exe, sub, cfg.string(), dir.string(),
                                   (dir.string() + "." + sub + ".log"));
      if (std::system(cmd.c_str()) != 0) return {false, fmt::format("`dcvr {}` failed, see {}.{}.log", sub, dir.string(), sub)};
    }
  }
  int compared = 0;
  for (const auto& entry : fs::directory_iterator(scratch / "run0")) {
    if (entry.path().extension() != ".csv") continue;
    const auto other = scratch / "run1" / entry.path().filename();
    if (!fs::exists(other) || slurp(entry.path()) != slurp(other))
      return {false, fmt::format("{} differs between reruns", entry.path().filename().string())};
    ++compared;
  }
  return {compared >= 7, fmt::format("{} CSV files byte-identical across reruns of run and sweep", compared)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::string exe = argc > 1 ? argv[1] : "";
  const fs::path scratch = argc > 2 ? fs::path(argv[2]) : fs::temp_directory_path() / "dcvr_acceptance";
  fs::create_directories(scratch);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"oracle correctness", oracle_correctness},
      {"feedback anchoring", feedback_anchoring},
      {"ZIP linearization", zip_linearization},
      {"distributed equals centralized", distributed_equals_centralized},
      {"convergence speed", convergence_speed},
      {"leader-failure robustness", leader_failure},
      {"sync/async coincidence", coincidence},
      {"penalty rule", penalty_rule},
      {"CVR effect", cvr_effect},
      {"determinism", [&] { return determinism(exe, scratch); }},
  };
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << fmt::format("[{}] criterion {:>2} {}: {}\n", o.pass ? "PASS" : "FAIL", k + 1, criteria[k].first,
                             o.detail)
              << std::flush;
  }
  std::cout << fmt::format("{} of {} criteria passed\n", criteria.size() - static_cast<std::size_t>(failed),
                           criteria.size());
  return failed == 0 ? 0 : 1;
}
