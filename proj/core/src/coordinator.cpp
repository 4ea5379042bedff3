#include "dcvr/coordinator.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>

#include <fmt/format.h>

#include "dcvr/feeder_io.hpp"

namespace dcvr {

std::string to_string(AdmmMode mode) { return mode == AdmmMode::Sync ? "sync" : "async"; }
std::string to_string(AsyncPolicy policy) { return policy == AsyncPolicy::Latency ? "latency" : "random_subset"; }

void AdmmConfig::validate(std::size_t followers) const {
  if (!(rho0 > 0.0)) throw ConfigError("rho0 must be positive");
  if (!(mu > 1.0)) throw ConfigError("mu must exceed 1");
  if (!(tau_inc > 1.0) || !(tau_dec > 1.0)) throw ConfigError("tau_inc and tau_dec must exceed 1");
  if (partial_barrier < 0 || static_cast<std::size_t>(partial_barrier) > followers)
    throw ConfigError(fmt::format("partial barrier must lie in [1, {}]", followers));
  if (bounded_delay < 1) throw ConfigError("bounded delay must be at least 1");
  if (!bounded_delays.empty() && bounded_delays.size() != followers)
    throw ConfigError(fmt::format("need {} bounded delays, got {}", followers, bounded_delays.size()));
  for (int t : bounded_delays)
    if (t < 1) throw ConfigError("bounded delay must be at least 1");
  if (!(primal_tol > 0.0) || !(dual_tol > 0.0)) throw ConfigError("tolerances must be positive");
  if (max_iter < 1) throw ConfigError("max_iter must be at least 1");
  if (max_clock < 0) throw ConfigError("max_clock must not be negative");
}

std::size_t AdmmConfig::barrier(std::size_t followers) const {
  return partial_barrier == 0 ? followers : static_cast<std::size_t>(partial_barrier);
}

int AdmmConfig::delay_bound(std::size_t n) const { return bounded_delays.empty() ? bounded_delay : bounded_delays[n]; }

AdmmConfig reference_admm_config() {
  AdmmConfig c;
  c.build.voltage_margin = 0.004;
  c.build.reactive_weight = 4.0;
  return c;
}

double next_penalty(double rho, double r_norm, double s_norm, const AdmmConfig& config) {
  if (r_norm > config.mu * s_norm) return config.tau_inc * rho;
  if (s_norm > config.mu * r_norm) return rho / config.tau_dec;
  return rho;
}

namespace {

std::size_t feeder_link(const Feeder& f, int secondary_id) {
  for (std::size_t l = 0; l < f.boundary_links.size(); ++l)
    if (f.boundary_links[l].secondary_id == secondary_id) return l;
  throw StructuralError(fmt::format("no boundary link for secondary {}", secondary_id));
}

}  // namespace

AdmmState initial_state(const StepContext& ctx, const AdmmConfig& config) {
  const auto& part = *ctx.part;
  const auto& f = *part.feeder;
  config.validate(part.follower_count());
  AdmmState s;
  s.rho = config.rho0;
  s.dispatch = zero_dispatch(f);
  s.measurements = solve_powerflow(f, s.dispatch, ctx.mult, config.oracle).measurements;
  s.lin = Linearization::at(f, s.measurements, ctx.mult);
  const auto nf = part.follower_count();
  s.followers.resize(nf);
  for (std::size_t n = 0; n < nf; ++n) {
    const auto& link = part.links[n];
    const auto flow = s.measurements.s_link[feeder_link(f, link.secondary_id)];
    const auto k = static_cast<Eigen::Index>(link.phases.count());
    Eigen::VectorXd z(3 * k), x(3 * k);
    Eigen::Index i = 0;
    for (std::size_t p = 0; p < kPhases; ++p)
      if (link.phases.has(p)) {
        z[i] = flow[p].real();
        z[k + i] = flow[p].imag();
        z[2 * k + i] = 1.0;
        ++i;
      }
    x << -z.head(2 * k), z.tail(k);
    s.x_b.push_back(x);
    s.z_tilde.push_back(z);
    s.lambda_tilde.push_back(Eigen::VectorXd::Zero(3 * k));
    auto& fs = s.followers[n];
    fs.secondary_id = link.secondary_id;
    fs.z_b = z;
    fs.lambda = Eigen::VectorXd::Zero(3 * k);
    fs.x_b = x;
    fs.rho = s.rho;
  }
  s.z_tilde_prev = s.z_tilde;
  s.last_heard.assign(nf, 0);
  return s;
}

AdmmState warm_state(const AdmmState& previous, const StepContext& ctx, const AdmmConfig& config) {
  config.validate(ctx.part->follower_count());
  AdmmState s = previous;
  s.measurements = solve_powerflow(*ctx.part->feeder, s.dispatch, ctx.mult, config.oracle).measurements;
  s.lin = Linearization::at(*ctx.part->feeder, s.measurements, ctx.mult);
  s.rho = config.rho0;
  for (auto& fs : s.followers) fs.rho = s.rho;
  s.leader_clock = 0;
  s.iterations = 0;
  s.history.clear();
  s.arrived.clear();
  s.broadcast.clear();
  s.converged = false;
  s.violation_clocks.clear();
  s.z_tilde_prev = s.z_tilde;
  std::fill(s.last_heard.begin(), s.last_heard.end(), 0);
  return s;
}

std::pair<double, double> residual_norms(const AdmmState& state, const Partition& part) {
  double r2 = 0.0, s2 = 0.0;
  for (std::size_t n = 0; n < part.links.size(); ++n) {
    const Eigen::MatrixXd a = part.links[n].a_matrix();
    const Eigen::MatrixXd b = part.links[n].b_matrix();
    r2 += (a * state.x_b[n] + b * state.z_tilde[n]).squaredNorm();
    s2 += (state.rho * a.transpose() * b * (state.z_tilde[n] - state.z_tilde_prev[n])).squaredNorm();
  }
  return {std::sqrt(r2), std::sqrt(s2)};
}

bool leader_update(AdmmState& state, const AdmmConfig& config, const StepContext& ctx, std::vector<AgentId>& sent) {
  const auto& part = *ctx.part;
  sent.clear();
  if (state.iterations > 0 && state.arrived.size() < config.barrier(part.follower_count())) return false;
  auto sp = std::make_shared<Subproblem>(
      build_leader(part, state.lin, state.z_tilde, state.lambda_tilde, state.rho, config.build));
  const auto sol = solve(sp->qp, state.leader_solution.x.size() ? &state.leader_solution : nullptr, config.qp);
  if (sol.optimal()) {
    state.x = sol.x;
    for (std::size_t n = 0; n < part.links.size(); ++n) state.x_b[n] = boundary_values(*sp, n, sol.x);
    extract_dispatch(*sp, sol.x, state.dispatch);
    state.leader_solution = sol;
    state.leader_problem = std::move(sp);
  } else {
    ++state.leader_failures;
    if (!state.leader_problem) state.leader_problem = std::move(sp);
  }
  if (state.iterations == 0) {
    for (std::size_t n = 0; n < part.follower_count(); ++n) sent.push_back(static_cast<AgentId>(n));
  } else {
    sent.assign(state.arrived.begin(), state.arrived.end());
  }
  state.broadcast = std::set<AgentId>(sent.begin(), sent.end());
  state.arrived.clear();
  state.z_tilde_prev = state.z_tilde;
  ++state.iterations;
  return true;
}

Payload follower_update(std::size_t n, AdmmState& state, const AdmmConfig& config, const StepContext& ctx) {
  const auto& part = *ctx.part;
  auto& fs = state.followers[n];
  auto sp = std::make_shared<Subproblem>(build_follower(n, part, state.lin, fs.x_b, fs.lambda, fs.rho, config.build));
  const auto sol = solve(sp->qp, fs.solution.x.size() ? &fs.solution : nullptr, config.qp);
  if (sol.optimal()) {
    fs.z_b = boundary_values(*sp, 0, sol.x);
    extract_dispatch(*sp, sol.x, state.dispatch);
    fs.solution = sol;
    fs.problem = std::move(sp);
    const auto& link = part.links[n];
    fs.lambda += fs.rho * (link.a_matrix() * fs.x_b + link.b_matrix() * fs.z_b);
  } else {
    ++fs.failures;
  }
  return {PayloadKind::Update, fs.z_b, fs.lambda, fs.rho};
}

double update_penalty(AdmmState& state, const AdmmConfig& config, double r_norm, double s_norm) {
  state.rho = next_penalty(state.rho, r_norm, s_norm, config);
  return state.rho;
}

void refresh_measurements(AdmmState& state, const AdmmConfig& config, const StepContext& ctx) {
  const auto& f = *ctx.part->feeder;
  state.measurements = solve_powerflow(f, state.dispatch, ctx.mult, config.oracle).measurements;
  state.lin = Linearization::at(f, state.measurements, ctx.mult);
}

namespace {

/// Records the residuals of the iteration just completed and adapts the
/// penalty; true once both tolerances hold.
bool close_iteration(AdmmState& state, const AdmmConfig& config, const Partition& part, int clock,
                     std::size_t arrived) {
  const auto [r, s] = residual_norms(state, part);
  const double objective = state.leader_problem ? supply_value(*state.leader_problem, state.x) : 0.0;
  state.history.push_back({state.iterations, clock, r, s, state.rho, objective, arrived});
  if (r <= config.primal_tol && s <= config.dual_tol) {
    state.converged = true;
    return true;
  }
  update_penalty(state, config, r, s);
  return false;
}

void receive(AdmmState& state, std::size_t n, const Payload& p, int clock) {
  state.z_tilde[n] = p.boundary;
  state.lambda_tilde[n] = p.lambda;
  state.arrived.insert(static_cast<AgentId>(n));
  state.last_heard[n] = clock;
}

void run_sync(AdmmState& state, const AdmmConfig& config, const StepContext& ctx) {
  const auto& part = *ctx.part;
  std::vector<AgentId> sent;
  for (;;) {
    state.leader_clock = state.iterations;
    if (state.iterations > 0 && close_iteration(state, config, part, state.leader_clock, state.arrived.size())) break;
    if (state.iterations >= config.max_iter) break;
    leader_update(state, config, ctx, sent);
    for (std::size_t n = 0; n < part.follower_count(); ++n) {
      auto& fs = state.followers[n];
      fs.x_b = state.x_b[n];
      fs.rho = state.rho;
      receive(state, n, follower_update(n, state, config, ctx), state.leader_clock);
    }
    if (config.online) refresh_measurements(state, config, ctx);
  }
}

void run_async(AdmmState& state, const AdmmConfig& config, const StepContext& ctx, MessageBus& bus) {
  const auto& part = *ctx.part;
  const auto nf = part.follower_count();
  const bool subset = config.async_policy == AsyncPolicy::RandomSubset;
  bus.register_agent(kLeader);
  for (std::size_t n = 0; n < nf; ++n) bus.register_agent(static_cast<AgentId>(n));
  std::vector<int> tau(nf);
  for (std::size_t n = 0; n < nf; ++n) tau[n] = config.delay_bound(n);

  auto post_update = [&](std::size_t n, const Payload& p, int clock, bool hold) {
    Envelope e;
    e.from = static_cast<AgentId>(n);
    e.to = kLeader;
    e.payload = p;
    e.send_clock = clock;
    bus.post(std::move(e), hold);
  };
  auto resend = [&](std::size_t n, int clock) {
    const auto& fs = state.followers[n];
    bus.note(clock, "resend", static_cast<AgentId>(n), kLeader, "queued");
    post_update(n, {PayloadKind::Update, fs.z_b, fs.lambda, fs.rho}, clock, true);
    bus.expedite(static_cast<AgentId>(n), kLeader, clock);
  };
  auto follower_phase = [&](int clock) {
    for (std::size_t n = 0; n < nf; ++n) {
      const auto msgs = bus.poll(static_cast<AgentId>(n), clock);
      if (msgs.empty()) continue;
      auto& fs = state.followers[n];
      fs.x_b = msgs.back().payload.boundary;
      fs.rho = msgs.back().payload.rho;
      post_update(n, follower_update(n, state, config, ctx), clock, subset);
    }
  };
  auto broadcast = [&](const std::vector<AgentId>& sent, int clock) {
    for (auto n : sent) {
      Envelope e;
      e.from = kLeader;
      e.to = n;
      e.payload = {PayloadKind::Broadcast, state.x_b[static_cast<std::size_t>(n)], {}, state.rho};
      e.send_clock = clock;
      bus.post(std::move(e));
    }
  };

  std::vector<AgentId> sent;
  state.leader_clock = 0;
  leader_update(state, config, ctx, sent);
  broadcast(sent, 0);
  follower_phase(0);
  if (config.online) refresh_measurements(state, config, ctx);

  const int max_clock = config.max_clock > 0 ? config.max_clock : 20 * config.max_iter;
  for (int clock = 1; clock <= max_clock; ++clock) {
    state.leader_clock = clock;
    const bool leader_down = bus.failed(kLeader, clock);
    std::set<AgentId> flagged;
    if (subset) {
      std::vector<AgentId> overdue, pool;
      for (std::size_t n = 0; n < nf; ++n) {
        const auto a = static_cast<AgentId>(n);
        const int staleness = clock - state.last_heard[n];
        if (leader_down || bus.failed(a, clock)) {
          if (staleness > tau[n]) {
            bus.note(clock, "bound_violation", a, kLeader, fmt::format("staleness {}", staleness));
            flagged.insert(a);
          }
          continue;
        }
        (staleness >= tau[n] ? overdue : pool).push_back(a);
      }
      if (!leader_down) {
        const auto want = config.barrier(nf);
        auto chosen = overdue;
        if (chosen.size() < want) {
          const auto extra = bus.sample_subset(pool, want - chosen.size());
          chosen.insert(chosen.end(), extra.begin(), extra.end());
        }
        for (auto a : chosen) {
          bus.note(clock, "select", a, kLeader, "queued");
          if (!bus.expedite(a, kLeader, clock)) resend(static_cast<std::size_t>(a), clock);
        }
      }
    } else {
      const auto adj = enforce_bounded_delay(bus, clock, state.last_heard, tau);
      flagged.insert(adj.violations.begin(), adj.violations.end());
      for (auto a : adj.resend) resend(static_cast<std::size_t>(a), clock);
    }
    for (const auto& e : bus.poll(kLeader, clock)) receive(state, static_cast<std::size_t>(e.from), e.payload, clock);
    for (std::size_t n = 0; n < nf; ++n) {
      const auto a = static_cast<AgentId>(n);
      const int staleness = clock - state.last_heard[n];
      if (staleness > tau[n] && !flagged.count(a)) {
        bus.note(clock, "bound_violation", a, kLeader, fmt::format("lost, staleness {}", staleness));
        flagged.insert(a);
      }
    }
    if (!flagged.empty()) state.violation_clocks.push_back(clock);

    bool updated = false;
    if (!leader_down && state.arrived.size() >= config.barrier(nf)) {
      for (std::size_t n = 0; n < nf; ++n)
        if (clock - state.last_heard[n] > tau[n] && !flagged.count(static_cast<AgentId>(n)))
          throw std::logic_error(fmt::format("follower {} exceeded its delay bound unflagged", n));
      if (close_iteration(state, config, part, clock, state.arrived.size())) break;
      if (state.iterations >= config.max_iter) break;
      leader_update(state, config, ctx, sent);
      broadcast(sent, clock);
      updated = true;
    }
    follower_phase(clock);
    if (updated && config.online) refresh_measurements(state, config, ctx);
  }
}

}  // namespace

LoopResult run_iteration_loop(const StepContext& ctx, const AdmmConfig& config, MessageBus* bus,
                              const AdmmState* warm) {
  LoopResult out;
  try {
    out.state = warm ? warm_state(*warm, ctx, config) : initial_state(ctx, config);
  } catch (const DivergenceError& e) {
    out.aborted = true;
    out.error = e.what();
    return out;
  }
  try {
    if (config.mode == AdmmMode::Sync) {
      run_sync(out.state, config, ctx);
    } else {
      MessageBus local;
      run_async(out.state, config, ctx, bus ? *bus : local);
    }
  } catch (const DivergenceError& e) {
    out.aborted = true;
    out.error = e.what();
  }
  out.converged = out.state.converged;
  return out;
}

QpSolution centralized_point(const Subproblem& central, const AdmmState& state) {
  std::map<std::string, std::pair<double, double>> var;  // value, bound multiplier
  std::map<std::string, double> row;
  auto absorb = [&](const Subproblem* sp, const QpSolution& sol) {
    if (!sp || sol.x.size() != static_cast<Eigen::Index>(sp->qp.variable_count())) return;
    for (std::size_t i = 0; i < sp->qp.variable_count(); ++i)
      var[sp->qp.name(i)] = {sol.x[static_cast<Eigen::Index>(i)], sol.mu[static_cast<Eigen::Index>(i)]};
    for (std::size_t r = 0; r < sp->qp.equality_count(); ++r) row[sp->qp.row_name(r)] = sol.y[static_cast<Eigen::Index>(r)];
  };
  absorb(state.leader_problem.get(), state.leader_solution);
  for (const auto& fs : state.followers) absorb(fs.problem.get(), fs.solution);

  const auto& qp = central.qp;
  QpSolution out;
  out.x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(qp.variable_count()));
  out.mu = Eigen::VectorXd::Zero(out.x.size());
  out.y = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(qp.equality_count()));
  for (std::size_t i = 0; i < qp.variable_count(); ++i) {
    auto it = var.find(qp.name(i));
    if (it == var.end()) continue;
    out.x[static_cast<Eigen::Index>(i)] = it->second.first;
    out.mu[static_cast<Eigen::Index>(i)] = it->second.second;
  }
  std::map<int, std::size_t> follower_of;
  for (std::size_t n = 0; n < state.followers.size(); ++n) follower_of[state.followers[n].secondary_id] = n;
  for (std::size_t r = 0; r < qp.equality_count(); ++r) {
    const auto& name = qp.row_name(r);
    if (name.rfind("couple:", 0) == 0) {
      const auto colon = name.find(':', 7);
      const int sec = std::stoi(name.substr(7, colon - 7));
      const auto entry = static_cast<Eigen::Index>(std::stoi(name.substr(colon + 1)));
      auto it = follower_of.find(sec);
      if (it != follower_of.end()) out.y[static_cast<Eigen::Index>(r)] = state.followers[it->second].lambda[entry];
      continue;
    }
    auto it = row.find(name);
    if (it != row.end()) out.y[static_cast<Eigen::Index>(r)] = it->second;
  }
  out.status = QpStatus::Optimal;
  out.objective = qp.objective(out.x);
  out.method = "admm-distributed";
  return out;
}

void write_iteration_csv(std::ostream& out, const std::vector<IterationRecord>& history, bool header) {
  if (header) out << "iteration,leader_clock,r_norm,s_norm,rho,objective,arrived\n";
  for (const auto& h : history)
    out << h.iteration << ',' << h.leader_clock << ',' << format_double(h.r_norm) << ',' << format_double(h.s_norm)
        << ',' << format_double(h.rho) << ',' << format_double(h.objective) << ',' << h.arrived << '\n';
}

}  // namespace dcvr
