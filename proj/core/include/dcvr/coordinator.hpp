#pragma once

#include <iosfwd>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "dcvr/powerflow.hpp"
#include "dcvr/qpsolver.hpp"
#include "dcvr/simbus.hpp"
#include "dcvr/subproblem.hpp"

namespace dcvr {

enum class AdmmMode { Sync, Async };
/// Latency: followers answer after their bus latency and the leader waits
/// for the partial barrier. RandomSubset: exactly `partial_barrier`
/// followers get through per leader clock, overdue followers first.
enum class AsyncPolicy { Latency, RandomSubset };

std::string to_string(AdmmMode mode);
std::string to_string(AsyncPolicy policy);

struct AdmmConfig {
  double rho0 = 0.05;
  double mu = 10.0;
  double tau_inc = 5.0;
  double tau_dec = 5.0;
  int partial_barrier = 0;          ///< 0 means every follower
  int bounded_delay = 10;           ///< tau_n for every follower without an override
  std::vector<int> bounded_delays;  ///< per-follower override; empty or one entry per follower
  double primal_tol = 1e-3;
  double dual_tol = 1e-3;
  int max_iter = 200;               ///< leader updates
  int max_clock = 0;                ///< 0 means 20 * max_iter
  AdmmMode mode = AdmmMode::Sync;
  AsyncPolicy async_policy = AsyncPolicy::Latency;
  bool online = true;               ///< refresh the linearization after every leader iteration
  BuildOptions build;
  QpSettings qp;
  PowerFlowOptions oracle;

  /// Throws ConfigError on out-of-range values.
  void validate(std::size_t followers) const;
  std::size_t barrier(std::size_t followers) const;
  int delay_bound(std::size_t n) const;
};

/// Defaults plus the voltage margin and reactive weight the reference runs use.
AdmmConfig reference_admm_config();

/// Varying penalty: multiply by tau_inc when |r| > mu |s|, divide by tau_dec
/// when |s| > mu |r|, otherwise keep.
double next_penalty(double rho, double r_norm, double s_norm, const AdmmConfig& config);

struct IterationRecord {
  int iteration = 0;
  int leader_clock = 0;
  double r_norm = 0.0;
  double s_norm = 0.0;
  double rho = 0.0;  ///< penalty the iteration ran with
  double objective = 0.0;
  std::size_t arrived = 0;
};

struct FollowerState {
  int secondary_id = 0;
  Eigen::VectorXd z_b;
  Eigen::VectorXd lambda;
  Eigen::VectorXd x_b;  ///< latest broadcast received
  double rho = 0.0;     ///< penalty received with it
  std::shared_ptr<const Subproblem> problem;
  QpSolution solution;
  int failures = 0;
};

struct AdmmState {
  Eigen::VectorXd x;
  std::vector<Eigen::VectorXd> x_b;
  std::shared_ptr<const Subproblem> leader_problem;
  QpSolution leader_solution;
  std::vector<FollowerState> followers;
  /// Leader-side snapshots z~, lambda~ and the snapshot of the previous leader update.
  std::vector<Eigen::VectorXd> z_tilde, lambda_tilde, z_tilde_prev;
  std::vector<int> last_heard;  ///< leader clock of the last update received per follower
  double rho = 0.05;
  int leader_clock = 0;
  int iterations = 0;
  std::vector<IterationRecord> history;
  std::set<AgentId> arrived;    ///< M^t
  std::set<AgentId> broadcast;  ///< N^t
  Dispatch dispatch;
  Linearization lin;
  MeasurementSet measurements;
  bool converged = false;
  int leader_failures = 0;
  std::vector<int> violation_clocks;
};

/// Partition plus the step's multipliers; what every agent can observe.
struct StepContext {
  const Partition* part = nullptr;
  Multipliers mult;
};

/// Flat start: unit boundary voltages, boundary flows from a q_g = 0 oracle
/// run, zero multipliers. The linearization comes from the same run.
AdmmState initial_state(const StepContext& ctx, const AdmmConfig& config);

/// Warm start from a previous step: keeps x, z, lambda, snapshots and
/// dispatch, re-measures with the previous dispatch under the new
/// multipliers, and resets the penalty, clocks and history.
AdmmState warm_state(const AdmmState& previous, const StepContext& ctx, const AdmmConfig& config);

/// Stacked primal residual A x_B + B z~ and dual residual rho A'B (z~ - z~_prev).
std::pair<double, double> residual_norms(const AdmmState& state, const Partition& part);

/// Leader update with the current snapshots. Returns false and changes
/// nothing when fewer than the partial barrier have arrived (the very first
/// update is exempt). Otherwise solves, fills `sent` with M^t, clears M^t.
bool leader_update(AdmmState& state, const AdmmConfig& config, const StepContext& ctx, std::vector<AgentId>& sent);

/// Follower n solves against its latest broadcast and takes the dual step.
/// A failed solve keeps the previous z and lambda. Returns the update payload.
Payload follower_update(std::size_t n, AdmmState& state, const AdmmConfig& config, const StepContext& ctx);

/// Applies next_penalty to the state from the given residuals.
double update_penalty(AdmmState& state, const AdmmConfig& config, double r_norm, double s_norm);

/// Re-runs the oracle with the current dispatch and refreshes the linearization.
void refresh_measurements(AdmmState& state, const AdmmConfig& config, const StepContext& ctx);

struct LoopResult {
  AdmmState state;
  bool converged = false;
  bool aborted = false;  ///< oracle diverged mid-loop
  std::string error;
};

/// The full leader-follower loop. Sync mode ignores `bus`; async mode uses it
/// (or a zero-latency bus when null).
LoopResult run_iteration_loop(const StepContext& ctx, const AdmmConfig& config, MessageBus* bus = nullptr,
                              const AdmmState* warm = nullptr);

/// The distributed iterate as a candidate solution of the centralized QP:
/// variables and row multipliers by name, coupling multipliers from lambda.
QpSolution centralized_point(const Subproblem& central, const AdmmState& state);

/// iteration,leader_clock,r_norm,s_norm,rho,objective,arrived
void write_iteration_csv(std::ostream& out, const std::vector<IterationRecord>& history, bool header = true);

}  // namespace dcvr
