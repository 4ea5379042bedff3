#pragma once

#include <array>
#include <vector>

#include "dcvr/network.hpp"
#include "dcvr/powerflow.hpp"
#include "dcvr/qp_problem.hpp"

namespace dcvr {

/// Constants of one feedback linearization: loss and drop terms, affine ZIP
/// loads per bus index and the PV level that sets inverter headroom.
struct Linearization {
  EpsilonSet eps;
  std::vector<ZipAffine> zip;
  double pv = 1.0;

  /// Linearization at a measured operating point.
  static Linearization at(const Feeder& feeder, const MeasurementSet& m, const Multipliers& mult);
  /// Zero loss terms and ZIP tangents at 1 p.u.
  static Linearization flat(const Feeder& feeder, const Multipliers& mult);
};

struct BuildOptions {
  /// Tightening of every squared-magnitude bound, applied symmetrically.
  double voltage_margin = 0.0;
  /// Weight w of the cost w/2 q_g^2 on every inverter set-point.
  double reactive_weight = 0.0;
};

/// An assembled QP plus the flat indices the coordinator needs.
struct Subproblem {
  QpProblem qp;
  /// Per boundary link: indices of x_B (leader, centralized) or z_B (follower),
  /// ordered [p, q, v] over the link's phases.
  std::vector<std::vector<std::size_t>> boundary;
  /// Centralized only: z_B indices per link.
  std::vector<std::vector<std::size_t>> boundary_follower;
  /// Inverters owned by this problem and their q_g indices (-1 on absent phases).
  std::vector<std::size_t> inverters;
  std::vector<std::array<long, kPhases>> qg_index;
  /// Substation supply f(x) = sum of `supply` entries plus `supply_constant` (leader, centralized).
  std::vector<std::size_t> supply;
  double supply_constant = 0.0;
};

/// Linearized substation active power at a solution vector.
double supply_value(const Subproblem& sp, const Eigen::VectorXd& x);

/// Boundary values of link entry `k` in a solution vector.
Eigen::VectorXd boundary_values(const Subproblem& sp, std::size_t k, const Eigen::VectorXd& x);

/// Writes the q_g of the problem's inverters into `dispatch`.
void extract_dispatch(const Subproblem& sp, const Eigen::VectorXd& x, Dispatch& dispatch);

/// Leader update: primary constraint set, substation power objective and, for
/// every follower n, lambda_n'(A x_B + B z_B) + rho/2 |A x_B + B z_B|^2.
/// Throws AssemblyError when z_b or lambda do not cover every link.
Subproblem build_leader(const Partition& part, const Linearization& lin, const std::vector<Eigen::VectorXd>& z_b,
                        const std::vector<Eigen::VectorXd>& lambda, double rho, const BuildOptions& options = {});

/// Follower n update: secondary constraint set and the same coupling terms
/// with x_B held at the latest broadcast.
Subproblem build_follower(std::size_t n, const Partition& part, const Linearization& lin, const Eigen::VectorXd& x_b,
                          const Eigen::VectorXd& lambda, double rho, const BuildOptions& options = {});

enum class EpsMode { WithEps, DropEps };

/// Single QP over the whole feeder with hard coupling rows.
Subproblem build_centralized(const Partition& part, const Linearization& lin, EpsMode mode,
                             const BuildOptions& options = {});

}  // namespace dcvr
