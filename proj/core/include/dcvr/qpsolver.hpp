#pragma once

#include <string>

#include "dcvr/qp_problem.hpp"

namespace dcvr {

enum class QpStatus { Optimal, MaxIter, Infeasible };

std::string to_string(QpStatus status);

/// Cost matrix rejected at entry (not positive semidefinite) or malformed input.
class QpError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Multipliers follow H x + c + A'y + mu = 0: mu is negative on an active lower
/// bound and positive on an active upper bound.
struct QpSolution {
  Eigen::VectorXd x;
  Eigen::VectorXd y;   ///< equality multipliers
  Eigen::VectorXd mu;  ///< bound multipliers
  QpStatus status = QpStatus::MaxIter;
  double kkt_residual = kInf;
  double objective = kInf;
  int iterations = 0;
  std::string method;            ///< "admm", "admm+polish" or "ipm"
  double certificate = kInf;     ///< Farkas residual when infeasible

  double value(const QpProblem& qp, const std::string& name) const { return x[static_cast<Eigen::Index>(qp.index(name))]; }
  bool optimal() const { return status == QpStatus::Optimal; }
};

struct QpSettings {
  double tol = 1e-6;
  int max_iter = 20000;
  double rho = 0.1;
  double sigma = 1e-6;
  double alpha = 1.6;
  int check_every = 10;
  bool polish = true;
  bool fallback = true;  ///< interior-point solve when the iteration cap is hit
  bool scaling = true;
};

/// Operator-splitting solve with over-relaxation, Ruiz scaling, adaptive
/// penalty and active-set polishing; an interior-point pass takes over at the
/// iteration cap. A warm start is used when its dimensions match. Throws
/// QpError when the Hessian is not positive semidefinite.
QpSolution solve(const QpProblem& qp, const QpSolution* warm_start = nullptr, const QpSettings& settings = {});

/// Primal-dual interior-point solve (Mehrotra predictor-corrector).
QpSolution solve_interior_point(const QpProblem& qp, const QpSettings& settings = {});

/// Independent recomputation of the optimality conditions.
struct KktReport {
  double stationarity = 0.0;    ///< |Hx + c + A'y + mu|_inf
  double equality = 0.0;        ///< |Ax - b|_inf
  double bounds = 0.0;          ///< worst bound violation
  double complementarity = 0.0; ///< max_i min(|mu_i|, distance to the bound mu_i claims)
  double scale = 1.0;           ///< max(1, |c|, |Hx|, |A'y|) used for the relative stationarity

  double max() const;
  /// Stationarity divided by `scale`, the rest absolute.
  double relative_max() const;
  bool ok(double tol) const { return relative_max() <= tol; }
};

KktReport check_kkt(const QpProblem& qp, const QpSolution& sol);

}  // namespace dcvr
