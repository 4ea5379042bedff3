#include <algorithm>
#include <cmath>

#include "dcvr/qpsolver.hpp"

namespace dcvr {

double KktReport::max() const { return std::max({stationarity, equality, bounds, complementarity}); }

double KktReport::relative_max() const {
  return std::max({stationarity / scale, equality, bounds, complementarity});
}

KktReport check_kkt(const QpProblem& qp, const QpSolution& sol) {
  KktReport r;
  const auto n = qp.variable_count();
  const auto m = qp.equality_count();
  if (static_cast<std::size_t>(sol.x.size()) != n || static_cast<std::size_t>(sol.mu.size()) != n ||
      static_cast<std::size_t>(sol.y.size()) != m) {
    r.stationarity = r.equality = r.bounds = r.complementarity = kInf;
    return r;
  }
  // Dense recomputation straight from the problem's own accessors.
  const Eigen::MatrixXd h = Eigen::MatrixXd(qp.hessian());
  const Eigen::MatrixXd a = Eigen::MatrixXd(qp.equality_matrix());
  const Eigen::VectorXd hx = h * sol.x;
  const Eigen::VectorXd aty = a.transpose() * sol.y;
  const Eigen::VectorXd c = qp.linear();
  const Eigen::VectorXd grad = hx + c + aty + sol.mu;
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    r.stationarity = std::max(r.stationarity, std::abs(grad[k]));
    r.scale = std::max({r.scale, std::abs(c[k]), std::abs(hx[k]), std::abs(aty[k])});
    const double xi = sol.x[k];
    r.bounds = std::max({r.bounds, qp.lower(i) - xi, xi - qp.upper(i)});
    const double m_i = sol.mu[k];
    double gap = 0.0;
    if (m_i < 0.0) gap = xi - qp.lower(i);
    if (m_i > 0.0) gap = qp.upper(i) - xi;
    r.complementarity = std::max(r.complementarity, std::min(std::abs(m_i), std::abs(gap)));
  }
  if (m) {
    const Eigen::VectorXd res = a * sol.x - qp.equality_rhs();
    r.equality = res.cwiseAbs().maxCoeff();
  }
  return r;
}

}  // namespace dcvr
