#include "dcvr/qpsolver.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/SparseCholesky>
#include <fmt/format.h>

namespace dcvr {

using Eigen::VectorXd;

std::string to_string(QpStatus status) {
  switch (status) {
    case QpStatus::Optimal: return "optimal";
    case QpStatus::MaxIter: return "max_iter";
    case QpStatus::Infeasible: return "infeasible";
  }
  return "unknown";
}

namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;
using Ldlt = Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>>;

constexpr double kRhoMin = 1e-6;
constexpr double kRhoMax = 1e6;
constexpr double kEqualityRhoScale = 1e3;

double inf_norm(const VectorXd& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }

/// [top + diag(dt), C'; C, -diag(db)] as a full symmetric matrix.
SparseMatrix kkt_matrix(const SparseMatrix& top, const SparseMatrix& c, const VectorXd& dt, const VectorXd& db) {
  const auto n = top.rows();
  const auto m = c.rows();
  Triplets t;
  t.reserve(static_cast<std::size_t>(top.nonZeros() + 2 * c.nonZeros() + n + m));
  for (int k = 0; k < top.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(top, k); it; ++it) t.emplace_back(it.row(), it.col(), it.value());
  for (Eigen::Index i = 0; i < n; ++i) t.emplace_back(i, i, dt[i]);
  for (int k = 0; k < c.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(c, k); it; ++it) {
      t.emplace_back(n + it.row(), it.col(), it.value());
      t.emplace_back(it.col(), n + it.row(), it.value());
    }
  for (Eigen::Index i = 0; i < m; ++i) t.emplace_back(n + i, n + i, -db[i]);
  SparseMatrix k(n + m, n + m);
  k.setFromTriplets(t.begin(), t.end());
  return k;
}

SparseMatrix stacked_constraints(const SparseMatrix& a, Eigen::Index n) {
  Triplets t;
  for (int k = 0; k < a.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(a, k); it; ++it) t.emplace_back(it.row(), it.col(), it.value());
  for (Eigen::Index i = 0; i < n; ++i) t.emplace_back(a.rows() + i, i, 1.0);
  SparseMatrix c(a.rows() + n, n);
  c.setFromTriplets(t.begin(), t.end());
  return c;
}

void require_psd(const SparseMatrix& h) {
  if (h.rows() == 0) return;
  double big = 1.0;
  for (int k = 0; k < h.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(h, k); it; ++it) big = std::max(big, std::abs(it.value()));
  SparseMatrix shifted = h;
  SparseMatrix eye(h.rows(), h.cols());
  eye.setIdentity();
  shifted += eye * (1e-9 * big);
  Eigen::SimplicialLLT<SparseMatrix> llt(shifted);
  if (llt.info() != Eigen::Success) throw QpError("cost Hessian is not positive semidefinite");
}

/// Problem data shared by every stage of one solve.
struct Data {
  SparseMatrix h, a, c;  // c = [A; I]
  VectorXd q, b, lo, hi, cl, cu;  // cl/cu: bounds of the stacked rows
  Eigen::Index n = 0, m_eq = 0, m = 0;

  explicit Data(const QpProblem& qp)
      : h(qp.hessian()), a(qp.equality_matrix()), q(qp.linear()), b(qp.equality_rhs()),
        lo(qp.lower_bounds()), hi(qp.upper_bounds()) {
    n = static_cast<Eigen::Index>(qp.variable_count());
    m_eq = a.rows();
    m = m_eq + n;
    c = stacked_constraints(a, n);
    cl.resize(m);
    cu.resize(m);
    cl << b, lo;
    cu << b, hi;
  }
};

/// Relative KKT residual used for the solver's own status decisions.
double internal_residual(const Data& d, const VectorXd& x, const VectorXd& y, const VectorXd& mu) {
  const VectorXd hx = d.h * x;
  const VectorXd aty = d.a.transpose() * y;
  const double scale = std::max({1.0, inf_norm(d.q), inf_norm(hx), inf_norm(aty)});
  double worst = inf_norm(hx + d.q + aty + mu) / scale;
  if (d.m_eq) worst = std::max(worst, inf_norm(d.a * x - d.b));
  for (Eigen::Index i = 0; i < d.n; ++i) {
    worst = std::max({worst, d.lo[i] - x[i], x[i] - d.hi[i]});
    const double gap = mu[i] < 0.0 ? x[i] - d.lo[i] : (mu[i] > 0.0 ? d.hi[i] - x[i] : 0.0);
    worst = std::max(worst, std::min(std::abs(mu[i]), std::abs(gap)));
  }
  return worst;
}

QpSolution finish(const Data& d, const QpProblem& qp, QpSolution s) {
  s.kkt_residual = internal_residual(d, s.x, s.y, s.mu);
  s.objective = qp.objective(s.x);
  return s;
}

/// Ruiz equilibration of [P C'; C 0] plus cost normalization.
struct Scaling {
  VectorXd dx, ec;  // variable and constraint scale factors
  double cost = 1.0;
};

Scaling equilibrate(SparseMatrix& p, SparseMatrix& c, VectorXd& q, bool enabled) {
  Scaling s{VectorXd::Ones(p.rows()), VectorXd::Ones(c.rows()), 1.0};
  if (!enabled || p.rows() == 0) return s;
  auto clip = [](double v) { return v < 1e-4 ? 1.0 : std::min(v, 1e4); };
  for (int iter = 0; iter < 15; ++iter) {
    VectorXd col = VectorXd::Zero(p.rows());
    VectorXd row = VectorXd::Zero(c.rows());
    for (int k = 0; k < p.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(p, k); it; ++it) col[it.col()] = std::max(col[it.col()], std::abs(it.value()));
    for (int k = 0; k < c.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(c, k); it; ++it) {
        col[it.col()] = std::max(col[it.col()], std::abs(it.value()));
        row[it.row()] = std::max(row[it.row()], std::abs(it.value()));
      }
    VectorXd dcol(p.rows()), drow(c.rows());
    for (Eigen::Index i = 0; i < dcol.size(); ++i) dcol[i] = 1.0 / std::sqrt(clip(col[i]));
    for (Eigen::Index i = 0; i < drow.size(); ++i) drow[i] = 1.0 / std::sqrt(clip(row[i]));
    p = dcol.asDiagonal() * p * dcol.asDiagonal();
    c = drow.asDiagonal() * c * dcol.asDiagonal();
    q = q.cwiseProduct(dcol);
    s.dx = s.dx.cwiseProduct(dcol);
    s.ec = s.ec.cwiseProduct(drow);
  }
  double mean_col = 0.0;
  VectorXd col = VectorXd::Zero(p.rows());
  for (int k = 0; k < p.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(p, k); it; ++it) col[it.col()] = std::max(col[it.col()], std::abs(it.value()));
  mean_col = col.mean();
  const double gamma = 1.0 / clip(std::max(mean_col, inf_norm(q)));
  p *= gamma;
  q *= gamma;
  s.cost = gamma;
  return s;
}

/// Equality-constrained solve on a guessed active set.
bool polish(const Data& d, const VectorXd& z, const VectorXd& y, QpSolution& out, double tol) {
  std::vector<Eigen::Index> rows;
  VectorXd target(d.m);
  for (Eigen::Index i = 0; i < d.m; ++i) {
    if (i < d.m_eq) {
      rows.push_back(i);
      target[i] = d.cl[i];
    } else if (std::isfinite(d.cl[i]) && z[i] - d.cl[i] < -y[i]) {
      rows.push_back(i);
      target[i] = d.cl[i];
    } else if (std::isfinite(d.cu[i]) && d.cu[i] - z[i] < y[i]) {
      rows.push_back(i);
      target[i] = d.cu[i];
    }
  }
  const auto na = static_cast<Eigen::Index>(rows.size());
  using RowMajor = Eigen::SparseMatrix<double, Eigen::RowMajor>;
  const RowMajor a_rows = d.a;
  Triplets t;
  for (Eigen::Index r = 0; r < na; ++r) {
    const auto row = rows[static_cast<std::size_t>(r)];
    if (row < d.m_eq) {
      for (RowMajor::InnerIterator it(a_rows, row); it; ++it) t.emplace_back(r, it.col(), it.value());
    } else {
      t.emplace_back(r, row - d.m_eq, 1.0);
    }
  }
  SparseMatrix ca(na, d.n);
  ca.setFromTriplets(t.begin(), t.end());
  VectorXd rhs(d.n + na);
  rhs.head(d.n) = -d.q;
  for (Eigen::Index r = 0; r < na; ++r) rhs[d.n + r] = target[rows[static_cast<std::size_t>(r)]];

  constexpr double delta = 1e-9;
  const SparseMatrix reg = kkt_matrix(d.h, ca, VectorXd::Constant(d.n, delta), VectorXd::Constant(na, delta));
  const SparseMatrix exact = kkt_matrix(d.h, ca, VectorXd::Zero(d.n), VectorXd::Zero(na));
  Ldlt ldlt(reg);
  if (ldlt.info() != Eigen::Success) return false;
  VectorXd sol = ldlt.solve(rhs);
  for (int k = 0; k < 8; ++k) {
    const VectorXd res = rhs - exact * sol;
    if (inf_norm(res) < 1e-13 * (1.0 + inf_norm(rhs))) break;
    sol += ldlt.solve(res);
  }
  if (!sol.allFinite()) return false;

  QpSolution s;
  s.x = sol.head(d.n);
  s.y = VectorXd::Zero(d.m_eq);
  s.mu = VectorXd::Zero(d.n);
  for (Eigen::Index r = 0; r < na; ++r) {
    const auto row = rows[static_cast<std::size_t>(r)];
    const double mult = sol[d.n + r];
    if (row < d.m_eq) {
      s.y[row] = mult;
    } else {
      const auto j = row - d.m_eq;
      // A lower-active row must carry a non-positive multiplier, an upper one non-negative.
      if (target[row] == d.lo[j] && target[row] != d.hi[j] && mult > tol) return false;
      if (target[row] == d.hi[j] && target[row] != d.lo[j] && mult < -tol) return false;
      s.mu[j] = mult;
      s.x[j] = target[row];
    }
  }
  if (internal_residual(d, s.x, s.y, s.mu) > tol) return false;
  out.x = s.x;
  out.y = s.y;
  out.mu = s.mu;
  return true;
}

}  // namespace

QpSolution solve(const QpProblem& qp, const QpSolution* warm_start, const QpSettings& settings) {
  const Data d(qp);
  require_psd(d.h);

  QpSolution out;
  if (d.n == 0) {
    out.x = VectorXd::Zero(0);
    out.y = VectorXd::Zero(d.m_eq);
    out.mu = VectorXd::Zero(0);
    out.status = d.m_eq && inf_norm(d.b) > settings.tol ? QpStatus::Infeasible : QpStatus::Optimal;
    out.method = "admm";
    return finish(d, qp, out);
  }

  SparseMatrix p = d.h;
  SparseMatrix c = d.c;
  VectorXd q = d.q;
  const auto sc = equilibrate(p, c, q, settings.scaling);
  VectorXd l = d.cl.cwiseProduct(sc.ec);
  VectorXd u = d.cu.cwiseProduct(sc.ec);

  auto rho_vector = [&](double rho) {
    VectorXd r(d.m);
    for (Eigen::Index i = 0; i < d.m; ++i) {
      if (!std::isfinite(l[i]) && !std::isfinite(u[i])) r[i] = kRhoMin;
      else if (u[i] - l[i] < 1e-10) r[i] = kEqualityRhoScale * rho;
      else r[i] = rho;
    }
    return r;
  };

  double rho = settings.rho;
  VectorXd rv = rho_vector(rho);
  SparseMatrix k = kkt_matrix(p, c, VectorXd::Constant(d.n, settings.sigma), rv.cwiseInverse());
  Ldlt ldlt;
  ldlt.analyzePattern(k);
  ldlt.factorize(k);
  if (ldlt.info() != Eigen::Success) throw QpError("KKT factorization failed");

  VectorXd x = VectorXd::Zero(d.n), y = VectorXd::Zero(d.m);
  if (warm_start && warm_start->x.size() == d.n) {
    x = warm_start->x.cwiseQuotient(sc.dx);
    if (warm_start->y.size() == d.m_eq && warm_start->mu.size() == d.n) {
      VectorXd full(d.m);
      full << warm_start->y, warm_start->mu;
      y = full.cwiseQuotient(sc.ec) * sc.cost;
    }
  }
  VectorXd z = (c * x).cwiseMax(l).cwiseMin(u);

  auto unscaled = [&](QpSolution& s, const VectorXd& xs, const VectorXd& ys) {
    s.x = xs.cwiseProduct(sc.dx);
    const VectorXd yy = ys.cwiseProduct(sc.ec) / sc.cost;
    s.y = yy.head(d.m_eq);
    s.mu = yy.tail(d.n);
  };

  const double eps = 0.1 * settings.tol;
  int polish_attempts = 0;
  VectorXd y_prev = y;
  for (int it = 1; it <= settings.max_iter; ++it) {
    VectorXd rhs(d.n + d.m);
    rhs.head(d.n) = settings.sigma * x - q;
    rhs.tail(d.m) = z - y.cwiseQuotient(rv);
    const VectorXd sol = ldlt.solve(rhs);
    const VectorXd xt = sol.head(d.n);
    const VectorXd zt = z + (sol.tail(d.m) - y).cwiseQuotient(rv);
    x = settings.alpha * xt + (1.0 - settings.alpha) * x;
    const VectorXd zr = settings.alpha * zt + (1.0 - settings.alpha) * z;
    y_prev = y;
    z = (zr + y.cwiseQuotient(rv)).cwiseMax(l).cwiseMin(u);
    y += rv.cwiseProduct(zr - z);
    out.iterations = it;

    if (it % settings.check_every != 0 && it != settings.max_iter) continue;

    QpSolution cur;
    unscaled(cur, x, y);
    const VectorXd zu = z.cwiseQuotient(sc.ec);
    const VectorXd cx = d.c * cur.x;
    VectorXd yfull(d.m);
    yfull << cur.y, cur.mu;
    const VectorXd hx = d.h * cur.x;
    const VectorXd cty = d.c.transpose() * yfull;
    const double r_prim = inf_norm(cx - zu);
    const double r_dual = inf_norm(hx + d.q + cty);
    const double eps_p = eps + eps * std::max(inf_norm(cx), inf_norm(zu));
    const double eps_d = eps + eps * std::max({inf_norm(hx), inf_norm(cty), inf_norm(d.q)});

    // Primal infeasibility certificate from the multiplier increment.
    const VectorXd dy = (y - y_prev).cwiseProduct(sc.ec);
    const double ndy = inf_norm(dy);
    if (ndy > settings.tol) {
      const double ctdy = inf_norm(d.c.transpose() * dy);
      double support = 0.0;
      bool bounded = true;
      for (Eigen::Index i = 0; i < d.m; ++i) {
        if (dy[i] > 1e-6 * ndy) {
          if (!std::isfinite(d.cu[i])) bounded = false;
          else support += d.cu[i] * dy[i];
        } else if (dy[i] < -1e-6 * ndy) {
          if (!std::isfinite(d.cl[i])) bounded = false;
          else support += d.cl[i] * dy[i];
        }
      }
      if (bounded && ctdy <= 1e-6 * ndy && support < -1e-6 * ndy) {
        unscaled(out, x, y);
        out.status = QpStatus::Infeasible;
        out.certificate = ctdy / ndy;
        out.method = "admm";
        return finish(d, qp, out);
      }
    }

    if (r_prim <= eps_p && r_dual <= eps_d) {
      out.x = cur.x;
      out.y = cur.y;
      out.mu = cur.mu;
      if (internal_residual(d, cur.x, cur.y, cur.mu) <= settings.tol) {
        out.method = "admm";
        if (settings.polish && polish(d, zu, yfull, out, settings.tol)) out.method = "admm+polish";
        out.status = QpStatus::Optimal;
        return finish(d, qp, out);
      }
      if (settings.polish && polish_attempts < 5) {
        ++polish_attempts;
        if (polish(d, zu, yfull, out, settings.tol)) {
          out.method = "admm+polish";
          out.status = QpStatus::Optimal;
          return finish(d, qp, out);
        }
      }
    }

    if (it % (5 * settings.check_every) == 0) {
      const VectorXd cxs = c * x;
      const VectorXd pxs = p * x;
      const VectorXd ctys = c.transpose() * y;
      const double rp = inf_norm(cxs - z) / std::max({inf_norm(cxs), inf_norm(z), 1e-10});
      const double rd = inf_norm(pxs + q + ctys) / std::max({inf_norm(pxs), inf_norm(ctys), inf_norm(q), 1e-10});
      const double proposed = std::clamp(rho * std::sqrt(rp / std::max(rd, 1e-14)), kRhoMin, kRhoMax);
      if (proposed > 5.0 * rho || proposed < 0.2 * rho) {
        rho = proposed;
        rv = rho_vector(rho);
        k = kkt_matrix(p, c, VectorXd::Constant(d.n, settings.sigma), rv.cwiseInverse());
        ldlt.factorize(k);
        if (ldlt.info() != Eigen::Success) throw QpError("KKT refactorization failed");
      }
    }
  }

  unscaled(out, x, y);
  out.method = "admm";
  out.status = QpStatus::MaxIter;
  if (settings.fallback) {
    auto ipm = solve_interior_point(qp, settings);
    ipm.iterations += out.iterations;
    if (ipm.status == QpStatus::Optimal || ipm.kkt_residual < internal_residual(d, out.x, out.y, out.mu)) return ipm;
  }
  return finish(d, qp, out);
}

QpSolution solve_interior_point(const QpProblem& qp, const QpSettings& settings) {
  const Data d(qp);
  require_psd(d.h);

  // Fixed variables become equality rows; the rest keep finite bounds only.
  std::vector<Eigen::Index> fixed;
  std::vector<Eigen::Index> has_lo, has_hi;
  for (Eigen::Index i = 0; i < d.n; ++i) {
    if (d.lo[i] == d.hi[i]) {
      fixed.push_back(i);
      continue;
    }
    if (std::isfinite(d.lo[i])) has_lo.push_back(i);
    if (std::isfinite(d.hi[i])) has_hi.push_back(i);
  }
  const auto nf = static_cast<Eigen::Index>(fixed.size());
  const auto me = d.m_eq + nf;
  Triplets t;
  for (int k = 0; k < d.a.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(d.a, k); it; ++it) t.emplace_back(it.row(), it.col(), it.value());
  VectorXd be(me);
  be.head(d.m_eq) = d.b;
  for (Eigen::Index r = 0; r < nf; ++r) {
    t.emplace_back(d.m_eq + r, fixed[static_cast<std::size_t>(r)], 1.0);
    be[d.m_eq + r] = d.lo[fixed[static_cast<std::size_t>(r)]];
  }
  SparseMatrix ae(me, d.n);
  ae.setFromTriplets(t.begin(), t.end());

  VectorXd x(d.n);
  for (Eigen::Index i = 0; i < d.n; ++i) {
    const double lo = d.lo[i], hi = d.hi[i];
    if (lo == hi) x[i] = lo;
    else if (std::isfinite(lo) && std::isfinite(hi)) x[i] = 0.5 * (lo + hi);
    else if (std::isfinite(lo)) x[i] = std::max(lo + 1.0, 0.0);
    else if (std::isfinite(hi)) x[i] = std::min(hi - 1.0, 0.0);
    else x[i] = 0.0;
  }
  VectorXd y = VectorXd::Zero(me);
  VectorXd zl = VectorXd::Zero(d.n), zu = VectorXd::Zero(d.n);
  for (auto i : has_lo) zl[i] = 1.0;
  for (auto i : has_hi) zu[i] = 1.0;
  const auto ncomp = static_cast<double>(has_lo.size() + has_hi.size());

  auto slacks = [&](VectorXd& sl, VectorXd& su) {
    sl = VectorXd::Ones(d.n);
    su = VectorXd::Ones(d.n);
    for (auto i : has_lo) sl[i] = x[i] - d.lo[i];
    for (auto i : has_hi) su[i] = d.hi[i] - x[i];
  };
  auto max_step = [&](const VectorXd& v, const VectorXd& dv, const std::vector<Eigen::Index>& idx) {
    double a = 1.0;
    for (auto i : idx)
      if (dv[i] < 0.0) a = std::min(a, -v[i] / dv[i]);
    return a;
  };

  QpSolution out;
  out.method = "ipm";
  const double target = 0.01 * settings.tol;
  double reg = 1e-9;
  Ldlt ldlt;
  bool analyzed = false;
  for (int it = 1; it <= 200; ++it) {
    out.iterations = it;
    VectorXd sl, su;
    slacks(sl, su);
    const VectorXd rd = d.h * x + d.q - ae.transpose() * y - zl + zu;
    const VectorXd rp = ae * x - be;
    double mu = 0.0;
    for (auto i : has_lo) mu += sl[i] * zl[i];
    for (auto i : has_hi) mu += su[i] * zu[i];
    mu = ncomp > 0 ? mu / ncomp : 0.0;
    if (inf_norm(rd) <= target * (1.0 + inf_norm(d.q)) && inf_norm(rp) <= target * (1.0 + inf_norm(be)) &&
        mu <= target) {
      out.status = QpStatus::Optimal;
      break;
    }

    VectorXd sigma_diag = VectorXd::Zero(d.n);
    for (auto i : has_lo) sigma_diag[i] += zl[i] / sl[i];
    for (auto i : has_hi) sigma_diag[i] += zu[i] / su[i];
    const SparseMatrix k = kkt_matrix(d.h, ae, sigma_diag + VectorXd::Constant(d.n, reg), VectorXd::Constant(me, reg));
    const SparseMatrix exact = kkt_matrix(d.h, ae, sigma_diag, VectorXd::Zero(me));
    if (!analyzed) {
      ldlt.analyzePattern(k);
      analyzed = true;
    }
    ldlt.factorize(k);
    if (ldlt.info() != Eigen::Success) {
      if (reg > 1e-4) break;
      reg *= 100.0;
      continue;
    }

    // Returns dx, dy, dzl, dzu for complementarity targets tl, tu.
    auto direction = [&](const VectorXd& tl, const VectorXd& tu, VectorXd& dx, VectorXd& dy, VectorXd& dzl,
                         VectorXd& dzu) {
      VectorXd rhs(d.n + me);
      VectorXd top = -rd;
      for (auto i : has_lo) top[i] += tl[i] / sl[i] - zl[i];
      for (auto i : has_hi) top[i] -= tu[i] / su[i] - zu[i];
      rhs.head(d.n) = top;
      rhs.tail(me) = -rp;
      VectorXd sol = ldlt.solve(rhs);
      for (int r = 0; r < 3; ++r) sol += ldlt.solve(rhs - exact * sol);
      dx = sol.head(d.n);
      dy = -sol.tail(me);
      dzl = VectorXd::Zero(d.n);
      dzu = VectorXd::Zero(d.n);
      for (auto i : has_lo) dzl[i] = (tl[i] - sl[i] * zl[i] - zl[i] * dx[i]) / sl[i];
      for (auto i : has_hi) dzu[i] = (tu[i] - su[i] * zu[i] + zu[i] * dx[i]) / su[i];
    };

    VectorXd dx, dy, dzl, dzu;
    direction(VectorXd::Zero(d.n), VectorXd::Zero(d.n), dx, dy, dzl, dzu);
    const VectorXd neg_dx = -dx;
    double a_aff = std::min({max_step(sl, dx, has_lo), max_step(su, neg_dx, has_hi), max_step(zl, dzl, has_lo),
                             max_step(zu, dzu, has_hi)});
    double mu_aff = 0.0;
    for (auto i : has_lo) mu_aff += (sl[i] + a_aff * dx[i]) * (zl[i] + a_aff * dzl[i]);
    for (auto i : has_hi) mu_aff += (su[i] - a_aff * dx[i]) * (zu[i] + a_aff * dzu[i]);
    mu_aff = ncomp > 0 ? mu_aff / ncomp : 0.0;
    const double sigma = mu > 0.0 ? std::pow(mu_aff / mu, 3) : 0.0;

    VectorXd tl = VectorXd::Zero(d.n), tu = VectorXd::Zero(d.n);
    for (auto i : has_lo) tl[i] = sigma * mu - dx[i] * dzl[i];
    for (auto i : has_hi) tu[i] = sigma * mu + dx[i] * dzu[i];
    direction(tl, tu, dx, dy, dzl, dzu);
    const VectorXd neg = -dx;
    const double a = 0.99 * std::min({max_step(sl, dx, has_lo), max_step(su, neg, has_hi), max_step(zl, dzl, has_lo),
                                      max_step(zu, dzu, has_hi)});
    const double step = std::min(1.0, a);
    x += step * dx;
    y += step * dy;
    zl += step * dzl;
    zu += step * dzu;
    if (!x.allFinite()) break;
  }

  out.x = x;
  // Back to the H x + c + A'y + mu = 0 convention.
  out.y = -y.head(d.m_eq);
  out.mu = zu - zl;
  for (Eigen::Index r = 0; r < nf; ++r) out.mu[fixed[static_cast<std::size_t>(r)]] = -y[d.m_eq + r];
  if (internal_residual(d, out.x, out.y, out.mu) > settings.tol && x.allFinite()) {
    // Averaged complementarity can be small while single pairs are not: snap to the implied active set.
    VectorXd yfull(d.m);
    yfull << out.y, out.mu;
    polish(d, d.c * out.x, yfull, out, settings.tol);
  }
  auto res = finish(d, qp, out);
  res.status = res.kkt_residual <= settings.tol ? QpStatus::Optimal : QpStatus::MaxIter;
  return res;
}

}  // namespace dcvr
