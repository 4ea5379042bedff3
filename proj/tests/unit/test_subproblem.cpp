#include <algorithm>
#include <map>
#include <memory>
#include <sstream>

#include "doctest.h"

#include "dcvr/feeder_io.hpp"
#include "dcvr/qpsolver.hpp"
#include "dcvr/random.hpp"
#include "dcvr/subproblem.hpp"
#include "dcvr/synthetic.hpp"
#include "fixtures.hpp"
#include "state_vector.hpp"

using namespace dcvr;

namespace {

struct Setup {
  std::shared_ptr<const Feeder> feeder;
  Partition part;
  MeasurementSet m;
  Linearization lin;
  Multipliers mult;
};

Setup setup(Feeder f, Multipliers mult = {}) {
  Setup s;
  s.feeder = std::make_shared<const Feeder>(std::move(f));
  s.part = partition(s.feeder);
  s.mult = mult;
  s.m = solve_powerflow(*s.feeder, zero_dispatch(*s.feeder), mult).measurements;
  s.lin = Linearization::at(*s.feeder, s.m, mult);
  return s;
}

std::vector<Eigen::VectorXd> zeros_per_link(const Partition& part) {
  std::vector<Eigen::VectorXd> v;
  for (const auto& l : part.links) v.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(l.dim())));
  return v;
}

/// Order-free text form: variables, Hessian and rows keyed by names.
std::string canonical(const QpProblem& qp) {
  std::vector<std::string> lines;
  for (std::size_t i = 0; i < qp.variable_count(); ++i)
    lines.push_back("var " + qp.name(i) + " " + format_double(qp.lower(i)) + " " + format_double(qp.upper(i)) + " " +
                    format_double(qp.linear()[static_cast<Eigen::Index>(i)]));
  const auto h = qp.hessian();
  for (int k = 0; k < h.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(h, k); it; ++it)
      lines.push_back("h " + qp.name(static_cast<std::size_t>(it.row())) + " " +
                      qp.name(static_cast<std::size_t>(it.col())) + " " + format_double(it.value()));
  const auto a = qp.equality_matrix();
  const auto b = qp.equality_rhs();
  std::vector<std::vector<std::string>> rows(qp.equality_count());
  for (int k = 0; k < a.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(a, k); it; ++it)
      rows[static_cast<std::size_t>(it.row())].push_back(qp.name(static_cast<std::size_t>(it.col())) + "*" +
                                                         format_double(it.value()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::sort(rows[r].begin(), rows[r].end());
    std::string line = "row " + qp.row_name(r) + " " + format_double(b[static_cast<Eigen::Index>(r)]);
    for (const auto& t : rows[r]) line += " " + t;
    lines.push_back(line);
  }
  std::sort(lines.begin(), lines.end());
  std::string out = "const " + format_double(qp.constant()) + "\n";
  for (const auto& l : lines) out += l + "\n";
  return out;
}

/// Leader plus followers with the penalties replaced by hard coupling rows.
QpProblem compose(const Partition& part, const Subproblem& leader, const std::vector<Subproblem>& followers) {
  QpProblem out;
  std::vector<std::vector<std::size_t>> zb(followers.size());
  auto absorb = [&](const Subproblem& sp) {
    const auto& qp = sp.qp;
    const auto offset = out.variable_count();
    for (std::size_t i = 0; i < qp.variable_count(); ++i) {
      out.add_variable(qp.name(i), qp.lower(i), qp.upper(i));
      out.add_linear(offset + i, qp.linear()[static_cast<Eigen::Index>(i)]);
    }
    out.add_constant(qp.constant());
    const auto a = qp.equality_matrix();
    std::vector<std::vector<QpProblem::Term>> rows(qp.equality_count());
    for (int k = 0; k < a.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(a, k); it; ++it)
        rows[static_cast<std::size_t>(it.row())].emplace_back(offset + static_cast<std::size_t>(it.col()), it.value());
    for (std::size_t r = 0; r < rows.size(); ++r)
      out.add_equality(rows[r], qp.equality_rhs()[static_cast<Eigen::Index>(r)], qp.row_name(r));
    return offset;
  };
  absorb(leader);
  for (std::size_t n = 0; n < followers.size(); ++n) {
    const auto off = absorb(followers[n]);
    for (auto i : followers[n].boundary[0]) zb[n].push_back(off + i);
  }
  for (std::size_t n = 0; n < part.links.size(); ++n) {
    const auto a = part.links[n].a_matrix();
    const auto b = part.links[n].b_matrix();
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
      std::vector<QpProblem::Term> t;
      for (Eigen::Index c = 0; c < a.cols(); ++c) {
        if (a(r, c) != 0.0) t.emplace_back(leader.boundary[n][static_cast<std::size_t>(c)], a(r, c));
        if (b(r, c) != 0.0) t.emplace_back(zb[n][static_cast<std::size_t>(c)], b(r, c));
      }
      out.add_equality(t, 0.0, "couple:" + std::to_string(part.links[n].secondary_id) + ":" + std::to_string(r));
    }
  }
  return out;
}

double equality_violation(const QpProblem& qp, const Eigen::VectorXd& x) {
  return (qp.equality_matrix() * x - qp.equality_rhs()).lpNorm<Eigen::Infinity>();
}

}  // namespace

TEST_CASE("measured state satisfies the centralized rows exactly") {
  for (auto f : {test::one_secondary(), test::one_secondary(PhaseMask::single(1)),
                 generate_synthetic_feeder(reference_fixture_spec())}) {
    auto s = setup(f, {0.9, 1.1, 0.6});
    Dispatch q = zero_dispatch(*s.feeder);
    for (std::size_t g = 0; g < q.size(); ++g)
      for (std::size_t p = 0; p < kPhases; ++p) q[g].set(p, 0.3 * s.feeder->inverters[g].q_cap(0.6)[p]);
    s.m = solve_powerflow(*s.feeder, q, s.mult).measurements;
    s.lin = Linearization::at(*s.feeder, s.m, s.mult);
    const auto c = build_centralized(s.part, s.lin, EpsMode::WithEps);
    const auto x = test::state_vector(c.qp, *s.feeder, s.m, q);
    CHECK(equality_violation(c.qp, x) <= 1e-10);
    double supplied = 0.0;
    const auto sub = s.feeder->bus_index(s.feeder->substation_bus);
    for (std::size_t k = 0; k < s.feeder->branches.size(); ++k)
      if (s.feeder->branches[k].from == s.feeder->substation_bus) supplied += s.m.s_branch[k].sum().real();
    supplied += (zip_load_p(s.feeder->buses[sub], s.m.v_bus[sub], s.mult.load_p)).sum();
    CHECK(c.qp.objective(x) == doctest::Approx(supplied).epsilon(1e-12));
  }
}

TEST_CASE("penalty-free leader has no quadratic terms") {
  auto s = setup(test::one_secondary());
  const auto z = zeros_per_link(s.part);
  const auto leader = build_leader(s.part, s.lin, z, z, 0.0);
  CHECK(leader.qp.hessian().nonZeros() == 0);
  CHECK(leader.boundary.size() == 1);
  CHECK(leader.boundary[0].size() == 9);
  CHECK(leader.inverters.empty());
  for (std::size_t i = 0; i < leader.qp.variable_count(); ++i) {
    const bool supply = leader.qp.name(i).rfind("P:0-1:", 0) == 0;
    CHECK(leader.qp.linear()[static_cast<Eigen::Index>(i)] == (supply ? 1.0 : 0.0));
  }
}

TEST_CASE("large penalty pins the leader boundary to the follower values") {
  auto s = setup(generate_synthetic_feeder(reference_fixture_spec()));
  const auto c = build_centralized(s.part, s.lin, EpsMode::WithEps);
  const auto opt = solve(c.qp);
  REQUIRE(opt.optimal());
  std::vector<Eigen::VectorXd> zb;
  for (std::size_t n = 0; n < s.part.links.size(); ++n) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(c.boundary_follower[n].size()));
    for (std::size_t i = 0; i < c.boundary_follower[n].size(); ++i)
      v[static_cast<Eigen::Index>(i)] = opt.x[static_cast<Eigen::Index>(c.boundary_follower[n][i])];
    zb.push_back(v);
  }
  const auto leader = build_leader(s.part, s.lin, zb, zeros_per_link(s.part), 1e6);
  const auto sol = solve(leader.qp);
  REQUIRE(sol.optimal());
  for (std::size_t n = 0; n < zb.size(); ++n) {
    const Eigen::VectorXd target = -s.part.links[n].b_matrix() * zb[n];
    CHECK((boundary_values(leader, n, sol.x) - target).lpNorm<Eigen::Infinity>() <= 1e-4);
  }
}

TEST_CASE("assembly is deterministic") {
  auto a = setup(generate_synthetic_feeder(reference_fixture_spec()));
  auto b = setup(generate_synthetic_feeder(reference_fixture_spec()));
  Rng rng(5);
  std::vector<Eigen::VectorXd> z, lam;
  for (const auto& l : a.part.links) {
    z.push_back(Eigen::VectorXd::NullaryExpr(static_cast<Eigen::Index>(l.dim()), [&] { return rng.uniform(-1, 1); }));
    lam.push_back(Eigen::VectorXd::NullaryExpr(static_cast<Eigen::Index>(l.dim()), [&] { return rng.uniform(-1, 1); }));
  }
  std::ostringstream ta, tb;
  build_leader(a.part, a.lin, z, lam, 0.3).qp.write_text(ta);
  build_leader(b.part, b.lin, z, lam, 0.3).qp.write_text(tb);
  CHECK(ta.str() == tb.str());
  std::ostringstream fa, fb;
  build_follower(2, a.part, a.lin, z[2], lam[2], 0.3).qp.write_text(fa);
  build_follower(2, b.part, b.lin, z[2], lam[2], 0.3).qp.write_text(fb);
  CHECK(fa.str() == fb.str());
}

TEST_CASE("follower without an inverter has no reactive controls") {
  auto s = setup(test::one_secondary(PhaseMask::abc(), false));
  const auto x = zeros_per_link(s.part);
  const auto fol = build_follower(0, s.part, s.lin, x[0], x[0], 0.05);
  CHECK(fol.inverters.empty());
  for (const auto& name : fol.qp.names()) CHECK(name.rfind("qg:", 0) != 0);
}

TEST_CASE("inverter at full active output is pinned to zero") {
  auto f = test::one_secondary();
  f.inverters[0].p_g = f.inverters[0].s_cap;
  auto s = setup(f);
  const auto x = zeros_per_link(s.part);
  const auto fol = build_follower(0, s.part, s.lin, x[0], x[0], 0.05);
  REQUIRE(fol.inverters.size() == 1);
  for (std::size_t p = 0; p < kPhases; ++p) {
    const auto i = static_cast<std::size_t>(fol.qg_index[0][p]);
    CHECK(fol.qp.lower(i) == 0.0);
    CHECK(fol.qp.upper(i) == 0.0);
  }
}

TEST_CASE("follower solutions pass the optimality check") {
  auto s = setup(generate_synthetic_feeder(reference_fixture_spec()));
  const auto c = build_centralized(s.part, s.lin, EpsMode::WithEps);
  const auto opt = solve(c.qp);
  REQUIRE(opt.optimal());
  Rng rng(77);
  for (std::size_t n = 0; n < s.part.followers.size(); ++n) {
    const auto xb = boundary_values(c, n, opt.x);
    const Eigen::VectorXd lam =
        Eigen::VectorXd::NullaryExpr(xb.size(), [&] { return rng.uniform(-0.5, 0.5); });
    const auto fol = build_follower(n, s.part, s.lin, xb, lam, 0.05);
    const auto sol = solve(fol.qp);
    REQUIRE(sol.optimal());
    CHECK(check_kkt(fol.qp, sol).ok(1e-6));
  }
}

TEST_CASE("dropping zero loss terms changes nothing") {
  auto s = setup(generate_synthetic_feeder(reference_fixture_spec()));
  const auto flat = Linearization::flat(*s.feeder, {});
  const auto a = build_centralized(s.part, flat, EpsMode::WithEps);
  const auto b = build_centralized(s.part, flat, EpsMode::DropEps);
  CHECK(canonical(a.qp) == canonical(b.qp));
}

TEST_CASE("loss terms move the centralized optimum") {
  auto s = setup(generate_synthetic_feeder(reference_fixture_spec()));
  const auto with = solve(build_centralized(s.part, s.lin, EpsMode::WithEps).qp);
  const auto drop = solve(build_centralized(s.part, s.lin, EpsMode::DropEps).qp);
  REQUIRE(with.optimal());
  REQUIRE(drop.optimal());
  CHECK(std::abs(with.objective - drop.objective) > 1e-8);
}

TEST_CASE("leader and followers with hard coupling rebuild the centralized problem") {
  for (auto f : {test::one_secondary(), test::one_secondary(PhaseMask::single(0)),
                 generate_synthetic_feeder(reference_fixture_spec())}) {
    auto s = setup(f, {1.05, 0.95, 0.4});
    const auto z = zeros_per_link(s.part);
    const auto leader = build_leader(s.part, s.lin, z, z, 0.0);
    std::vector<Subproblem> fols;
    for (std::size_t n = 0; n < s.part.followers.size(); ++n)
      fols.push_back(build_follower(n, s.part, s.lin, z[n], z[n], 0.0));
    const auto joined = compose(s.part, leader, fols);
    const auto central = build_centralized(s.part, s.lin, EpsMode::WithEps);
    CHECK(canonical(joined) == canonical(central.qp));
  }
}

TEST_CASE("every variable of the sub-networks appears exactly once") {
  auto s = setup(generate_synthetic_feeder(reference_fixture_spec()));
  const auto c = build_centralized(s.part, s.lin, EpsMode::WithEps);
  const auto& f = *s.feeder;
  std::size_t expected = 0;
  for (const auto& b : f.buses) expected += b.phases.count();
  for (const auto& br : f.branches) expected += 2 * br.phases.count();
  for (const auto& inv : f.inverters) expected += f.bus(inv.bus).phases.count();
  for (const auto& l : f.boundary_links) expected += 4 * l.phases.count();
  CHECK(c.qp.variable_count() == expected);
  std::map<std::string, int> seen;
  for (const auto& n : c.qp.names()) ++seen[n];
  for (const auto& [n, k] : seen) CHECK(k == 1);
}

TEST_CASE("penalized problems stay convex") {
  auto s = setup(generate_synthetic_feeder(reference_fixture_spec()));
  Rng rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    const double rho = rng.uniform(0.0, 100.0);
    std::vector<Eigen::VectorXd> z, lam;
    for (const auto& l : s.part.links) {
      z.push_back(Eigen::VectorXd::NullaryExpr(static_cast<Eigen::Index>(l.dim()), [&] { return rng.uniform(-1, 1); }));
      lam.push_back(Eigen::VectorXd::NullaryExpr(static_cast<Eigen::Index>(l.dim()), [&] { return rng.uniform(-1, 1); }));
    }
    const auto leader = build_leader(s.part, s.lin, z, lam, rho);
    const Eigen::MatrixXd h = Eigen::MatrixXd(leader.qp.hessian());
    CHECK((h - h.transpose()).norm() == 0.0);
    CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(h).eigenvalues().minCoeff() >= -1e-9);
    const auto fol = build_follower(0, s.part, s.lin, z[0], lam[0], rho);
    const Eigen::MatrixXd hf = Eigen::MatrixXd(fol.qp.hessian());
    CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(hf).eigenvalues().minCoeff() >= -1e-9);
  }
}

TEST_CASE("missing boundary data is an assembly error") {
  auto s = setup(generate_synthetic_feeder(reference_fixture_spec()));
  auto z = zeros_per_link(s.part);
  z.pop_back();
  CHECK_THROWS_AS(build_leader(s.part, s.lin, z, zeros_per_link(s.part), 1.0), AssemblyError);
  auto bad = zeros_per_link(s.part);
  bad[0] = Eigen::VectorXd::Zero(2);
  CHECK_THROWS_AS(build_leader(s.part, s.lin, zeros_per_link(s.part), bad, 1.0), AssemblyError);
  CHECK_THROWS_AS(build_follower(0, s.part, s.lin, bad[0], bad[0], 1.0), AssemblyError);
  CHECK_THROWS_AS(build_follower(99, s.part, s.lin, bad[0], bad[0], 1.0), AssemblyError);
}

TEST_CASE("reactive weight puts curvature on inverter set-points only") {
  auto s = setup(generate_synthetic_feeder(reference_fixture_spec()));
  BuildOptions opt;
  opt.reactive_weight = 3.0;
  const auto z = zeros_per_link(s.part);
  const auto fol = build_follower(0, s.part, s.lin, z[0], z[0], 0.0, opt);
  const auto c = build_centralized(s.part, s.lin, EpsMode::WithEps, opt);
  for (const auto* sp : {&fol, &c}) {
    const auto h = sp->qp.hessian();
    std::size_t expected = 0;
    for (const auto& idx : sp->qg_index)
      for (auto i : idx)
        if (i >= 0) ++expected;
    REQUIRE(expected > 0);
    CHECK(static_cast<std::size_t>(h.nonZeros()) == expected);
    for (int k = 0; k < h.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(h, k); it; ++it) {
        CHECK(it.row() == it.col());
        CHECK(sp->qp.name(static_cast<std::size_t>(it.row())).rfind("qg:", 0) == 0);
        CHECK(it.value() == 3.0);
      }
  }
}
