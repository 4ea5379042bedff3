#include "dcvr/subproblem.hpp"

#include <map>
#include <tuple>

#include <fmt/format.h>

namespace dcvr {

Linearization Linearization::at(const Feeder& feeder, const MeasurementSet& m, const Multipliers& mult) {
  return {estimate_epsilon(feeder, m), linearize_all(feeder, m, mult), mult.pv};
}

Linearization Linearization::flat(const Feeder& feeder, const Multipliers& mult) {
  Linearization lin{EpsilonSet::zeros(feeder), {}, mult.pv};
  for (const auto& bus : feeder.buses)
    lin.zip.push_back(linearize_zip(bus, PhaseVector::uniform(bus.phases, 1.0), mult.load_p, mult.load_q));
  return lin;
}

Eigen::VectorXd boundary_values(const Subproblem& sp, std::size_t k, const Eigen::VectorXd& x) {
  const auto& idx = sp.boundary.at(k);
  Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Eigen::Index>(i)] = x[static_cast<Eigen::Index>(idx[i])];
  return out;
}

double supply_value(const Subproblem& sp, const Eigen::VectorXd& x) {
  double f = sp.supply_constant;
  for (auto i : sp.supply) f += x[static_cast<Eigen::Index>(i)];
  return f;
}

void extract_dispatch(const Subproblem& sp, const Eigen::VectorXd& x, Dispatch& dispatch) {
  for (std::size_t k = 0; k < sp.inverters.size(); ++k)
    for (std::size_t p = 0; p < kPhases; ++p)
      if (sp.qg_index[k][p] >= 0) dispatch[sp.inverters[k]].set(p, x[sp.qg_index[k][p]]);
}

namespace {

std::string branch_tag(const Branch& br) { return fmt::format("{}-{}", br.from, br.to); }

/// Shared assembly state for one or more sub-networks of a feeder.
class Assembler {
 public:
  Assembler(const Partition& part, const Linearization& lin, EpsMode mode, const BuildOptions& options)
      : part_(part), f_(*part.feeder), lin_(lin), mode_(mode), options_(options) {
    for (std::size_t n = 0; n < part.links.size(); ++n) link_of_secondary_[part.links[n].secondary_id] = n;
    if (lin.eps.eps_p.size() != f_.branches.size() || lin.zip.size() != f_.buses.size())
      throw AssemblyError("linearization does not match the feeder");
  }

  Subproblem sp;

  /// Variables and physics rows of a sub-network. `leader_side` adds boundary
  /// injections at primary boundary buses; otherwise the sub-network root is a
  /// copy bus and gets inflow variables.
  void add_network(const SubNetwork& sub, bool leader_side) {
    auto& qp = sp.qp;
    for (auto id : sub.buses) {
      const auto& bus = f_.bus(id);
      for (std::size_t p = 0; p < kPhases; ++p) {
        if (!bus.phases.has(p)) continue;
        if (id == f_.substation_bus) {
          const double v0 = f_.v_substation * f_.v_substation;
          v_[{id, p}] = qp.add_variable(fmt::format("v:{}:{}", id, phase_letter(p)), v0, v0);
        } else {
          const double lo = bus.v_min + options_.voltage_margin;
          const double hi = bus.v_max - options_.voltage_margin;
          v_[{id, p}] = qp.add_variable(fmt::format("v:{}:{}", id, phase_letter(p)), lo, std::max(lo, hi));
        }
      }
    }
    for (auto k : sub.branches) {
      const auto& br = f_.branches[k];
      for (std::size_t p = 0; p < kPhases; ++p) {
        if (!br.phases.has(p)) continue;
        pf_[{k, p}] = qp.add_variable(fmt::format("P:{}:{}", branch_tag(br), phase_letter(p)));
        qf_[{k, p}] = qp.add_variable(fmt::format("Q:{}:{}", branch_tag(br), phase_letter(p)));
      }
    }
    for (auto g : sub.inverters) {
      const auto& inv = f_.inverters[g];
      const auto cap = inv.q_cap(lin_.pv);
      std::array<long, kPhases> idx{-1, -1, -1};
      for (std::size_t p = 0; p < kPhases; ++p) {
        if (!f_.bus(inv.bus).phases.has(p)) continue;
        idx[p] = static_cast<long>(qp.add_variable(fmt::format("qg:{}:{}", g, phase_letter(p)), -cap[p], cap[p]));
        if (options_.reactive_weight > 0.0)
          qp.add_hessian(static_cast<std::size_t>(idx[p]), static_cast<std::size_t>(idx[p]), options_.reactive_weight);
      }
      sp.inverters.push_back(g);
      sp.qg_index.push_back(idx);
    }
    if (leader_side) {
      for (std::size_t n = 0; n < part_.links.size(); ++n) {
        const auto& link = part_.links[n];
        std::vector<std::size_t> xb;
        for (std::size_t p = 0; p < kPhases; ++p)
          if (link.phases.has(p))
            pb_[{n, p}] = qp.add_variable(fmt::format("pb:{}:{}", link.secondary_id, phase_letter(p)));
        for (std::size_t p = 0; p < kPhases; ++p)
          if (link.phases.has(p))
            qb_[{n, p}] = qp.add_variable(fmt::format("qb:{}:{}", link.secondary_id, phase_letter(p)));
        for (auto kind : {&pb_, &qb_})
          for (std::size_t p = 0; p < kPhases; ++p)
            if (link.phases.has(p)) xb.push_back(kind->at({n, p}));
        for (std::size_t p = 0; p < kPhases; ++p)
          if (link.phases.has(p)) xb.push_back(v_.at({link.primary_bus, p}));
        sp.boundary.push_back(std::move(xb));
      }
    }

    for (auto k : sub.branches) add_branch_rows(k);

    if (!leader_side) {
      const auto& fd = static_cast<const FollowerData&>(sub);
      const auto n = link_of_secondary_.at(fd.secondary_id);
      const auto& link = part_.links[n];
      const auto root = f_.bus_index(fd.root);
      for (std::size_t p = 0; p < kPhases; ++p)
        if (link.phases.has(p)) {
          pin_[{n, p}] = qp.add_variable(fmt::format("Pin:{}:{}", link.secondary_id, phase_letter(p)));
          qin_[{n, p}] = qp.add_variable(fmt::format("Qin:{}:{}", link.secondary_id, phase_letter(p)));
        }
      for (std::size_t p = 0; p < kPhases; ++p) {
        if (!link.phases.has(p)) continue;
        for (auto [flow, in, tag] : {std::tuple{&pf_, &pin_, 'P'}, std::tuple{&qf_, &qin_, 'Q'}}) {
          std::vector<QpProblem::Term> terms{{in->at({n, p}), 1.0}};
          for (auto c : part_.topology.child_branches[root])
            if (f_.branches[c].phases.has(p)) terms.emplace_back(flow->at({c, p}), -1.0);
          qp.add_equality(std::move(terms), 0.0, fmt::format("root{}:{}:{}", tag, link.secondary_id, phase_letter(p)));
        }
      }
      std::vector<std::size_t> zb;
      for (auto kind : {&pin_, &qin_})
        for (std::size_t p = 0; p < kPhases; ++p)
          if (link.phases.has(p)) zb.push_back(kind->at({n, p}));
      for (std::size_t p = 0; p < kPhases; ++p)
        if (link.phases.has(p)) zb.push_back(v_.at({fd.root, p}));
      if (leader_present_) sp.boundary_follower[n] = std::move(zb);
      else sp.boundary.push_back(std::move(zb));
    }
  }

  /// Substation supply: sum of P on branches leaving the substation plus its own net load.
  void add_substation_objective() {
    auto& qp = sp.qp;
    const auto s = f_.bus_index(f_.substation_bus);
    for (auto k : part_.topology.child_branches[s])
      for (std::size_t p = 0; p < kPhases; ++p)
        if (f_.branches[k].phases.has(p)) {
          qp.add_linear(pf_.at({k, p}), 1.0);
          sp.supply.push_back(pf_.at({k, p}));
        }
    const double v0 = f_.v_substation * f_.v_substation;
    const auto& bus = f_.buses[s];
    const auto& z = lin_.zip[s];
    for (std::size_t p = 0; p < kPhases; ++p)
      if (bus.phases.has(p)) sp.supply_constant += z.a_p[p] * v0 + z.b_p[p] - generation_p(f_.substation_bus, p);
    qp.add_constant(sp.supply_constant);
  }

  /// lambda'(M w + c) + rho/2 |M w + c|^2 over the variables `w`.
  void add_penalty(const std::vector<std::size_t>& w, const Eigen::MatrixXd& m, const Eigen::VectorXd& c,
                   const Eigen::VectorXd& lambda, double rho) {
    auto& qp = sp.qp;
    const Eigen::MatrixXd h = rho * m.transpose() * m;
    const Eigen::VectorXd g = m.transpose() * (lambda + rho * c);
    const auto d = static_cast<Eigen::Index>(w.size());
    for (Eigen::Index i = 0; i < d; ++i) {
      if (g[i] != 0.0) qp.add_linear(w[static_cast<std::size_t>(i)], g[i]);
      for (Eigen::Index j = i; j < d; ++j)
        if (h(i, j) != 0.0) qp.add_hessian(w[static_cast<std::size_t>(i)], w[static_cast<std::size_t>(j)], h(i, j));
    }
    qp.add_constant(lambda.dot(c) + 0.5 * rho * c.squaredNorm());
  }

  /// A x_B + B z_B = 0 as hard rows.
  void add_coupling_rows() {
    auto& qp = sp.qp;
    for (std::size_t n = 0; n < part_.links.size(); ++n) {
      const auto& link = part_.links[n];
      const Eigen::MatrixXd a = link.a_matrix();
      const Eigen::MatrixXd b = link.b_matrix();
      const auto& xb = sp.boundary[n];
      const auto& zb = sp.boundary_follower[n];
      for (Eigen::Index r = 0; r < a.rows(); ++r) {
        std::vector<QpProblem::Term> terms;
        for (Eigen::Index c = 0; c < a.cols(); ++c) {
          if (a(r, c) != 0.0) terms.emplace_back(xb[static_cast<std::size_t>(c)], a(r, c));
          if (b(r, c) != 0.0) terms.emplace_back(zb[static_cast<std::size_t>(c)], b(r, c));
        }
        qp.add_equality(std::move(terms), 0.0, fmt::format("couple:{}:{}", link.secondary_id, r));
      }
    }
  }

  void expect_leader_and_followers() {
    leader_present_ = true;
    sp.boundary_follower.resize(part_.links.size());
  }

 private:
  using BusKey = std::pair<BusId, std::size_t>;
  using Key = std::pair<std::size_t, std::size_t>;

  double generation_p(BusId id, std::size_t p) const {
    double pg = 0.0;
    for (const auto& inv : f_.inverters)
      if (inv.bus == id) pg += lin_.pv * inv.p_g[p];
    return pg;
  }

  double eps(const std::vector<PhaseVector>& e, std::size_t k, std::size_t p) const {
    return mode_ == EpsMode::WithEps ? e[k][p] : 0.0;
  }

  void add_branch_rows(std::size_t k) {
    auto& qp = sp.qp;
    const auto& br = f_.branches[k];
    const auto j = f_.bus_index(br.to);
    const auto& z = lin_.zip[j];
    const auto drop = drop_matrices(br);
    const auto tag = branch_tag(br);
    for (std::size_t p = 0; p < kPhases; ++p) {
      if (!br.phases.has(p)) continue;
      const auto vj = v_.at({br.to, p});
      std::vector<QpProblem::Term> tp{{pf_.at({k, p}), 1.0}, {vj, -z.a_p[p]}};
      std::vector<QpProblem::Term> tq{{qf_.at({k, p}), 1.0}, {vj, -z.a_q[p]}};
      for (auto c : part_.topology.child_branches[j])
        if (f_.branches[c].phases.has(p)) {
          tp.emplace_back(pf_.at({c, p}), -1.0);
          tq.emplace_back(qf_.at({c, p}), -1.0);
        }
      for (auto l : part_.topology.child_links[j]) {
        const auto n = link_of_secondary_.at(f_.boundary_links[l].secondary_id);
        if (!part_.links[n].phases.has(p)) continue;
        tp.emplace_back(pb_.at({n, p}), 1.0);
        tq.emplace_back(qb_.at({n, p}), 1.0);
      }
      for (std::size_t g = 0; g < sp.inverters.size(); ++g)
        if (f_.inverters[sp.inverters[g]].bus == br.to && sp.qg_index[g][p] >= 0)
          tq.emplace_back(static_cast<std::size_t>(sp.qg_index[g][p]), 1.0);
      qp.add_equality(std::move(tp), z.b_p[p] - generation_p(br.to, p) + eps(lin_.eps.eps_p, k, p),
                      fmt::format("balP:{}:{}", tag, phase_letter(p)));
      qp.add_equality(std::move(tq), z.b_q[p] + eps(lin_.eps.eps_q, k, p),
                      fmt::format("balQ:{}:{}", tag, phase_letter(p)));

      std::vector<QpProblem::Term> tv{{vj, 1.0}, {v_.at({br.from, p}), -1.0}};
      for (std::size_t c = 0; c < kPhases; ++c) {
        if (!br.phases.has(c)) continue;
        if (drop.r[p][c] != 0.0) tv.emplace_back(pf_.at({k, c}), 2.0 * drop.r[p][c]);
        if (drop.x[p][c] != 0.0) tv.emplace_back(qf_.at({k, c}), 2.0 * drop.x[p][c]);
      }
      qp.add_equality(std::move(tv), eps(lin_.eps.eps_v, k, p), fmt::format("drop:{}:{}", tag, phase_letter(p)));
    }
  }

  const Partition& part_;
  const Feeder& f_;
  const Linearization& lin_;
  EpsMode mode_;
  BuildOptions options_;
  bool leader_present_ = false;
  std::map<int, std::size_t> link_of_secondary_;
  std::map<BusKey, std::size_t> v_;
  std::map<Key, std::size_t> pf_, qf_, pb_, qb_, pin_, qin_;
};

}  // namespace

Subproblem build_leader(const Partition& part, const Linearization& lin, const std::vector<Eigen::VectorXd>& z_b,
                        const std::vector<Eigen::VectorXd>& lambda, double rho, const BuildOptions& options) {
  if (z_b.size() != part.links.size() || lambda.size() != part.links.size())
    throw AssemblyError(fmt::format("leader needs boundary data for {} followers", part.links.size()));
  Assembler as(part, lin, EpsMode::WithEps, options);
  as.add_network(part.leader, true);
  as.add_substation_objective();
  for (std::size_t n = 0; n < part.links.size(); ++n) {
    const auto& link = part.links[n];
    const auto d = static_cast<Eigen::Index>(link.dim());
    if (z_b[n].size() != d || lambda[n].size() != d)
      throw AssemblyError(fmt::format("boundary data for secondary {} has wrong size", link.secondary_id));
    as.add_penalty(as.sp.boundary[n], link.a_matrix(), link.b_matrix() * z_b[n], lambda[n], rho);
  }
  return std::move(as.sp);
}

Subproblem build_follower(std::size_t n, const Partition& part, const Linearization& lin, const Eigen::VectorXd& x_b,
                          const Eigen::VectorXd& lambda, double rho, const BuildOptions& options) {
  if (n >= part.followers.size()) throw AssemblyError(fmt::format("no follower {}", n));
  const auto& link = part.links[n];
  const auto d = static_cast<Eigen::Index>(link.dim());
  if (x_b.size() != d || lambda.size() != d)
    throw AssemblyError(fmt::format("boundary data for secondary {} has wrong size", link.secondary_id));
  Assembler as(part, lin, EpsMode::WithEps, options);
  as.add_network(part.followers[n], false);
  as.add_penalty(as.sp.boundary[0], link.b_matrix(), link.a_matrix() * x_b, lambda, rho);
  return std::move(as.sp);
}

Subproblem build_centralized(const Partition& part, const Linearization& lin, EpsMode mode,
                             const BuildOptions& options) {
  Assembler as(part, lin, mode, options);
  as.expect_leader_and_followers();
  as.add_network(part.leader, true);
  for (const auto& f : part.followers) as.add_network(f, false);
  as.add_substation_objective();
  as.add_coupling_rows();
  return std::move(as.sp);
}

}  // namespace dcvr
