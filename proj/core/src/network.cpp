#include "dcvr/network.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <fmt/format.h>

namespace dcvr {

namespace {

constexpr double kZipSumTol = 1e-9;

bool mask_matches(const PhaseVector& v, PhaseMask phases) { return phases.contains(v.mask()); }

}  // namespace

std::string Zone::str() const {
  switch (kind) {
    case ZoneKind::Primary: return "primary";
    case ZoneKind::Secondary: return fmt::format("secondary({})", secondary);
    case ZoneKind::Boundary: return fmt::format("boundary({})", secondary);
  }
  return "primary";
}

Zone Zone::parse(const std::string& text) {
  if (text == "primary") return primary();
  auto open = text.find('(');
  auto close = text.find(')');
  if (open == std::string::npos || close != text.size() - 1 || close <= open + 1)
    throw std::invalid_argument("bad zone '" + text + "'");
  const auto head = text.substr(0, open);
  std::size_t used = 0;
  const auto number = text.substr(open + 1, close - open - 1);
  const int n = std::stoi(number, &used);
  if (used != number.size() || n < 0) throw std::invalid_argument("bad zone index in '" + text + "'");
  if (head == "secondary") return secondary_net(n);
  if (head == "boundary") return boundary(n);
  throw std::invalid_argument("bad zone '" + text + "'");
}

PhaseVector Inverter::q_cap(double pv_mult) const {
  PhaseVector out(s_cap.mask());
  for (std::size_t p = 0; p < kPhases; ++p) {
    const double pg = p_g[p] * pv_mult;
    out.set(p, std::sqrt(std::max(s_cap[p] * s_cap[p] - pg * pg, 0.0)));
  }
  return out;
}

Eigen::MatrixXd BoundaryLink::a_matrix() const {
  const auto n = static_cast<Eigen::Index>(dim());
  return Eigen::MatrixXd::Identity(n, n);
}

Eigen::MatrixXd BoundaryLink::b_matrix() const {
  const auto n = static_cast<Eigen::Index>(dim());
  const auto k = static_cast<Eigen::Index>(phases.count());
  Eigen::MatrixXd b = Eigen::MatrixXd::Identity(n, n);
  b.bottomRightCorner(k, k) *= -1.0;
  return b;
}

std::size_t Feeder::bus_index(BusId id) const {
  for (std::size_t k = 0; k < buses.size(); ++k)
    if (buses[k].id == id) return k;
  throw StructuralError(fmt::format("unknown bus {}", id));
}

bool Feeder::has_bus(BusId id) const {
  return std::any_of(buses.begin(), buses.end(), [id](const Bus& b) { return b.id == id; });
}

std::vector<std::string> validate(const Feeder& feeder) {
  std::vector<std::string> out;
  std::map<BusId, const Bus*> by_id;
  for (const auto& b : feeder.buses) {
    if (!by_id.emplace(b.id, &b).second) out.push_back(fmt::format("bus {}: duplicate id", b.id));
  }

  for (const auto& b : feeder.buses) {
    if (b.phases.empty()) out.push_back(fmt::format("bus {}: no phases", b.id));
    if (std::abs(b.zip_p.sum() - 1.0) > kZipSumTol)
      out.push_back(fmt::format("bus {}: zip_p does not sum to 1", b.id));
    if (std::abs(b.zip_q.sum() - 1.0) > kZipSumTol)
      out.push_back(fmt::format("bus {}: zip_q does not sum to 1", b.id));
    if (!(b.v_min > 0.0 && b.v_min < b.v_max))
      out.push_back(fmt::format("bus {}: requires 0 < v_min < v_max", b.id));
    if (!mask_matches(b.load_mult_p, b.phases) || !mask_matches(b.load_mult_q, b.phases))
      out.push_back(fmt::format("bus {}: load on absent phase", b.id));
  }

  auto bus_ok = [&](BusId id) { return by_id.count(id) != 0; };
  auto bus_of = [&](BusId id) -> const Bus& { return *by_id.at(id); };

  if (!bus_ok(feeder.substation_bus)) {
    out.push_back(fmt::format("substation bus {} does not exist", feeder.substation_bus));
  } else if (bus_of(feeder.substation_bus).zone.kind != ZoneKind::Primary) {
    out.push_back("substation bus is not in the primary zone");
  }

  bool endpoints_ok = true;
  for (std::size_t k = 0; k < feeder.branches.size(); ++k) {
    const auto& br = feeder.branches[k];
    if (!bus_ok(br.from) || !bus_ok(br.to)) {
      out.push_back(fmt::format("branch {}: unknown endpoint", k));
      endpoints_ok = false;
      continue;
    }
    const auto& a = bus_of(br.from);
    const auto& b = bus_of(br.to);
    if (br.phases.empty() || !a.phases.contains(br.phases) || !b.phases.contains(br.phases))
      out.push_back(fmt::format("branch {}: phases not present at both ends", k));
    if (b.phases != br.phases)
      out.push_back(fmt::format("branch {}: downstream bus phases differ from branch phases", k));
    if (br.z.mask() != br.phases) out.push_back(fmt::format("branch {}: impedance mask differs", k));
    const bool same_side = a.zone.on_primary_side() == b.zone.on_primary_side();
    const bool same_secondary = a.zone.on_primary_side() || a.zone.secondary == b.zone.secondary;
    if (!same_side || !same_secondary)
      out.push_back(fmt::format("branch {}: crosses network zones", k));
  }

  for (std::size_t k = 0; k < feeder.inverters.size(); ++k) {
    const auto& inv = feeder.inverters[k];
    if (!bus_ok(inv.bus)) {
      out.push_back(fmt::format("inverter {}: unknown bus", k));
      continue;
    }
    const auto& b = bus_of(inv.bus);
    if (!mask_matches(inv.s_cap, b.phases) || !mask_matches(inv.p_g, b.phases))
      out.push_back(fmt::format("inverter {}: phases not present at bus", k));
    for (std::size_t p = 0; p < kPhases; ++p)
      if (inv.s_cap[p] < 0.0 || inv.p_g[p] < 0.0)
        out.push_back(fmt::format("inverter {}: negative capacity or output", k));
  }

  std::set<int> linked;
  std::set<BusId> primary_ends;
  for (std::size_t k = 0; k < feeder.boundary_links.size(); ++k) {
    const auto& l = feeder.boundary_links[k];
    if (!bus_ok(l.boundary_bus) || !bus_ok(l.primary_bus)) {
      out.push_back(fmt::format("boundary link {}: dangling bus reference", k));
      endpoints_ok = false;
      continue;
    }
    const auto& copy = bus_of(l.boundary_bus);
    const auto& prim = bus_of(l.primary_bus);
    if (copy.zone != Zone::secondary_net(l.secondary_id))
      out.push_back(fmt::format("boundary link {}: boundary bus not in secondary({})", k, l.secondary_id));
    if (prim.zone != Zone::boundary(l.secondary_id))
      out.push_back(fmt::format("boundary link {}: primary bus not in boundary({})", k, l.secondary_id));
    if (copy.phases != l.phases || prim.phases != l.phases)
      out.push_back(fmt::format("boundary link {}: phase mismatch", k));
    if (copy.load_mult_p.sum() != 0.0 || copy.load_mult_q.sum() != 0.0)
      out.push_back(fmt::format("boundary link {}: copy bus carries load", k));
    for (const auto& inv : feeder.inverters)
      if (inv.bus == l.boundary_bus) out.push_back(fmt::format("boundary link {}: copy bus hosts inverter", k));
    if (!linked.insert(l.secondary_id).second)
      out.push_back(fmt::format("secondary {}: more than one boundary link", l.secondary_id));
    if (!primary_ends.insert(l.primary_bus).second)
      out.push_back(fmt::format("boundary link {}: primary bus shared with another link", k));
  }
  for (const auto& b : feeder.buses) {
    if (b.zone.kind != ZoneKind::Primary && !linked.count(b.zone.secondary))
      out.push_back(fmt::format("bus {}: secondary {} has no boundary link", b.id, b.zone.secondary));
  }

  if (endpoints_ok && bus_ok(feeder.substation_bus)) {
    const std::size_t edges = feeder.branches.size() + feeder.boundary_links.size();
    bool radial = edges + 1 == feeder.buses.size();
    if (radial) {
      try {
        build_topology(feeder);
      } catch (const StructuralError&) {
        radial = false;
      }
    }
    if (!radial) out.push_back("branch set not radial");
  }
  return out;
}

Topology build_topology(const Feeder& feeder) {
  const std::size_t n = feeder.buses.size();
  std::unordered_map<BusId, std::size_t> index;
  for (std::size_t k = 0; k < n; ++k) index.emplace(feeder.buses[k].id, k);
  auto at = [&](BusId id) {
    auto it = index.find(id);
    if (it == index.end()) throw StructuralError(fmt::format("unknown bus {}", id));
    return it->second;
  };

  struct Edge {
    std::size_t other;
    int branch;
    int link;
  };
  std::vector<std::vector<Edge>> adj(n);
  for (std::size_t k = 0; k < feeder.branches.size(); ++k) {
    const auto a = at(feeder.branches[k].from);
    const auto b = at(feeder.branches[k].to);
    adj[a].push_back({b, static_cast<int>(k), -1});
    adj[b].push_back({a, static_cast<int>(k), -1});
  }
  for (std::size_t k = 0; k < feeder.boundary_links.size(); ++k) {
    const auto a = at(feeder.boundary_links[k].primary_bus);
    const auto b = at(feeder.boundary_links[k].boundary_bus);
    adj[a].push_back({b, -1, static_cast<int>(k)});
    adj[b].push_back({a, -1, static_cast<int>(k)});
  }
  if (feeder.branches.size() + feeder.boundary_links.size() + 1 != n)
    throw StructuralError("branch set not radial");

  Topology topo;
  topo.root = at(feeder.substation_bus);
  topo.parent.assign(n, {});
  topo.child_branches.assign(n, {});
  topo.child_links.assign(n, {});
  std::vector<bool> seen(n, false);
  seen[topo.root] = true;
  topo.order.push_back(topo.root);
  for (std::size_t head = 0; head < topo.order.size(); ++head) {
    const auto u = topo.order[head];
    for (const auto& e : adj[u]) {
      if (seen[e.other]) {
        if (topo.parent[u].bus == e.other && u != topo.root &&
            (topo.parent[u].branch == e.branch && topo.parent[u].link == e.link))
          continue;
        throw StructuralError("branch set not radial");
      }
      seen[e.other] = true;
      topo.parent[e.other] = {u, e.branch, e.link};
      if (e.branch >= 0) {
        if (feeder.branches[static_cast<std::size_t>(e.branch)].from != feeder.buses[u].id)
          throw StructuralError(fmt::format("branch {} is oriented away from the substation", e.branch));
        topo.child_branches[u].push_back(static_cast<std::size_t>(e.branch));
      } else {
        if (feeder.boundary_links[static_cast<std::size_t>(e.link)].primary_bus != feeder.buses[u].id)
          throw StructuralError(fmt::format("boundary link {} is oriented away from the substation", e.link));
        topo.child_links[u].push_back(static_cast<std::size_t>(e.link));
      }
      topo.order.push_back(e.other);
    }
  }
  if (topo.order.size() != n) throw StructuralError("branch set not radial");
  return topo;
}

Partition partition(std::shared_ptr<const Feeder> feeder_ptr) {
  const Feeder& feeder = *feeder_ptr;
  for (const auto& l : feeder.boundary_links)
    if (!feeder.has_bus(l.boundary_bus) || !feeder.has_bus(l.primary_bus))
      throw StructuralError(fmt::format("dangling boundary link for secondary {}", l.secondary_id));

  Partition part;
  part.feeder = feeder_ptr;
  part.topology = build_topology(feeder);

  std::vector<std::size_t> link_order(feeder.boundary_links.size());
  for (std::size_t k = 0; k < link_order.size(); ++k) link_order[k] = k;
  std::sort(link_order.begin(), link_order.end(), [&](std::size_t a, std::size_t b) {
    return feeder.boundary_links[a].secondary_id < feeder.boundary_links[b].secondary_id;
  });

  std::map<int, std::size_t> follower_of;
  for (auto k : link_order) {
    const auto& l = feeder.boundary_links[k];
    follower_of[l.secondary_id] = part.followers.size();
    FollowerData f;
    f.secondary_id = l.secondary_id;
    f.root = l.boundary_bus;
    part.followers.push_back(f);
    part.links.push_back(l);
    part.leader.boundary_buses.push_back(l.primary_bus);
  }

  auto sub_of = [&](const Bus& b) -> SubNetwork& {
    if (b.zone.on_primary_side()) return part.leader;
    auto it = follower_of.find(b.zone.secondary);
    if (it == follower_of.end())
      throw StructuralError(fmt::format("bus {} belongs to secondary {} without a link", b.id, b.zone.secondary));
    return part.followers[it->second];
  };

  // Buses and branches in topological order so that every sub-network lists
  // parents before children.
  for (auto idx : part.topology.order) {
    const auto& b = feeder.buses[idx];
    sub_of(b).buses.push_back(b.id);
    for (auto br : part.topology.child_branches[idx]) sub_of(b).branches.push_back(br);
  }
  for (std::size_t k = 0; k < feeder.inverters.size(); ++k)
    sub_of(feeder.bus(feeder.inverters[k].bus)).inverters.push_back(k);
  return part;
}

}  // namespace dcvr
