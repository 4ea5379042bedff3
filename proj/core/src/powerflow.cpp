#include "dcvr/powerflow.hpp"

#include <cmath>
#include <ostream>

#include <fmt/format.h>

#include "dcvr/feeder_io.hpp"
#include "dcvr/random.hpp"

namespace dcvr {

namespace {

using Triple = std::array<Complex, kPhases>;

std::vector<std::vector<std::size_t>> inverters_by_bus(const Feeder& f) {
  std::vector<std::vector<std::size_t>> out(f.buses.size());
  for (std::size_t k = 0; k < f.inverters.size(); ++k) out[f.bus_index(f.inverters[k].bus)].push_back(k);
  return out;
}

PhaseVector magnitudes(PhaseMask mask, const Triple& v) {
  PhaseVector out(mask);
  for (std::size_t p = 0; p < kPhases; ++p) out.set(p, std::abs(v[p]));
  return out;
}

ComplexPhaseVector net_load(const Bus& bus, const std::vector<std::size_t>& invs, const Feeder& f,
                            const PhaseVector& vmag, const Dispatch& q, const Multipliers& mult) {
  const auto p = zip_load_p(bus, vmag, mult.load_p);
  const auto ql = zip_load_q(bus, vmag, mult.load_q);
  ComplexPhaseVector s(bus.phases);
  for (std::size_t ph = 0; ph < kPhases; ++ph) s.set(ph, {p[ph], ql[ph]});
  for (auto k : invs) {
    const auto& inv = f.inverters[k];
    for (std::size_t ph = 0; ph < kPhases; ++ph)
      if (bus.phases.has(ph)) s.set(ph, s[ph] - Complex(inv.p_g[ph] * mult.pv, q[k][ph]));
  }
  return s;
}

}  // namespace

Dispatch zero_dispatch(const Feeder& feeder) {
  Dispatch d;
  d.reserve(feeder.inverters.size());
  for (const auto& inv : feeder.inverters) d.emplace_back(inv.s_cap.mask());
  return d;
}

PhaseVector zip_load_p(const Bus& bus, const PhaseVector& vmag, double scale) {
  PhaseVector out(bus.phases);
  for (std::size_t p = 0; p < kPhases; ++p) out.set(p, scale * bus.load_mult_p[p] * bus.zip_p.factor(vmag[p]));
  return out;
}

PhaseVector zip_load_q(const Bus& bus, const PhaseVector& vmag, double scale) {
  PhaseVector out(bus.phases);
  for (std::size_t p = 0; p < kPhases; ++p) out.set(p, scale * bus.load_mult_q[p] * bus.zip_q.factor(vmag[p]));
  return out;
}

ComplexPhaseVector bus_net_load(const Feeder& feeder, std::size_t bus_index, const PhaseVector& vmag,
                                const Dispatch& q_dispatch, const Multipliers& mult) {
  std::vector<std::size_t> invs;
  const auto id = feeder.buses[bus_index].id;
  for (std::size_t k = 0; k < feeder.inverters.size(); ++k)
    if (feeder.inverters[k].bus == id) invs.push_back(k);
  return net_load(feeder.buses[bus_index], invs, feeder, vmag, q_dispatch, mult);
}

PowerFlowResult solve_powerflow(const Feeder& feeder, const Dispatch& q_dispatch, const Multipliers& mult,
                                const PowerFlowOptions& options) {
  if (q_dispatch.size() != feeder.inverters.size())
    throw std::invalid_argument(fmt::format("dispatch has {} entries for {} inverters", q_dispatch.size(),
                                            feeder.inverters.size()));
  const auto topo = build_topology(feeder);
  const auto invs = inverters_by_bus(feeder);
  const std::size_t nb = feeder.buses.size();

  std::vector<Triple> v(nb), current(nb);
  for (std::size_t b = 0; b < nb; ++b)
    for (std::size_t p = 0; p < kPhases; ++p)
      if (feeder.buses[b].phases.has(p)) v[b][p] = feeder.v_substation * nominal_phasor(p);

  auto backward = [&] {
    for (auto it = topo.order.rbegin(); it != topo.order.rend(); ++it) {
      const auto b = *it;
      const auto& bus = feeder.buses[b];
      const auto s = net_load(bus, invs[b], feeder, magnitudes(bus.phases, v[b]), q_dispatch, mult);
      Triple i{};
      for (std::size_t p = 0; p < kPhases; ++p)
        if (bus.phases.has(p)) i[p] = std::conj(s[p] / v[b][p]);
      for (auto br : topo.child_branches[b]) {
        const auto child = feeder.bus_index(feeder.branches[br].to);
        for (std::size_t p = 0; p < kPhases; ++p) i[p] += current[child][p];
      }
      for (auto l : topo.child_links[b]) {
        const auto child = feeder.bus_index(feeder.boundary_links[l].boundary_bus);
        for (std::size_t p = 0; p < kPhases; ++p) i[p] += current[child][p];
      }
      current[b] = i;
    }
  };

  auto forward = [&] {
    double change = 0.0;
    for (auto b : topo.order) {
      if (b == topo.root) continue;
      const auto& par = topo.parent[b];
      const auto mask = feeder.buses[b].phases;
      Triple next{};
      if (par.branch >= 0) {
        const auto& z = feeder.branches[static_cast<std::size_t>(par.branch)].z;
        for (std::size_t r = 0; r < kPhases; ++r) {
          if (!mask.has(r)) continue;
          Complex drop{};
          for (std::size_t c = 0; c < kPhases; ++c) drop += z(r, c) * current[b][c];
          next[r] = v[par.bus][r] - drop;
        }
      } else {
        for (std::size_t p = 0; p < kPhases; ++p)
          if (mask.has(p)) next[p] = v[par.bus][p];
      }
      for (std::size_t p = 0; p < kPhases; ++p) change = std::max(change, std::abs(next[p] - v[b][p]));
      v[b] = next;
    }
    return change;
  };

  PowerFlowResult result;
  double change = 0.0;
  for (int it = 1; it <= options.max_iter; ++it) {
    backward();
    change = forward();
    result.iterations = it;
    if (!std::isfinite(change)) break;
    for (std::size_t b = 0; b < nb; ++b)
      for (std::size_t p = 0; p < kPhases; ++p)
        if (feeder.buses[b].phases.has(p) && std::abs(v[b][p]) < kVoltageCollapseFloor)
          throw DivergenceError(fmt::format("power flow collapsed at bus {} after {} sweeps", feeder.buses[b].id, it),
                                change);
    if (change <= options.tolerance) {
      result.converged = true;
      break;
    }
  }
  result.last_update = change;
  if (!result.converged)
    throw DivergenceError(
        fmt::format("power flow did not converge in {} sweeps (last update {})", options.max_iter, change), change);

  // Currents consistent with the final voltages.
  backward();

  auto& m = result.measurements;
  m.timestamp = options.timestamp;
  m.v_bus.reserve(nb);
  m.v_phasor.reserve(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    const auto mask = feeder.buses[b].phases;
    m.v_phasor.emplace_back(mask, v[b]);
    m.v_bus.push_back(magnitudes(mask, v[b]));
  }
  for (const auto& br : feeder.branches) {
    const auto from = feeder.bus_index(br.from);
    const auto to = feeder.bus_index(br.to);
    ComplexPhaseVector s(br.phases);
    for (std::size_t p = 0; p < kPhases; ++p) s.set(p, v[from][p] * std::conj(current[to][p]));
    m.s_branch.push_back(s);
  }
  for (const auto& link : feeder.boundary_links) {
    const auto copy = feeder.bus_index(link.boundary_bus);
    ComplexPhaseVector s(link.phases);
    for (std::size_t p = 0; p < kPhases; ++p) s.set(p, v[copy][p] * std::conj(current[copy][p]));
    m.s_link.push_back(s);
  }

  if (options.noise_sigma > 0.0) {
    Rng rng(options.noise_seed);
    for (std::size_t b = 0; b < nb; ++b) {
      auto vm = m.v_bus[b];
      auto vp = m.v_phasor[b];
      for (std::size_t p = 0; p < kPhases; ++p) {
        if (!vm.mask().has(p)) continue;
        const double noisy = vm[p] + options.noise_sigma * rng.normal();
        vp.set(p, vp[p] * (noisy / vm[p]));
        vm.set(p, noisy);
      }
      m.v_bus[b] = vm;
      m.v_phasor[b] = vp;
    }
    for (auto* group : {&m.s_branch, &m.s_link})
      for (auto& s : *group)
        for (std::size_t p = 0; p < kPhases; ++p)
          s.set(p, s[p] + Complex(options.noise_sigma * rng.normal(), options.noise_sigma * rng.normal()));
  }
  return result;
}

EpsilonSet EpsilonSet::zeros(const Feeder& feeder) {
  EpsilonSet e;
  for (const auto& br : feeder.branches) {
    e.eps_p.emplace_back(br.phases);
    e.eps_q.emplace_back(br.phases);
    e.eps_v.emplace_back(br.phases);
  }
  return e;
}

DropMatrices drop_matrices(const Branch& branch) {
  const auto gz = unbalance_pattern(branch.phases).hadamard(branch.z);
  DropMatrices d;
  for (std::size_t r = 0; r < kPhases; ++r)
    for (std::size_t c = 0; c < kPhases; ++c) {
      d.r[r][c] = gz(r, c).real();
      d.x[r][c] = gz(r, c).imag();
    }
  return d;
}

EpsilonSet estimate_epsilon(const Feeder& feeder, const MeasurementSet& m) {
  if (m.s_branch.size() != feeder.branches.size() || m.v_bus.size() != feeder.buses.size())
    throw MeasurementError("measurement set does not cover the feeder");
  const bool have_phasors = m.v_phasor.size() == feeder.buses.size();

  auto phasor = [&](std::size_t b, std::size_t p) {
    if (m.v_bus[b][p] <= kVoltageCollapseFloor)
      throw MeasurementError(fmt::format("bus {} phase {}: voltage {} below collapse floor", feeder.buses[b].id,
                                         phase_letter(p), m.v_bus[b][p]));
    // Magnitude-only feeds are placed on the nominal balanced angles.
    return have_phasors ? m.v_phasor[b][p] : m.v_bus[b][p] * nominal_phasor(p);
  };

  auto eps = EpsilonSet::zeros(feeder);
  for (std::size_t k = 0; k < feeder.branches.size(); ++k) {
    const auto& br = feeder.branches[k];
    const auto i = feeder.bus_index(br.from);
    const auto j = feeder.bus_index(br.to);
    const auto& s = m.s_branch[k];
    const auto drop = drop_matrices(br);

    Triple vi{}, vj{}, cur{};
    for (std::size_t p = 0; p < kPhases; ++p) {
      if (!br.phases.has(p)) continue;
      vi[p] = phasor(i, p);
      vj[p] = phasor(j, p);
      cur[p] = std::conj(s[p] / vi[p]);
    }
    for (std::size_t r = 0; r < kPhases; ++r) {
      if (!br.phases.has(r)) continue;
      Complex zi{};
      double linear = 0.0;
      for (std::size_t c = 0; c < kPhases; ++c) {
        zi += br.z(r, c) * cur[c];
        linear += drop.r[r][c] * s[c].real() + drop.x[r][c] * s[c].imag();
      }
      const Complex loss = std::conj(cur[r]) * (vi[r] - vj[r]);
      eps.eps_p[k].set(r, loss.real());
      eps.eps_q[k].set(r, loss.imag());
      eps.eps_v[k].set(r, std::norm(zi) - 2.0 * (std::conj(vi[r]) * zi).real() + 2.0 * linear);
    }
  }
  return eps;
}

ZipAffine linearize_zip(const Bus& bus, const PhaseVector& v_m, double scale_p, double scale_q) {
  ZipAffine a{PhaseVector(bus.phases), PhaseVector(bus.phases), PhaseVector(bus.phases), PhaseVector(bus.phases)};
  for (std::size_t p = 0; p < kPhases; ++p) {
    if (!bus.phases.has(p)) continue;
    const double vm = v_m[p];
    if (!(vm > 0.0))
      throw std::domain_error(fmt::format("bus {} phase {}: expansion magnitude {} not positive", bus.id,
                                          phase_letter(p), vm));
    // |V| ~ vm/2 + v/(2 vm) around v = vm^2.
    const double lp = scale_p * bus.load_mult_p[p];
    const double lq = scale_q * bus.load_mult_q[p];
    a.a_p.set(p, lp * (bus.zip_p.z + bus.zip_p.i / (2.0 * vm)));
    a.b_p.set(p, lp * (bus.zip_p.i * vm / 2.0 + bus.zip_p.p));
    a.a_q.set(p, lq * (bus.zip_q.z + bus.zip_q.i / (2.0 * vm)));
    a.b_q.set(p, lq * (bus.zip_q.i * vm / 2.0 + bus.zip_q.p));
  }
  return a;
}

std::vector<ZipAffine> linearize_all(const Feeder& feeder, const MeasurementSet& m, const Multipliers& mult) {
  std::vector<ZipAffine> out;
  out.reserve(feeder.buses.size());
  for (std::size_t b = 0; b < feeder.buses.size(); ++b)
    out.push_back(linearize_zip(feeder.buses[b], m.v_bus[b], mult.load_p, mult.load_q));
  return out;
}

void write_measurement_csv(std::ostream& out, const Feeder& feeder, const MeasurementSet& m, bool header) {
  if (header) out << "time,element,phase,quantity,value\n";
  for (std::size_t b = 0; b < feeder.buses.size(); ++b)
    for (std::size_t p = 0; p < kPhases; ++p)
      if (feeder.buses[b].phases.has(p))
        out << m.timestamp << ",bus:" << feeder.buses[b].id << ',' << phase_letter(p) << ",v,"
            << format_double(m.v_bus[b][p]) << '\n';
  for (std::size_t k = 0; k < feeder.branches.size(); ++k) {
    const auto& br = feeder.branches[k];
    for (std::size_t p = 0; p < kPhases; ++p) {
      if (!br.phases.has(p)) continue;
      const auto id = fmt::format("branch:{}-{}", br.from, br.to);
      out << m.timestamp << ',' << id << ',' << phase_letter(p) << ",P," << format_double(m.s_branch[k][p].real())
          << '\n';
      out << m.timestamp << ',' << id << ',' << phase_letter(p) << ",Q," << format_double(m.s_branch[k][p].imag())
          << '\n';
    }
  }
}

}  // namespace dcvr
