#pragma once

#include <memory>

#include "dcvr/network.hpp"
#include "dcvr/random.hpp"

namespace dcvr::test {

inline Bus plain_bus(BusId id, Zone zone, PhaseMask phases = PhaseMask::abc()) {
  Bus b;
  b.id = id;
  b.zone = zone;
  b.phases = phases;
  b.load_mult_p = PhaseVector(phases);
  b.load_mult_q = PhaseVector(phases);
  return b;
}

/// Substation bus 0 feeding bus 1 over one branch; constant-power load on bus 1.
inline Feeder two_bus(PhaseMask phases, Complex z_self, Complex z_mutual, double p, double q) {
  Feeder f;
  f.buses.push_back(plain_bus(0, Zone::primary(), phases));
  auto b = plain_bus(1, Zone::primary(), phases);
  b.load_mult_p = PhaseVector::uniform(phases, p);
  b.load_mult_q = PhaseVector::uniform(phases, q);
  f.buses.push_back(b);
  Branch br;
  br.from = 0;
  br.to = 1;
  br.phases = phases;
  br.z = PhaseMatrix::coupled(phases, z_self, z_mutual);
  f.branches.push_back(br);
  return f;
}

/// Primary chain 0-1-2, boundary bus 3 off bus 2, secondary copy bus 4 and
/// customer buses 5, 6 with an inverter on 6.
inline Feeder one_secondary(PhaseMask sec_phases = PhaseMask::abc(), bool with_inverter = true) {
  Feeder f;
  f.buses.push_back(plain_bus(0, Zone::primary()));
  for (BusId id : {1, 2}) {
    auto b = plain_bus(id, Zone::primary());
    b.load_mult_p = PhaseVector::uniform(PhaseMask::abc(), 0.2);
    b.load_mult_q = PhaseVector::uniform(PhaseMask::abc(), 0.08);
    b.zip_p = kReferenceZipP;
    b.zip_q = kReferenceZipQ;
    f.buses.push_back(b);
  }
  f.buses.push_back(plain_bus(3, Zone::boundary(0), sec_phases));
  f.buses.push_back(plain_bus(4, Zone::secondary_net(0), sec_phases));
  for (BusId id : {5, 6}) {
    auto b = plain_bus(id, Zone::secondary_net(0), sec_phases);
    b.load_mult_p = PhaseVector::uniform(sec_phases, 0.1);
    b.load_mult_q = PhaseVector::uniform(sec_phases, 0.04);
    b.zip_p = kReferenceZipP;
    b.zip_q = kReferenceZipQ;
    f.buses.push_back(b);
  }
  auto add = [&](BusId from, BusId to, PhaseMask ph, Complex self, Complex mutual) {
    Branch br;
    br.from = from;
    br.to = to;
    br.phases = ph;
    br.z = PhaseMatrix::coupled(ph, self, mutual);
    f.branches.push_back(br);
  };
  add(0, 1, PhaseMask::abc(), {0.004, 0.010}, {0.0015, 0.004});
  add(1, 2, PhaseMask::abc(), {0.005, 0.012}, {0.002, 0.005});
  add(2, 3, sec_phases, {0.001, 0.003}, {0.0005, 0.0015});
  add(4, 5, sec_phases, {0.02, 0.05}, {0.0, 0.0});
  add(5, 6, sec_phases, {0.03, 0.01}, {0.006, 0.002});
  BoundaryLink link;
  link.boundary_bus = 4;
  link.primary_bus = 3;
  link.secondary_id = 0;
  link.phases = sec_phases;
  f.boundary_links.push_back(link);
  if (with_inverter) {
    Inverter inv;
    inv.bus = 6;
    inv.s_cap = PhaseVector::uniform(sec_phases, 0.08);
    inv.p_g = PhaseVector::uniform(sec_phases, 0.05);
    f.inverters.push_back(inv);
  }
  return f;
}

/// Small random radial feeder with mixed phasing and ZIP loads; no secondaries.
inline Feeder random_radial(Rng& rng, int n_buses) {
  Feeder f;
  f.buses.push_back(plain_bus(0, Zone::primary()));
  for (int k = 1; k < n_buses; ++k) {
    const auto parent = static_cast<std::size_t>(rng.integer(0, k - 1));
    PhaseMask phases = f.buses[parent].phases;
    if (phases.count() == 3 && rng.unit() < 0.3) phases = PhaseMask::single(static_cast<std::size_t>(rng.integer(0, 2)));
    auto b = plain_bus(k, Zone::primary(), phases);
    for (std::size_t p = 0; p < kPhases; ++p) {
      b.load_mult_p.set(p, rng.uniform(0.0, 0.3));
      b.load_mult_q.set(p, rng.uniform(-0.05, 0.15));
    }
    const double kz = rng.uniform(0.0, 1.0);
    const double ki = rng.uniform(-0.5, 0.5);
    b.zip_p = {kz, ki, 1.0 - kz - ki};
    b.zip_q = kReferenceZipQ;
    f.buses.push_back(b);
    Branch br;
    br.from = f.buses[parent].id;
    br.to = k;
    br.phases = phases;
    const Complex self{rng.uniform(0.002, 0.02), rng.uniform(0.004, 0.04)};
    br.z = PhaseMatrix::coupled(phases, self, self * rng.uniform(0.0, 0.4));
    f.branches.push_back(br);
  }
  return f;
}

}  // namespace dcvr::test
