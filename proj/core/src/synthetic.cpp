#include "dcvr/synthetic.hpp"

#include <cmath>

#include <fmt/format.h>

#include "dcvr/random.hpp"

namespace dcvr {

namespace {

// Overhead 13.8 kV line, ohm per mile.
constexpr Complex kPrimarySelf{0.3465, 1.0179};
constexpr Complex kPrimaryMutual{0.1560, 0.5017};
// Triplex secondary, ohm per km (split-phase loop folded to one equivalent phase).
constexpr Complex kTriplexSelf{0.60, 0.13};
constexpr double kTriplexMutualShare = 0.2;
// Service transformer series impedance on its own kVA base.
constexpr Complex kTransformerZ{0.012, 0.030};

double z_base_ohm(double kv, double base_kva) { return kv * kv * 1000.0 / base_kva; }

PhaseMatrix restrict(PhaseMask phases, Complex self, Complex mutual) {
  return PhaseMatrix::coupled(phases, self, mutual);
}

}  // namespace

PhaseConfig parse_phase_config(const std::string& text) {
  if (text == "three-phase" || text == "three_phase") return PhaseConfig::ThreePhase;
  if (text == "single-phase" || text == "single_phase") return PhaseConfig::SinglePhase;
  if (text == "mixed") return PhaseConfig::Mixed;
  throw ConfigError("unknown phase_config '" + text + "' (three-phase, single-phase, mixed)");
}

std::string to_string(PhaseConfig config) {
  switch (config) {
    case PhaseConfig::ThreePhase: return "three-phase";
    case PhaseConfig::SinglePhase: return "single-phase";
    case PhaseConfig::Mixed: return "mixed";
  }
  return "mixed";
}

SyntheticFeederSpec reference_fixture_spec() {
  SyntheticFeederSpec spec;
  spec.n_primary_buses = 13;
  spec.n_secondaries = 8;
  spec.buses_per_secondary = 4;
  spec.phase_config = PhaseConfig::Mixed;
  spec.seed = 2021;
  return spec;
}

Multipliers reference_snapshot() { return {0.8, 0.8, 0.3}; }

Feeder generate_synthetic_feeder(const SyntheticFeederSpec& spec) {
  if (spec.n_primary_buses < 1) throw ConfigError("n_primary_buses must be >= 1");
  if (spec.n_secondaries < 1) throw ConfigError("n_secondaries must be >= 1");
  if (spec.buses_per_secondary < 2)
    throw ConfigError("buses_per_secondary must be >= 2 (transformer node plus a customer)");
  if (spec.peak_load && !(*spec.peak_load > 0.0)) throw ConfigError("peak_load must be positive");
  if (spec.inverter_share < 0.0 || spec.inverter_oversize < 1.0)
    throw ConfigError("inverter_share must be >= 0 and inverter_oversize >= 1");

  Rng rng(spec.seed);
  Feeder f;
  f.v_substation = spec.v_substation;
  const double zb_primary = z_base_ohm(f.base_v_primary, f.base_power);
  const double zb_secondary = z_base_ohm(f.base_v_secondary, f.base_power);

  auto make_bus = [&](BusId id, Zone zone, PhaseMask phases) {
    Bus b;
    b.id = id;
    b.zone = zone;
    b.phases = phases;
    b.load_mult_p = PhaseVector(phases);
    b.load_mult_q = PhaseVector(phases);
    b.zip_p = spec.zip_p;
    b.zip_q = spec.zip_q;
    return b;
  };

  // Primary backbone: mostly a main line with occasional short laterals.
  for (int k = 0; k < spec.n_primary_buses; ++k) {
    f.buses.push_back(make_bus(k, Zone::primary(), PhaseMask::abc()));
    if (k == 0) continue;
    int parent = k - 1;
    if (k > 1 && rng.unit() < 0.3) parent = static_cast<int>(rng.integer(std::max(0, k - 4), k - 2));
    const double miles = rng.uniform(spec.primary_miles_min, spec.primary_miles_max);
    Branch br;
    br.from = parent;
    br.to = k;
    br.phases = PhaseMask::abc();
    br.z = restrict(br.phases, kPrimarySelf * miles / zb_primary, kPrimaryMutual * miles / zb_primary);
    f.branches.push_back(br);
  }
  f.substation_bus = 0;

  const int customers = spec.buses_per_secondary - 1;
  const Complex z_xfmr = kTransformerZ * (f.base_power / spec.transformer_kva);
  const double seg_km = spec.triplex_segment_m / 1000.0;
  const Complex z_seg = kTriplexSelf * seg_km / zb_secondary;

  BusId next_id = spec.n_primary_buses;
  std::vector<std::vector<std::size_t>> customer_buses(static_cast<std::size_t>(spec.n_secondaries));
  for (int n = 0; n < spec.n_secondaries; ++n) {
    PhaseMask phases = PhaseMask::abc();
    switch (spec.phase_config) {
      case PhaseConfig::ThreePhase: break;
      case PhaseConfig::SinglePhase: phases = PhaseMask::single(static_cast<std::size_t>(rng.integer(0, 2))); break;
      case PhaseConfig::Mixed: {
        const bool three = n == 0 || (n != 1 && rng.unit() < 0.25);
        const auto ph = static_cast<std::size_t>(rng.integer(0, 2));
        if (!three) phases = PhaseMask::single(ph);
        break;
      }
    }

    const int tap = spec.n_primary_buses == 1 ? 0 : static_cast<int>(rng.integer(1, spec.n_primary_buses - 1));
    const BusId bnd = next_id++;
    f.buses.push_back(make_bus(bnd, Zone::boundary(n), phases));
    const double lateral_miles = rng.uniform(0.05, 0.2);
    Branch lateral;
    lateral.from = tap;
    lateral.to = bnd;
    lateral.phases = phases;
    lateral.z = restrict(phases, kPrimarySelf * lateral_miles / zb_primary, kPrimaryMutual * lateral_miles / zb_primary);
    f.branches.push_back(lateral);

    const BusId copy = next_id++;
    f.buses.push_back(make_bus(copy, Zone::secondary_net(n), phases));
    BoundaryLink link;
    link.boundary_bus = copy;
    link.primary_bus = bnd;
    link.secondary_id = n;
    link.phases = phases;
    f.boundary_links.push_back(link);

    BusId prev = copy;
    for (int c = 0; c < customers; ++c) {
      const BusId id = next_id++;
      Bus b = make_bus(id, Zone::secondary_net(n), phases);
      for (std::size_t p = 0; p < kPhases; ++p) {
        if (!phases.has(p)) continue;
        const double pl = rng.uniform(0.06, 0.12);
        const double pf = rng.uniform(0.90, 0.97);
        b.load_mult_p.set(p, pl);
        b.load_mult_q.set(p, pl * std::tan(std::acos(pf)));
      }
      customer_buses[static_cast<std::size_t>(n)].push_back(f.buses.size());
      f.buses.push_back(b);

      Branch br;
      br.from = prev;
      br.to = id;
      br.phases = phases;
      if (c == 0) {
        br.z = PhaseMatrix::diagonal(phases, z_xfmr);
      } else {
        const double len = rng.uniform(0.7, 1.3);
        br.z = restrict(phases, z_seg * len, z_seg * len * kTriplexMutualShare);
      }
      f.branches.push_back(br);
      prev = id;
    }
  }

  double total = 0.0;
  for (const auto& b : f.buses) total += b.load_mult_p.sum();
  if (spec.peak_load) {
    const double scale = *spec.peak_load / total;
    for (auto& b : f.buses) {
      b.load_mult_p = b.load_mult_p * scale;
      b.load_mult_q = b.load_mult_q * scale;
    }
  }

  // Two inverters per secondary (middle and last customer), together sized to
  // inverter_share of that secondary's per-phase peak load.
  for (int n = 0; n < spec.n_secondaries; ++n) {
    const auto& cust = customer_buses[static_cast<std::size_t>(n)];
    const PhaseMask phases = f.buses[cust.front()].phases;
    PhaseVector peak(phases);
    for (auto idx : cust) peak = peak + f.buses[idx].load_mult_p;
    const std::size_t sites[2] = {cust[(cust.size() - 1) / 2], cust.back()};
    for (auto site : sites) {
      Inverter inv;
      inv.bus = f.buses[site].id;
      inv.s_cap = peak * (spec.inverter_share / 2.0);
      inv.p_g = inv.s_cap * (1.0 / spec.inverter_oversize);
      f.inverters.push_back(inv);
    }
  }
  return f;
}

}  // namespace dcvr
