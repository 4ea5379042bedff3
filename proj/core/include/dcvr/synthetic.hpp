#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "dcvr/network.hpp"
#include "dcvr/powerflow.hpp"

namespace dcvr {

enum class PhaseConfig { ThreePhase, SinglePhase, Mixed };

PhaseConfig parse_phase_config(const std::string& text);
std::string to_string(PhaseConfig config);

/// Knobs of the synthetic integrated primary-secondary feeder.
///
/// Defaults describe 13.8 kV overhead primary construction (about 0.35+j1.02
/// ohm/mile self, 0.16+j0.50 ohm/mile mutual), 25 kVA service transformers
/// (1.2%+j3.0% on own base) and 0.208 kV triplex secondaries (about
/// 0.60+j0.13 ohm/km, split-phase folded to one equivalent phase).
/// Everything is converted to per-unit on a 100 kVA base.
struct SyntheticFeederSpec {
  int n_primary_buses = 13;
  int n_secondaries = 8;
  int buses_per_secondary = 4;  ///< copy bus i' plus customer buses
  PhaseConfig phase_config = PhaseConfig::Mixed;
  std::uint64_t seed = 1;

  /// Total active peak load (p.u.). When unset, customers draw 0.06-0.12 p.u. each.
  std::optional<double> peak_load;
  double inverter_share = 0.30;      ///< sum of inverter s_cap over total peak load
  double inverter_oversize = 1.1;    ///< s_cap / rated PV active output
  double v_substation = 1.0;
  double primary_miles_min = 0.4;
  double primary_miles_max = 1.2;
  double transformer_kva = 25.0;
  double triplex_segment_m = 60.0;
  ZipCoefficients zip_p = kReferenceZipP;
  ZipCoefficients zip_q = kReferenceZipQ;
};

/// Deterministic for a fixed spec. Each secondary gets two inverters, one at
/// its middle customer bus and one at its last. Throws ConfigError for invalid
/// dimensions.
Feeder generate_synthetic_feeder(const SyntheticFeederSpec& spec);

/// The 13-bus primary, 8-secondary mixed-phase fixture used by the experiments.
SyntheticFeederSpec reference_fixture_spec();

/// Load 0.8, PV 0.3: the operating point the single-step experiments use.
Multipliers reference_snapshot();

}  // namespace dcvr
