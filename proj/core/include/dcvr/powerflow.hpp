#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <vector>

#include "dcvr/network.hpp"

namespace dcvr {

/// The oracle did not converge; carries the last voltage update size.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, double last_residual)
      : std::runtime_error(what), last_residual_(last_residual) {}
  double last_residual() const { return last_residual_; }

 private:
  double last_residual_;
};

/// Measurement feed unusable (voltage collapse or incomplete data).
class MeasurementError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Time-series scaling applied on top of the feeder's nominal values.
struct Multipliers {
  double load_p = 1.0;
  double load_q = 1.0;
  double pv = 1.0;
};

/// Reactive set-point of every inverter, indexed like Feeder::inverters.
using Dispatch = std::vector<PhaseVector>;

Dispatch zero_dispatch(const Feeder& feeder);

/// Snapshot of the physical system. Vectors are indexed like the feeder's
/// buses, branches and boundary links.
struct MeasurementSet {
  std::vector<ComplexPhaseVector> s_branch;  ///< sending-end S_ij
  std::vector<ComplexPhaseVector> s_link;    ///< power entering each secondary at i'
  std::vector<PhaseVector> v_bus;            ///< voltage magnitude (not squared)
  std::vector<ComplexPhaseVector> v_phasor;  ///< complex bus voltages
  int timestamp = 0;
};

struct PowerFlowOptions {
  int max_iter = 100;
  double tolerance = 1e-10;  ///< max voltage update between sweeps (p.u.)
  double noise_sigma = 0.0;  ///< additive Gaussian measurement noise (p.u.)
  std::uint64_t noise_seed = 0;
  int timestamp = 0;
};

struct PowerFlowResult {
  MeasurementSet measurements;
  bool converged = false;
  int iterations = 0;
  double last_update = 0.0;
};

/// Backward/forward sweep on the radial feeder with ZIP loads re-evaluated at
/// every sweep. Throws DivergenceError after max_iter sweeps.
PowerFlowResult solve_powerflow(const Feeder& feeder, const Dispatch& q_dispatch,
                                const Multipliers& mult, const PowerFlowOptions& options = {});

/// Net complex power drawn at a bus (ZIP load minus inverter output) at the given voltages.
ComplexPhaseVector bus_net_load(const Feeder& feeder, std::size_t bus_index, const PhaseVector& vmag,
                                const Dispatch& q_dispatch, const Multipliers& mult);

/// True ZIP load of a bus at voltage magnitudes `vmag`, with time-series scaling.
PhaseVector zip_load_p(const Bus& bus, const PhaseVector& vmag, double scale = 1.0);
PhaseVector zip_load_q(const Bus& bus, const PhaseVector& vmag, double scale = 1.0);

/// Nonlinear loss and voltage-drop terms held constant by the linearized model.
/// Indexed like Feeder::branches; boundary links are lossless.
struct EpsilonSet {
  std::vector<PhaseVector> eps_p;
  std::vector<PhaseVector> eps_q;
  std::vector<PhaseVector> eps_v;

  static EpsilonSet zeros(const Feeder& feeder);
};

/// Voltage magnitude below which a measurement is treated as collapsed.
inline constexpr double kVoltageCollapseFloor = 1e-3;

/// Loss and drop terms from measured branch power and bus voltage phasors.
/// eps_p + j eps_q = (S ./ V_i) .* (V_i - V_j) is the per-phase series loss.
/// eps_v is |z (S* ./ V_i*)|^2 plus the unbalance remainder left by the
/// nominal-ratio drop matrices, so the linearized drop equation is exact at
/// the measured point. Throws MeasurementError on collapsed voltages.
EpsilonSet estimate_epsilon(const Feeder& feeder, const MeasurementSet& m);

/// Linearized drop matrices: rbar + j xbar = pattern .* z with the nominal
/// phasor-ratio pattern of unbalance_pattern().
struct DropMatrices {
  std::array<std::array<double, kPhases>, kPhases> r{};
  std::array<std::array<double, kPhases>, kPhases> x{};
};
DropMatrices drop_matrices(const Branch& branch);

/// Affine ZIP model p^ZIP ~ a_p .* v + b_p (v squared magnitude), tangent to
/// the true model at the measured magnitude.
struct ZipAffine {
  PhaseVector a_p, b_p, a_q, b_q;
};

/// Throws std::domain_error if a present-phase magnitude is not positive.
ZipAffine linearize_zip(const Bus& bus, const PhaseVector& v_m, double scale_p = 1.0, double scale_q = 1.0);

/// linearize_zip for every bus at the measured voltages.
std::vector<ZipAffine> linearize_all(const Feeder& feeder, const MeasurementSet& m, const Multipliers& mult);

/// Long-format CSV rows: time,element,phase,quantity,value.
void write_measurement_csv(std::ostream& out, const Feeder& feeder, const MeasurementSet& m, bool header = true);

}  // namespace dcvr
