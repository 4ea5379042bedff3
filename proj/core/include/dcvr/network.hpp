#pragma once

#include <cstddef>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "dcvr/phase.hpp"

namespace dcvr {

using BusId = int;

/// Raised for malformed generator/CLI configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when feeder topology cannot support the requested operation.
class StructuralError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ZoneKind { Primary, Secondary, Boundary };

/// Network zone of a bus. `secondary` is the owning secondary network for
/// Secondary and Boundary zones and -1 for Primary.
struct Zone {
  ZoneKind kind = ZoneKind::Primary;
  int secondary = -1;

  static Zone primary() { return {}; }
  static Zone secondary_net(int n) { return {ZoneKind::Secondary, n}; }
  static Zone boundary(int n) { return {ZoneKind::Boundary, n}; }

  /// Buses of the leader (primary) sub-network: Primary and Boundary zones.
  bool on_primary_side() const { return kind != ZoneKind::Secondary; }
  std::string str() const;
  static Zone parse(const std::string& text);
  bool operator==(const Zone&) const = default;
};

/// Z, I and P shares of a voltage dependent load; sums to one.
struct ZipCoefficients {
  double z = 0.0;
  double i = 0.0;
  double p = 1.0;

  double sum() const { return z + i + p; }
  /// Load factor at voltage magnitude `vmag` (1.0 at nominal voltage).
  double factor(double vmag) const { return z * vmag * vmag + i * vmag + p; }
  bool operator==(const ZipCoefficients&) const = default;
};

/// Active/reactive ZIP coefficients used throughout the reference experiments.
inline constexpr ZipCoefficients kReferenceZipP{0.96, -1.17, 1.21};
inline constexpr ZipCoefficients kReferenceZipQ{6.28, -10.16, 4.88};

inline constexpr double kDefaultVMin = 0.95 * 0.95;
inline constexpr double kDefaultVMax = 1.05 * 1.05;

struct Bus {
  BusId id = 0;
  Zone zone;
  PhaseMask phases = PhaseMask::abc();
  PhaseVector load_mult_p;  ///< nominal active load per phase at 1 p.u. voltage
  PhaseVector load_mult_q;
  ZipCoefficients zip_p;
  ZipCoefficients zip_q;
  double v_min = kDefaultVMin;  ///< squared magnitude bounds
  double v_max = kDefaultVMax;
};

struct Branch {
  BusId from = 0;
  BusId to = 0;
  PhaseMatrix z;
  PhaseMask phases = PhaseMask::abc();
};

struct Inverter {
  BusId bus = 0;
  PhaseVector s_cap;
  PhaseVector p_g;  ///< rated active output; scaled by the PV multiplier at run time

  /// Available reactive capacity sqrt(max(s^2 - p^2, 0)) with active output p_g * pv_mult.
  PhaseVector q_cap(double pv_mult = 1.0) const;
};

/// Ideal coupling between primary bus i and its secondary copy bus i'.
struct BoundaryLink {
  BusId boundary_bus = 0;  ///< i', root of the secondary network
  BusId primary_bus = 0;   ///< i, leaf of the primary network
  int secondary_id = 0;
  PhaseMask phases = PhaseMask::abc();

  /// Length of x_B and z_B: [p or P-sum, q or Q-sum, v] on each present phase.
  std::size_t dim() const { return 3 * phases.count(); }
  Eigen::MatrixXd a_matrix() const;
  Eigen::MatrixXd b_matrix() const;
};

struct Feeder {
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  std::vector<Inverter> inverters;
  std::vector<BoundaryLink> boundary_links;
  BusId substation_bus = 0;
  double v_substation = 1.0;  ///< regulated magnitude at the substation bus
  double base_power = 100.0;       ///< kVA
  double base_v_primary = 13.8;    ///< kV
  double base_v_secondary = 0.208; ///< kV

  /// Position of a bus in `buses`; throws StructuralError if unknown.
  std::size_t bus_index(BusId id) const;
  const Bus& bus(BusId id) const { return buses[bus_index(id)]; }
  bool has_bus(BusId id) const;
  std::size_t secondary_count() const { return boundary_links.size(); }
};

/// Lists every violated structural or data invariant; empty means valid.
std::vector<std::string> validate(const Feeder& feeder);

/// Rooted radial view of a validated feeder; boundary links act as ideal ties.
struct Topology {
  /// Edge into a bus from its parent: either a branch or a boundary link.
  struct Parent {
    std::size_t bus = 0;  ///< parent bus index
    int branch = -1;      ///< index into Feeder::branches, or -1 for a link
    int link = -1;        ///< index into Feeder::boundary_links, or -1
  };

  std::size_t root = 0;
  std::vector<std::size_t> order;  ///< bus indices, parents before children
  std::vector<Parent> parent;      ///< per bus index; meaningless for root
  std::vector<std::vector<std::size_t>> child_branches;  ///< per bus index
  std::vector<std::vector<std::size_t>> child_links;     ///< per bus index
};

/// Throws StructuralError when branches plus links do not form a spanning tree.
Topology build_topology(const Feeder& feeder);

struct SubNetwork {
  std::vector<BusId> buses;
  std::vector<std::size_t> branches;   ///< indices into Feeder::branches
  std::vector<std::size_t> inverters;  ///< indices into Feeder::inverters
};

struct LeaderData : SubNetwork {
  /// Primary-side boundary bus of each follower, in follower order.
  std::vector<BusId> boundary_buses;
};

struct FollowerData : SubNetwork {
  int secondary_id = 0;
  BusId root = 0;  ///< copy bus i'
};

/// Leader/follower split of a feeder. Followers are ordered by secondary id and
/// `links[n]` couples follower n to the leader.
struct Partition {
  std::shared_ptr<const Feeder> feeder;
  Topology topology;
  LeaderData leader;
  std::vector<FollowerData> followers;
  std::vector<BoundaryLink> links;

  std::size_t follower_count() const { return followers.size(); }
};

/// Splits a valid feeder into the leader and follower problem data.
Partition partition(std::shared_ptr<const Feeder> feeder);

}  // namespace dcvr
