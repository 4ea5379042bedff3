#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dcvr/random.hpp"

namespace dcvr {

/// Follower n is agent n; the leader is kLeader.
using AgentId = int;
inline constexpr AgentId kLeader = -1;
inline constexpr int kNever = std::numeric_limits<int>::max();

std::string agent_name(AgentId agent);

/// Message to or from an agent that was never registered.
class RoutingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class PayloadKind { Broadcast, Update };
std::string to_string(PayloadKind kind);

/// Broadcast: x_B and the penalty from the leader. Update: z_B and lambda from a follower.
struct Payload {
  PayloadKind kind = PayloadKind::Update;
  Eigen::VectorXd boundary;
  Eigen::VectorXd lambda;
  double rho = 0.0;
};

struct Envelope {
  AgentId from = kLeader;
  AgentId to = 0;
  Payload payload;
  int send_clock = 0;
  int deliver_clock = 0;
  std::uint64_t sequence = 0;
};

/// Constant when min == max, otherwise uniform on [min, max] clocks.
struct Latency {
  int min = 0;
  int max = 0;
  static Latency constant(int clocks) { return {clocks, clocks}; }
  static Latency uniform(int lo, int hi) { return {lo, hi}; }
};

/// Agent offline on clocks [start, end], inclusive.
struct FailureWindow {
  AgentId agent = kLeader;
  int start = 0;
  int end = 0;
  bool contains(AgentId a, int clock) const { return a == agent && clock >= start && clock <= end; }
};

struct LatencyPolicy {
  Latency default_latency;
  std::map<AgentId, Latency> per_agent;  ///< keyed by sending follower
  double drop_probability = 0.0;
  std::vector<FailureWindow> failures;
  std::uint64_t seed = 0;

  /// Throws ConfigError on negative latencies or a drop probability outside [0, 1).
  void validate() const;
  const Latency& latency_of(AgentId sender) const;
};

/// One row of the event trace.
struct BusEvent {
  int clock = 0;
  std::string event;  ///< post, deliver, expedite, resend, select, bound_violation
  AgentId from = kLeader;
  AgentId to = kLeader;
  std::string payload_kind;
  int latency = 0;  ///< -1 while held
  std::string outcome;
};

struct BusCounts {
  std::size_t posted = 0, delivered = 0, dropped = 0, suppressed = 0, pending = 0;
  bool reconciles() const { return posted == delivered + dropped + suppressed + pending; }
};

/// Deterministic discrete-event message bus. Follower messages carry the
/// policy latency; leader broadcasts are due on their send clock. Delivery
/// order is (deliver_clock, sender, sequence) and each sender-receiver pair is FIFO.
class MessageBus {
 public:
  explicit MessageBus(LatencyPolicy policy = {});

  void register_agent(AgentId agent);
  bool registered(AgentId agent) const { return agents_.count(agent) != 0; }
  const LatencyPolicy& policy() const { return policy_; }

  /// Queues an envelope sent at its send_clock and returns its sequence
  /// number. A held envelope waits for expedite(). Throws RoutingError.
  std::uint64_t post(Envelope envelope, bool hold = false);

  /// Envelopes due at or before `clock` addressed to `agent`, in delivery order.
  std::vector<Envelope> poll(AgentId agent, int clock);

  /// Pulls every pending from -> to envelope forward to `clock`; false if none pending.
  bool expedite(AgentId from, AgentId to, int clock);
  bool has_pending(AgentId from, AgentId to) const;
  bool failed(AgentId agent, int clock) const;

  /// Records a coordinator decision (resend, select, bound_violation) in the trace.
  void note(int clock, const std::string& event, AgentId from, AgentId to, const std::string& outcome);

  /// Uniform k-subset of `pool`, drawn from the bus's own stream.
  std::vector<AgentId> sample_subset(std::vector<AgentId> pool, std::size_t k);

  BusCounts counts() const;
  const std::vector<BusEvent>& trace() const { return trace_; }
  /// clock,event,from,to,payload_kind,latency,outcome
  void write_trace_csv(std::ostream& out) const;

 private:
  int sample_latency(AgentId sender);

  LatencyPolicy policy_;
  Rng latency_rng_;
  Rng drop_rng_;
  Rng subset_rng_;
  std::set<AgentId> agents_;
  std::vector<Envelope> pending_;
  std::map<std::pair<AgentId, AgentId>, int> last_due_;
  std::uint64_t next_sequence_ = 0;
  BusCounts counts_;
  std::vector<BusEvent> trace_;
};

/// Schedule changes made to keep every follower within its delay bound.
struct DelayAdjustments {
  std::vector<AgentId> expedited;   ///< in-flight update pulled forward to this clock
  std::vector<AgentId> resend;      ///< nothing in flight: the follower must send now
  std::vector<AgentId> violations;  ///< bound cannot hold (sender or leader offline)
};

/// Follower n is due when clock - last_heard[n] >= tau[n]. Due followers get
/// their pending update expedited or are listed for a resend; when the leader
/// or the follower is offline and the staleness already exceeds tau, a
/// bound_violation event is logged instead.
DelayAdjustments enforce_bounded_delay(MessageBus& bus, int clock, const std::vector<int>& last_heard,
                                       const std::vector<int>& tau);

}  // namespace dcvr
