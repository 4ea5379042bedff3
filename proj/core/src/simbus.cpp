#include "dcvr/simbus.hpp"

#include <algorithm>
#include <ostream>

#include <fmt/format.h>

#include "dcvr/network.hpp"

namespace dcvr {

std::string agent_name(AgentId agent) { return agent == kLeader ? "leader" : fmt::format("f{}", agent); }

std::string to_string(PayloadKind kind) { return kind == PayloadKind::Broadcast ? "broadcast" : "update"; }

void LatencyPolicy::validate() const {
  auto check = [](const Latency& l, const std::string& who) {
    if (l.min < 0 || l.max < l.min) throw ConfigError(fmt::format("latency for {}: need 0 <= min <= max", who));
  };
  check(default_latency, "default");
  for (const auto& [agent, l] : per_agent) check(l, agent_name(agent));
  if (!(drop_probability >= 0.0 && drop_probability < 1.0))
    throw ConfigError("drop probability must lie in [0, 1)");
  for (const auto& w : failures)
    if (w.end < w.start) throw ConfigError(fmt::format("failure window for {} ends before it starts", agent_name(w.agent)));
}

const Latency& LatencyPolicy::latency_of(AgentId sender) const {
  auto it = per_agent.find(sender);
  return it == per_agent.end() ? default_latency : it->second;
}

MessageBus::MessageBus(LatencyPolicy policy)
    : policy_(std::move(policy)),
      latency_rng_(policy_.seed),
      drop_rng_(policy_.seed ^ 0x9e3779b97f4a7c15ULL),
      subset_rng_(policy_.seed ^ 0xc2b2ae3d27d4eb4fULL) {
  policy_.validate();
}

void MessageBus::register_agent(AgentId agent) { agents_.insert(agent); }

bool MessageBus::failed(AgentId agent, int clock) const {
  return std::any_of(policy_.failures.begin(), policy_.failures.end(),
                     [&](const FailureWindow& w) { return w.contains(agent, clock); });
}

int MessageBus::sample_latency(AgentId sender) {
  if (sender == kLeader) return 0;
  const auto& l = policy_.latency_of(sender);
  if (l.min == l.max) return l.min;
  return static_cast<int>(latency_rng_.integer(l.min, l.max));
}

std::uint64_t MessageBus::post(Envelope e, bool hold) {
  if (!registered(e.from)) throw RoutingError("unregistered sender " + agent_name(e.from));
  if (!registered(e.to)) throw RoutingError("unregistered receiver " + agent_name(e.to));
  e.sequence = next_sequence_++;
  ++counts_.posted;
  const auto kind = to_string(e.payload.kind);
  // Draw in a fixed order so outcomes never shift the random streams.
  const int latency = hold ? 0 : sample_latency(e.from);
  const bool dropped = policy_.drop_probability > 0.0 && drop_rng_.unit() < policy_.drop_probability;
  if (failed(e.from, e.send_clock)) {
    ++counts_.suppressed;
    trace_.push_back({e.send_clock, "post", e.from, e.to, kind, hold ? -1 : latency, "suppressed"});
    return e.sequence;
  }
  if (dropped) {
    ++counts_.dropped;
    trace_.push_back({e.send_clock, "post", e.from, e.to, kind, hold ? -1 : latency, "dropped"});
    return e.sequence;
  }
  if (hold) {
    e.deliver_clock = kNever;
  } else {
    auto& last = last_due_[{e.from, e.to}];
    e.deliver_clock = std::max(e.send_clock + latency, last);
    last = e.deliver_clock;
  }
  trace_.push_back({e.send_clock, "post", e.from, e.to, kind, hold ? -1 : e.deliver_clock - e.send_clock, "queued"});
  pending_.push_back(std::move(e));
  return pending_.back().sequence;
}

std::vector<Envelope> MessageBus::poll(AgentId agent, int clock) {
  if (!registered(agent)) throw RoutingError("unregistered agent " + agent_name(agent));
  std::vector<Envelope> due;
  std::vector<Envelope> keep;
  for (auto& e : pending_) {
    if (e.to == agent && e.deliver_clock <= clock) due.push_back(std::move(e));
    else keep.push_back(std::move(e));
  }
  pending_ = std::move(keep);
  std::sort(due.begin(), due.end(), [](const Envelope& a, const Envelope& b) {
    if (a.deliver_clock != b.deliver_clock) return a.deliver_clock < b.deliver_clock;
    if (a.from != b.from) return a.from < b.from;
    return a.sequence < b.sequence;
  });
  std::vector<Envelope> out;
  for (auto& e : due) {
    const auto kind = to_string(e.payload.kind);
    const int latency = e.deliver_clock - e.send_clock;
    if (failed(e.to, e.deliver_clock)) {
      ++counts_.suppressed;
      trace_.push_back({e.deliver_clock, "deliver", e.from, e.to, kind, latency, "suppressed"});
      continue;
    }
    ++counts_.delivered;
    trace_.push_back({e.deliver_clock, "deliver", e.from, e.to, kind, latency, "delivered"});
    out.push_back(std::move(e));
  }
  return out;
}

bool MessageBus::expedite(AgentId from, AgentId to, int clock) {
  bool any = false;
  for (auto& e : pending_) {
    if (e.from != from || e.to != to) continue;
    any = true;
    if (e.deliver_clock <= clock) continue;
    e.deliver_clock = std::max(clock, e.send_clock);
    trace_.push_back({clock, "expedite", from, to, to_string(e.payload.kind), e.deliver_clock - e.send_clock, "queued"});
  }
  if (any) last_due_[{from, to}] = std::max(last_due_[{from, to}], clock);
  return any;
}

bool MessageBus::has_pending(AgentId from, AgentId to) const {
  return std::any_of(pending_.begin(), pending_.end(), [&](const Envelope& e) { return e.from == from && e.to == to; });
}

void MessageBus::note(int clock, const std::string& event, AgentId from, AgentId to, const std::string& outcome) {
  trace_.push_back({clock, event, from, to, "none", 0, outcome});
}

std::vector<AgentId> MessageBus::sample_subset(std::vector<AgentId> pool, std::size_t k) {
  k = std::min(k, pool.size());
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = static_cast<std::size_t>(subset_rng_.integer(static_cast<std::int64_t>(i),
                                                                 static_cast<std::int64_t>(pool.size() - 1)));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

BusCounts MessageBus::counts() const {
  auto c = counts_;
  c.pending = pending_.size();
  return c;
}

void MessageBus::write_trace_csv(std::ostream& out) const {
  out << "clock,event,from,to,payload_kind,latency,outcome\n";
  for (const auto& e : trace_)
    out << e.clock << ',' << e.event << ',' << agent_name(e.from) << ',' << agent_name(e.to) << ',' << e.payload_kind
        << ',' << e.latency << ',' << e.outcome << '\n';
}

DelayAdjustments enforce_bounded_delay(MessageBus& bus, int clock, const std::vector<int>& last_heard,
                                       const std::vector<int>& tau) {
  DelayAdjustments adj;
  for (std::size_t i = 0; i < last_heard.size(); ++i) {
    const auto n = static_cast<AgentId>(i);
    const int staleness = clock - last_heard[i];
    if (staleness < tau[i]) continue;
    if (bus.failed(kLeader, clock) || bus.failed(n, clock)) {
      if (staleness > tau[i]) {
        adj.violations.push_back(n);
        bus.note(clock, "bound_violation", n, kLeader, fmt::format("staleness {}", staleness));
      }
      continue;
    }
    if (bus.expedite(n, kLeader, clock)) adj.expedited.push_back(n);
    else adj.resend.push_back(n);
  }
  return adj;
}

}  // namespace dcvr
