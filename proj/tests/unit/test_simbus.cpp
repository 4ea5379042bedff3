#include <map>
#include <sstream>

#include "doctest.h"

#include "dcvr/network.hpp"
#include "dcvr/simbus.hpp"

using namespace dcvr;

namespace {

MessageBus make_bus(LatencyPolicy policy, int followers) {
  MessageBus bus(std::move(policy));
  bus.register_agent(kLeader);
  for (int n = 0; n < followers; ++n) bus.register_agent(n);
  return bus;
}

Envelope update(AgentId from, int clock) {
  Envelope e;
  e.from = from;
  e.to = kLeader;
  e.send_clock = clock;
  e.payload.kind = PayloadKind::Update;
  e.payload.boundary = Eigen::VectorXd::Constant(3, static_cast<double>(clock));
  return e;
}

Envelope broadcast(AgentId to, int clock) {
  Envelope e;
  e.from = kLeader;
  e.to = to;
  e.send_clock = clock;
  e.payload.kind = PayloadKind::Broadcast;
  return e;
}

}  // namespace

TEST_CASE("zero latency delivers on the next poll") {
  auto bus = make_bus({}, 2);
  bus.post(update(1, 4));
  const auto got = bus.poll(kLeader, 4);
  REQUIRE(got.size() == 1);
  CHECK(got[0].from == 1);
  CHECK(got[0].deliver_clock == 4);
  CHECK(bus.poll(kLeader, 5).empty());
}

TEST_CASE("follower latency delays arrival") {
  LatencyPolicy policy;
  policy.per_agent[3] = Latency::constant(3);
  auto bus = make_bus(policy, 5);
  bus.post(update(3, 3));
  bus.post(update(1, 3));
  auto early = bus.poll(kLeader, 5);
  REQUIRE(early.size() == 1);
  CHECK(early[0].from == 1);
  auto late = bus.poll(kLeader, 6);
  REQUIRE(late.size() == 1);
  CHECK(late[0].from == 3);
  CHECK(late[0].deliver_clock == 6);
}

TEST_CASE("leader failure window suppresses traffic both ways") {
  LatencyPolicy policy;
  policy.failures.push_back({kLeader, 30, 50});
  auto bus = make_bus(policy, 2);
  bus.post(broadcast(0, 29));
  CHECK(bus.poll(0, 29).size() == 1);
  bus.post(broadcast(0, 30));
  bus.post(update(1, 40));
  bus.post(broadcast(1, 50));
  CHECK(bus.poll(0, 50).empty());
  CHECK(bus.poll(kLeader, 50).empty());
  CHECK(bus.poll(1, 50).empty());
  bus.post(broadcast(0, 51));
  bus.post(update(1, 51));
  CHECK(bus.poll(0, 51).size() == 1);
  CHECK(bus.poll(kLeader, 51).size() == 1);
  const auto c = bus.counts();
  CHECK(c.suppressed == 3);
  CHECK(c.reconciles());
}

TEST_CASE("delivery order is clock, sender, then sequence") {
  LatencyPolicy policy;
  policy.per_agent[0] = Latency::constant(2);
  auto bus = make_bus(policy, 3);
  bus.post(update(2, 0));
  bus.post(update(0, 0));  // due at 2
  bus.post(update(1, 0));
  bus.post(update(1, 1));
  const auto got = bus.poll(kLeader, 2);
  REQUIRE(got.size() == 4);
  CHECK(got[0].from == 1);
  CHECK(got[0].send_clock == 0);
  CHECK(got[1].from == 2);
  CHECK(got[2].from == 1);
  CHECK(got[2].send_clock == 1);
  CHECK(got[3].from == 0);
}

TEST_CASE("random latencies never reorder a link") {
  LatencyPolicy policy;
  policy.default_latency = Latency::uniform(0, 6);
  policy.seed = 99;
  auto bus = make_bus(policy, 1);
  for (int t = 0; t < 200; ++t) bus.post(update(0, t));
  const auto got = bus.poll(kLeader, 1000);
  REQUIRE(got.size() == 200);
  for (std::size_t i = 1; i < got.size(); ++i) CHECK(got[i].send_clock > got[i - 1].send_clock);
}

TEST_CASE("every envelope is delivered, dropped or suppressed") {
  LatencyPolicy policy;
  policy.default_latency = Latency::uniform(0, 3);
  policy.drop_probability = 0.2;
  policy.failures.push_back({2, 10, 20});
  policy.seed = 7;
  auto bus = make_bus(policy, 4);
  for (int t = 0; t < 60; ++t) {
    for (int n = 0; n < 4; ++n) bus.post(update(n, t));
    bus.poll(kLeader, t);
  }
  auto c = bus.counts();
  CHECK(c.posted == 240);
  CHECK(c.dropped > 0);
  CHECK(c.suppressed == 11);
  CHECK(c.reconciles());
  bus.poll(kLeader, 100);
  c = bus.counts();
  CHECK(c.pending == 0);
  CHECK(c.reconciles());
}

TEST_CASE("identical policies give byte-identical traces") {
  auto run = [] {
    LatencyPolicy policy;
    policy.default_latency = Latency::uniform(0, 4);
    policy.drop_probability = 0.1;
    policy.seed = 1234;
    auto bus = make_bus(policy, 3);
    for (int t = 0; t < 40; ++t) {
      for (int n = 0; n < 3; ++n) bus.post(update(n, t));
      bus.poll(kLeader, t);
      bus.sample_subset({0, 1, 2}, 2);
    }
    std::ostringstream out;
    bus.write_trace_csv(out);
    return out.str();
  };
  const auto a = run();
  CHECK(a == run());
  CHECK(a.rfind("clock,event,from,to,payload_kind,latency,outcome\n", 0) == 0);
}

TEST_CASE("unregistered agents are routing errors") {
  auto bus = make_bus({}, 1);
  CHECK_THROWS_AS(bus.post(update(5, 0)), RoutingError);
  CHECK_THROWS_AS(bus.poll(7, 0), RoutingError);
}

TEST_CASE("policy validation") {
  LatencyPolicy p;
  p.drop_probability = 1.0;
  CHECK_THROWS_AS(MessageBus{p}, ConfigError);
  p.drop_probability = 0.0;
  p.default_latency = Latency::uniform(3, 1);
  CHECK_THROWS_AS(MessageBus{p}, ConfigError);
}

TEST_CASE("random subsets have the configured size and are uniform") {
  LatencyPolicy policy;
  policy.seed = 2021;
  auto bus = make_bus(policy, 8);
  std::map<AgentId, int> hits;
  const int draws = 8000;
  for (int i = 0; i < draws; ++i) {
    const auto s = bus.sample_subset({0, 1, 2, 3, 4, 5, 6, 7}, 2);
    REQUIRE(s.size() == 2);
    CHECK(s[0] != s[1]);
    for (auto a : s) ++hits[a];
  }
  // Expected 2000 per follower; binomial sd is about 39.
  for (const auto& [a, k] : hits) CHECK(std::abs(k - 2000) < 200);
}

TEST_CASE("held updates wait for expedite") {
  auto bus = make_bus({}, 2);
  bus.post(update(0, 1), true);
  CHECK(bus.poll(kLeader, 50).empty());
  CHECK(bus.has_pending(0, kLeader));
  CHECK(bus.expedite(0, kLeader, 51));
  const auto got = bus.poll(kLeader, 51);
  REQUIRE(got.size() == 1);
  CHECK_FALSE(bus.expedite(0, kLeader, 52));
}

TEST_CASE("delay bound of one forces every follower each clock") {
  LatencyPolicy policy;
  policy.default_latency = Latency::constant(4);
  auto bus = make_bus(policy, 3);
  std::vector<int> last{0, 0, 0};
  const std::vector<int> tau{1, 1, 1};
  for (int n = 0; n < 3; ++n) bus.post(update(n, 0));
  for (int t = 1; t < 20; ++t) {
    const auto adj = enforce_bounded_delay(bus, t, last, tau);
    for (auto n : adj.resend) {
      bus.post(update(n, t), true);
      bus.expedite(n, kLeader, t);
    }
    for (const auto& e : bus.poll(kLeader, t)) last[static_cast<std::size_t>(e.from)] = t;
    for (int n = 0; n < 3; ++n) CHECK(t - last[static_cast<std::size_t>(n)] == 0);
    for (int n = 0; n < 3; ++n) bus.post(update(n, t));
  }
}

TEST_CASE("bounded delay holds under latency and is flagged only inside a failure window") {
  LatencyPolicy policy;
  policy.default_latency = Latency::constant(3);
  policy.failures.push_back({kLeader, 30, 49});
  auto bus = make_bus(policy, 4);
  std::vector<int> last(4, 0);
  const std::vector<int> tau(4, 5);
  std::vector<int> violation_clocks;
  for (int t = 1; t <= 80; ++t) {
    const auto adj = enforce_bounded_delay(bus, t, last, tau);
    if (!adj.violations.empty()) violation_clocks.push_back(t);
    for (auto n : adj.resend) {
      bus.post(update(n, t), true);
      bus.expedite(n, kLeader, t);
    }
    for (const auto& e : bus.poll(kLeader, t)) last[static_cast<std::size_t>(e.from)] = t;
    // Followers answer every other clock when nothing is in flight.
    for (int n = 0; n < 4; ++n)
      if (t % 2 == 0 && !bus.has_pending(n, kLeader)) bus.post(update(n, t));
    if (!bus.failed(kLeader, t))
      for (int n = 0; n < 4; ++n) CHECK(t - last[static_cast<std::size_t>(n)] <= 5);
  }
  REQUIRE_FALSE(violation_clocks.empty());
  for (auto c : violation_clocks) {
    CHECK(c >= 30);
    CHECK(c <= 49);
  }
}
