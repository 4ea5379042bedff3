#include "doctest.h"

#include "dcvr/feeder_io.hpp"
#include "dcvr/synthetic.hpp"
#include "fixtures.hpp"

using namespace dcvr;

TEST_CASE("feeder text round trip is exact") {
  for (auto cfg : {PhaseConfig::ThreePhase, PhaseConfig::SinglePhase, PhaseConfig::Mixed}) {
    SyntheticFeederSpec spec;
    spec.n_primary_buses = 6;
    spec.n_secondaries = 5;
    spec.buses_per_secondary = 4;
    spec.phase_config = cfg;
    spec.seed = 99;
    const auto f = generate_synthetic_feeder(spec);
    const auto text = feeder_to_string(f);
    const auto back = feeder_from_string(text);
    CHECK(feeder_to_string(back) == text);
    REQUIRE(back.buses.size() == f.buses.size());
    for (std::size_t k = 0; k < f.branches.size(); ++k) CHECK(back.branches[k].z == f.branches[k].z);
    for (std::size_t k = 0; k < f.inverters.size(); ++k) CHECK(back.inverters[k].s_cap == f.inverters[k].s_cap);
    CHECK(validate(back).empty());
  }
}

TEST_CASE("feeder parser diagnostics carry line numbers") {
  CHECK_THROWS_WITH_AS(feeder_from_string("# empty\n"), doctest::Contains("missing [feeder]"), ConfigError);
  CHECK_THROWS_WITH_AS(feeder_from_string("[feeder]\nsubstation_bus = x\n"), doctest::Contains("line 2"), ConfigError);
  CHECK_THROWS_WITH_AS(feeder_from_string("[feeder]\nsubstation_bus = 0\n[widget]\n"),
                       doctest::Contains("unknown section"), ConfigError);
  const std::string bad_z =
      "[feeder]\nsubstation_bus = 0\n[branch]\nfrom = 0\nto = 1\nphases = abc\nz = 1 2 3\n";
  CHECK_THROWS_WITH_AS(feeder_from_string(bad_z), doctest::Contains("needs 18 values"), ConfigError);
  CHECK_THROWS_WITH_AS(feeder_from_string("[feeder]\nsubstation_bus = 0\nsubstation_bus = 1\n"),
                       doctest::Contains("duplicate field"), ConfigError);
}

TEST_CASE("comments and blank lines are ignored") {
  const auto f = test::two_bus(PhaseMask::single(0), {0.01, 0.02}, {}, 0.3, 0.1);
  auto text = "# header comment\n\n" + feeder_to_string(f) + "\n# trailing\n";
  const auto back = feeder_from_string(text);
  CHECK(back.buses.size() == 2);
  CHECK(back.buses[1].load_mult_p[0] == 0.3);
}
