#include <cmath>

#include "doctest.h"

#include "dcvr/phase.hpp"

using namespace dcvr;

TEST_CASE("phase mask parse and print") {
  CHECK(PhaseMask::parse("abc") == PhaseMask::abc());
  CHECK(PhaseMask::parse("b").str() == "b");
  CHECK(PhaseMask::parse("ca").str() == "ac");
  CHECK_THROWS_AS(PhaseMask::parse(""), std::invalid_argument);
  CHECK_THROWS_AS(PhaseMask::parse("abd"), std::invalid_argument);
}

TEST_CASE("absent phases stay zero through arithmetic") {
  const PhaseMask ab{true, true, false};
  PhaseVector x(ab, {1.0, 2.0, 99.0});
  CHECK(x[2] == 0.0);
  x.set(2, 5.0);
  CHECK(x[2] == 0.0);
  const PhaseVector y(PhaseMask::abc(), {3.0, 4.0, 5.0});
  for (const auto& r : {x + y, x - y, x.hadamard(y), x.divide(y), x * 2.5}) {
    CHECK(r[2] == 0.0);
    CHECK(r.mask() == ab);
  }
  CHECK(x.hadamard(y)[1] == 8.0);
  CHECK(x.divide(y)[0] == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("phase matrix restricted to mask") {
  const auto m = PhaseMatrix::coupled(PhaseMask::single(1), {1.0, 2.0}, {0.5, 0.5});
  for (std::size_t r = 0; r < kPhases; ++r)
    for (std::size_t c = 0; c < kPhases; ++c)
      if (r != 1 || c != 1) CHECK(m(r, c) == Complex{});
  CHECK(m(1, 1) == Complex(1.0, 2.0));
  const ComplexPhaseVector v(PhaseMask::abc(), {Complex{1, 0}, Complex{2, 0}, Complex{3, 0}});
  const auto w = m * v;
  CHECK(w[1] == Complex(2.0, 4.0));
  CHECK(w[0] == Complex{});
}

TEST_CASE("unbalance pattern is the conjugate nominal phasor ratio") {
  const auto g = unbalance_pattern(PhaseMask::abc());
  for (std::size_t r = 0; r < kPhases; ++r)
    for (std::size_t c = 0; c < kPhases; ++c) {
      const Complex expect = std::conj(nominal_phasor(r) / nominal_phasor(c));
      CHECK(std::abs(g(r, c) - expect) < 1e-15);
    }
  // b lags a by 120 degrees.
  CHECK(std::arg(nominal_phasor(1)) == doctest::Approx(-2.0 * M_PI / 3.0));
}
