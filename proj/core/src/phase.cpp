#include "dcvr/phase.hpp"

#include <numbers>
#include <stdexcept>

namespace dcvr {

PhaseMask PhaseMask::parse(std::string_view text) {
  PhaseMask m;
  if (text.empty()) throw std::invalid_argument("empty phase mask");
  for (char ch : text) {
    if (ch < 'a' || ch > 'c') throw std::invalid_argument("bad phase letter in '" + std::string(text) + "'");
    const auto p = static_cast<std::size_t>(ch - 'a');
    if (m.bits_[p]) throw std::invalid_argument("repeated phase in '" + std::string(text) + "'");
    m.bits_[p] = true;
  }
  return m;
}

std::string PhaseMask::str() const {
  std::string s;
  for (std::size_t p = 0; p < kPhases; ++p)
    if (bits_[p]) s.push_back(phase_letter(p));
  return s;
}

PhaseMatrix::PhaseMatrix(PhaseMask mask, const std::array<std::array<Complex, kPhases>, kPhases>& m)
    : mask_(mask), m_(m) {
  for (std::size_t r = 0; r < kPhases; ++r)
    for (std::size_t c = 0; c < kPhases; ++c)
      if (!mask_.has(r) || !mask_.has(c)) m_[r][c] = {};
}

PhaseMatrix PhaseMatrix::diagonal(PhaseMask mask, Complex self) { return coupled(mask, self, {}); }

PhaseMatrix PhaseMatrix::coupled(PhaseMask mask, Complex self, Complex mutual) {
  PhaseMatrix z(mask);
  for (std::size_t r = 0; r < kPhases; ++r)
    for (std::size_t c = 0; c < kPhases; ++c) z.set(r, c, r == c ? self : mutual);
  return z;
}

void PhaseMatrix::set(std::size_t row, std::size_t col, Complex value) {
  if (mask_.has(row) && mask_.has(col)) m_[row][col] = value;
}

ComplexPhaseVector PhaseMatrix::operator*(const ComplexPhaseVector& v) const {
  ComplexPhaseVector out(mask_);
  for (std::size_t r = 0; r < kPhases; ++r) {
    if (!mask_.has(r)) continue;
    Complex acc{};
    for (std::size_t c = 0; c < kPhases; ++c) acc += m_[r][c] * v[c];
    out.set(r, acc);
  }
  return out;
}

PhaseMatrix PhaseMatrix::conj() const {
  PhaseMatrix out = *this;
  for (auto& row : out.m_)
    for (auto& e : row) e = std::conj(e);
  return out;
}

PhaseMatrix PhaseMatrix::hadamard(const PhaseMatrix& o) const {
  PhaseMatrix out(mask_ & o.mask_);
  for (std::size_t r = 0; r < kPhases; ++r)
    for (std::size_t c = 0; c < kPhases; ++c) out.set(r, c, m_[r][c] * o.m_[r][c]);
  return out;
}

PhaseMatrix PhaseMatrix::scaled(double s) const {
  PhaseMatrix out = *this;
  for (auto& row : out.m_)
    for (auto& e : row) e *= s;
  return out;
}

Complex nominal_phasor(std::size_t phase) {
  constexpr double step = 2.0 * std::numbers::pi / 3.0;
  switch (phase) {
    case 0: return {1.0, 0.0};
    case 1: return std::polar(1.0, -step);
    default: return std::polar(1.0, step);
  }
}

PhaseMatrix unbalance_pattern(PhaseMask mask) {
  PhaseMatrix g(mask);
  for (std::size_t r = 0; r < kPhases; ++r)
    for (std::size_t c = 0; c < kPhases; ++c)
      g.set(r, c, std::conj(nominal_phasor(r) / nominal_phasor(c)));
  return g;
}

}  // namespace dcvr
