#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <string>
#include <string_view>

namespace dcvr {

using Complex = std::complex<double>;

inline constexpr std::size_t kPhases = 3;

/// Which of phases a/b/c are present on an element.
class PhaseMask {
 public:
  constexpr PhaseMask() = default;
  constexpr PhaseMask(bool a, bool b, bool c) : bits_{a, b, c} {}

  static constexpr PhaseMask abc() { return {true, true, true}; }
  static constexpr PhaseMask single(std::size_t phase) {
    PhaseMask m;
    m.bits_[phase] = true;
    return m;
  }

  /// Parses "abc", "a", "bc", ... Throws std::invalid_argument on anything else.
  static PhaseMask parse(std::string_view text);
  std::string str() const;

  constexpr bool has(std::size_t phase) const { return bits_[phase]; }
  constexpr std::size_t count() const {
    return static_cast<std::size_t>(bits_[0]) + bits_[1] + bits_[2];
  }
  constexpr bool empty() const { return count() == 0; }
  /// True if every phase of `other` is also present here.
  constexpr bool contains(PhaseMask other) const {
    for (std::size_t p = 0; p < kPhases; ++p)
      if (other.bits_[p] && !bits_[p]) return false;
    return true;
  }
  constexpr PhaseMask operator&(PhaseMask o) const {
    return {bits_[0] && o.bits_[0], bits_[1] && o.bits_[1], bits_[2] && o.bits_[2]};
  }
  constexpr bool operator==(const PhaseMask&) const = default;

 private:
  std::array<bool, kPhases> bits_{false, false, false};
};

inline constexpr char phase_letter(std::size_t phase) { return static_cast<char>('a' + phase); }

/// Per-phase quantity. Entries of absent phases are held at zero.
template <typename T>
class BasicPhaseVector {
 public:
  BasicPhaseVector() = default;
  explicit BasicPhaseVector(PhaseMask mask) : mask_(mask) {}
  BasicPhaseVector(PhaseMask mask, std::array<T, kPhases> values) : mask_(mask), values_(values) {
    clamp();
  }
  /// Same value on every present phase.
  static BasicPhaseVector uniform(PhaseMask mask, T value) {
    return BasicPhaseVector(mask, {value, value, value});
  }

  PhaseMask mask() const { return mask_; }
  const std::array<T, kPhases>& values() const { return values_; }

  T operator[](std::size_t phase) const { return values_[phase]; }
  /// Writes to an absent phase are ignored.
  void set(std::size_t phase, T value) {
    if (mask_.has(phase)) values_[phase] = value;
  }

  T sum() const { return values_[0] + values_[1] + values_[2]; }

  BasicPhaseVector operator+(const BasicPhaseVector& o) const {
    return zip(o, [](T x, T y) { return x + y; });
  }
  BasicPhaseVector operator-(const BasicPhaseVector& o) const {
    return zip(o, [](T x, T y) { return x - y; });
  }
  BasicPhaseVector operator*(T s) const {
    auto out = *this;
    for (auto& v : out.values_) v *= s;
    out.clamp();
    return out;
  }
  /// Elementwise (Hadamard) product.
  BasicPhaseVector hadamard(const BasicPhaseVector& o) const {
    return zip(o, [](T x, T y) { return x * y; });
  }
  /// Elementwise division; absent phases stay zero instead of producing 0/0.
  BasicPhaseVector divide(const BasicPhaseVector& o) const {
    return zip(o, [](T x, T y) { return x / y; });
  }

  bool operator==(const BasicPhaseVector&) const = default;

 private:
  template <typename F>
  BasicPhaseVector zip(const BasicPhaseVector& o, F f) const {
    BasicPhaseVector out(mask_ & o.mask_);
    for (std::size_t p = 0; p < kPhases; ++p)
      if (out.mask_.has(p)) out.values_[p] = f(values_[p], o.values_[p]);
    return out;
  }
  void clamp() {
    for (std::size_t p = 0; p < kPhases; ++p)
      if (!mask_.has(p)) values_[p] = T{};
  }

  PhaseMask mask_{};
  std::array<T, kPhases> values_{};
};

using PhaseVector = BasicPhaseVector<double>;
using ComplexPhaseVector = BasicPhaseVector<Complex>;

/// 3x3 complex block (branch impedance). Rows/columns of absent phases are zero.
class PhaseMatrix {
 public:
  PhaseMatrix() = default;
  explicit PhaseMatrix(PhaseMask mask) : mask_(mask) {}
  PhaseMatrix(PhaseMask mask, const std::array<std::array<Complex, kPhases>, kPhases>& m);
  /// Diagonal-only block with `self` on every present phase.
  static PhaseMatrix diagonal(PhaseMask mask, Complex self);
  /// Symmetric block with `self` on the diagonal and `mutual` off it.
  static PhaseMatrix coupled(PhaseMask mask, Complex self, Complex mutual);

  PhaseMask mask() const { return mask_; }
  Complex operator()(std::size_t row, std::size_t col) const { return m_[row][col]; }
  void set(std::size_t row, std::size_t col, Complex value);

  ComplexPhaseVector operator*(const ComplexPhaseVector& v) const;
  PhaseMatrix conj() const;
  PhaseMatrix hadamard(const PhaseMatrix& o) const;
  PhaseMatrix scaled(double s) const;

  bool operator==(const PhaseMatrix&) const = default;

 private:
  PhaseMask mask_{};
  std::array<std::array<Complex, kPhases>, kPhases> m_{};
};

/// Coupling pattern used by the linearized voltage-drop model: entry (phi, psi) is
/// exp(+j*2*pi/3*(phi - psi)), i.e. the conjugate of the nominal phasor ratio V_phi / V_psi
/// for an abc sequence with phase b lagging a by 120 degrees.
PhaseMatrix unbalance_pattern(PhaseMask mask);

/// Nominal balanced unit phasor of a phase (a at 0, b at -120, c at +120 degrees).
Complex nominal_phasor(std::size_t phase);

}  // namespace dcvr
