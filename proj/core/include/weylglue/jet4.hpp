#pragma once

#include <array>
#include <cstddef>

#include "weylglue/tensor.hpp"

namespace weylglue {

// Truncated Taylor polynomial of degree 4 in 4 variables (70 monomials),
// used to transport exact derivatives through the singular-series terms.
class Jet4 {
 public:
  static constexpr int kTerms = 70;

  Jet4() = default;
  static Jet4 constant(double c) {
    Jet4 j;
    j.c_[0] = c;
    return j;
  }
  // The coordinate increment in direction `var` with base value `value`.
  static Jet4 variable(int var, double value);

  double value() const { return c_[0]; }
  double deriv1(int i) const;            // d/dx^i
  double deriv2(int i, int j) const;     // d^2/dx^i dx^j
  double deriv3(int i, int j, int k) const;
  double deriv4(int i, int j, int k, int l) const;

  double& raw(int n) { return c_[static_cast<std::size_t>(n)]; }
  double raw(int n) const { return c_[static_cast<std::size_t>(n)]; }

  Jet4& operator+=(const Jet4& o);
  Jet4& operator-=(const Jet4& o);
  Jet4& operator*=(double s);
  friend Jet4 operator+(Jet4 a, const Jet4& b) { return a += b; }
  friend Jet4 operator-(Jet4 a, const Jet4& b) { return a -= b; }
  friend Jet4 operator*(double s, Jet4 a) { return a *= s; }
  friend Jet4 operator*(const Jet4& a, const Jet4& b);

  // Composition with w -> w^p for real p (used with p = -2 for 1/|u|^4).
  // Requires value() != 0.
  Jet4 pow(double p) const;

 private:
  // Coefficients are plain Taylor coefficients: f = sum c_m x^m (multi-index
  // m with |m| <= 4); derivatives are recovered with factorial weights.
  std::array<double, kTerms> c_{};
};

// Evaluate a quadratic form jet  -(1/3) W_{mu i j nu} u^mu u^nu / |u|^4
// given the 4 coordinate jets of u; returns the 10 symmetric components.
struct SymJet {
  std::array<Jet4, 16> comp{};  // (i,j), symmetric
  Jet4& operator()(int i, int j) { return comp[static_cast<std::size_t>(i * 4 + j)]; }
  const Jet4& operator()(int i, int j) const {
    return comp[static_cast<std::size_t>(i * 4 + j)];
  }
  SymJet& operator+=(const SymJet& o) {
    for (std::size_t n = 0; n < 16; ++n) comp[n] += o.comp[n];
    return *this;
  }
};

SymJet singular_quadform_jet(const Tensor4& w, const std::array<Jet4, 4>& u);

}  // namespace weylglue
