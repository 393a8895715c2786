#pragma once

#include <array>

#include "weylglue/series.hpp"
#include "weylglue/tensor.hpp"

namespace weylglue {

struct BoundaryIntegralReport {
  double gamma = 0;
  double leading_coeff = 0;     // the gamma^-4 coefficient (K-K part, exact)
  double order_one = 0;         // K-A cross terms (gamma-independent)
  double residual = 0;          // remaining content at this gamma
  double quadrature_error = 0;  // refinement gap of the angular rule
  double total = 0;             // full integral value
};

// Integral over the sphere of radius gamma of  d^a Wdot_{aijb} F^{ij} nu^b
// with F = K + (Taylor jet of A through order 4), outward normal.
BoundaryIntegralReport divergence_boundary_integral(const CorrectionJet& jet,
                                                    const WeylData& w, double gamma);

// Integral of  Wdot_{aijb} d^b F^{ij} nu^a  over the same sphere.
BoundaryIntegralReport nondivergence_boundary_integral(const CorrectionJet& jet,
                                                       const WeylData& w, double gamma);

struct SweepFit {
  double intercept = 0;  // extrapolated order-one coefficient
  double slope = 0;      // gamma^2 coefficient of the residual
  double r_squared = 0;  // quality of the residual ~ gamma^2 fit
};
// Least-squares fit  order_one(gamma) + residual(gamma) = D + E gamma^2.
SweepFit fit_order_one(const std::array<BoundaryIntegralReport, 3>& reports);

struct C2MinusC1 {
  double boundary_path = 0;  // difference of the two leading coefficients
  double scaling_path = 0;   // (pi^2/4) |W|^2
  double discrepancy = 0;
};
C2MinusC1 c2_minus_c1(const WeylData& w);

}  // namespace weylglue
