#pragma once

#include <array>
#include <functional>
#include <optional>

#include "weylglue/tensor.hpp"

namespace weylglue {

struct ChartDomain {
  double r_min = 0.0;
  double r_max = 1e300;  // annulus r_min < |x| < r_max (ball when r_min = 0)
};

using MetricDeriv1 = std::array<Mat4, 4>;                  // d_m g
using MetricDeriv2 = std::array<std::array<Mat4, 4>, 4>;   // d_m d_n g

// Metric (or symmetric 2-tensor) field on a coordinate chart. Analytic
// derivative callbacks are optional; finite differences fill the gap.
struct MetricField {
  std::function<Mat4(const Vec4&)> eval;
  std::function<MetricDeriv1(const Vec4&)> d1;  // may be null
  std::function<MetricDeriv2(const Vec4&)> d2;  // may be null
  ChartDomain domain;
  // Declared decay/growth order of the unmodeled remainder (0 = exact).
  int remainder_order = 0;

  bool has_analytic() const { return static_cast<bool>(d1) && static_cast<bool>(d2); }
};

MetricField flat_metric();
// g = delta + f for a (small) symmetric field f with the same callbacks.
MetricField perturbed_flat(const MetricField& f, double coeff);
// delta - (1/3) W_{kijl} x^k x^l (exact quadratic model chart).
MetricField quadratic_model_chart(const Tensor4& w, double r_max);

struct DiffScheme {
  double step = 1e-2;
  int order = 4;            // 2 | 4 | 6
  int richardson_levels = 1;

  void validate(double local_radius) const;
};

struct CurvaturePoint {
  Tensor3 christoffel;  // Gamma^k_{ij} stored as (k,i,j)
  Tensor4 riemann;
  Mat4 ricci;
  double scalar = 0;
  Tensor4 weyl;
  Mat4 bach;
  double fd_error = 0;  // a-posteriori Richardson estimate (0 when analytic)
};

CurvaturePoint curvature_at(const MetricField& g, const Vec4& x, const DiffScheme& scheme);

// Pointwise |W|^2_g sqrt(det g) (the conformally invariant energy density).
double weyl_density(const MetricField& g, const Vec4& x, const DiffScheme& scheme);

// Second derivatives d2_{mn} f_{ij} of a symmetric field at x.
MetricDeriv2 field_d2(const MetricField& f, const Vec4& x, const DiffScheme& scheme);

// Linearized Weyl tensor at the flat metric, from the Hessian array of f;
// returns Wdot_{alpha i j beta} in tensor index order.
Tensor4 linearized_weyl_flat(const MetricDeriv2& d2f);
Tensor4 linearized_weyl_flat(const MetricField& f, const Vec4& x,
                             const DiffScheme& scheme = DiffScheme{});

// Third derivative array d3[p][m][n] = d3_{pmn} f.
using MetricDeriv3 = std::array<MetricDeriv2, 4>;
MetricDeriv3 field_d3(const MetricField& f, const Vec4& x, const DiffScheme& scheme);

// Euclidean divergence of the linearized Weyl: returns D(i,j,beta) =
// d^alpha Wdot_{alpha i j beta}.
Tensor3 linearized_weyl_divergence_flat(const MetricDeriv3& d3f);
Tensor3 linearized_weyl_divergence_flat(const MetricField& f, const Vec4& x,
                                        const DiffScheme& scheme = DiffScheme{});

// Linearized Bach at the flat metric. TT inputs take the bi-Laplacian path;
// general inputs are differenced through the full Bach tensor.
Mat4 linearized_bach_flat(const MetricField& f, const Vec4& x,
                          const DiffScheme& scheme = DiffScheme{});
// The covariance transform: Bdot_{e^{2phi} g}(T) = e^{-2phi} Bdot_g(e^{-2phi} T).
Mat4 conformal_bach_transform(double phi, const Mat4& bdot_of_scaled);

// Blow-up profile f(z) = |z|^{-2} inside r_exact, smoothly capped beyond.
struct BlowupProfile {
  double r_exact;   // exact |z|^{-2} for |z| <= r_exact
  double r_cap;     // constant beyond r_cap (quintic transition between)
  double operator()(double r) const;
};

// Inverted chart: y = z/|z|^2, g~ = (f o I)^2 I^* g.
MetricField invert_chart(const MetricField& g, const BlowupProfile& profile);

struct InversionCheck {
  std::array<double, 3> radii{10, 20, 40};
  std::array<double, 3> residual{};  // max-abs after removing the expected form
  double decay_order = 0;            // fitted decay exponent of the residual
  bool quadratic_growth = false;
};
// Verifies g~ against  delta - (1/3) R yy/|y|^4 + t T yy; throws
// SymmetryError when the quadratically growing defect of an unprojected T
// is detected.
InversionCheck verify_inversion(const MetricField& g_inv, const Tensor4& r_part,
                                const Tensor4& t_part, double t_coeff);

struct QuadratureSpec {
  int radial_nodes = 32;     // Gauss-Legendre nodes per radial octave
  int sphere_degree = 11;    // polynomial exactness of the angular rule
  bool refine_check = true;  // ratio test between two refinement levels
};

struct EnergyValue {
  double value = 0;
  double error = 0;
};

// Weyl energy integral of |W|^2 dV over the annulus/ball region.
EnergyValue weyl_energy(const MetricField& g, const ChartDomain& region,
                        const QuadratureSpec& quad, const DiffScheme& scheme = DiffScheme{});

}  // namespace weylglue
