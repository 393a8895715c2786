#pragma once

#include <array>
#include <functional>
#include <iosfwd>
#include <vector>

#include "weylglue/jet4.hpp"
#include "weylglue/tensor.hpp"

namespace weylglue {

struct CylinderParams {
  double t;                       // dilation base, t = e^R > 1
  double truncation_tol = 1e-12;  // series stopping tolerance

  void validate() const;
};

struct QuotientElement {
  double s = 1.0;      // scale, in (t^{-1/2}, t^{1/2}]
  FrameRotation o;     // rotation part
};

// Orbit data t^n s_a O_a describing (R x S^3)/G on R^4 \ {0}. The element
// list is raw orbit data; group closure is not enforced.
struct QuotientModel {
  double t = 2.0;
  std::vector<QuotientElement> elements;
  double truncation_tol = 1e-10;

  void validate() const;  // t > 1, scales in range, identity exactly once
  std::size_t identity_index() const;

  static QuotientModel cylinder(double t, double tol = 1e-10);
  // One element per line: "s=<val> o=<16 numbers row-major>"; a 9-number
  // 3x3 block acting on the first three coordinates is also accepted.
  static QuotientModel parse(std::istream& in, double t, double tol = 1e-10);
};

struct SeriesValue {
  double value = 0;
  double bound = 0;  // truncation bound on the dropped tail
};

// Lattice-sum coefficients of the gauge construction.
SeriesValue coeff_c0(const CylinderParams& p);
SeriesValue coeff_c1(const CylinderParams& p);
SeriesValue coeff_c2(const CylinderParams& p);
double c2_asymptotic(double t);  // pi^4 / (45 (t-1)^4)

// Singular tensor h(x) = -(1/3) W_{mu i j nu} (x+e4)^mu (x+e4)^nu / |x+e4|^4.
Mat4 singular_h(const Vec4& x, const WeylData& w);
// Same quadratic form with a free argument u (the K-shape of the papers'
// boundary integrands when u = x).
Mat4 singular_quadform(const Tensor4& w, const Vec4& u);

// Closed-form derivatives of the singular quadratic form through order 3.
struct QuadformDerivs {
  Mat4 val;
  std::array<Mat4, 4> d1;
  std::array<std::array<Mat4, 4>, 4> d2;
  std::array<std::array<std::array<Mat4, 4>, 4>, 4> d3;
};
QuadformDerivs singular_quadform_derivs(const Tensor4& w, const Vec4& u, int order = 3);

// One-form with analytic Jacobian.
struct OneForm {
  std::function<void(const Vec4&, Vec4&, Mat4&)> eval;  // omega, d omega
};

struct GaugeForms {
  OneForm omega0;
  OneForm omega1;
  OneForm omega2;      // zero until a gauge generator is attached
  bool has_omega2 = false;
  double t = 0;        // cutoff radii derive from t
};

GaugeForms gauge_forms_cylinder(const WeylData& w, const CylinderParams& p);
void attach_omega2(GaugeForms& forms, const GaugeGenerator& x);

// Lie derivative of the flat metric along the vector field dual to omega.
Mat4 lie_flat(const OneForm& omega, const Vec4& y);

// xi = h + L_{X0} gE + L_{X1} gE (+ L_{X2} gE when attached).
Mat4 gauged_xi(const Vec4& x, const WeylData& w, const CylinderParams& p,
               const GaugeForms& forms);

// T-bar local normal form near -e4 (identity tower with the C0/C1 block).
struct TbarValue {
  Mat4 value;
  double bound;
};
TbarValue tbar_cylinder(const Vec4& y, const WeylData& w, const CylinderParams& p);

// Diverging partial sums of the ungauged pullback series (for diagnostics).
double naive_series_partial_sum_norm(const Vec4& y, const WeylData& w, double t,
                                     int n_terms);

struct CorrectionJet {
  Mat4 value = Mat4::Zero();          // A(0), zero by construction
  Tensor3 gradient{};                 // dA(0), zero by construction
  Tensor4 hessian;                    // T_{kijl} = (1/2) d2_{kl} A_{ij}, projected
  Tensor4 hessian_raw;                // d2_{kl} Abar_{ij} stored as (k,i,j,l)
  GaugeGenerator gauge_x;             // X of the hessian decomposition
  // Taylor data of A at the center (third/fourth derivative arrays,
  // index order (p,q,r[,s],i,j)).
  std::array<double, 1024> third{};
  std::array<double, 4096> fourth{};
  std::function<Mat4(const Vec4&)> evaluator;  // y -> T-bar(y) near -e4
  Tensor4 weyl_tensor;                         // the Weyl data the jet belongs to
  double truncation_bound = 0;
  double t = 0;

  double third_d(int p, int q, int r, int i, int j) const {
    return third[static_cast<std::size_t>((((p * 4 + q) * 4 + r) * 4 + i) * 4 + j)];
  }
  double fourth_d(int p, int q, int r, int s, int i, int j) const {
    return fourth[static_cast<std::size_t>(((((p * 4 + q) * 4 + r) * 4 + s) * 4 + i) * 4 + j)];
  }
  // Regular part A(x) = Abar(x - e4) - (1/2)(X_{i,jkl}+X_{j,ikl}) x^k x^l.
  Mat4 a_regular(const Vec4& x) const;
  // d2_{kl} tr A(0) as a matrix in (k,l).
  Mat4 trace_hessian() const;
};

struct ElementRemainder {
  double o44 = 0;           // rotation matrix entry O_{44}
  double hessian_norm = 0;  // max-abs of the element's hessian tower
  double bound_constant = 0;  // hessian_norm * (t - 1)
  bool near_fixed_point = false;
};

struct QuotientJetResult {
  CorrectionJet jet;
  Tensor4 cylinder_hessian_raw;  // identity-tower part, for comparisons
  std::vector<ElementRemainder> remainders;
  double remainder_norm = 0;  // max-abs of the non-identity hessian sum
};

CorrectionJet correction_jet_cylinder(const WeylData& w, const CylinderParams& p);
QuotientJetResult correction_jet_quotient(const WeylData& w, const QuotientModel& m);

// W^{kijl} d2_{kl} A_{ij}(0).
double interaction_contraction(const WeylData& w, const CorrectionJet& jet);

// Closed form of the unprojected hessian of Abar (identity tower):
// -(1/3) C2(t) [ (W_{kijl}+W_{lijk}) - 4 d_{4k}(...) - 4 d_{4l}(...)
//                - 4 d_{kl} W_{4ij4} + 24 d_{4k} d_{4l} W_{4ij4} ],
// stored as (k,i,j,l) with the derivative pair (k,l).
Tensor4 cylinder_hessian_formula(const WeylData& w, double c2);

}  // namespace weylglue
