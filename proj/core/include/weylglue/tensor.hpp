#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstddef>
#include <utility>

#include "weylglue/errors.hpp"

namespace weylglue {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Mat6 = Eigen::Matrix<double, 6, 6>;

// Rank-4 covariant tensor on R^4, row-major entries T(i,j,k,l).
struct Tensor4 {
  std::array<double, 256> a{};

  double& operator()(int i, int j, int k, int l) {
    return a[static_cast<std::size_t>(((i * 4 + j) * 4 + k) * 4 + l)];
  }
  double operator()(int i, int j, int k, int l) const {
    return a[static_cast<std::size_t>(((i * 4 + j) * 4 + k) * 4 + l)];
  }

  Tensor4& operator+=(const Tensor4& o) {
    for (std::size_t n = 0; n < 256; ++n) a[n] += o.a[n];
    return *this;
  }
  Tensor4& operator-=(const Tensor4& o) {
    for (std::size_t n = 0; n < 256; ++n) a[n] -= o.a[n];
    return *this;
  }
  Tensor4& operator*=(double c) {
    for (double& x : a) x *= c;
    return *this;
  }
  friend Tensor4 operator+(Tensor4 x, const Tensor4& y) { return x += y; }
  friend Tensor4 operator-(Tensor4 x, const Tensor4& y) { return x -= y; }
  friend Tensor4 operator*(double c, Tensor4 x) { return x *= c; }
  friend Tensor4 operator*(Tensor4 x, double c) { return x *= c; }
  friend Tensor4 operator-(Tensor4 x) { return x *= -1.0; }

  double max_abs() const;
  double frobenius_sq() const;
};

// The lemma objects are all Tensor4 with extra index symmetries; validity
// is established through the check_* functions and the producing operations.
using PairwiseTensor4 = Tensor4;  // A_{kijl} = A_{kjil} = A_{lijk}
using RiemannTensor = Tensor4;    // full Riemann symmetries + first Bianchi

// X_{i,jkl}, symmetric in the last three slots.
using GaugeGenerator = Tensor4;

// Rank-3 array D(i,j,k) (used for gradients and divergence-type outputs).
struct Tensor3 {
  std::array<double, 64> a{};
  double& operator()(int i, int j, int k) {
    return a[static_cast<std::size_t>((i * 4 + j) * 4 + k)];
  }
  double operator()(int i, int j, int k) const {
    return a[static_cast<std::size_t>((i * 4 + j) * 4 + k)];
  }
  Tensor3& operator+=(const Tensor3& o) {
    for (std::size_t n = 0; n < 64; ++n) a[n] += o.a[n];
    return *this;
  }
  Tensor3& operator-=(const Tensor3& o) {
    for (std::size_t n = 0; n < 64; ++n) a[n] -= o.a[n];
    return *this;
  }
  Tensor3& operator*=(double c) {
    for (double& x : a) x *= c;
    return *this;
  }
  friend Tensor3 operator+(Tensor3 x, const Tensor3& y) { return x += y; }
  friend Tensor3 operator-(Tensor3 x, const Tensor3& y) { return x -= y; }
  friend Tensor3 operator*(double c, Tensor3 x) { return x *= c; }
  friend Tensor3 operator*(Tensor3 x, double c) { return x *= c; }
  friend Tensor3 operator-(Tensor3 x) { return x *= -1.0; }
  double max_abs() const;
};

double max_abs_violation_pairwise(const Tensor4& t);
double max_abs_violation_riemann(const Tensor4& t);

void require_pairwise(const Tensor4& t, double tol = 1e-12);
void require_riemann(const Tensor4& t, double tol = 1e-12);

// Proper rotation of R^4 (orthogonal, det +1).
class FrameRotation {
 public:
  FrameRotation() : m_(Mat4::Identity()) {}
  static FrameRotation checked(const Mat4& m, double tol = 1e-12);
  // No validity check; for internal composition of already-valid frames.
  static FrameRotation unsafe(const Mat4& m) { return FrameRotation(m); }
  const Mat4& matrix() const { return m_; }

 private:
  explicit FrameRotation(const Mat4& m) : m_(m) {}
  Mat4 m_;
};

// Components of a tensor in the rotated frame e'_a = sum_i O_{ia} e_i.
Mat4 rotate(const Mat4& s, const FrameRotation& f);
Tensor4 rotate(const Tensor4& t, const FrameRotation& f);

// Weyl-type curvature data: the (0,4) tensor, its curvature-operator form
// on 2-forms (lexicographic wedge basis), and the SD/ASD 3x3 blocks in the
// normalized (omega, eta, theta) bases.
struct WeylData {
  Tensor4 tensor;
  Mat6 op;
  Mat3 sd;
  Mat3 asd;

  double norm_sq() const { return tensor.frobenius_sq(); }
};

struct Derdzinski {
  FrameRotation frame;
  // (lambda+, mu+, nu+, lambda-, mu-, nu-), each triple descending.
  std::array<double, 6> eigen{};
  // Cluster sizes of numerically coincident eigenvalues per block.
  std::array<int, 3> mult_sd{1, 1, 1};
  std::array<int, 3> mult_asd{1, 1, 1};
};

struct ReflectionResult {
  Tensor4 wp;            // W composed with P = diag(1,1,1,-1)
  double inner;          // W^{kijl} W^P_{kijl}
  double eigen_formula;  // 8 (l+l- + m+m- + n+n-)
  double operator_residual;  // max-abs of  op(W^P) - Phat op(W) Phat^T
};

// ---- tensor_core operations ----

// Curvature projector P(A)_{kijl} = (A_{kijl}-A_{ikjl}-A_{kilj}+A_{iklj})/4.
RiemannTensor riemann_projector(const PairwiseTensor4& a, double sym_tol = 1e-9);

struct PairwiseDecomposition {
  Tensor4 t_part;     // (2/3)(R_{kijl}+R_{lijk})
  GaugeGenerator x;   // X_{i,jkl}, symmetric in jkl
};
PairwiseDecomposition decompose_pairwise(const PairwiseTensor4& a,
                                         double sym_tol = 1e-9);
// Rebuilds the gauge summand C_{kijl} = X_{i,jkl} + X_{j,ikl}.
Tensor4 gauge_from_generator(const GaugeGenerator& x);

Tensor4 kulkarni_nomizu(const Mat4& s, const Mat4& t);

WeylData weyl_from_riemann(const RiemannTensor& r, const Mat4& g);

Mat6 curvature_operator(const RiemannTensor& r);
// Inverse of curvature_operator on Riemann-symmetric input.
Tensor4 tensor_from_operator(const Mat6& m);

// Weyl tensor assembled from trace-free SD/ASD blocks.
WeylData weyl_from_blocks(const Mat3& sd, const Mat3& asd);
// Validated WeylData from a raw tensor (traces, block-diagonality).
WeylData weyl_from_tensor(const Tensor4& w, double tol = 1e-9);

struct SdAsdSplit {
  Mat3 sd;
  Mat3 asd;
  double cross_norm;  // max-abs of the +- coupling block
};
SdAsdSplit sd_asd_split(const WeylData& w, double tol = 1e-9);

// Orientation reversal swaps the SD and ASD blocks.
WeylData orientation_reverse(const WeylData& w);

Derdzinski derdzinski_diagonalize(const WeylData& w, double cluster_tol = 1e-10);

// Lift (q_plus, q_minus) in SO(3)xSO(3) to the SO(4) frame whose induced
// action on the normalized SD/ASD bases is exactly that pair.
FrameRotation lift_so3_pair(const Mat3& q_plus, const Mat3& q_minus);

// w1 (*) w2 = sum_{kijl} w2_{kijl} (w1_{kijl} + w1_{lijk}).
double star_product(const Tensor4& w1, const Tensor4& w2);

// P-reflection pairing in the Derdzinski frame of w.
ReflectionResult reflect_and_interact(const WeylData& w, const FrameRotation& frame,
                                      double frame_tol = 1e-10);

// Normalized 2-form bases as 6x3 matrices (columns omega, eta, theta).
Eigen::Matrix<double, 6, 3> basis_sd();
Eigen::Matrix<double, 6, 3> basis_asd();

// Induced action of a 4x4 matrix on the wedge basis of 2-forms.
Mat6 induced_on_forms(const Mat4& o);

}  // namespace weylglue
