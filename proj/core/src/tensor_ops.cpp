#include "weylglue/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace weylglue {

namespace {

constexpr int kPairs[6][2] = {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}};

}  // namespace

double Tensor4::max_abs() const {
  double m = 0;
  for (double x : a) m = std::max(m, std::abs(x));
  return m;
}

double Tensor4::frobenius_sq() const {
  double s = 0;
  for (double x : a) s += x * x;
  return s;
}

double Tensor3::max_abs() const {
  double m = 0;
  for (double x : a) m = std::max(m, std::abs(x));
  return m;
}

double max_abs_violation_pairwise(const Tensor4& t) {
  double m = 0;
  for (int k = 0; k < 4; ++k)
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        for (int l = 0; l < 4; ++l) {
          m = std::max(m, std::abs(t(k, i, j, l) - t(k, j, i, l)));
          m = std::max(m, std::abs(t(k, i, j, l) - t(l, i, j, k)));
        }
  return m;
}

double max_abs_violation_riemann(const Tensor4& t) {
  double m = 0;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      for (int k = 0; k < 4; ++k)
        for (int l = 0; l < 4; ++l) {
          m = std::max(m, std::abs(t(i, j, k, l) + t(j, i, k, l)));
          m = std::max(m, std::abs(t(i, j, k, l) + t(i, j, l, k)));
          m = std::max(m, std::abs(t(i, j, k, l) - t(k, l, i, j)));
          m = std::max(m, std::abs(t(i, j, k, l) + t(j, k, i, l) + t(k, i, j, l)));
        }
  return m;
}

void require_pairwise(const Tensor4& t, double tol) {
  double scale = std::max(t.max_abs(), 1.0);
  if (max_abs_violation_pairwise(t) > tol * scale)
    throw SymmetryError("tensor is not symmetric in {i,j} and {k,l}");
}

void require_riemann(const Tensor4& t, double tol) {
  double scale = std::max(t.max_abs(), 1.0);
  if (max_abs_violation_riemann(t) > tol * scale)
    throw SymmetryError("tensor does not have the curvature symmetries");
}

FrameRotation FrameRotation::checked(const Mat4& m, double tol) {
  if ((m.transpose() * m - Mat4::Identity()).cwiseAbs().maxCoeff() > tol)
    throw SymmetryError("frame is not orthogonal");
  if (m.determinant() < 0)
    throw SymmetryError("frame is orientation-reversing");
  return FrameRotation(m);
}

Mat4 rotate(const Mat4& s, const FrameRotation& f) {
  return f.matrix().transpose() * s * f.matrix();
}

Tensor4 rotate(const Tensor4& t, const FrameRotation& f) {
  const Mat4& o = f.matrix();
  // Two-index-at-a-time contraction keeps this at 4 * 4^5 flops.
  std::array<double, 256> tmp1{}, tmp2{};
  // first slot
  for (int a = 0; a < 4; ++a)
    for (int j = 0; j < 4; ++j)
      for (int k = 0; k < 4; ++k)
        for (int l = 0; l < 4; ++l) {
          double s = 0;
          for (int i = 0; i < 4; ++i) s += t(i, j, k, l) * o(i, a);
          tmp1[static_cast<std::size_t>(((a * 4 + j) * 4 + k) * 4 + l)] = s;
        }
  // second slot
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b)
      for (int k = 0; k < 4; ++k)
        for (int l = 0; l < 4; ++l) {
          double s = 0;
          for (int j = 0; j < 4; ++j)
            s += tmp1[static_cast<std::size_t>(((a * 4 + j) * 4 + k) * 4 + l)] * o(j, b);
          tmp2[static_cast<std::size_t>(((a * 4 + b) * 4 + k) * 4 + l)] = s;
        }
  // third slot
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b)
      for (int c = 0; c < 4; ++c)
        for (int l = 0; l < 4; ++l) {
          double s = 0;
          for (int k = 0; k < 4; ++k)
            s += tmp2[static_cast<std::size_t>(((a * 4 + b) * 4 + k) * 4 + l)] * o(k, c);
          tmp1[static_cast<std::size_t>(((a * 4 + b) * 4 + c) * 4 + l)] = s;
        }
  Tensor4 out;
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b)
      for (int c = 0; c < 4; ++c)
        for (int d = 0; d < 4; ++d) {
          double s = 0;
          for (int l = 0; l < 4; ++l)
            s += tmp1[static_cast<std::size_t>(((a * 4 + b) * 4 + c) * 4 + l)] * o(l, d);
          out(a, b, c, d) = s;
        }
  return out;
}

RiemannTensor riemann_projector(const PairwiseTensor4& a, double sym_tol) {
  // accepts pairwise-symmetric input or its own curvature-type output
  double scale = std::max(a.max_abs(), 1.0);
  if (max_abs_violation_pairwise(a) > sym_tol * scale &&
      max_abs_violation_riemann(a) > sym_tol * scale)
    throw SymmetryError("tensor is not symmetric in {i,j} and {k,l}");
  Tensor4 r;
  for (int k = 0; k < 4; ++k)
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        for (int l = 0; l < 4; ++l)
          r(k, i, j, l) =
              0.25 * (a(k, i, j, l) - a(i, k, j, l) - a(k, i, l, j) + a(i, k, l, j));
  return r;
}

PairwiseDecomposition decompose_pairwise(const PairwiseTensor4& a, double sym_tol) {
  RiemannTensor r = riemann_projector(a, sym_tol);
  PairwiseDecomposition out;
  for (int k = 0; k < 4; ++k)
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        for (int l = 0; l < 4; ++l)
          out.t_part(k, i, j, l) = (2.0 / 3.0) * (r(k, i, j, l) + r(l, i, j, k));
  Tensor4 c = a - out.t_part;
  // 2 X_{i,jkl} = C_{kijl} + C_{jikl} - C_{ijkl}
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      for (int k = 0; k < 4; ++k)
        for (int l = 0; l < 4; ++l)
          out.x(i, j, k, l) = 0.5 * (c(k, i, j, l) + c(j, i, k, l) - c(i, j, k, l));
  return out;
}

Tensor4 gauge_from_generator(const GaugeGenerator& x) {
  Tensor4 c;
  for (int k = 0; k < 4; ++k)
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        for (int l = 0; l < 4; ++l)
          c(k, i, j, l) = x(i, j, k, l) + x(j, i, k, l);
  return c;
}

Tensor4 kulkarni_nomizu(const Mat4& s, const Mat4& t) {
  Tensor4 out;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      for (int k = 0; k < 4; ++k)
        for (int l = 0; l < 4; ++l)
          out(i, j, k, l) = s(i, k) * t(j, l) + s(j, l) * t(i, k) -
                            s(i, l) * t(j, k) - s(j, k) * t(i, l);
  return out;
}

WeylData weyl_from_riemann(const RiemannTensor& r, const Mat4& g) {
  require_riemann(r, 1e-9);
  Eigen::LLT<Mat4> llt(g);
  if (llt.info() != Eigen::Success)
    throw SingularMetricError("metric is not positive definite");
  Mat4 gi = g.inverse();

  Mat4 ric = Mat4::Zero();
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      double s = 0;
      for (int k = 0; k < 4; ++k)
        for (int l = 0; l < 4; ++l) s += gi(k, l) * r(k, i, j, l);
      ric(i, j) = s;
    }
  double scal = (gi.array() * ric.array()).sum();

  Tensor4 w;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      for (int k = 0; k < 4; ++k)
        for (int l = 0; l < 4; ++l)
          w(i, j, k, l) = r(i, j, k, l) -
                          0.5 * (ric(j, k) * g(i, l) + ric(i, l) * g(j, k) -
                                 ric(i, k) * g(j, l) - ric(j, l) * g(i, k)) +
                          scal / 6.0 * (g(j, k) * g(i, l) - g(i, k) * g(j, l));

  if ((g - Mat4::Identity()).cwiseAbs().maxCoeff() > 1e-14) {
    // express in a g-orthonormal frame before building the operator form
    Mat4 lower = llt.matrixL();
    Mat4 frame = lower.transpose().inverse();  // columns g-orthonormal
    Tensor4 wf;
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b)
        for (int c = 0; c < 4; ++c)
          for (int d = 0; d < 4; ++d) {
            double s = 0;
            for (int i = 0; i < 4; ++i)
              for (int j = 0; j < 4; ++j)
                for (int k = 0; k < 4; ++k)
                  for (int l = 0; l < 4; ++l)
                    s += w(i, j, k, l) * frame(i, a) * frame(j, b) * frame(k, c) * frame(l, d);
            wf(a, b, c, d) = s;
          }
    WeylData out;
    out.tensor = w;
    out.op = curvature_operator(wf);
    auto bp = basis_sd();
    auto bm = basis_asd();
    out.sd = bp.transpose() * out.op * bp;
    out.asd = bm.transpose() * out.op * bm;
    return out;
  }

  WeylData out;
  out.tensor = w;
  out.op = curvature_operator(w);
  auto bp = basis_sd();
  auto bm = basis_asd();
  out.sd = bp.transpose() * out.op * bp;
  out.asd = bm.transpose() * out.op * bm;
  return out;
}

Mat6 curvature_operator(const RiemannTensor& r) {
  // M[(kl),(ij)] = R_{ijlk}, i<j and k<l in the wedge basis.
  Mat6 m;
  for (int row = 0; row < 6; ++row)
    for (int col = 0; col < 6; ++col) {
      int i = kPairs[col][0], j = kPairs[col][1];
      int k = kPairs[row][0], l = kPairs[row][1];
      m(row, col) = r(i, j, l, k);
    }
  return m;
}

Tensor4 tensor_from_operator(const Mat6& m) {
  Tensor4 w{};
  for (int col = 0; col < 6; ++col)
    for (int row = 0; row < 6; ++row) {
      int i = kPairs[col][0], j = kPairs[col][1];
      int k = kPairs[row][0], l = kPairs[row][1];
      double v = m(row, col);  // = W_{ijlk}
      w(i, j, l, k) = v;
      w(j, i, l, k) = -v;
      w(i, j, k, l) = -v;
      w(j, i, k, l) = v;
    }
  return w;
}

Eigen::Matrix<double, 6, 3> basis_sd() {
  Eigen::Matrix<double, 6, 3> b;
  const double s = 1.0 / std::sqrt(2.0);
  b << s, 0, 0,   // e12
      0, s, 0,    // e13
      0, 0, s,    // e14
      0, 0, s,    // e23
      0, -s, 0,   // e24
      s, 0, 0;    // e34
  return b;
}

Eigen::Matrix<double, 6, 3> basis_asd() {
  Eigen::Matrix<double, 6, 3> b;
  const double s = 1.0 / std::sqrt(2.0);
  b << s, 0, 0,
      0, s, 0,
      0, 0, s,
      0, 0, -s,
      0, s, 0,
      -s, 0, 0;
  return b;
}

Mat6 induced_on_forms(const Mat4& o) {
  Mat6 m;
  for (int col = 0; col < 6; ++col)
    for (int row = 0; row < 6; ++row) {
      int i = kPairs[col][0], j = kPairs[col][1];
      int k = kPairs[row][0], l = kPairs[row][1];
      m(row, col) = o(k, i) * o(l, j) - o(k, j) * o(l, i);
    }
  return m;
}

WeylData weyl_from_blocks(const Mat3& sd, const Mat3& asd) {
  auto symtf = [](const Mat3& b) {
    Mat3 s = 0.5 * (b + b.transpose());
    s -= (s.trace() / 3.0) * Mat3::Identity();
    return s;
  };
  Mat3 bp = symtf(sd), bm = symtf(asd);
  auto up = basis_sd();
  auto um = basis_asd();
  Mat6 m = up * bp * up.transpose() + um * bm * um.transpose();
  WeylData out;
  out.tensor = tensor_from_operator(m);
  out.op = m;
  out.sd = bp;
  out.asd = bm;
  return out;
}

WeylData weyl_from_tensor(const Tensor4& w, double tol) {
  require_riemann(w, tol);
  double scale = std::max(w.max_abs(), 1.0);
  // all single traces must vanish
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      double tr = 0;
      for (int k = 0; k < 4; ++k) tr += w(k, i, j, k);
      if (std::abs(tr) > tol * scale)
        throw SymmetryError("tensor has a nonvanishing Ricci contraction");
    }
  WeylData out;
  out.tensor = w;
  out.op = curvature_operator(w);
  auto bp = basis_sd();
  auto bm = basis_asd();
  out.sd = bp.transpose() * out.op * bp;
  out.asd = bm.transpose() * out.op * bm;
  double cross = (bp.transpose() * out.op * bm).cwiseAbs().maxCoeff();
  if (cross > tol * scale)
    throw SymmetryError("operator couples the SD and ASD subspaces");
  return out;
}

SdAsdSplit sd_asd_split(const WeylData& w, double tol) {
  auto bp = basis_sd();
  auto bm = basis_asd();
  SdAsdSplit out;
  out.sd = bp.transpose() * w.op * bp;
  out.asd = bm.transpose() * w.op * bm;
  out.cross_norm = (bp.transpose() * w.op * bm).cwiseAbs().maxCoeff();
  double scale = std::max(w.op.cwiseAbs().maxCoeff(), 1.0);
  if (out.cross_norm > tol * scale)
    throw SymmetryError("not a Weyl-type operator: SD/ASD coupling present");
  return out;
}

WeylData orientation_reverse(const WeylData& w) { return weyl_from_blocks(w.asd, w.sd); }

namespace {

// Antisymmetric generators matching the normalized 2-form bases; the induced
// action of exp(a . gen) on the corresponding block is the rotation about
// axis a/|a| by angle -2|a| (SD family) or +2|a| (ASD family).
Mat4 gen_matrix(int axis, bool sd) {
  Mat4 m = Mat4::Zero();
  auto set = [&m](int i, int j, double v) {
    m(i, j) = v;
    m(j, i) = -v;
  };
  double s = sd ? 1.0 : -1.0;
  switch (axis) {
    case 0:
      set(0, 1, 1.0);
      set(2, 3, s);
      break;
    case 1:
      set(0, 2, 1.0);
      set(3, 1, s);
      break;
    default:
      set(0, 3, 1.0);
      set(1, 2, s);
      break;
  }
  return m;
}

Mat4 exp_gen(const Vec3& a, bool sd) {
  double r = a.norm();
  if (r < 1e-300) return Mat4::Identity();
  Mat4 g = a[0] * gen_matrix(0, sd) + a[1] * gen_matrix(1, sd) + a[2] * gen_matrix(2, sd);
  // g^2 = -r^2 Id for these anticommuting unit generators
  return std::cos(r) * Mat4::Identity() + (std::sin(r) / r) * g;
}

Vec3 so3_log(const Mat3& q) {
  double c = std::clamp((q.trace() - 1.0) / 2.0, -1.0, 1.0);
  double ang = std::acos(c);
  if (ang < 1e-12) return Vec3::Zero();
  if (M_PI - ang < 1e-7) {
    Mat3 m = q + Mat3::Identity();
    int k = 0;
    m.diagonal().maxCoeff(&k);
    Vec3 n = m.col(k).normalized();
    return ang * n;
  }
  Vec3 n(q(2, 1) - q(1, 2), q(0, 2) - q(2, 0), q(1, 0) - q(0, 1));
  return (ang / (2.0 * std::sin(ang))) * n;
}

}  // namespace

FrameRotation lift_so3_pair(const Mat3& q_plus, const Mat3& q_minus) {
  Vec3 ap = so3_log(q_plus);
  Vec3 am = so3_log(q_minus);
  Mat4 o = exp_gen(-0.5 * ap, true) * exp_gen(0.5 * am, false);
  return FrameRotation::unsafe(o);
}

namespace {

// Eigen-decomposition with descending eigenvalues and a deterministic
// det +1 eigenvector matrix.
void ordered_frame(const Mat3& b, Vec3& vals, Mat3& q, std::array<int, 3>& mult,
                   double cluster_tol) {
  Eigen::SelfAdjointEigenSolver<Mat3> es(b);
  Vec3 w = es.eigenvalues();
  Mat3 v = es.eigenvectors();
  // descending
  std::array<int, 3> idx{2, 1, 0};
  Mat3 vv;
  for (int c = 0; c < 3; ++c) {
    vals[c] = w[idx[static_cast<std::size_t>(c)]];
    vv.col(c) = v.col(idx[static_cast<std::size_t>(c)]);
  }
  for (int c = 0; c < 2; ++c) {
    for (int r = 0; r < 3; ++r) {
      if (std::abs(vv(r, c)) > 1e-12) {
        if (vv(r, c) < 0) vv.col(c) *= -1.0;
        break;
      }
    }
  }
  vv.col(2) = vv.col(0).cross(vv.col(1));
  q = vv;
  double scale = std::max({std::abs(vals[0]), std::abs(vals[2]), 1e-30});
  mult = {1, 1, 1};
  if (std::abs(vals[0] - vals[1]) < cluster_tol * scale) mult[0] = mult[1] = 2;
  if (std::abs(vals[1] - vals[2]) < cluster_tol * scale) {
    mult[2] = 2;
    if (mult[1] == 2) mult = {3, 3, 3};
    else mult[1] = 2;
  }
}

}  // namespace

Derdzinski derdzinski_diagonalize(const WeylData& w, double cluster_tol) {
  Derdzinski out;
  Vec3 vp, vm;
  Mat3 qp, qm;
  ordered_frame(w.sd, vp, qp, out.mult_sd, cluster_tol);
  ordered_frame(w.asd, vm, qm, out.mult_asd, cluster_tol);
  out.frame = lift_so3_pair(qp, qm);
  out.eigen = {vp[0], vp[1], vp[2], vm[0], vm[1], vm[2]};
  return out;
}

double star_product(const Tensor4& w1, const Tensor4& w2) {
  double s = 0;
  for (int k = 0; k < 4; ++k)
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        for (int l = 0; l < 4; ++l)
          s += w2(k, i, j, l) * (w1(k, i, j, l) + w1(l, i, j, k));
  return s;
}

ReflectionResult reflect_and_interact(const WeylData& w, const FrameRotation& frame,
                                      double frame_tol) {
  const Mat4& m = frame.matrix();
  if ((m.transpose() * m - Mat4::Identity()).cwiseAbs().maxCoeff() > frame_tol)
    throw SymmetryError("invalid frame: not orthogonal");

  Tensor4 wr = rotate(w.tensor, frame);
  auto bp = basis_sd();
  auto bm = basis_asd();
  Mat6 opr = curvature_operator(wr);
  Mat3 dp = bp.transpose() * opr * bp;
  Mat3 dm = bm.transpose() * opr * bm;

  ReflectionResult out;
  for (int k = 0; k < 4; ++k)
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        for (int l = 0; l < 4; ++l) {
          int sgn = ((k == 3) + (i == 3) + (j == 3) + (l == 3)) % 2 ? -1 : 1;
          out.wp(k, i, j, l) = sgn * wr(k, i, j, l);
        }
  out.inner = 0;
  for (int n = 0; n < 256; ++n) out.inner += wr.a[static_cast<std::size_t>(n)] * out.wp.a[static_cast<std::size_t>(n)];
  out.eigen_formula =
      8.0 * (dp(0, 0) * dm(0, 0) + dp(1, 1) * dm(1, 1) + dp(2, 2) * dm(2, 2));

  Mat4 p = Mat4::Identity();
  p(3, 3) = -1.0;
  Mat6 phat = induced_on_forms(p);
  Mat6 resid = curvature_operator(out.wp) - phat * opr * phat.transpose();
  out.operator_residual = resid.cwiseAbs().maxCoeff();
  return out;
}

}  // namespace weylglue
