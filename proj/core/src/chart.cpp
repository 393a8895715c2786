#include "weylglue/chart.hpp"

#include <cmath>

#include "weylglue/errors.hpp"
#include "weylglue/rng.hpp"
#include "weylglue/parallel.hpp"
#include "weylglue/sphere.hpp"

namespace weylglue {

namespace {

constexpr double kPi = 3.14159265358979323846;

double smoothstep5(double s) {
  if (s <= 0) return 0;
  if (s >= 1) return 1;
  double s2 = s * s;
  return 10 * s2 * s - 15 * s2 * s2 + 6 * s2 * s2 * s;
}

// Central difference along direction m with the scheme's order.
template <typename F>
auto central_d1(const F& f, const Vec4& x, int m, double h, int order) -> decltype(f(x)) {
  Vec4 e = Vec4::Zero();
  e[m] = 1.0;
  if (order <= 2) return (f(x + h * e) - f(x - h * e)) * (1.0 / (2 * h));
  if (order <= 4)
    return (f(x - 2 * h * e) - 8.0 * f(x - h * e) + 8.0 * f(x + h * e) - f(x + 2 * h * e)) *
           (1.0 / (12 * h));
  return (-f(x - 3 * h * e) + 9.0 * f(x - 2 * h * e) - 45.0 * f(x - h * e) +
          45.0 * f(x + h * e) - 9.0 * f(x + 2 * h * e) + f(x + 3 * h * e)) *
         (1.0 / (60 * h));
}

template <typename F>
auto richardson_d1(const F& f, const Vec4& x, int m, const DiffScheme& s) -> decltype(f(x)) {
  auto v1 = central_d1(f, x, m, s.step, s.order);
  if (s.richardson_levels <= 0) return v1;
  auto v2 = central_d1(f, x, m, s.step / 2.0, s.order);
  double w = std::pow(2.0, s.order);
  return (w * v2 - v1) * (1.0 / (w - 1.0));
}

}  // namespace

void DiffScheme::validate(double local_radius) const {
  if (!(step > 0)) throw ConfigError("difference step must be positive");
  if (order != 2 && order != 4 && order != 6)
    throw ConfigError("difference order must be 2, 4 or 6");
  if (richardson_levels < 0) throw ConfigError("richardson levels must be >= 0");
  if (local_radius > 0 && step >= local_radius / 10.0)
    throw ConfigError("difference step too large for the local radius");
}

MetricField flat_metric() {
  MetricField g;
  g.eval = [](const Vec4&) { return Mat4::Identity(); };
  g.d1 = [](const Vec4&) {
    MetricDeriv1 d;
    for (auto& m : d) m = Mat4::Zero();
    return d;
  };
  g.d2 = [](const Vec4&) {
    MetricDeriv2 d;
    for (auto& row : d)
      for (auto& m : row) m = Mat4::Zero();
    return d;
  };
  return g;
}

MetricField perturbed_flat(const MetricField& f, double coeff) {
  MetricField g;
  auto fe = f.eval;
  g.eval = [fe, coeff](const Vec4& x) { return (Mat4::Identity() + coeff * fe(x)).eval(); };
  if (f.d1) {
    auto fd = f.d1;
    g.d1 = [fd, coeff](const Vec4& x) {
      MetricDeriv1 d = fd(x);
      for (auto& m : d) m *= coeff;
      return d;
    };
  }
  if (f.d2) {
    auto fd = f.d2;
    g.d2 = [fd, coeff](const Vec4& x) {
      MetricDeriv2 d = fd(x);
      for (auto& row : d)
        for (auto& m : row) m *= coeff;
      return d;
    };
  }
  g.domain = f.domain;
  g.remainder_order = f.remainder_order;
  return g;
}

MetricField quadratic_model_chart(const Tensor4& w, double r_max) {
  Tensor4 wt = w;
  MetricField g;
  g.eval = [wt](const Vec4& x) {
    Mat4 m = Mat4::Identity();
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        double s = 0;
        for (int k = 0; k < 4; ++k)
          for (int l = 0; l < 4; ++l) s += wt(k, i, j, l) * x[k] * x[l];
        m(i, j) -= s / 3.0;
      }
    return m;
  };
  g.d1 = [wt](const Vec4& x) {
    MetricDeriv1 d{};
    for (int m = 0; m < 4; ++m) {
      Mat4& dm = d[static_cast<std::size_t>(m)];
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
          double s = 0;
          for (int l = 0; l < 4; ++l) s += (wt(m, i, j, l) + wt(l, i, j, m)) * x[l];
          dm(i, j) = -s / 3.0;
        }
    }
    return d;
  };
  g.d2 = [wt](const Vec4&) {
    MetricDeriv2 d{};
    for (int m = 0; m < 4; ++m)
      for (int n = 0; n < 4; ++n) {
        Mat4& dmn = d[static_cast<std::size_t>(m)][static_cast<std::size_t>(n)];
        for (int i = 0; i < 4; ++i)
          for (int j = 0; j < 4; ++j)
            dmn(i, j) = -(wt(m, i, j, n) + wt(n, i, j, m)) / 3.0;
      }
    return d;
  };
  g.domain.r_max = r_max;
  return g;
}

namespace {

struct MetricJets {
  Mat4 g;
  MetricDeriv1 d1;
  MetricDeriv2 d2;
  double fd_error = 0;
};

MetricJets metric_jets(const MetricField& f, const Vec4& x, const DiffScheme& s) {
  MetricJets out;
  out.g = f.eval(x);
  if (f.has_analytic()) {
    out.d1 = f.d1(x);
    out.d2 = f.d2(x);
    return out;
  }
  double r = x.norm();
  double margin = f.domain.r_max - r;
  double extent = s.step * (s.order / 2 + 1) * 2;
  if (f.domain.r_max < 1e299 && margin < extent)
    throw MarginError("stencil would leave the chart domain");
  if (r - f.domain.r_min < extent && f.domain.r_min > 0)
    throw MarginError("stencil would cross the inner chart boundary");

  auto ev = f.eval;
  for (int m = 0; m < 4; ++m) out.d1[static_cast<std::size_t>(m)] = richardson_d1(ev, x, m, s);
  // second derivatives as first derivatives of the first-derivative field
  DiffScheme s2 = s;
  for (int m = 0; m < 4; ++m) {
    auto dmev = [&ev, m, &s](const Vec4& y) { return richardson_d1(ev, y, m, s); };
    for (int n = m; n < 4; ++n) {
      Mat4 d = richardson_d1(dmev, x, n, s2);
      out.d2[static_cast<std::size_t>(m)][static_cast<std::size_t>(n)] = d;
      out.d2[static_cast<std::size_t>(n)][static_cast<std::size_t>(m)] = d;
    }
  }
  // error estimate: compare against a coarser step
  DiffScheme sc = s;
  sc.step *= 2.0;
  Mat4 ref = richardson_d1(ev, x, 0, sc);
  out.fd_error = (ref - out.d1[0]).cwiseAbs().maxCoeff();
  return out;
}

struct CurvatureCore {
  Tensor3 gamma;      // Gamma^k_{ij}
  Tensor4 riemann;    // R_{ijkl}
  Mat4 ricci;
  double scalar;
  Tensor4 weyl;
  Mat4 g;
  Mat4 gi;
};

// Curvature from pointwise metric jets plus the derivative of Gamma, which
// needs third metric derivatives; dGamma is supplied by the caller.
CurvatureCore curvature_from_jets(const Mat4& g, const MetricDeriv1& dg,
                                  const std::array<Tensor3, 4>& dgamma_unused,
                                  bool have_dgamma, const MetricDeriv2& d2g) {
  (void)dgamma_unused;
  (void)have_dgamma;
  CurvatureCore out;
  out.g = g;
  Eigen::LLT<Mat4> llt(g);
  if (llt.info() != Eigen::Success)
    throw SingularMetricError("metric is not positive definite");
  out.gi = g.inverse();
  const Mat4& gi = out.gi;

  for (int k = 0; k < 4; ++k)
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        double s = 0;
        for (int l = 0; l < 4; ++l)
          s += gi(k, l) * (dg[static_cast<std::size_t>(i)](j, l) + dg[static_cast<std::size_t>(j)](i, l) -
                           dg[static_cast<std::size_t>(l)](i, j));
        out.gamma(k, i, j) = 0.5 * s;
      }

  // d_p gi = -gi dg gi
  std::array<Mat4, 4> dgi;
  for (int p = 0; p < 4; ++p) dgi[static_cast<std::size_t>(p)] = -gi * dg[static_cast<std::size_t>(p)] * gi;

  // d_p Gamma^k_{ij}
  std::array<Tensor3, 4> dgam;
  for (int p = 0; p < 4; ++p)
    for (int k = 0; k < 4; ++k)
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
          double s = 0;
          for (int l = 0; l < 4; ++l) {
            s += dgi[static_cast<std::size_t>(p)](k, l) *
                 (dg[static_cast<std::size_t>(i)](j, l) + dg[static_cast<std::size_t>(j)](i, l) -
                  dg[static_cast<std::size_t>(l)](i, j));
            s += gi(k, l) * (d2g[static_cast<std::size_t>(p)][static_cast<std::size_t>(i)](j, l) +
                             d2g[static_cast<std::size_t>(p)][static_cast<std::size_t>(j)](i, l) -
                             d2g[static_cast<std::size_t>(p)][static_cast<std::size_t>(l)](i, j));
          }
          dgam[static_cast<std::size_t>(p)](k, i, j) = 0.5 * s;
        }

  // R(d_i, d_j) d_k = (d_i G^m_jk - d_j G^m_ik + G^m_il G^l_jk - G^m_jl G^l_ik) d_m
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      for (int k = 0; k < 4; ++k)
        for (int l = 0; l < 4; ++l) {
          double s = 0;
          for (int m = 0; m < 4; ++m) {
            double rup = dgam[static_cast<std::size_t>(i)](m, j, k) - dgam[static_cast<std::size_t>(j)](m, i, k);
            for (int p = 0; p < 4; ++p)
              rup += out.gamma(m, i, p) * out.gamma(p, j, k) -
                     out.gamma(m, j, p) * out.gamma(p, i, k);
            s += rup * g(m, l);
          }
          out.riemann(i, j, k, l) = s;
        }

  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      double s = 0;
      for (int k = 0; k < 4; ++k)
        for (int l = 0; l < 4; ++l) s += gi(k, l) * out.riemann(k, i, j, l);
      out.ricci(i, j) = s;
    }
  out.scalar = (gi.array() * out.ricci.array()).sum();

  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      for (int k = 0; k < 4; ++k)
        for (int l = 0; l < 4; ++l)
          out.weyl(i, j, k, l) =
              out.riemann(i, j, k, l) -
              0.5 * (out.ricci(j, k) * g(i, l) + out.ricci(i, l) * g(j, k) -
                     out.ricci(i, k) * g(j, l) - out.ricci(j, l) * g(i, k)) +
              out.scalar / 6.0 * (g(j, k) * g(i, l) - g(i, k) * g(j, l));
  return out;
}

CurvatureCore curvature_core_at(const MetricField& f, const Vec4& x, const DiffScheme& s,
                                double* fd_error) {
  MetricJets j = metric_jets(f, x, s);
  if (fd_error) *fd_error = j.fd_error;
  return curvature_from_jets(j.g, j.d1, {}, false, j.d2);
}

}  // namespace

CurvaturePoint curvature_at(const MetricField& g, const Vec4& x, const DiffScheme& scheme) {
  double fde = 0;
  CurvatureCore core = curvature_core_at(g, x, scheme, &fde);
  CurvaturePoint out;
  out.christoffel = core.gamma;
  out.riemann = core.riemann;
  out.ricci = core.ricci;
  out.scalar = core.scalar;
  out.weyl = core.weyl;
  out.fd_error = fde;

  // Bach tensor: B_ij = -4 ( grad^a grad^b W_{aijb} + (1/2) R^{ab} W_{aijb} ).
  // First covariant divergence as a field, then its covariant divergence.
  auto div_w_field = [&](const Vec4& y) {
    CurvatureCore c = curvature_core_at(g, y, scheme, nullptr);
    // dW by finite differences of the weyl field (covariant correction added)
    std::array<Tensor4, 4> dW;
    auto wfield = [&](const Vec4& z) { return curvature_core_at(g, z, scheme, nullptr).weyl; };
    for (int m = 0; m < 4; ++m) dW[static_cast<std::size_t>(m)] = richardson_d1(wfield, y, m, scheme);
    // nabla_m W_{ijkl} = d_m W - Gamma^s_{mi} W_s... (4 slots)
    Mat4 gi = c.gi;
    Tensor3 out3;  // (i,j,beta) = g^{am} nabla_m W_{aij beta}
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        for (int be = 0; be < 4; ++be) {
          double s = 0;
          for (int a = 0; a < 4; ++a)
            for (int m = 0; m < 4; ++m) {
              double nab = dW[static_cast<std::size_t>(m)](a, i, j, be);
              for (int p = 0; p < 4; ++p) {
                nab -= c.gamma(p, m, a) * c.weyl(p, i, j, be);
                nab -= c.gamma(p, m, i) * c.weyl(a, p, j, be);
                nab -= c.gamma(p, m, j) * c.weyl(a, i, p, be);
                nab -= c.gamma(p, m, be) * c.weyl(a, i, j, p);
              }
              s += gi(a, m) * nab;
            }
          out3(i, j, be) = s;
        }
    return out3;
  };

  Tensor3 v = div_w_field(x);
  std::array<Tensor3, 4> dv;
  DiffScheme outer = scheme;
  outer.richardson_levels = std::max(1, scheme.richardson_levels);
  for (int m = 0; m < 4; ++m) dv[static_cast<std::size_t>(m)] = richardson_d1(div_w_field, x, m, outer);

  Mat4 gi = core.gi;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      double s = 0;
      for (int be = 0; be < 4; ++be)
        for (int m = 0; m < 4; ++m) {
          double nab = dv[static_cast<std::size_t>(m)](i, j, be);
          for (int p = 0; p < 4; ++p) {
            nab -= core.gamma(p, m, i) * v(p, j, be);
            nab -= core.gamma(p, m, j) * v(i, p, be);
            nab -= core.gamma(p, m, be) * v(i, j, p);
          }
          s += gi(be, m) * nab;
        }
      double rw = 0;
      for (int a = 0; a < 4; ++a)
        for (int be = 0; be < 4; ++be) {
          double rup = 0;
          for (int p = 0; p < 4; ++p)
            for (int q = 0; q < 4; ++q) rup += gi(a, p) * gi(be, q) * core.ricci(p, q);
          rw += rup * core.weyl(a, i, j, be);
        }
      out.bach(i, j) = -4.0 * (s + 0.5 * rw);
    }
  return out;
}

double weyl_density(const MetricField& g, const Vec4& x, const DiffScheme& scheme) {
  CurvatureCore c = curvature_core_at(g, x, scheme, nullptr);
  double s = 0;
  const Mat4& gi = c.gi;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      for (int k = 0; k < 4; ++k)
        for (int l = 0; l < 4; ++l) {
          double up = 0;
          for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 4; ++b)
              for (int cc = 0; cc < 4; ++cc)
                for (int d = 0; d < 4; ++d)
                  up += gi(i, a) * gi(j, b) * gi(k, cc) * gi(l, d) * c.weyl(a, b, cc, d);
          s += up * c.weyl(i, j, k, l);
        }
  return s * std::sqrt(c.g.determinant());
}

MetricDeriv2 field_d2(const MetricField& f, const Vec4& x, const DiffScheme& scheme) {
  return metric_jets(f, x, scheme).d2;
}

Tensor4 linearized_weyl_flat(const MetricDeriv2& d2) {
  auto D = [&](int m, int n, int i, int j) {
    return d2[static_cast<std::size_t>(m)][static_cast<std::size_t>(n)](i, j);
  };
  Mat4 lap = Mat4::Zero();
  Mat4 ddiv = Mat4::Zero();  // ddiv(a, j) = d_a (div f)_j
  Mat4 dtr = Mat4::Zero();   // d2_{mn} tr f
  double divdiv = 0, lap_tr = 0;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      for (int m = 0; m < 4; ++m) lap(i, j) += D(m, m, i, j);
      for (int m = 0; m < 4; ++m) ddiv(i, j) += D(i, m, m, j);
      for (int m = 0; m < 4; ++m) dtr(i, j) += D(i, j, m, m);
    }
  for (int m = 0; m < 4; ++m)
    for (int n = 0; n < 4; ++n) divdiv += D(m, n, m, n);
  for (int m = 0; m < 4; ++m) lap_tr += dtr(m, m);

  double s4 = (-lap_tr + divdiv) / 6.0;
  Tensor4 out;
  auto d = [](int a, int b) { return a == b ? 1.0 : 0.0; };
  for (int al = 0; al < 4; ++al)
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        for (int be = 0; be < 4; ++be) {
          double t1 = 0.5 * (D(al, j, i, be) + D(i, be, al, j) - D(al, be, i, j) - D(i, j, al, be));
          double t2 = 0.25 * (d(al, be) * lap(i, j) + d(i, j) * lap(al, be) -
                              d(i, be) * lap(al, j) - d(al, j) * lap(i, be));
          double t3 = 0.25 * ((ddiv(al, j) + ddiv(j, al) - dtr(al, j)) * d(i, be) +
                              (ddiv(i, be) + ddiv(be, i) - dtr(i, be)) * d(al, j) -
                              (ddiv(al, be) + ddiv(be, al) - dtr(al, be)) * d(i, j) -
                              (ddiv(i, j) + ddiv(j, i) - dtr(i, j)) * d(al, be));
          out(al, i, j, be) = t1 + t2 + t3 + s4 * (d(al, be) * d(i, j) - d(al, j) * d(be, i));
        }
  return out;
}

Tensor4 linearized_weyl_flat(const MetricField& f, const Vec4& x, const DiffScheme& scheme) {
  return linearized_weyl_flat(field_d2(f, x, scheme));
}

MetricDeriv3 field_d3(const MetricField& f, const Vec4& x, const DiffScheme& scheme) {
  MetricDeriv3 out;
  if (f.has_analytic()) {
    auto d2f = f.d2;
    for (int p = 0; p < 4; ++p) {
      auto comp = [&d2f, p](const Vec4& y) {
        // flatten d2 for differencing: pack as one 16x16-ish matrix
        MetricDeriv2 d = d2f(y);
        Eigen::Matrix<double, 16, 16> m = Eigen::Matrix<double, 16, 16>::Zero();
        for (int a = 0; a < 4; ++a)
          for (int b = 0; b < 4; ++b)
            m.block<4, 4>(a * 4, b * 4) = d[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
        (void)p;
        return m;
      };
      Eigen::Matrix<double, 16, 16> dm = richardson_d1(comp, x, p, scheme);
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b)
          out[static_cast<std::size_t>(p)][static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] =
              dm.block<4, 4>(a * 4, b * 4);
    }
    return out;
  }
  for (int p = 0; p < 4; ++p) {
    auto comp = [&f, &scheme](const Vec4& y) {
      MetricDeriv2 d = field_d2(f, y, scheme);
      Eigen::Matrix<double, 16, 16> m = Eigen::Matrix<double, 16, 16>::Zero();
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b)
          m.block<4, 4>(a * 4, b * 4) = d[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
      return m;
    };
    Eigen::Matrix<double, 16, 16> dm = richardson_d1(comp, x, p, scheme);
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b)
        out[static_cast<std::size_t>(p)][static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] =
            dm.block<4, 4>(a * 4, b * 4);
  }
  return out;
}

Tensor3 linearized_weyl_divergence_flat(const MetricDeriv3& d3) {
  auto D3 = [&](int p, int m, int n, int i, int j) {
    return d3[static_cast<std::size_t>(p)][static_cast<std::size_t>(m)][static_cast<std::size_t>(n)](i, j);
  };
  // d_p lap f_{ij}, d2_{mn}(div f)_j, d_p (div^2 f), d_p lap tr f
  Tensor3 dlap;   // (p, i, j)
  Tensor4 d2div;  // (m, n, j, -) stored via Tensor4 with last slot 0
  Vec4 ddivdiv = Vec4::Zero();
  Vec4 dlaptr = Vec4::Zero();
  for (int p = 0; p < 4; ++p)
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        double s = 0;
        for (int m = 0; m < 4; ++m) s += D3(p, m, m, i, j);
        dlap(p, i, j) = s;
      }
  for (int m = 0; m < 4; ++m)
    for (int n = 0; n < 4; ++n)
      for (int j = 0; j < 4; ++j) {
        double s = 0;
        for (int q = 0; q < 4; ++q) s += D3(m, n, q, q, j);
        d2div(m, n, j, 0) = s;
      }
  for (int p = 0; p < 4; ++p) {
    double s1 = 0, s2 = 0;
    for (int m = 0; m < 4; ++m)
      for (int n = 0; n < 4; ++n) s1 += D3(p, m, n, m, n);
    for (int m = 0; m < 4; ++m)
      for (int q = 0; q < 4; ++q) s2 += D3(p, m, m, q, q);
    ddivdiv[p] = s1;
    dlaptr[p] = s2;
  }
  Tensor3 out;
  auto d = [](int a, int b) { return a == b ? 1.0 : 0.0; };
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      for (int be = 0; be < 4; ++be) {
        double t1 = 0.25 * (dlap(j, i, be) - dlap(be, i, j) + d2div(i, be, j, 0) - d2div(i, j, be, 0));
        double t2 = (1.0 / 12.0) * ((ddivdiv[j] - dlaptr[j]) * d(i, be) -
                                    (ddivdiv[be] - dlaptr[be]) * d(i, j));
        out(i, j, be) = t1 + t2;
      }
  return out;
}

Tensor3 linearized_weyl_divergence_flat(const MetricField& f, const Vec4& x,
                                        const DiffScheme& scheme) {
  return linearized_weyl_divergence_flat(field_d3(f, x, scheme));
}

Mat4 linearized_bach_flat(const MetricField& f, const Vec4& x, const DiffScheme& scheme) {
  // TT test at x from first/second data
  MetricJets j = metric_jets(f, x, scheme);
  Mat4 fv = f.eval(x);
  double tr = fv.trace();
  Vec4 divf = Vec4::Zero();
  for (int jdx = 0; jdx < 4; ++jdx)
    for (int m = 0; m < 4; ++m) divf[jdx] += j.d1[static_cast<std::size_t>(m)](m, jdx);
  double scale = std::max(1.0, fv.cwiseAbs().maxCoeff());
  bool tt = std::abs(tr) < 1e-9 * scale && divf.cwiseAbs().maxCoeff() < 1e-9 * scale;

  if (tt) {
    // componentwise bi-Laplacian: laplacian of the laplacian field
    auto lap = [&](const Vec4& y) {
      Mat4 s = Mat4::Zero();
      MetricDeriv2 d2 = field_d2(f, y, scheme);
      for (int m = 0; m < 4; ++m) s += d2[static_cast<std::size_t>(m)][static_cast<std::size_t>(m)];
      return s;
    };
    Mat4 s = Mat4::Zero();
    for (int m = 0; m < 4; ++m) {
      auto dm = [&](const Vec4& y) { return richardson_d1(lap, y, m, scheme); };
      s += richardson_d1(dm, x, m, scheme);
    }
    return s;
  }

  // general path: difference the full Bach through curvature_at
  const double eps = 1e-5;
  MetricField gp = perturbed_flat(f, eps);
  MetricField gm = perturbed_flat(f, -eps);
  Mat4 bp = curvature_at(gp, x, scheme).bach;
  Mat4 bm = curvature_at(gm, x, scheme).bach;
  return (bp - bm) / (2.0 * eps);
}

Mat4 conformal_bach_transform(double phi, const Mat4& bdot_of_scaled) {
  return std::exp(-2.0 * phi) * bdot_of_scaled;
}

double BlowupProfile::operator()(double r) const {
  if (r <= r_exact) return 1.0 / (r * r);
  if (r >= r_cap) return 1.0 / (r_cap * r_cap);
  double s = smoothstep5((r - r_exact) / (r_cap - r_exact));
  // interpolate 1/r^2 toward the constant cap value in log space
  double a = -2.0 * std::log(r) * (1.0 - s) - 2.0 * std::log(r_cap) * s;
  return std::exp(a);
}

MetricField invert_chart(const MetricField& g, const BlowupProfile& profile) {
  auto ge = g.eval;
  BlowupProfile pr = profile;
  MetricField out;
  out.eval = [ge, pr](const Vec4& y) {
    double r2 = y.squaredNorm();
    if (r2 < 1e-28) throw PoleError("inverted chart evaluated at infinity of the source chart");
    Vec4 z = y / r2;
    Mat4 jac;  // dI/dy = (delta - 2 yhat yhat)/|y|^2
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) jac(i, j) = ((i == j ? 1.0 : 0.0) - 2.0 * y[i] * y[j] / r2) / r2;
    double fcomp = pr(z.norm());
    return (fcomp * fcomp * (jac.transpose() * ge(z) * jac)).eval();
  };
  out.domain.r_min = (g.domain.r_max < 1e299) ? 1.0 / g.domain.r_max : 0.0;
  out.domain.r_max = (g.domain.r_min > 0) ? 1.0 / g.domain.r_min : 1e300;
  out.remainder_order = g.remainder_order;
  return out;
}

InversionCheck verify_inversion(const MetricField& g_inv, const Tensor4& r_part,
                                const Tensor4& t_part, double t_coeff) {
  InversionCheck out;
  CounterRng rng(2026);
  for (std::size_t k = 0; k < out.radii.size(); ++k) {
    double rad = out.radii[k];
    double worst = 0;
    for (int trial = 0; trial < 8; ++trial) {
      Vec4 u;
      for (int i = 0; i < 4; ++i)
        u[i] = rng.normal(static_cast<std::uint64_t>(100 * k + 4 * static_cast<std::size_t>(trial) + static_cast<std::size_t>(i)));
      u.normalize();
      Vec4 y = rad * u;
      Mat4 expected = Mat4::Identity();
      double r2 = y.squaredNorm();
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
          double sr = 0, st = 0;
          for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 4; ++b) {
              sr += r_part(a, i, j, b) * y[a] * y[b];
              st += t_part(a, i, j, b) * y[a] * y[b];
            }
          expected(i, j) += -sr / (3.0 * r2 * r2) + t_coeff * st;
        }
      Mat4 resid = g_inv.eval(y) - expected;
      worst = std::max(worst, resid.cwiseAbs().maxCoeff());
    }
    out.residual[k] = worst;
  }
  // fit decay order: residual ~ C r^(-alpha)
  double num = 0, den = 0;
  double lx = 0, ly = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    lx += std::log(out.radii[k]);
    ly += std::log(std::max(out.residual[k], 1e-300));
  }
  lx /= 3;
  ly /= 3;
  for (std::size_t k = 0; k < 3; ++k) {
    double dx = std::log(out.radii[k]) - lx;
    num += dx * (std::log(std::max(out.residual[k], 1e-300)) - ly);
    den += dx * dx;
  }
  out.decay_order = -num / den;
  double scale = std::max(1.0, t_coeff * t_part.max_abs());
  // an unprojected T leaves a defect growing ~ |y|^2 relative to nothing
  if (out.residual[2] > 1e-6 * scale && out.decay_order < 0.5) {
    out.quadratic_growth = true;
    throw SymmetryError(
        "inverted expansion has a growing defect: the quadratic correction is "
        "not in projected form");
  }
  return out;
}

EnergyValue weyl_energy(const MetricField& g, const ChartDomain& region,
                        const QuadratureSpec& quad, const DiffScheme& scheme) {
  if (!(region.r_max > region.r_min) || region.r_max > 1e299)
    throw DomainError("weyl energy needs a bounded annulus or ball region");
  if (region.r_min < g.domain.r_min || region.r_max > g.domain.r_max)
    throw DomainError("integration region extends beyond the chart domain");

  auto run = [&](int radial, int degree) {
    S3Rule rule = s3_product_rule(degree);
    // radial panels per octave
    std::vector<std::pair<double, double>> panels;
    double lo = region.r_min;
    if (lo <= 0) lo = region.r_max / 256.0;  // ball: innermost panel covers 0..lo separately
    double edge = lo;
    while (edge * 2.0 < region.r_max) {
      panels.emplace_back(edge, edge * 2.0);
      edge *= 2.0;
    }
    panels.emplace_back(edge, region.r_max);
    if (region.r_min <= 0) panels.insert(panels.begin(), {1e-6 * region.r_max, lo});

    // Gauss-Legendre on [-1, 1]
    std::vector<double> xs(static_cast<std::size_t>(radial)), ws(static_cast<std::size_t>(radial));
    {
      S3Rule dummy;  // reuse GL from sphere.cpp is private; quick local Newton
      (void)dummy;
      for (int i = 0; i < radial; ++i) {
        double z = std::cos(kPi * (i + 0.75) / (radial + 0.5));
        double pp = 0;
        for (int it = 0; it < 100; ++it) {
          double p0 = 1.0, p1 = 0.0;
          for (int jn = 0; jn < radial; ++jn) {
            double p2 = p1;
            p1 = p0;
            p0 = ((2.0 * jn + 1.0) * z * p1 - jn * p2) / (jn + 1.0);
          }
          pp = radial * (z * p0 - p1) / (z * z - 1.0);
          double dz = p0 / pp;
          z -= dz;
          if (std::abs(dz) < 1e-15) break;
        }
        xs[static_cast<std::size_t>(i)] = z;
        ws[static_cast<std::size_t>(i)] = 2.0 / ((1.0 - z * z) * pp * pp);
      }
    }

    std::vector<double> contrib;
    std::vector<Vec4> nodes;
    std::vector<double> wts;
    for (auto [a, b] : panels)
      for (int i = 0; i < radial; ++i) {
        double r = 0.5 * (b - a) * xs[static_cast<std::size_t>(i)] + 0.5 * (a + b);
        double wr = 0.5 * (b - a) * ws[static_cast<std::size_t>(i)];
        for (std::size_t q = 0; q < rule.points.size(); ++q) {
          nodes.push_back(r * rule.points[q]);
          wts.push_back(wr * r * r * r * rule.weights[q]);
        }
      }
    std::vector<double> parts(nodes.size());
    parallel_for(nodes.size(), [&](std::size_t i) {
      parts[i] = wts[i] * weyl_density(g, nodes[i], scheme);
    });
    return pairwise_sum(parts);
  };

  double v1 = run(quad.radial_nodes / 2 + 2, quad.sphere_degree - 4);
  double v2 = run(quad.radial_nodes, quad.sphere_degree);
  EnergyValue out;
  out.value = v2;
  out.error = std::abs(v2 - v1);
  if (quad.refine_check) {
    double scale = std::max(std::abs(v2), 1e-12);
    if (out.error > 0.05 * scale && out.error > 1e-10)
      throw AccuracyError("weyl energy quadrature did not converge under refinement");
  }
  return out;
}

}  // namespace weylglue
