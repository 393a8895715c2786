#include <doctest.h>

#include <cmath>
#include <memory>

#include "weylglue/chart.hpp"
#include "weylglue/jet4.hpp"
#include "weylglue/rng.hpp"
#include "weylglue/series.hpp"
#include "weylglue/tensor.hpp"

using namespace weylglue;

namespace {

constexpr double kPi = 3.14159265358979323846;

Mat3 rand_tracefree(const CounterRng& rng, std::uint64_t base) {
  Mat3 b;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) b(i, j) = rng.normal(base + static_cast<std::uint64_t>(3 * i + j));
  b = 0.5 * (b + b.transpose()).eval();
  b -= (b.trace() / 3.0) * Mat3::Identity();
  return b;
}

WeylData rand_weyl(std::uint64_t seed) {
  CounterRng rng(seed);
  return weyl_from_blocks(rand_tracefree(rng, 0), rand_tracefree(rng, 64));
}

// random quadratic symmetric field with analytic derivatives
MetricField quadratic_field(std::uint64_t seed) {
  CounterRng rng(seed);
  auto b = std::make_shared<Tensor4>();
  std::uint64_t n = 0;
  for (int i = 0; i < 4; ++i)
    for (int j = i; j < 4; ++j)
      for (int k = 0; k < 4; ++k)
        for (int l = k; l < 4; ++l) {
          double v = rng.normal(n++);
          (*b)(i, j, k, l) = v;
          (*b)(j, i, k, l) = v;
          (*b)(i, j, l, k) = v;
          (*b)(j, i, l, k) = v;
        }
  MetricField f;
  f.eval = [b](const Vec4& x) {
    Mat4 m;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        double s = 0;
        for (int k = 0; k < 4; ++k)
          for (int l = 0; l < 4; ++l) s += (*b)(i, j, k, l) * x[k] * x[l];
        m(i, j) = s;
      }
    return m;
  };
  f.d1 = [b](const Vec4& x) {
    MetricDeriv1 d{};
    for (int m = 0; m < 4; ++m)
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
          double s = 0;
          for (int l = 0; l < 4; ++l) s += ((*b)(i, j, m, l) + (*b)(i, j, l, m)) * x[l];
          d[static_cast<std::size_t>(m)](i, j) = s;
        }
    return d;
  };
  f.d2 = [b](const Vec4&) {
    MetricDeriv2 d{};
    for (int m = 0; m < 4; ++m)
      for (int n2 = 0; n2 < 4; ++n2)
        for (int i = 0; i < 4; ++i)
          for (int j = 0; j < 4; ++j)
            d[static_cast<std::size_t>(m)][static_cast<std::size_t>(n2)](i, j) =
                (*b)(i, j, m, n2) + (*b)(i, j, n2, m);
    return d;
  };
  return f;
}

// MetricField with exact d1/d2 from a jet-arithmetic builder
MetricField field_from_jets(std::function<SymJet(const std::array<Jet4, 4>&)> builder) {
  auto b = std::make_shared<decltype(builder)>(std::move(builder));
  MetricField f;
  f.eval = [b](const Vec4& x) {
    std::array<Jet4, 4> c;
    for (int m = 0; m < 4; ++m) c[static_cast<std::size_t>(m)] = Jet4::variable(m, x[m]);
    SymJet g = (*b)(c);
    Mat4 out;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) out(i, j) = g(i, j).value();
    return out;
  };
  f.d1 = [b](const Vec4& x) {
    std::array<Jet4, 4> c;
    for (int m = 0; m < 4; ++m) c[static_cast<std::size_t>(m)] = Jet4::variable(m, x[m]);
    SymJet g = (*b)(c);
    MetricDeriv1 d;
    for (int m = 0; m < 4; ++m) {
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) d[static_cast<std::size_t>(m)](i, j) = g(i, j).deriv1(m);
    }
    return d;
  };
  f.d2 = [b](const Vec4& x) {
    std::array<Jet4, 4> c;
    for (int m = 0; m < 4; ++m) c[static_cast<std::size_t>(m)] = Jet4::variable(m, x[m]);
    SymJet g = (*b)(c);
    MetricDeriv2 d;
    for (int m = 0; m < 4; ++m)
      for (int n = 0; n < 4; ++n)
        for (int i = 0; i < 4; ++i)
          for (int j = 0; j < 4; ++j)
            d[static_cast<std::size_t>(m)][static_cast<std::size_t>(n)](i, j) = g(i, j).deriv2(m, n);
    return d;
  };
  return f;
}

}  // namespace

TEST_CASE("flat metric has zero curvature") {
  DiffScheme sch;
  CurvaturePoint c = curvature_at(flat_metric(), Vec4(0.2, -0.1, 0.4, 0.3), sch);
  CHECK(c.riemann.max_abs() < 1e-12);
  CHECK(c.weyl.max_abs() < 1e-12);
  CHECK(c.bach.cwiseAbs().maxCoeff() < 1e-10);
  CHECK(std::abs(c.scalar) < 1e-12);
}

TEST_CASE("conformally flat cylinder metric has zero Weyl") {
  // |x|^{-2} g_E on R^4 \ {0}
  MetricField g;
  g.eval = [](const Vec4& x) { return Mat4(Mat4::Identity() / x.squaredNorm()); };
  g.domain = {0.2, 10.0};
  DiffScheme sch;
  sch.step = 5e-3;
  CurvaturePoint c = curvature_at(g, Vec4(0.9, 0.3, -0.2, 0.5), sch);
  double scale = std::max(1.0, c.riemann.max_abs());
  CHECK(c.weyl.max_abs() < 1e-7 * scale);
  CHECK(c.riemann.max_abs() > 0.1);  // the metric is genuinely curved
}

TEST_CASE("quadratic model chart reproduces its Weyl tensor at the center") {
  WeylData w = rand_weyl(3);
  MetricField g = quadratic_model_chart(w.tensor, 1.0);
  DiffScheme sch;
  CurvaturePoint c = curvature_at(g, Vec4::Zero(), sch);
  CHECK((c.riemann - w.tensor).max_abs() < 1e-10 * w.tensor.max_abs());
  CHECK((c.weyl - w.tensor).max_abs() < 1e-10 * w.tensor.max_abs());
  // FD path agrees with the analytic path
  MetricField gfd = g;
  gfd.d1 = nullptr;
  gfd.d2 = nullptr;
  DiffScheme sch2;
  sch2.step = 1e-2;
  CurvaturePoint c2 = curvature_at(gfd, Vec4::Zero(), sch2);
  CHECK((c2.riemann - w.tensor).max_abs() < 1e-8 * w.tensor.max_abs());
}

TEST_CASE("margin guard for finite-difference stencils") {
  MetricField g;
  g.eval = [](const Vec4&) { return Mat4::Identity(); };
  g.domain = {0.0, 1.0};
  DiffScheme sch;
  sch.step = 0.05;
  CHECK_THROWS_AS(curvature_at(g, Vec4(0.999, 0, 0, 0), sch), MarginError);
  MetricField bad;
  bad.eval = [](const Vec4&) { return Mat4(-Mat4::Identity()); };
  CHECK_THROWS_AS(curvature_at(bad, Vec4::Zero(), DiffScheme{}), SingularMetricError);
}

TEST_CASE("linearized weyl: diffeomorphism and conformal kernel") {
  // Lie derivative of delta along a linear field is pure gauge
  MetricField lie;
  lie.eval = [](const Vec4& x) {
    Mat4 m;
    Mat4 a;
    a << 0.3, 1.1, -0.2, 0.4, 0.0, -0.7, 0.25, 0.1, 0.9, 0.3, 0.0, -0.5, 0.2, 0.6, -0.1, 0.8;
    Mat4 grad = a;  // omega = a x, d omega = a
    m = grad + grad.transpose();
    (void)x;
    return m;
  };
  DiffScheme sch;
  sch.step = 0.05;
  Tensor4 wd = linearized_weyl_flat(lie, Vec4(0.3, 0.1, -0.2, 0.4), sch);
  CHECK(wd.max_abs() < 1e-10);

  // pure trace perturbation is conformal: kernel of the linearized Weyl
  MetricField tracef;
  tracef.eval = [](const Vec4& x) { return Mat4(x[0] * x[0] * Mat4::Identity()); };
  Tensor4 wt = linearized_weyl_flat(tracef, Vec4(0.2, 0.5, -0.1, 0.3), sch);
  CHECK(wt.max_abs() < 1e-10);
}

TEST_CASE("linearized weyl: TT input keeps only the second-derivative block") {
  WeylData w = rand_weyl(5);
  // f = K is TT: compare full operator against the bare t1 block
  Tensor4 wtens = w.tensor;
  MetricField k;
  k.eval = [wtens](const Vec4& x) { return singular_quadform(wtens, x); };
  Vec4 x0(0.5, -0.3, 0.4, 0.6);
  DiffScheme sch;
  sch.step = 1e-2;
  MetricDeriv2 d2 = field_d2(k, x0, sch);
  Tensor4 full = linearized_weyl_flat(d2);
  Tensor4 bare;
  for (int al = 0; al < 4; ++al)
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        for (int be = 0; be < 4; ++be) {
          auto D = [&](int m, int n, int a, int b2) {
            return d2[static_cast<std::size_t>(m)][static_cast<std::size_t>(n)](a, b2);
          };
          double t1 =
              0.5 * (D(al, j, i, be) + D(i, be, al, j) - D(al, be, i, j) - D(i, j, al, be));
          double lapij = 0, lapab = 0, lapaj = 0, lapib = 0;
          for (int m = 0; m < 4; ++m) {
            lapij += D(m, m, i, j);
            lapab += D(m, m, al, be);
            lapaj += D(m, m, al, j);
            lapib += D(m, m, i, be);
          }
          auto dd = [](int a, int b2) { return a == b2 ? 1.0 : 0.0; };
          double t2 = 0.25 * (dd(al, be) * lapij + dd(i, j) * lapab - dd(i, be) * lapaj -
                              dd(al, j) * lapib);
          bare(al, i, j, be) = t1 + t2;
        }
  CHECK((full - bare).max_abs() < 1e-7 * std::max(1.0, full.max_abs()));
}

TEST_CASE("linearized weyl vs nonlinear difference oracle") {
  MetricField f = quadratic_field(9);
  Vec4 x0(0.13, -0.21, 0.32, 0.45);
  DiffScheme sch;
  Tensor4 lin = linearized_weyl_flat(f, x0, sch);
  // oracle: numerically differentiate the full Weyl of delta + t f
  double eps = 1e-4;
  DiffScheme osch;
  osch.step = 1e-3 / 2;
  MetricField gp = perturbed_flat(f, eps);
  MetricField gm = perturbed_flat(f, -eps);
  Tensor4 wp = curvature_at(gp, x0, osch).weyl;
  Tensor4 wm = curvature_at(gm, x0, osch).weyl;
  Tensor4 num = (1.0 / (2 * eps)) * (wp - wm);
  CHECK((lin - num).max_abs() < 1e-6 * std::max(1.0, lin.max_abs()));
}

TEST_CASE("divergence of linearized weyl: K closed form") {
  WeylData w = rand_weyl(6);
  Tensor4 wtens = w.tensor;
  MetricField k;
  k.eval = [wtens](const Vec4& x) { return singular_quadform(wtens, x); };
  Vec4 x0(0.4, 0.2, -0.5, 0.3);
  DiffScheme sch;
  sch.step = 5e-3;
  Tensor3 got = linearized_weyl_divergence_flat(k, x0, sch);
  // closed form: (1/4)[d_j lap K_{i b} - d_b lap K_{ij}] with
  // d_b lap K_{ij} = (8/3) W_{kijl} [ (d_b^k x^l + x^k d_b^l)/|x|^6 - 6 x_b x^k x^l/|x|^8 ]
  double r2 = x0.squaredNorm();
  auto dlap = [&](int b, int i, int j) {
    double s = 0;
    for (int kk = 0; kk < 4; ++kk)
      for (int l = 0; l < 4; ++l) {
        double core = ((b == kk ? x0[l] : 0.0) + (b == l ? x0[kk] : 0.0)) / std::pow(r2, 3) -
                      6.0 * x0[b] * x0[kk] * x0[l] / std::pow(r2, 4);
        s += (8.0 / 3.0) * wtens(kk, i, j, l) * core;
      }
    return s;
  };
  double worst = 0;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      for (int b = 0; b < 4; ++b)
        worst = std::max(worst,
                         std::abs(got(i, j, b) - 0.25 * (dlap(j, i, b) - dlap(b, i, j))));
  CHECK(worst < 1e-5);
}

TEST_CASE("divergence: double divergence vanishes for TT biharmonic fields") {
  // for TT biharmonic f (here K), d^b of the rank-3 output vanishes
  WeylData w = rand_weyl(7);
  Tensor4 wtens = w.tensor;
  MetricField k;
  k.eval = [wtens](const Vec4& x) { return singular_quadform(wtens, x); };
  Vec4 x0(0.5, -0.2, 0.3, 0.45);
  DiffScheme sch;
  sch.step = 4e-3;
  double h = 1e-3;
  Mat4 divdiv = Mat4::Zero();
  for (int b = 0; b < 4; ++b) {
    Vec4 e = Vec4::Zero();
    e[b] = h;
    Tensor3 p = linearized_weyl_divergence_flat(k, x0 + e, sch);
    Tensor3 m = linearized_weyl_divergence_flat(k, x0 - e, sch);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) divdiv(i, j) += (p(i, j, b) - m(i, j, b)) / (2 * h);
  }
  // scale against the rank-3 field itself
  Tensor3 ref = linearized_weyl_divergence_flat(k, x0, sch);
  CHECK(divdiv.cwiseAbs().maxCoeff() < 2e-3 * std::max(1.0, ref.max_abs() / x0.norm()));
}

TEST_CASE("divergence: pure trace input cancels between blocks") {
  MetricField tracef;
  tracef.eval = [](const Vec4& x) { return Mat4((x[0] * x[0] * x[1]) * Mat4::Identity()); };
  DiffScheme sch;
  sch.step = 0.02;
  Tensor3 d = linearized_weyl_divergence_flat(tracef, Vec4(0.3, 0.2, 0.1, -0.4), sch);
  CHECK(d.max_abs() < 1e-9);
}

TEST_CASE("linearized bach: h is biharmonic away from the pole") {
  WeylData w = rand_weyl(8);
  Tensor4 wtens = w.tensor;
  MetricField hf;
  hf.eval = [wtens](const Vec4& x) {
    return singular_quadform(wtens, x + Vec4(0, 0, 0, 1));
  };
  Vec4 x0(0.6, -0.4, 0.5, 0.2);  // away from -e4
  DiffScheme sch;
  sch.step = 0.03;
  Mat4 b = linearized_bach_flat(hf, x0, sch);
  double scale = 360.0 * std::pow((x0 + Vec4(0, 0, 0, 1)).norm(), -6.0) *
                 std::sqrt(w.norm_sq());
  CHECK(b.cwiseAbs().maxCoeff() < 1e-6 * scale);
}

TEST_CASE("linearized bach: lie derivatives are kernel elements") {
  // omega cubic -> f quadratic with nontrivial trace/divergence
  MetricField lie;
  lie.eval = [](const Vec4& x) {
    Mat4 grad;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        grad(j, i) = 3.0 * (i + 1) * 0.1 * x[j] * x[j] * (j == i ? 1.5 : 1.0);
    return Mat4(grad + grad.transpose());
  };
  DiffScheme sch;
  sch.step = 0.04;
  Mat4 b = linearized_bach_flat(lie, Vec4(0.2, -0.3, 0.1, 0.25), sch);
  CHECK(b.cwiseAbs().maxCoeff() < 5e-4);
}

TEST_CASE("linearized bach: conformal perturbations are kernel, generic are not") {
  // pure-trace f = u delta is an infinitesimal conformal change: kernel
  MetricField tracef;
  tracef.eval = [](const Vec4& x) { return Mat4(x.squaredNorm() * Mat4::Identity()); };
  Vec4 x0(0.3, 0.15, -0.2, 0.1);
  DiffScheme sch;
  sch.step = 0.03;
  Mat4 lin0 = linearized_bach_flat(tracef, x0, sch);
  CHECK(lin0.cwiseAbs().maxCoeff() < 1e-6);

  // anisotropic quartic with trace and divergence: nonzero and matches the
  // difference quotient of the full Bach tensor
  MetricField f;
  f.eval = [](const Vec4& x) {
    Mat4 m = Mat4::Zero();
    m(0, 0) = x[1] * x[1] * x[1] * x[1] + x[0] * x[0] * x[2] * x[2];
    m(1, 1) = -0.5 * x[0] * x[0] * x[0] * x[0];
    m(0, 1) = m(1, 0) = 0.3 * x[2] * x[2] * x[3] * x[3];
    return m;
  };
  Mat4 lin = linearized_bach_flat(f, x0, sch);
  double eps = 1e-5;
  Mat4 bp = curvature_at(perturbed_flat(f, eps), x0, sch).bach;
  Mat4 bm = curvature_at(perturbed_flat(f, -eps), x0, sch).bach;
  Mat4 num = (bp - bm) / (2 * eps);
  CHECK(lin.cwiseAbs().maxCoeff() > 1.0);
  CHECK((lin - num).cwiseAbs().maxCoeff() < 1e-3 * lin.cwiseAbs().maxCoeff());
}

TEST_CASE("conformal covariance of the linearized Bach operator") {
  // covariance consequence: at gbar = |x|^{-2} delta, the scaled singular
  // tensor hbar = |x|^{-2} h is a kernel element because h is at the flat
  // metric (the identity with e^{2phi} = |x|^{-2})
  WeylData w = rand_weyl(10);
  Tensor4 wtens = w.tensor;
  Vec4 x0(0.5, -0.2, 0.4, 0.7);
  DiffScheme sch;
  sch.step = 0.01;
  double eps = 1e-5;
  auto bach_of = [&](double coeff) {
    MetricField g = field_from_jets([wtens, coeff](const std::array<Jet4, 4>& c) {
      std::array<Jet4, 4> u = c;
      u[3] += Jet4::constant(1.0);
      SymJet h = singular_quadform_jet(wtens, u);
      Jet4 r2 = c[0] * c[0] + c[1] * c[1] + c[2] * c[2] + c[3] * c[3];
      Jet4 inv = r2.pow(-1.0);
      SymJet g2;
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
          Jet4 term = h(i, j);
          term *= coeff;
          if (i == j) term += Jet4::constant(1.0);
          g2(i, j) = term * inv;
        }
      return g2;
    });
    g.domain = {0.2, 10.0};
    return curvature_at(g, x0, sch).bach;
  };
  Mat4 lhs = (bach_of(eps) - bach_of(-eps)) / (2 * eps);
  double scale = 360.0 * std::pow((x0 + Vec4(0, 0, 0, 1)).norm(), -6.0) *
                 std::sqrt(w.norm_sq());
  CHECK(lhs.cwiseAbs().maxCoeff() < 1e-6 * scale);

  // constant-phi covariance with the general operator path
  double phi = 0.37;
  double s2 = std::exp(2 * phi);
  DiffScheme sch2;
  sch2.step = 0.02;
  auto bach_at = [&](double coeff, double gscale) {
    MetricField g = field_from_jets([coeff, gscale](const std::array<Jet4, 4>& c) {
      SymJet g2;
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) g2(i, j) = Jet4::constant(i == j ? gscale : 0.0);
      Jet4 f00 = c[1] * c[1] * c[1] * c[1];
      f00 *= coeff;
      g2(0, 0) += f00;
      Jet4 f23 = c[0] * c[0] * c[1] * c[1];
      f23 *= 0.4 * coeff;
      g2(2, 3) += f23;
      g2(3, 2) = g2(2, 3);
      return g2;
    });
    return curvature_at(g, x0, sch2).bach;
  };
  Mat4 lhs2 = (bach_at(eps, s2) - bach_at(-eps, s2)) / (2 * eps);
  // inner = Bdot_delta(e^{-2phi} f), i.e. the quotient normalized by eps
  Mat4 inner = (bach_at(eps / s2, 1.0) - bach_at(-eps / s2, 1.0)) / (2 * eps);
  Mat4 rhs2 = conformal_bach_transform(phi, inner);
  CHECK((lhs2 - rhs2).cwiseAbs().maxCoeff() <
        1e-6 * std::max(1.0, lhs2.cwiseAbs().maxCoeff()));
}

TEST_CASE("chart inversion: flat stays flat and expansions verify") {
  BlowupProfile prof{3.0, 6.0};
  MetricField flat = flat_metric();
  flat.domain = {0.0, 1e300};
  MetricField inv = invert_chart(flat, prof);
  Mat4 g = inv.eval(Vec4(12.0, 3.0, -4.0, 5.0));
  CHECK((g - Mat4::Identity()).cwiseAbs().maxCoeff() < 1e-12);

  // model with the -(1/3) R zz term only
  WeylData w = rand_weyl(11);
  MetricField model = quadratic_model_chart(w.tensor, 0.4);
  MetricField minv = invert_chart(model, BlowupProfile{0.2, 0.35});
  InversionCheck chk = verify_inversion(minv, w.tensor, Tensor4{}, 0.0);
  CHECK(chk.residual[0] < 1e-10);

  // full expansion with a projected T term
  CounterRng rng(12);
  WeylData w2 = weyl_from_blocks(rand_tracefree(rng, 0), rand_tracefree(rng, 33));
  Tensor4 tproj;
  for (int k = 0; k < 4; ++k)
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        for (int l = 0; l < 4; ++l)
          tproj(k, i, j, l) = (2.0 / 3.0) * (w2.tensor(k, i, j, l) + w2.tensor(l, i, j, k));
  double tc = 1e-3;
  Tensor4 wt = w.tensor;
  MetricField g2;
  g2.eval = [wt, tproj, tc](const Vec4& z) {
    Mat4 m = Mat4::Identity();
    double r2 = z.squaredNorm();
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        double sr = 0, st = 0;
        for (int a = 0; a < 4; ++a)
          for (int b = 0; b < 4; ++b) {
            sr += wt(a, i, j, b) * z[a] * z[b];
            st += tproj(a, i, j, b) * z[a] * z[b];
          }
        m(i, j) += -sr / 3.0 + tc * st / (r2 * r2);
      }
    return m;
  };
  g2.domain = {1e-4, 0.4};
  MetricField g2inv = invert_chart(g2, BlowupProfile{0.2, 0.35});
  InversionCheck chk2 = verify_inversion(g2inv, wt, tproj, tc);
  CHECK(chk2.residual[2] < 1e-10);

  // cubic remainder decays cubically after inversion
  MetricField g3 = g2;
  auto base = g2.eval;
  g3.eval = [base](const Vec4& z) {
    Mat4 m = base(z);
    m(0, 0) += 0.5 * std::pow(z.norm(), 3);
    return m;
  };
  MetricField g3inv = invert_chart(g3, BlowupProfile{0.2, 0.35});
  InversionCheck chk3 = verify_inversion(g3inv, wt, tproj, tc);
  CHECK(chk3.decay_order == doctest::Approx(3.0).epsilon(0.05));

  // unprojected (pairwise only) T: quadratic growth must be detected
  Tensor4 traw{};
  CounterRng rng2(13);
  std::uint64_t n = 0;
  for (auto& v : traw.a) v = rng2.normal(n++);
  Tensor4 tpair;
  for (int k = 0; k < 4; ++k)
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        for (int l = 0; l < 4; ++l)
          tpair(k, i, j, l) = 0.25 * (traw(k, i, j, l) + traw(k, j, i, l) +
                                      traw(l, i, j, k) + traw(l, j, i, k));
  MetricField g4;
  g4.eval = [wt, tpair, tc](const Vec4& z) {
    Mat4 m = Mat4::Identity();
    double r2 = z.squaredNorm();
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        double sr = 0, st = 0;
        for (int a = 0; a < 4; ++a)
          for (int b = 0; b < 4; ++b) {
            sr += wt(a, i, j, b) * z[a] * z[b];
            st += tpair(a, i, j, b) * z[a] * z[b];
          }
        m(i, j) += -sr / 3.0 + tc * st / (r2 * r2);
      }
    return m;
  };
  g4.domain = {1e-4, 0.4};
  MetricField g4inv = invert_chart(g4, BlowupProfile{0.2, 0.35});
  CHECK_THROWS_AS(verify_inversion(g4inv, wt, tpair, tc), SymmetryError);
}

TEST_CASE("double inversion returns the original coefficients") {
  WeylData w = rand_weyl(14);
  MetricField model = quadratic_model_chart(w.tensor, 0.5);
  MetricField inv = invert_chart(model, BlowupProfile{0.25, 0.45});
  MetricField back = invert_chart(inv, BlowupProfile{50.0, 100.0});
  // the second profile stays in its |y|^{-2} regime on the sampled radii
  Vec4 z(0.11, -0.07, 0.05, 0.09);
  CHECK((back.eval(z) - model.eval(z)).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("weyl energy: flat zero, model-ball value, conformal invariance") {
  QuadratureSpec q;
  q.radial_nodes = 16;
  q.sphere_degree = 7;
  MetricField flat = flat_metric();
  flat.domain = {0.0, 2.0};
  EnergyValue ez = weyl_energy(flat, ChartDomain{0.1, 0.5}, q);
  CHECK(std::abs(ez.value) < 1e-12);

  WeylData w = rand_weyl(15);
  MetricField model = quadratic_model_chart(w.tensor, 1.0);
  double r = 0.08;
  EnergyValue ev = weyl_energy(model, ChartDomain{0.0, r}, q);
  double lead = kPi * kPi / 2.0 * std::pow(r, 4) * w.norm_sq();
  CHECK(ev.value == doctest::Approx(lead).epsilon(0.02));  // O(r^2) relative

  // conformal invariance: e^{2 phi} g with a smooth phi
  auto base = model.eval;
  MetricField conf;
  conf.eval = [base](const Vec4& x) {
    double phi = 0.2 + 0.1 * x[0] - 0.05 * x[1] * x[3];
    return Mat4(std::exp(2 * phi) * base(x));
  };
  conf.domain = model.domain;
  DiffScheme sch;
  sch.step = 2e-3;
  EnergyValue ec = weyl_energy(conf, ChartDomain{0.0, r}, q, sch);
  CHECK(ec.value == doctest::Approx(ev.value).epsilon(1e-4));

  // additivity over disjoint annuli
  EnergyValue e1 = weyl_energy(model, ChartDomain{0.02, 0.05}, q);
  EnergyValue e2 = weyl_energy(model, ChartDomain{0.05, 0.08}, q);
  EnergyValue e12 = weyl_energy(model, ChartDomain{0.02, 0.08}, q);
  CHECK(e12.value == doctest::Approx(e1.value + e2.value).epsilon(1e-8));
}

TEST_CASE("derivative commutation at a conformally flat background") {
  // at an LCF metric, d/dt of div div W(g + t f) equals div div of the
  // linearized Weyl (the claim feeding the boundary-integral derivation)
  MetricField f = quadratic_field(16);
  Vec4 x0(0.2, -0.1, 0.15, 0.25);
  DiffScheme sch;
  sch.step = 0.02;
  double eps = 1e-4;
  // background: conformally flat e^{2phi} delta with smooth phi
  auto fe_d2 = f.d2;
  auto fe_d1 = f.d1;
  auto fe = f.eval;
  auto make = [&](double t) {
    MetricField g;
    g.eval = [fe, t](const Vec4& x) {
      double phi = 0.15 * x[0] - 0.1 * x[2] + 0.05 * x[1] * x[1];
      return Mat4(std::exp(2 * phi) * Mat4::Identity() + t * fe(x));
    };
    g.d1 = [fe_d1, t](const Vec4& x) {
      double phi = 0.15 * x[0] - 0.1 * x[2] + 0.05 * x[1] * x[1];
      Vec4 dphi(0.15, 0.1 * x[1], -0.1, 0.0);
      MetricDeriv1 d = fe_d1(x);
      for (int m = 0; m < 4; ++m)
        d[static_cast<std::size_t>(m)] =
            t * d[static_cast<std::size_t>(m)] +
            2.0 * dphi[m] * std::exp(2 * phi) * Mat4::Identity();
      return d;
    };
    g.d2 = [fe_d2, t](const Vec4& x) {
      double phi = 0.15 * x[0] - 0.1 * x[2] + 0.05 * x[1] * x[1];
      Vec4 dphi(0.15, 0.1 * x[1], -0.1, 0.0);
      Mat4 d2phi = Mat4::Zero();
      d2phi(1, 1) = 0.1;
      MetricDeriv2 d = fe_d2(x);
      for (int m = 0; m < 4; ++m)
        for (int n = 0; n < 4; ++n)
          d[static_cast<std::size_t>(m)][static_cast<std::size_t>(n)] =
              t * d[static_cast<std::size_t>(m)][static_cast<std::size_t>(n)] +
              (4.0 * dphi[m] * dphi[n] + 2.0 * d2phi(m, n)) * std::exp(2 * phi) *
                  Mat4::Identity();
      return d;
    };
    return g;
  };
  auto divdivw = [&](double t, const Vec4& x) {
    // covariant double divergence of the Weyl field of g_t at the background metric
    return curvature_at(make(t), x, sch).bach;  // -4(divdiv W + Ric W/2)
  };
  Mat4 dnum = (divdivw(eps, x0) - divdivw(-eps, x0)) / (2 * eps);
  // compare with the linearized Bach at the conformally flat background via
  // covariance: both sides agree when the claim holds
  auto phi_at = [&](const Vec4& x) { return 0.15 * x[0] - 0.1 * x[2] + 0.05 * x[1] * x[1]; };
  MetricField fscaled;
  fscaled.eval = [fe, phi_at](const Vec4& x) {
    return Mat4(std::exp(-2.0 * phi_at(x)) * fe(x));
  };
  fscaled.d1 = [fe, fe_d1, phi_at](const Vec4& x) {
    double e2 = std::exp(-2.0 * phi_at(x));
    Vec4 dphi(0.15, 0.1 * x[1], -0.1, 0.0);
    MetricDeriv1 d = fe_d1(x);
    Mat4 fv = fe(x);
    for (int m = 0; m < 4; ++m)
      d[static_cast<std::size_t>(m)] =
          e2 * (d[static_cast<std::size_t>(m)] - 2.0 * dphi[m] * fv);
    return d;
  };
  fscaled.d2 = [fe, fe_d1, fe_d2, phi_at](const Vec4& x) {
    double e2 = std::exp(-2.0 * phi_at(x));
    Vec4 dphi(0.15, 0.1 * x[1], -0.1, 0.0);
    Mat4 d2phi = Mat4::Zero();
    d2phi(1, 1) = 0.1;
    MetricDeriv1 d1v = fe_d1(x);
    MetricDeriv2 d = fe_d2(x);
    Mat4 fv = fe(x);
    for (int m = 0; m < 4; ++m)
      for (int n = 0; n < 4; ++n)
        d[static_cast<std::size_t>(m)][static_cast<std::size_t>(n)] =
            e2 * (d[static_cast<std::size_t>(m)][static_cast<std::size_t>(n)] -
                  2.0 * dphi[m] * d1v[static_cast<std::size_t>(n)] -
                  2.0 * dphi[n] * d1v[static_cast<std::size_t>(m)] +
                  (4.0 * dphi[m] * dphi[n] - 2.0 * d2phi(m, n)) * fv);
    return d;
  };
  Mat4 inner = linearized_bach_flat(fscaled, x0, sch);
  Mat4 rhs = conformal_bach_transform(phi_at(x0), inner);
  CHECK((dnum - rhs).cwiseAbs().maxCoeff() <
        1e-4 * std::max(1.0, dnum.cwiseAbs().maxCoeff()));
}
