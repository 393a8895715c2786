#include "weylglue/balance.hpp"

#include <algorithm>
#include <cmath>

#include "weylglue/errors.hpp"
#include "weylglue/rng.hpp"
#include "weylglue/parallel.hpp"
#include "weylglue/sphere.hpp"

namespace weylglue {

namespace {

constexpr double kPi = 3.14159265358979323846;

double smoothstep5(double s, double* d1 = nullptr, double* d2 = nullptr) {
  if (s <= 0) {
    if (d1) *d1 = 0;
    if (d2) *d2 = 0;
    return 0;
  }
  if (s >= 1) {
    if (d1) *d1 = 0;
    if (d2) *d2 = 0;
    return 1;
  }
  double s2 = s * s;
  if (d1) *d1 = 30 * s2 - 60 * s2 * s + 30 * s2 * s2;
  if (d2) *d2 = 60 * s - 180 * s2 + 120 * s2 * s;
  return 10 * s2 * s - 15 * s2 * s2 + 6 * s2 * s2 * s;
}

void gauss_legendre16(std::vector<double>& x, std::vector<double>& w) {
  const int n = 16;
  x.assign(n, 0);
  w.assign(n, 0);
  for (int i = 0; i < n; ++i) {
    double z = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double pp = 0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < n; ++j) {
        double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
      }
      pp = n * (z * p0 - p1) / (z * z - 1.0);
      double dz = p0 / pp;
      z -= dz;
      if (std::abs(dz) < 1e-15) break;
    }
    x[static_cast<std::size_t>(i)] = z;
    w[static_cast<std::size_t>(i)] = 2.0 / ((1.0 - z * z) * pp * pp);
  }
}

// Radial integral of f(r) r^3 over [a, b] with octave panels.
double radial_integral(const std::function<double(double)>& f, double a, double b) {
  static std::vector<double> xs, ws;
  if (xs.empty()) gauss_legendre16(xs, ws);
  std::vector<std::pair<double, double>> panels;
  double edge = a;
  while (edge * 2.0 < b) {
    panels.emplace_back(edge, edge * 2.0);
    edge *= 2.0;
  }
  panels.emplace_back(edge, b);
  double total = 0;
  for (auto [lo, hi] : panels)
    for (std::size_t i = 0; i < xs.size(); ++i) {
      double r = 0.5 * (hi - lo) * xs[i] + 0.5 * (hi + lo);
      total += 0.5 * (hi - lo) * ws[i] * r * r * r * f(r);
    }
  return total;
}

// Shell average over S^3 at radius r of a pointwise density.
double shell_integral(const std::function<double(const Vec4&)>& dens, double r,
                      const S3Rule& rule) {
  std::vector<double> parts(rule.points.size());
  parallel_for(rule.points.size(), [&](std::size_t i) {
    parts[i] = rule.weights[i] * dens(r * rule.points[i]);
  });
  return pairwise_sum(parts);
}

// Symmetric-field combinators with analytic derivatives.
MetricField add_fields(const MetricField& a, const MetricField& b, double ca, double cb) {
  MetricField out;
  auto ae = a.eval, be = b.eval;
  out.eval = [ae, be, ca, cb](const Vec4& x) { return (ca * ae(x) + cb * be(x)).eval(); };
  if (a.d1 && b.d1) {
    auto ad = a.d1, bd = b.d1;
    out.d1 = [ad, bd, ca, cb](const Vec4& x) {
      MetricDeriv1 da = ad(x), db = bd(x);
      for (int m = 0; m < 4; ++m)
        da[static_cast<std::size_t>(m)] = ca * da[static_cast<std::size_t>(m)] + cb * db[static_cast<std::size_t>(m)];
      return da;
    };
  }
  if (a.d2 && b.d2) {
    auto ad = a.d2, bd = b.d2;
    out.d2 = [ad, bd, ca, cb](const Vec4& x) {
      MetricDeriv2 da = ad(x), db = bd(x);
      for (int m = 0; m < 4; ++m)
        for (int n = 0; n < 4; ++n)
          da[static_cast<std::size_t>(m)][static_cast<std::size_t>(n)] =
              ca * da[static_cast<std::size_t>(m)][static_cast<std::size_t>(n)] +
              cb * db[static_cast<std::size_t>(m)][static_cast<std::size_t>(n)];
      return da;
    };
  }
  out.domain.r_min = std::max(a.domain.r_min, b.domain.r_min);
  out.domain.r_max = std::min(a.domain.r_max, b.domain.r_max);
  return out;
}

}  // namespace

void GluingConfig::validate() const {
  if (!(a > 0 && gamma > 0 && eps_chart > 0 && delta_chart > 0))
    throw ConfigError("gluing scales must be positive");
  const double cap = 0.1 * (1.0 + 1e-12);
  if (!(a / gamma <= cap))
    throw ConfigError("scale ordering violated: need a/gamma <= 0.1 (a << gamma)");
  if (!(gamma / eps_chart <= cap) || !(gamma / delta_chart <= cap))
    throw ConfigError("scale ordering violated: need gamma/eps <= 0.1 and gamma/delta <= 0.1");
}

std::string EnergyReport::sign_string() const {
  switch (sign) {
    case BalanceSign::Negative:
      return "negative";
    case BalanceSign::Positive:
      return "positive";
    default:
      return "indeterminate";
  }
}

MetricField h_correction(const CorrectionJet& jet, double eps) {
  // the hessian must carry the projected symmetries, otherwise the inverted
  // chart develops growing defects
  Tensor4 d2a;
  for (int k = 0; k < 4; ++k)
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        for (int l = 0; l < 4; ++l) d2a(k, i, j, l) = 2.0 * jet.hessian(k, i, j, l);
  PairwiseDecomposition dec = decompose_pairwise(d2a, 1e-8);
  if ((d2a - dec.t_part).max_abs() > 1e-8 * std::max(1.0, d2a.max_abs()))
    throw SymmetryError("h_correction needs the projected hessian form");

  // H = B(z) phi(|z|) with B the singular quadratic form of -3T (so that
  // B = T zz / |z|^4), phi == 1 for r <= eps, == 0 for r >= 2 eps
  Tensor4 wt = -3.0 * jet.hessian;
  auto phi3 = [eps](double r, double& d1, double& d2v) {
    double s = (r - eps) / eps;
    double ds, dds;
    double v = 1.0 - smoothstep5(s, &ds, &dds);
    d1 = -ds / eps;
    d2v = -dds / (eps * eps);
    return v;
  };

  MetricField out;
  out.eval = [wt, eps, phi3](const Vec4& z) {
    double r = z.norm();
    if (r < 1e-14) throw PoleError("H evaluated at its singular point");
    if (r >= 2 * eps) return Mat4(Mat4::Zero());
    double dp, ddp;
    double phi = phi3(r, dp, ddp);
    return Mat4(phi * singular_quadform(wt, z));
  };
  out.d1 = [wt, eps, phi3](const Vec4& z) {
    double r = z.norm();
    MetricDeriv1 d;
    for (auto& m : d) m = Mat4::Zero();
    if (r < 1e-14 || r >= 2 * eps) return d;
    double dp, ddp;
    double phi = phi3(r, dp, ddp);
    QuadformDerivs q = singular_quadform_derivs(wt, z, 1);
    for (int m = 0; m < 4; ++m)
      d[static_cast<std::size_t>(m)] =
          phi * q.d1[static_cast<std::size_t>(m)] + dp * (z[m] / r) * q.val;
    return d;
  };
  out.d2 = [wt, eps, phi3](const Vec4& z) {
    double r = z.norm();
    MetricDeriv2 d;
    for (auto& row : d)
      for (auto& m : row) m = Mat4::Zero();
    if (r < 1e-14 || r >= 2 * eps) return d;
    double dp, ddp;
    double phi = phi3(r, dp, ddp);
    QuadformDerivs q = singular_quadform_derivs(wt, z, 2);
    for (int m = 0; m < 4; ++m)
      for (int n = 0; n < 4; ++n) {
        double um = z[m] / r, un = z[n] / r;
        double d2r = ((m == n ? 1.0 : 0.0) - um * un) / r;
        d[static_cast<std::size_t>(m)][static_cast<std::size_t>(n)] =
            phi * q.d2[static_cast<std::size_t>(m)][static_cast<std::size_t>(n)] +
            dp * (un * q.d1[static_cast<std::size_t>(m)] + um * q.d1[static_cast<std::size_t>(n)]) +
            (ddp * um * un + dp * d2r) * q.val;
      }
    return d;
  };
  out.domain.r_max = 4 * eps;
  return out;
}

VPrimeResult v_prime_zero(const WeylData& w, const CorrectionJet& jet, double gamma,
                          const MetricField& m_model, double s) {
  // model chart must match w at the center
  {
    DiffScheme sch;
    sch.step = 1e-3;
    CurvaturePoint c = curvature_at(m_model, Vec4(1e-3, 0, 0, 0), sch);
    double gap = (c.riemann - w.tensor).max_abs();
    if (gap > 1e-4 * std::max(1.0, w.tensor.max_abs()))
      throw InputMismatchError("model chart curvature at the center does not match W");
  }

  VPrimeResult out;
  out.s = s;
  double w2 = w.norm_sq();
  double wt = 0;
  for (int k = 0; k < 4; ++k)
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        for (int l = 0; l < 4; ++l) wt += w.tensor(k, i, j, l) * jet.hessian(k, i, j, l);
  out.analytic = -(kPi * kPi / 2.0) * std::pow(gamma, -4) * w2 + (4.0 * kPi * kPi / 3.0) * wt;

  // boundary term by exact sphere quadrature:
  // int_{S^3} W_{aijb} nu^a d^b Htilde^{ij} = (pi^2/3) W.T
  {
    S3Rule rule = s3_product_rule(9);
    std::vector<double> parts(rule.points.size());
    for (std::size_t idx = 0; idx < rule.points.size(); ++idx) {
      const Vec4& u = rule.points[idx];
      double sum = 0;
      for (int al = 0; al < 4; ++al)
        for (int i = 0; i < 4; ++i)
          for (int j = 0; j < 4; ++j)
            for (int be = 0; be < 4; ++be) {
              double dh = 0;
              for (int k = 0; k < 4; ++k) {
                dh += jet.hessian(be, i, j, k) * u[k] + jet.hessian(k, i, j, be) * u[k];
              }
              double quart = 0;
              for (int k = 0; k < 4; ++k)
                for (int l = 0; l < 4; ++l) quart += jet.hessian(k, i, j, l) * u[k] * u[l];
              dh -= 4.0 * u[be] * quart;
              sum += w.tensor(al, i, j, be) * u[al] * dh;
            }
      parts[idx] = rule.weights[idx] * sum;
    }
    out.boundary_term = pairwise_sum(parts);
  }

  // Eq.-style cancellation: int_{S^3} W^{aijb} d2_{ab} Htilde_{ij} = 0 exactly
  {
    S3Rule rule = s3_product_rule(9);
    std::vector<double> parts(rule.points.size());
    for (std::size_t idx = 0; idx < rule.points.size(); ++idx) {
      const Vec4& u = rule.points[idx];
      double sum = 0;
      auto d = [](int a, int b) { return a == b ? 1.0 : 0.0; };
      for (int al = 0; al < 4; ++al)
        for (int be = 0; be < 4; ++be)
          for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) {
              double h2 = 0;
              for (int k = 0; k < 4; ++k)
                for (int l = 0; l < 4; ++l) {
                  double tkl = jet.hessian(k, i, j, l);
                  h2 += tkl * (d(al, k) * d(be, l) + d(be, k) * d(al, l) -
                               4.0 * u[be] * (d(al, k) * u[l] + u[k] * d(al, l)) -
                               4.0 * (d(al, be) * u[k] * u[l] +
                                      u[al] * (d(be, k) * u[l] + u[k] * d(be, l))) +
                               24.0 * u[al] * u[be] * u[k] * u[l]);
                }
              sum += w.tensor(al, i, j, be) * h2;
            }
      parts[idx] = rule.weights[idx] * sum;
    }
    out.cancellation = pairwise_sum(parts);
  }

  // Numeric difference quotient. g_s = m_model + s H with the quintic-cutoff
  // H supported in 2 eps; domain rho(s)..2eps plus the hole term.
  double eps = m_model.domain.r_max / 2.0;
  MetricField hfield = h_correction(jet, eps / 2.0);
  double rho = std::pow(s, 0.25) / gamma;
  if (rho >= eps)
    throw DomainError("difference-quotient hole exceeds the chart; decrease s or gamma");

  MetricField gp = add_fields(m_model, hfield, 1.0, s);
  MetricField gm = add_fields(m_model, hfield, 1.0, -s);
  DiffScheme sch;  // analytic path: scheme unused beyond interface
  S3Rule rule = s3_product_rule(7);

  auto dens = [&](const MetricField& g, const Vec4& x) { return weyl_density(g, x, sch); };
  auto diff_shell = [&](double r) {
    std::vector<double> parts(rule.points.size());
    parallel_for(rule.points.size(), [&](std::size_t i) {
      Vec4 x = r * rule.points[i];
      parts[i] = rule.weights[i] * (dens(gp, x) - dens(gm, x));
    });
    return pairwise_sum(parts);
  };
  auto base_shell = [&](double r) { return shell_integral([&](const Vec4& x) { return dens(m_model, x); }, r, rule); };

  double support = 2.0 * (eps / 2.0);  // H vanishes beyond this radius
  double hi = std::min(support, m_model.domain.r_max * 0.999);
  double part1 = radial_integral(diff_shell, rho, hi) / (2.0 * s);
  double hole = radial_integral(base_shell, std::min(1e-3 * rho, rho * 0.5), rho) / s;
  out.numeric = part1 - hole;
  out.relative_gap = std::abs(out.numeric - out.analytic) / std::max(std::abs(out.analytic), 1e-12);
  return out;
}

MetricField build_glued_metric(const WeylData& w, const CorrectionJet& jet,
                               const GluingConfig& cfg) {
  cfg.validate();
  Tensor4 wt = w.tensor;
  CorrectionJet j = jet;
  double a = cfg.a, gamma = cfg.gamma, eps = cfg.eps_chart, delta = cfg.delta_chart;

  MetricField out;
  out.eval = [wt, j, a, gamma, eps, delta](const Vec4& x) {
    double r = x.norm();
    if (r < a / (8.0 * eps)) throw DomainError("inside the M-side core; neck chart only");
    Mat4 g = Mat4::Identity();
    // K part
    Mat4 k = singular_quadform(wt, x);
    // quadratic jet part (1/2) d2A xx = T xx
    Mat4 quad = Mat4::Zero();
    for (int i = 0; i < 4; ++i)
      for (int jj = 0; jj < 4; ++jj) {
        double sq = 0;
        for (int kk = 0; kk < 4; ++kk)
          for (int l = 0; l < 4; ++l) sq += j.hessian(kk, i, jj, l) * x[kk] * x[l];
        quad(i, jj) = sq;
      }
    g += a * a * (k + quad);
    if (r > gamma) {
      // eta from the cubic+quartic jet, ramped on by chi_gamma(|x| - gamma)
      double arg = (r - gamma) / gamma;  // chi: 0 below 1/4, 1 above 3/4
      double chi = smoothstep5((arg - 0.25) * 2.0);
      if (chi > 0 && r < delta) {
        Mat4 eta = Mat4::Zero();
        for (int i = 0; i < 4; ++i)
          for (int jj = 0; jj < 4; ++jj) {
            double c3 = 0, c4 = 0;
            for (int p = 0; p < 4; ++p)
              for (int q = 0; q < 4; ++q)
                for (int rr = 0; rr < 4; ++rr) {
                  c3 += j.third_d(p, q, rr, i, jj) * x[p] * x[q] * x[rr];
                  for (int ss = 0; ss < 4; ++ss)
                    c4 += j.fourth_d(p, q, rr, ss, i, jj) * x[p] * x[q] * x[rr] * x[ss];
                }
            eta(i, jj) = c3 / 6.0 + c4 / 24.0;
          }
        g += a * a * chi * eta;
      }
    }
    return g;
  };
  out.domain.r_min = cfg.a / (8.0 * cfg.eps_chart);
  out.domain.r_max = cfg.delta_chart;
  out.remainder_order = 5;  // |x|^5 jet remainder, declared
  return out;
}

EnergyReport energy_balance(const WeylData& w, const CorrectionJet& jet,
                            const GluingConfig& cfg) {
  cfg.validate();
  EnergyReport rep;
  rep.a = cfg.a;
  rep.gamma = cfg.gamma;
  rep.t = jet.t;
  double a4 = std::pow(cfg.a, 4);
  double w2 = w.norm_sq();

  BoundaryIntegralReport div = divergence_boundary_integral(jet, w, cfg.gamma);
  BoundaryIntegralReport nod = nondivergence_boundary_integral(jet, w, cfg.gamma);

  rep.z_side = 2.0 * a4 * (nod.total - div.total);
  rep.z_leading = 2.0 * a4 * (nod.leading_coeff - div.leading_coeff) * std::pow(cfg.gamma, -4);
  rep.m_leading = -(kPi * kPi / 2.0) * a4 * std::pow(cfg.gamma, -4) * w2;

  double wt = 0;
  for (int k = 0; k < 4; ++k)
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        for (int l = 0; l < 4; ++l) wt += w.tensor(k, i, j, l) * jet.hessian(k, i, j, l);
  rep.m_side = rep.m_leading + (4.0 * kPi * kPi / 3.0) * a4 * wt;

  rep.interaction_term = 2.0 * wt;  // W^{kijl} d2_{kl} A_{ij}(0)
  rep.predicted_balance = (2.0 * kPi * kPi / 3.0) * a4 * rep.interaction_term;

  rep.error_budget.push_back({"z_side_gamma2", std::abs(rep.z_side - rep.z_leading) +
                                                   2.0 * a4 * (nod.quadrature_error + div.quadrature_error),
                              false});
  rep.error_budget.push_back({"series_truncation", a4 * jet.truncation_bound * w2, false});
  rep.error_budget.push_back(
      {"neck_o_a4_gamma", std::abs(rep.predicted_balance) * cfg.gamma, true});
  rep.error_budget.push_back({"m_side_o_a4", 0.0, true});

  if (cfg.measure_neck) {
    MetricField gx = build_glued_metric(w, jet, cfg);
    // m-side piece: jet-quadratic only; z-side piece: eta always on
    Tensor4 wt4 = w.tensor;
    CorrectionJet jc = jet;
    auto piece = [wt4, jc, &cfg](bool with_eta) {
      MetricField f;
      double a = cfg.a;
      f.eval = [wt4, jc, a, with_eta](const Vec4& x) {
        Mat4 g = Mat4::Identity() + a * a * singular_quadform(wt4, x);
        for (int i = 0; i < 4; ++i)
          for (int j = 0; j < 4; ++j) {
            double sq = 0;
            for (int k = 0; k < 4; ++k)
              for (int l = 0; l < 4; ++l) sq += jc.hessian(k, i, j, l) * x[k] * x[l];
            double eta = 0;
            if (with_eta) {
              for (int p = 0; p < 4; ++p)
                for (int q = 0; q < 4; ++q)
                  for (int r = 0; r < 4; ++r) {
                    eta += jc.third_d(p, q, r, i, j) * x[p] * x[q] * x[r] / 6.0;
                    for (int s = 0; s < 4; ++s)
                      eta += jc.fourth_d(p, q, r, s, i, j) * x[p] * x[q] * x[r] * x[s] / 24.0;
                  }
            }
            g(i, j) += a * a * (sq + eta);
          }
        return g;
      };
      f.domain.r_max = cfg.delta_chart;
      return f;
    };
    QuadratureSpec q;
    q.radial_nodes = 12;
    q.sphere_degree = 7;
    q.refine_check = false;
    DiffScheme sch;
    sch.step = cfg.gamma / 50.0;
    EnergyValue full = weyl_energy(gx, ChartDomain{cfg.gamma / 8.0, 2.0 * cfg.gamma}, q, sch);
    EnergyValue lo = weyl_energy(piece(false), ChartDomain{cfg.gamma / 8.0, cfg.gamma}, q, sch);
    EnergyValue hiv = weyl_energy(piece(true), ChartDomain{cfg.gamma, 2.0 * cfg.gamma}, q, sch);
    rep.neck_correction = full.value - lo.value - hiv.value;
  }

  for (const auto& line : rep.error_budget)
    if (!line.declared) rep.budget_total += line.bound;
  rep.budget_total += std::abs(rep.predicted_balance) * cfg.gamma;  // neck bound

  if (std::abs(rep.predicted_balance) <= rep.budget_total ||
      rep.interaction_term == 0.0) {
    rep.sign = BalanceSign::Indeterminate;
  } else {
    rep.sign = rep.predicted_balance < 0 ? BalanceSign::Negative : BalanceSign::Positive;
  }
  return rep;
}

namespace {

PairingReport pairing_core(const WeylData& w, double t) {
  Derdzinski dd = derdzinski_diagonalize(w);
  PairingReport rep;
  for (int i = 0; i < 3; ++i) {
    rep.sd[static_cast<std::size_t>(i)] = dd.eigen[static_cast<std::size_t>(i)];
    rep.asd[static_cast<std::size_t>(i)] = dd.eigen[static_cast<std::size_t>(i + 3)];
  }
  double sd_norm = 0, asd_norm = 0;
  for (int i = 0; i < 3; ++i) {
    sd_norm += rep.sd[static_cast<std::size_t>(i)] * rep.sd[static_cast<std::size_t>(i)];
    asd_norm += rep.asd[static_cast<std::size_t>(i)] * rep.asd[static_cast<std::size_t>(i)];
  }
  std::array<std::array<int, 3>, 6> perms = {
      {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
  rep.best_sum = -1e300;
  for (const auto& p : perms) {
    double s = 0;
    for (int i = 0; i < 3; ++i)
      s += rep.sd[static_cast<std::size_t>(i)] * rep.asd[static_cast<std::size_t>(p[static_cast<std::size_t>(i)])];
    if (s > rep.best_sum) {
      rep.best_sum = s;
      rep.pairing = p;
    }
  }
  double scale = std::max(w.norm_sq(), 1e-30);
  if (sd_norm < 1e-20 * scale || asd_norm < 1e-20 * scale) {
    rep.verdict = BalanceSign::Indeterminate;
    rep.best_sum = 0;
  } else {
    // both parts nonzero: the maximal pairing is strictly positive, so the
    // contraction -4 C2(t) best_sum is negative
    rep.verdict = rep.best_sum > 0 ? BalanceSign::Negative : BalanceSign::Indeterminate;
  }
  (void)t;
  return rep;
}

}  // namespace

PairingReport interaction_sign(const WeylData& w, double t) { return pairing_core(w, t); }

PairingReport interaction_sign(const WeylData& w, const QuotientModel& model) {
  PairingReport rep = pairing_core(w, model.t);
  if (rep.verdict != BalanceSign::Negative) return rep;
  // threshold scan: largest grid t at which the identity-tower term dominates
  // the measured non-identity remainder (conservative, see ledger)
  const std::array<double, 6> grid = {2.0, 1.6, 1.3, 1.2, 1.1, 1.05};
  rep.has_threshold = false;
  for (double tg : grid) {
    QuotientModel m = model;
    m.t = tg;
    // keep each element's relative log-position in the fundamental domain
    for (auto& e : m.elements) {
      double xfrac = std::log(e.s) / std::log(model.t);
      e.s = std::pow(tg, xfrac);
    }
    QuotientJetResult qr = correction_jet_quotient(w, m);
    rep.remainders = qr.remainders;
    CylinderParams cp{tg, m.truncation_tol};
    double c2 = coeff_c2(cp).value;
    double main_term = 4.0 * c2 * std::abs(rep.best_sum);
    double rem_contr = 0;
    for (int k = 0; k < 4; ++k)
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
          for (int l = 0; l < 4; ++l)
            rem_contr += std::abs(w.tensor(k, i, j, l)) *
                         std::abs(qr.jet.hessian_raw(k, i, j, l) - qr.cylinder_hessian_raw(k, i, j, l));
    if (main_term > 2.0 * rem_contr) {
      rep.threshold_t = tg;
      rep.has_threshold = true;
      break;
    }
  }
  return rep;
}

CapacityCutoff capacity_cutoff(double delta, double delta_tilde) {
  if (!(delta_tilde > 0 && delta_tilde < delta))
    throw ConfigError("capacity cutoff needs 0 < delta_tilde < delta");
  CapacityCutoff out;
  out.log_ratio = std::log(delta / delta_tilde);
  out.no_decay_warning = delta_tilde >= delta / 10.0;
  double l = out.log_ratio;
  double dt = delta_tilde;
  out.chi = [dt, l](double r) {
    if (r <= dt) return 0.0;
    double s = std::log(r / dt) / l;
    return smoothstep5(s);
  };
  // E = 2 pi^2 int (chi''^2 + 3 (chi'/r)^2 + chi'^4) r^3 dr
  auto integrand = [dt, l](double r) {
    double s = std::log(r / dt) / l;
    double dp, d2p;
    smoothstep5(s, &dp, &d2p);
    double c1 = dp / (l * r);                       // chi'
    double c2 = (d2p / l - dp) / (l * r * r);       // chi''
    return c2 * c2 + 3.0 * c1 * c1 / (r * r) + c1 * c1 * c1 * c1;
  };
  out.energy = 2.0 * kPi * kPi * radial_integral(integrand, delta_tilde, delta);
  return out;
}

double capacity_weyl_ratio(const CapacityCutoff& cut, const Mat4& f0, double b,
                           double delta, double delta_tilde) {
  Mat4 f = 0.5 * (f0 + f0.transpose());
  MetricField g;
  auto chi = cut.chi;
  g.eval = [chi, f, b](const Vec4& x) {
    return (Mat4::Identity() + chi(x.norm()) * b * b * f).eval();
  };
  DiffScheme sch;
  sch.step = delta_tilde / 8.0;
  sch.order = 4;
  double worst = 0;
  CounterRng rng(77);
  for (int k = 0; k < 12; ++k) {
    double r = delta_tilde * std::pow(delta / delta_tilde, (k + 0.5) / 12.0);
    Vec4 u;
    for (int i = 0; i < 4; ++i) u[i] = rng.normal(static_cast<std::uint64_t>(4 * k + i));
    u.normalize();
    Vec4 x = r * u;
    sch.step = std::min(r / 16.0, (delta - r) / 16.0 + 1e-9);
    if (sch.step <= 0) sch.step = r / 32.0;
    CurvaturePoint c = curvature_at(g, x, sch);
    double lhs = 0;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        for (int kk = 0; kk < 4; ++kk)
          for (int l = 0; l < 4; ++l) lhs += c.weyl(i, j, kk, l) * c.weyl(i, j, kk, l);
    // RHS pieces from first/second metric differences
    auto ev = g.eval;
    double dg2 = 0, d2g2 = 0, dgi2 = 0;
    for (int m = 0; m < 4; ++m) {
      Vec4 e = Vec4::Zero();
      e[m] = sch.step;
      Mat4 d1 = (ev(x + e) - ev(x - e)) / (2 * sch.step);
      Mat4 gi_p = ev(x + e).inverse();
      Mat4 gi_m = ev(x - e).inverse();
      Mat4 d1i = (gi_p - gi_m) / (2 * sch.step);
      dg2 += d1.squaredNorm();
      dgi2 += d1i.squaredNorm();
      for (int n = 0; n < 4; ++n) {
        Vec4 en = Vec4::Zero();
        en[n] = sch.step;
        Mat4 d2 = (ev(x + e + en) - ev(x + e - en) - ev(x - e + en) + ev(x - e - en)) /
                  (4 * sch.step * sch.step);
        d2g2 += d2.squaredNorm();
      }
    }
    double rhs = dgi2 * dg2 + dg2 * dg2 + d2g2;
    if (rhs > 1e-300) worst = std::max(worst, lhs / rhs);
  }
  return worst;
}

}  // namespace weylglue
