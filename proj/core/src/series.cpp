#include "weylglue/series.hpp"

#include <cmath>
#include <istream>
#include <sstream>
#include <string>

#include "weylglue/errors.hpp"

namespace weylglue {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr int kMaxTerms = 2000000;

const Vec4 kE4(0, 0, 0, 1);

// Quintic smoothstep: 0 at s<=0, 1 at s>=1, C^2 transitions.
double smoothstep5(double s, double& dp) {
  if (s <= 0) {
    dp = 0;
    return 0;
  }
  if (s >= 1) {
    dp = 0;
    return 1;
  }
  double s2 = s * s;
  dp = 30 * s2 - 60 * s2 * s + 30 * s2 * s2;
  return 10 * s2 * s - 15 * s2 * s2 + 6 * s2 * s2 * s;
}

// Cutoff profile in log|y| between radii (r_lo, r_hi): 1 below, 0 above.
double cut_down(double r, double r_lo, double r_hi, double& ddr) {
  double a = std::log(r_lo), b = std::log(r_hi);
  double s = (std::log(r) - a) / (b - a);
  double dp;
  double v = smoothstep5(s, dp);
  ddr = -dp / ((b - a) * r);
  return 1.0 - v;
}

}  // namespace

void CylinderParams::validate() const {
  if (!(t > 1.0)) throw ConfigError("series parameter t must exceed 1");
  if (!(truncation_tol > 0) || truncation_tol > 1e-6)
    throw ConfigError("truncation tolerance must lie in (0, 1e-6]");
}

void QuotientModel::validate() const {
  if (!(t > 1.0)) throw ConfigError("quotient model needs t > 1");
  double lo = std::pow(t, -0.5), hi = std::pow(t, 0.5);
  int n_id = 0;
  for (const auto& e : elements) {
    if (!(e.s > lo && e.s <= hi * (1 + 1e-12)))
      throw ConfigError("element scale outside (t^{-1/2}, t^{1/2}]");
    bool is_id = std::abs(e.s - 1.0) < 1e-12 &&
                 (e.o.matrix() - Mat4::Identity()).cwiseAbs().maxCoeff() < 1e-12;
    if (is_id) ++n_id;
  }
  if (n_id != 1) throw ConfigError("quotient model must contain the identity element exactly once");
}

std::size_t QuotientModel::identity_index() const {
  for (std::size_t i = 0; i < elements.size(); ++i) {
    const auto& e = elements[i];
    if (std::abs(e.s - 1.0) < 1e-12 &&
        (e.o.matrix() - Mat4::Identity()).cwiseAbs().maxCoeff() < 1e-12)
      return i;
  }
  throw ConfigError("no identity element in quotient model");
}

QuotientModel QuotientModel::cylinder(double t, double tol) {
  QuotientModel m;
  m.t = t;
  m.truncation_tol = tol;
  m.elements.push_back(QuotientElement{1.0, FrameRotation()});
  m.validate();
  return m;
}

QuotientModel QuotientModel::parse(std::istream& in, double t, double tol) {
  QuotientModel m;
  m.t = t;
  m.truncation_tol = tol;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    auto spos = line.find("s=");
    auto opos = line.find("o=");
    if (spos == std::string::npos || opos == std::string::npos)
      throw ConfigError("quotient model line " + std::to_string(lineno) +
                        ": expected `s=<scale> o=<matrix entries>`");
    QuotientElement e;
    {
      std::istringstream ss(line.substr(spos + 2, opos - spos - 2));
      if (!(ss >> e.s)) throw ConfigError("quotient model line " + std::to_string(lineno) + ": bad scale");
    }
    std::istringstream ss(line.substr(opos + 2));
    std::vector<double> vals;
    double v;
    while (ss >> v) vals.push_back(v);
    Mat4 o = Mat4::Identity();
    if (vals.size() == 16) {
      for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) o(r, c) = vals[static_cast<std::size_t>(r * 4 + c)];
    } else if (vals.size() == 9) {
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) o(r, c) = vals[static_cast<std::size_t>(r * 3 + c)];
    } else {
      throw ConfigError("quotient model line " + std::to_string(lineno) +
                        ": rotation needs 16 (4x4) or 9 (3x3) entries");
    }
    e.o = FrameRotation::checked(o, 1e-9);
    m.elements.push_back(e);
  }
  m.validate();
  return m;
}

SeriesValue coeff_c0(const CylinderParams& p) {
  p.validate();
  SeriesValue out;
  double comp = 0;  // Kahan compensation
  for (int n = 1; n <= kMaxTerms; ++n) {
    double tn = std::pow(p.t, n);
    double tmn = 1.0 / tn;
    double term = 1.0 / ((1.0 - tn) * (1.0 - tn)) + 1.0 / ((1.0 - tmn) * (1.0 - tmn)) - 1.0;
    double y = term - comp;
    double s = out.value + y;
    comp = (s - out.value) - y;
    out.value = s;
    if (std::abs(term) < p.truncation_tol) {
      out.bound = std::abs(term) * tmn / (1.0 - tmn);
      return out;
    }
  }
  throw AccuracyError("coefficient series did not reach tolerance");
}

SeriesValue coeff_c1(const CylinderParams& p) {
  p.validate();
  SeriesValue out;
  double comp = 0;
  for (int n = 1; n <= kMaxTerms; ++n) {
    double tn = std::pow(p.t, n);
    double tmn = 1.0 / tn;
    double term = tn / std::pow(1.0 - tn, 3) + tmn / std::pow(1.0 - tmn, 3);
    double y = term - comp;
    double s = out.value + y;
    comp = (s - out.value) - y;
    out.value = s;
    if (std::abs(term) < p.truncation_tol) {
      out.bound = std::abs(term) * tmn / (1.0 - tmn);
      return out;
    }
  }
  throw AccuracyError("coefficient series did not reach tolerance");
}

SeriesValue coeff_c2(const CylinderParams& p) {
  p.validate();
  SeriesValue out;
  double comp = 0;
  for (int n = 1; n <= kMaxTerms; ++n) {
    double tn = std::pow(p.t, n);
    double term = 2.0 * tn * tn / std::pow(1.0 - tn, 4);
    double y = term - comp;
    double s = out.value + y;
    comp = (s - out.value) - y;
    out.value = s;
    if (std::abs(term) < p.truncation_tol) {
      double r = 1.0 / (tn);
      out.bound = std::abs(term) * r * r / (1.0 - r * r);
      return out;
    }
  }
  throw AccuracyError("coefficient series did not reach tolerance");
}

double c2_asymptotic(double t) {
  if (!(t > 1.0)) throw ConfigError("asymptotic form needs t > 1");
  return std::pow(kPi, 4) / (45.0 * std::pow(t - 1.0, 4));
}

Mat4 singular_quadform(const Tensor4& w, const Vec4& u) {
  double r2 = u.squaredNorm();
  if (r2 < 1e-28) throw PoleError("singular quadratic form evaluated at its pole");
  Mat4 out;
  for (int i = 0; i < 4; ++i)
    for (int j = i; j < 4; ++j) {
      double q = 0;
      for (int m = 0; m < 4; ++m)
        for (int n = 0; n < 4; ++n) q += w(m, i, j, n) * u[m] * u[n];
      out(i, j) = -q / (3.0 * r2 * r2);
      out(j, i) = out(i, j);
    }
  return out;
}

Mat4 singular_h(const Vec4& x, const WeylData& w) {
  return singular_quadform(w.tensor, x + kE4);
}

QuadformDerivs singular_quadform_derivs(const Tensor4& w, const Vec4& u, int order) {
  QuadformDerivs out;
  double r2 = u.squaredNorm();
  if (r2 < 1e-28) throw PoleError("singular quadratic form evaluated at its pole");
  double i2 = 1.0 / r2, i4 = i2 * i2, i6 = i4 * i2, i8 = i6 * i2, i10 = i8 * i2;

  Mat4 q;
  std::array<Mat4, 4> dq;
  std::array<std::array<Mat4, 4>, 4> d2q;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      double s = 0;
      for (int m = 0; m < 4; ++m)
        for (int n = 0; n < 4; ++n) s += w(m, i, j, n) * u[m] * u[n];
      q(i, j) = s;
    }
  for (int m = 0; m < 4; ++m)
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        double s = 0;
        for (int n = 0; n < 4; ++n) s += (w(m, i, j, n) + w(n, i, j, m)) * u[n];
        dq[static_cast<std::size_t>(m)](i, j) = s;
      }
  for (int m = 0; m < 4; ++m)
    for (int n = 0; n < 4; ++n)
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
          d2q[static_cast<std::size_t>(m)][static_cast<std::size_t>(n)](i, j) =
              w(m, i, j, n) + w(n, i, j, m);

  auto d = [](int a, int b) { return a == b ? 1.0 : 0.0; };
  out.val = -(1.0 / 3.0) * i4 * q;
  if (order < 1) return out;
  for (int m = 0; m < 4; ++m)
    out.d1[static_cast<std::size_t>(m)] =
        -(1.0 / 3.0) * (i4 * dq[static_cast<std::size_t>(m)] - 4.0 * u[m] * i6 * q);
  if (order < 2) return out;
  for (int m = 0; m < 4; ++m)
    for (int n = 0; n < 4; ++n)
      out.d2[static_cast<std::size_t>(m)][static_cast<std::size_t>(n)] =
          -(1.0 / 3.0) *
          (i4 * d2q[static_cast<std::size_t>(m)][static_cast<std::size_t>(n)] -
           4.0 * i6 * (u[n] * dq[static_cast<std::size_t>(m)] + u[m] * dq[static_cast<std::size_t>(n)]) -
           4.0 * d(m, n) * i6 * q + 24.0 * u[m] * u[n] * i8 * q);
  if (order < 3) return out;
  for (int p = 0; p < 4; ++p)
    for (int m = 0; m < 4; ++m)
      for (int n = 0; n < 4; ++n)
        out.d3[static_cast<std::size_t>(p)][static_cast<std::size_t>(m)][static_cast<std::size_t>(n)] =
            -(1.0 / 3.0) *
            (-4.0 * u[p] * i6 * d2q[static_cast<std::size_t>(m)][static_cast<std::size_t>(n)] -
             4.0 * i6 * (d(n, p) * dq[static_cast<std::size_t>(m)] + u[n] * d2q[static_cast<std::size_t>(m)][static_cast<std::size_t>(p)] +
                         d(m, p) * dq[static_cast<std::size_t>(n)] + u[m] * d2q[static_cast<std::size_t>(n)][static_cast<std::size_t>(p)]) +
             24.0 * i8 * u[p] * (u[n] * dq[static_cast<std::size_t>(m)] + u[m] * dq[static_cast<std::size_t>(n)]) -
             4.0 * d(m, n) * (i6 * dq[static_cast<std::size_t>(p)] - 6.0 * u[p] * i8 * q) +
             24.0 * i8 * ((d(m, p) * u[n] + u[m] * d(n, p)) * q + u[m] * u[n] * dq[static_cast<std::size_t>(p)]) -
             192.0 * u[m] * u[n] * u[p] * i10 * q);
  return out;
}

GaugeForms gauge_forms_cylinder(const WeylData& w, const CylinderParams& p) {
  p.validate();
  GaugeForms forms;
  forms.t = p.t;
  double t = p.t;
  double r38m = std::pow(t, -3.0 / 8.0), r18m = std::pow(t, -1.0 / 8.0);
  double r18p = std::pow(t, 1.0 / 8.0), r38p = std::pow(t, 3.0 / 8.0);

  Tensor4 wt = w.tensor;
  double c0 = coeff_c0(p).value;
  double c1 = coeff_c1(p).value;

  // omega0 = (1/6) eta0(|y|) W_{4ik4} y^k dy^i
  forms.omega0.eval = [wt, r38m, r18m](const Vec4& y, Vec4& om, Mat4& dom) {
    double r = y.norm();
    double deta = 0;
    double eta = (r <= 0) ? 1.0 : cut_down(r, r38m, r18m, deta);
    Vec4 base;
    for (int i = 0; i < 4; ++i) {
      double s = 0;
      for (int k = 0; k < 4; ++k) s += wt(3, i, k, 3) * y[k];
      base[i] = s / 6.0;
    }
    om = eta * base;
    for (int m = 0; m < 4; ++m)
      for (int i = 0; i < 4; ++i) {
        double dbase = wt(3, i, m, 3) / 6.0;
        double dr = (r > 0) ? y[m] / r : 0.0;
        dom(m, i) = eta * dbase + deta * dr * base[i];
      }
  };

  // omega1 = (1/3) eta1(|y|) { (1/2) C0 W_{4ik4} u^k
  //   + C1 [ (W_{kil4}+W_{4ilk}) u^k u^l - 2 W_{4ik4} u^k u_4
  //          + W_{4kl4} d_{i4} u^k u^l ] } dy^i,   u = y + e4
  forms.omega1.eval = [wt, c0, c1, r38m, r18m, r18p, r38p](const Vec4& y, Vec4& om, Mat4& dom) {
    double r = y.norm();
    double dlo = 0, dhi = 0;
    double lo = (r <= 0) ? 0.0 : 1.0 - cut_down(r, r38m, r18m, dlo);  // ramps up
    double hi = (r <= 0) ? 1.0 : cut_down(r, r18p, r38p, dhi);        // ramps down
    double eta = lo * hi;
    double deta = -dlo * hi + lo * dhi;  // d(1-cutdown) = -dcutdown
    Vec4 u = y + kE4;
    Vec4 base;
    Mat4 dbase;
    for (int i = 0; i < 4; ++i) {
      double lin = 0, quad = 0;
      for (int k = 0; k < 4; ++k) {
        lin += 0.5 * c0 * wt(3, i, k, 3) * u[k];
        for (int l = 0; l < 4; ++l)
          quad += c1 * ((wt(k, i, l, 3) + wt(3, i, l, k)) * u[k] * u[l] +
                        (i == 3 ? wt(3, k, l, 3) * u[k] * u[l] : 0.0));
        quad += c1 * (-2.0) * wt(3, i, k, 3) * u[k] * u[3];
      }
      base[i] = (lin + quad) / 3.0;
      for (int m = 0; m < 4; ++m) {
        double d = 0.5 * c0 * wt(3, i, m, 3);
        for (int l = 0; l < 4; ++l)
          d += c1 * ((wt(m, i, l, 3) + wt(3, i, l, m)) * u[l] +
                     (wt(l, i, m, 3) + wt(3, i, m, l)) * u[l] +
                     (i == 3 ? (wt(3, m, l, 3) + wt(3, l, m, 3)) * u[l] : 0.0));
        d += c1 * (-2.0) * (wt(3, i, m, 3) * u[3] + (m == 3 ? 1.0 : 0.0) * [&] {
                     double s = 0;
                     for (int k = 0; k < 4; ++k) s += wt(3, i, k, 3) * u[k];
                     return s;
                   }());
        dbase(m, i) = d / 3.0;
      }
    }
    om = eta * base;
    for (int m = 0; m < 4; ++m) {
      double dr = (r > 0) ? y[m] / r : 0.0;
      for (int i = 0; i < 4; ++i) dom(m, i) = eta * dbase(m, i) + deta * dr * base[i];
    }
  };
  return forms;
}

void attach_omega2(GaugeForms& forms, const GaugeGenerator& x) {
  double t = forms.t;
  double r38m = std::pow(t, -3.0 / 8.0), r18m = std::pow(t, -1.0 / 8.0);
  double r18p = std::pow(t, 1.0 / 8.0), r38p = std::pow(t, 3.0 / 8.0);
  GaugeGenerator xg = x;
  forms.omega2.eval = [xg, r38m, r18m, r18p, r38p](const Vec4& y, Vec4& om, Mat4& dom) {
    double r = y.norm();
    double dlo = 0, dhi = 0;
    double lo = (r <= 0) ? 0.0 : 1.0 - cut_down(r, r38m, r18m, dlo);
    double hi = (r <= 0) ? 1.0 : cut_down(r, r18p, r38p, dhi);
    double eta = lo * hi;
    double deta = -dlo * hi + lo * dhi;
    Vec4 u = y + kE4;
    Vec4 base;
    Mat4 dbase;
    for (int i = 0; i < 4; ++i) {
      double cub = 0;
      for (int s = 0; s < 4; ++s)
        for (int tt = 0; tt < 4; ++tt)
          for (int uu = 0; uu < 4; ++uu) cub += xg(i, s, tt, uu) * u[s] * u[tt] * u[uu];
      base[i] = -cub / 6.0;
      for (int m = 0; m < 4; ++m) {
        double d = 0;
        for (int s = 0; s < 4; ++s)
          for (int tt = 0; tt < 4; ++tt) d += 3.0 * xg(i, m, s, tt) * u[s] * u[tt];
        dbase(m, i) = -d / 6.0;
      }
    }
    om = eta * base;
    for (int m = 0; m < 4; ++m) {
      double dr = (r > 0) ? y[m] / r : 0.0;
      for (int i = 0; i < 4; ++i) dom(m, i) = eta * dbase(m, i) + deta * dr * base[i];
    }
  };
  forms.has_omega2 = true;
}

Mat4 lie_flat(const OneForm& omega, const Vec4& y) {
  Vec4 om;
  Mat4 dom;
  omega.eval(y, om, dom);
  return dom + dom.transpose();
}

Mat4 gauged_xi(const Vec4& x, const WeylData& w, const CylinderParams& p,
               const GaugeForms& forms) {
  (void)p;
  Mat4 xi = singular_h(x, w);
  xi += lie_flat(forms.omega0, x);
  xi += lie_flat(forms.omega1, x);
  if (forms.has_omega2) xi += lie_flat(forms.omega2, x);
  return xi;
}

TbarValue tbar_cylinder(const Vec4& y, const WeylData& w, const CylinderParams& p) {
  p.validate();
  Vec4 u = y + kE4;
  double collar = std::pow(p.t, -0.5) / 4.0;
  if (u.norm() >= collar)
    throw DomainError("point outside the locally Euclidean collar around -e4");

  Mat4 w44;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) w44(i, j) = w.tensor(3, i, j, 3);

  TbarValue out;
  out.value = singular_quadform(w.tensor, u);
  double tail = 0;
  for (int n = 1; n <= kMaxTerms; ++n) {
    double tn = std::pow(p.t, n);
    Mat4 pos = singular_quadform(w.tensor, tn * y + kE4);
    Mat4 neg = singular_quadform(w.tensor, (1.0 / tn) * y + kE4) + (1.0 / 3.0) * w44;
    out.value += pos + neg;
    double last = std::max(pos.cwiseAbs().maxCoeff(), neg.cwiseAbs().maxCoeff());
    if (last < p.truncation_tol) {
      tail = last / (p.t - 1.0) * p.t;  // geometric tail at ratio 1/t
      out.bound = tail;
      break;
    }
    if (n == kMaxTerms) throw AccuracyError("tbar series did not reach tolerance");
  }
  double c0 = coeff_c0(p).value;
  double c1 = coeff_c1(p).value;
  Mat4 gauge;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      double lin = 0;
      for (int k = 0; k < 4; ++k)
        lin += (w.tensor(k, i, j, 3) + w.tensor(3, i, j, k)) * u[k];
      gauge(i, j) = (c0 * w44(i, j) + c1 * (lin - 4.0 * w44(i, j) * u[3])) / 3.0;
    }
  out.value += gauge;
  return out;
}

double naive_series_partial_sum_norm(const Vec4& y, const WeylData& w, double t,
                                     int n_terms) {
  Mat4 acc = Mat4::Zero();
  for (int n = 1; n <= n_terms; ++n) {
    double tn = std::pow(t, n);
    acc += singular_quadform(w.tensor, tn * y + kE4);
    acc += singular_quadform(w.tensor, (1.0 / tn) * y + kE4);
  }
  return acc.cwiseAbs().maxCoeff();
}

Tensor4 cylinder_hessian_formula(const WeylData& w, double c2) {
  Tensor4 out;
  const Tensor4& t = w.tensor;
  for (int k = 0; k < 4; ++k)
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        for (int l = 0; l < 4; ++l) {
          double v = t(k, i, j, l) + t(l, i, j, k);
          if (k == 3) v += -4.0 * (t(l, i, j, 3) + t(3, i, j, l));
          if (l == 3) v += -4.0 * (t(k, i, j, 3) + t(3, i, j, k));
          if (k == l) v += -4.0 * t(3, i, j, 3);
          if (k == 3 && l == 3) v += 24.0 * t(3, i, j, 3);
          out(k, i, j, l) = -c2 / 3.0 * v;
        }
  return out;
}

namespace {

struct JetAccumulation {
  SymJet total;                 // jets of Abar_0 around -e4 (singular term removed)
  Tensor4 identity_hessian{};   // hessian of the identity tower alone
  std::vector<ElementRemainder> remainders;
  double truncation_bound = 0;
};

// Sum the conjugated singular terms in Jet4 arithmetic at base point -e4.
JetAccumulation accumulate_jets(const WeylData& w, const QuotientModel& m) {
  JetAccumulation acc;
  std::size_t id_idx = m.identity_index();
  double t = m.t;

  for (std::size_t a = 0; a < m.elements.size(); ++a) {
    const auto& el = m.elements[a];
    const Mat4& o = el.o.matrix();
    Mat4 w44c;  // O^T W_{4..4} O
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        double s = 0;
        for (int al = 0; al < 4; ++al)
          for (int be = 0; be < 4; ++be) s += o(al, i) * w.tensor(3, al, be, 3) * o(be, j);
        w44c(i, j) = s;
      }

    SymJet elem_sum;
    bool elem_done_pos = false, elem_done_neg = false;
    double last_norm = 0;
    for (int n = 0; n <= kMaxTerms && !(elem_done_pos && elem_done_neg); ++n) {
      for (int sign : {+1, -1}) {
        if (n == 0 && sign < 0) continue;
        if (sign > 0 && elem_done_pos) continue;
        if (sign < 0 && elem_done_neg) continue;
        if (n == 0 && a == id_idx) continue;  // the singular K-term itself
        double c = el.s * std::pow(t, sign * n);
        // u = c O (y) + e4 as jets around y0 = -e4
        std::array<Jet4, 4> u;
        for (int mu = 0; mu < 4; ++mu) {
          Jet4 j = Jet4::constant(-c * o(mu, 3) + (mu == 3 ? 1.0 : 0.0));
          for (int nu = 0; nu < 4; ++nu) {
            Jet4 dv = Jet4::variable(nu, 0.0);
            dv *= c * o(mu, nu);
            j += dv;
          }
          u[static_cast<std::size_t>(mu)] = j;
        }
        SymJet q = singular_quadform_jet(w.tensor, u);
        // conjugate: (O^T q O)_{ij}
        SymJet conj;
        for (int i = 0; i < 4; ++i)
          for (int j = i; j < 4; ++j) {
            Jet4 s;
            for (int al = 0; al < 4; ++al)
              for (int be = 0; be < 4; ++be) {
                Jet4 term = q(al, be);
                term *= o(al, i) * o(be, j);
                s += term;
              }
            conj(i, j) = s;
            if (j != i) conj(j, i) = conj(i, j);
          }
        if (sign < 0) {
          // gauge subtraction from omega0: + (1/3) O^T W_{4..4} O
          for (int i = 0; i < 4; ++i)
            for (int j = i; j < 4; ++j) {
              conj(i, j) += Jet4::constant(w44c(i, j) / 3.0);
              if (j != i) conj(j, i) = conj(i, j);
            }
        }
        double nrm = 0;
        for (int i = 0; i < 4; ++i)
          for (int j = 0; j < 4; ++j) nrm = std::max(nrm, std::abs(conj(i, j).value()));
        elem_sum += conj;
        if (n > 0 && nrm < m.truncation_tol) {
          if (sign > 0) elem_done_pos = true;
          else elem_done_neg = true;
          last_norm = std::max(last_norm, nrm);
        }
      }
      if (n == kMaxTerms) throw AccuracyError("jet series did not reach tolerance");
    }
    acc.truncation_bound += last_norm * t / (t - 1.0);

    if (a == id_idx) {
      for (int k = 0; k < 4; ++k)
        for (int i = 0; i < 4; ++i)
          for (int j = 0; j < 4; ++j)
            for (int l = 0; l < 4; ++l)
              acc.identity_hessian(k, i, j, l) = elem_sum(i, j).deriv2(k, l);
    } else {
      ElementRemainder rem;
      rem.o44 = el.o.matrix()(3, 3);
      double nrm = 0;
      for (int k = 0; k < 4; ++k)
        for (int i = 0; i < 4; ++i)
          for (int j = 0; j < 4; ++j)
            for (int l = 0; l < 4; ++l)
              nrm = std::max(nrm, std::abs(elem_sum(i, j).deriv2(k, l)));
      rem.hessian_norm = nrm;
      rem.bound_constant = nrm * (t - 1.0);
      // tau = O_44 -> 1 makes the comparison integral I(tau, s) blow up
      rem.near_fixed_point = (std::abs(rem.o44 - 1.0) < 1e-2);
      acc.remainders.push_back(rem);
    }
    acc.total += elem_sum;
  }
  return acc;
}

CorrectionJet build_jet(const WeylData& w, const QuotientModel& m,
                        JetAccumulation& acc, Tensor4* cylinder_part,
                        double* remainder_norm) {
  // S_{ij} = Abar_0(-e4), S_{ij,k} = d_k Abar_0(-e4); the omega_1-type gauge
  // subtracts exactly these, making value and gradient vanish identically.
  Mat4 s_value;
  std::array<Mat4, 4> s_grad;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      s_value(i, j) = acc.total(i, j).value();
      for (int k = 0; k < 4; ++k) s_grad[static_cast<std::size_t>(k)](i, j) = acc.total(i, j).deriv1(k);
    }
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      acc.total(i, j).raw(0) = 0.0;
      for (int v = 0; v < 4; ++v) {
        Jet4 probe = Jet4::variable(v, 0.0);
        // the linear coefficient index equals the variable's raw index
        for (int n = 1; n < Jet4::kTerms; ++n)
          if (probe.raw(n) != 0.0) acc.total(i, j).raw(n) = 0.0;
      }
    }

  CorrectionJet jet;
  jet.weyl_tensor = w.tensor;
  jet.t = m.t;
  jet.truncation_bound = acc.truncation_bound;
  for (int k = 0; k < 4; ++k)
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        for (int l = 0; l < 4; ++l)
          jet.hessian_raw(k, i, j, l) = acc.total(i, j).deriv2(k, l);

  PairwiseDecomposition dec = decompose_pairwise(jet.hessian_raw, 1e-7);
  jet.hessian = 0.5 * dec.t_part;
  jet.gauge_x = dec.x;

  for (int p = 0; p < 4; ++p)
    for (int q = 0; q < 4; ++q)
      for (int r = 0; r < 4; ++r)
        for (int i = 0; i < 4; ++i)
          for (int j = 0; j < 4; ++j)
            jet.third[static_cast<std::size_t>((((p * 4 + q) * 4 + r) * 4 + i) * 4 + j)] =
                acc.total(i, j).deriv3(p, q, r);
  for (int p = 0; p < 4; ++p)
    for (int q = 0; q < 4; ++q)
      for (int r = 0; r < 4; ++r)
        for (int s = 0; s < 4; ++s)
          for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j)
              jet.fourth[static_cast<std::size_t>(((((p * 4 + q) * 4 + r) * 4 + s) * 4 + i) * 4 + j)] =
                  acc.total(i, j).deriv4(p, q, r, s);

  if (cylinder_part) *cylinder_part = acc.identity_hessian;
  if (remainder_norm) {
    Tensor4 rem = jet.hessian_raw - acc.identity_hessian;
    *remainder_norm = rem.max_abs();
  }

  // Evaluator: the local normal form of T-bar near -e4 with the S-gauge.
  Tensor4 wt = w.tensor;
  QuotientModel mcopy = m;
  jet.evaluator = [wt, mcopy, s_value, s_grad](const Vec4& y) -> Mat4 {
    double t = mcopy.t;
    Vec4 u = y + kE4;
    double collar = std::pow(t, -0.5) / 4.0;
    if (u.norm() >= collar)
      throw DomainError("point outside the locally Euclidean collar around -e4");
    std::size_t id_idx = mcopy.identity_index();

    Mat4 total = Mat4::Zero();
    for (std::size_t a = 0; a < mcopy.elements.size(); ++a) {
      const auto& el = mcopy.elements[a];
      const Mat4& o = el.o.matrix();
      Mat4 w44c;
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
          double s = 0;
          for (int al = 0; al < 4; ++al)
            for (int be = 0; be < 4; ++be) s += o(al, i) * wt(3, al, be, 3) * o(be, j);
          w44c(i, j) = s;
        }
      (void)id_idx;
      for (int n = 0; n <= kMaxTerms; ++n) {
        bool done = true;
        for (int sign : {+1, -1}) {
          if (n == 0 && sign < 0) continue;
          double c = el.s * std::pow(t, sign * n);
          Mat4 q = singular_quadform(wt, c * (o * y) + kE4);
          Mat4 conj = o.transpose() * q * o;
          if (sign < 0) conj += w44c / 3.0;
          total += conj;
          if (n > 0 && conj.cwiseAbs().maxCoeff() >= mcopy.truncation_tol) done = false;
        }
        if (n > 0 && done) break;
      }
    }
    Mat4 gauge = -s_value;
    for (int k = 0; k < 4; ++k) gauge -= s_grad[static_cast<std::size_t>(k)] * u[k];
    return total + gauge;
  };
  return jet;
}

}  // namespace

CorrectionJet correction_jet_cylinder(const WeylData& w, const CylinderParams& p) {
  QuotientModel m = QuotientModel::cylinder(p.t, p.truncation_tol);
  JetAccumulation acc = accumulate_jets(w, m);
  CorrectionJet jet = build_jet(w, m, acc, nullptr, nullptr);
  return jet;
}

QuotientJetResult correction_jet_quotient(const WeylData& w, const QuotientModel& m) {
  m.validate();
  JetAccumulation acc = accumulate_jets(w, m);
  QuotientJetResult out;
  out.remainders = acc.remainders;
  out.jet = build_jet(w, m, acc, &out.cylinder_hessian_raw, &out.remainder_norm);
  return out;
}

Mat4 CorrectionJet::a_regular(const Vec4& x) const {
  // A(x) = Abar(x - e4) - (1/2)(X_{i,jkl}+X_{j,ikl}) x^k x^l
  Mat4 abar = evaluator(x - kE4) - singular_quadform(weyl_tensor, x);
  Mat4 gauge;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      double s = 0;
      for (int k = 0; k < 4; ++k)
        for (int l = 0; l < 4; ++l)
          s += (gauge_x(i, j, k, l) + gauge_x(j, i, k, l)) * x[k] * x[l];
      gauge(i, j) = -0.5 * s;
    }
  return abar + gauge;
}

Mat4 CorrectionJet::trace_hessian() const {
  Mat4 out;
  for (int k = 0; k < 4; ++k)
    for (int l = 0; l < 4; ++l) {
      double s = 0;
      for (int i = 0; i < 4; ++i) s += hessian_raw(k, i, i, l);
      // the gauge part contributes -2 sum_i X_{i,ikl}
      double xg = 0;
      for (int i = 0; i < 4; ++i) xg += gauge_x(i, i, k, l);
      out(k, l) = s - 2.0 * xg;
    }
  return out;
}

double interaction_contraction(const WeylData& w, const CorrectionJet& jet) {
  double s = 0;
  for (int k = 0; k < 4; ++k)
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        for (int l = 0; l < 4; ++l) s += w.tensor(k, i, j, l) * 2.0 * jet.hessian(k, i, j, l);
  return s;
}

}  // namespace weylglue
