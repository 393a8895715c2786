#include "weylglue/sphere.hpp"

#include <cmath>

#include "weylglue/errors.hpp"
#include "weylglue/parallel.hpp"
#include "weylglue/rng.hpp"

namespace weylglue {

namespace {
constexpr double kPi = 3.14159265358979323846;

// Gauss-Legendre nodes/weights on [-1,1] by Newton iteration.
void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
  x.assign(static_cast<std::size_t>(n), 0.0);
  w.assign(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < (n + 1) / 2; ++i) {
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
    x[static_cast<std::size_t>(i)] = -z;
    x[static_cast<std::size_t>(n - 1 - i)] = z;
    w[static_cast<std::size_t>(i)] = 2.0 / ((1.0 - z * z) * pp * pp);
    w[static_cast<std::size_t>(n - 1 - i)] = w[static_cast<std::size_t>(i)];
  }
}

}  // namespace

double monomial_integral_s3(const MonomialExponent& m) {
  for (int i = 0; i < 4; ++i)
    if (m.p[i] % 2 != 0) return 0.0;
  auto fact = [](int k) {
    double f = 1;
    for (int j = 2; j <= k; ++j) f *= j;
    return f;
  };
  // 2 pi^2 * prod (2m_i)! / (4^{m_i} m_i!)  /  (M+1)!
  double val = 2.0 * kPi * kPi;
  int big = 0;
  for (int i = 0; i < 4; ++i) {
    int mi = m.p[i] / 2;
    big += mi;
    val *= fact(2 * mi) / (std::pow(4.0, mi) * fact(mi));
  }
  return val / fact(big + 1);
}

S3Rule s3_product_rule(int degree) {
  if (degree < 1) degree = 1;
  // Chebyshev-2nd-kind for the psi level (weight sqrt(1-c^2)), Legendre for
  // theta, trapezoid in phi; symmetric node sets make odd parts vanish.
  int npsi = degree / 2 + 1;
  int nth = degree / 2 + 1;
  int nph = degree + 1;
  if (nph % 2 == 1) ++nph;

  S3Rule rule;
  rule.exact_degree = degree;
  std::vector<double> cth, wth;
  gauss_legendre(nth, cth, wth);

  for (int a = 1; a <= npsi; ++a) {
    double cpsi = std::cos(a * kPi / (npsi + 1));
    double spsi = std::sin(a * kPi / (npsi + 1));
    double wpsi = kPi / (npsi + 1) * spsi * spsi;
    for (int b = 0; b < nth; ++b) {
      double c2 = cth[static_cast<std::size_t>(b)];
      double s2 = std::sqrt(std::max(0.0, 1.0 - c2 * c2));
      for (int c = 0; c < nph; ++c) {
        double ph = 2.0 * kPi * c / nph;
        rule.points.emplace_back(spsi * s2 * std::cos(ph), spsi * s2 * std::sin(ph),
                                 spsi * c2, cpsi);
        rule.weights.push_back(wpsi * wth[static_cast<std::size_t>(b)] * 2.0 * kPi / nph);
      }
    }
  }
  return rule;
}

IntegralResult integrate_s3(const S3Polynomial& f) {
  IntegralResult out;
  for (const auto& [coef, mono] : f.terms) out.value += coef * monomial_integral_s3(mono);
  out.error = 0.0;
  return out;
}

IntegralResult integrate_s3_mc(const std::function<double(const Vec4&)>& f,
                               std::int64_t samples, std::uint64_t seed) {
  if (samples < 2) throw ConfigError("monte-carlo needs at least 2 samples");
  CounterRng rng(seed);
  std::size_t n = static_cast<std::size_t>(samples);
  std::vector<double> vals(n), sqs(n);
  parallel_for(n, [&](std::size_t i) {
    Vec4 x;
    double r2 = 0;
    do {
      for (int k = 0; k < 4; ++k) x[k] = rng.normal(4 * i + static_cast<std::uint64_t>(k));
      r2 = x.squaredNorm();
    } while (r2 < 1e-24);
    x /= std::sqrt(r2);
    double v = f(x);
    vals[i] = v;
    sqs[i] = v * v;
  });
  double mean = pairwise_sum(vals) / static_cast<double>(samples);
  double m2 = pairwise_sum(sqs) / static_cast<double>(samples);
  double var = std::max(0.0, m2 - mean * mean);
  IntegralResult out;
  const double vol = 2.0 * kPi * kPi;
  out.value = mean * vol;
  out.error = vol * std::sqrt(var / static_cast<double>(samples));
  return out;
}

IntegralResult integrate_s3(const std::function<double(const Vec4&)>& f, int degree_hint) {
  S3Rule coarse = s3_product_rule(degree_hint);
  S3Rule fine = s3_product_rule(degree_hint + 6);
  auto apply = [&](const S3Rule& r) {
    std::vector<double> parts(r.points.size());
    parallel_for(r.points.size(), [&](std::size_t i) {
      parts[i] = r.weights[i] * f(r.points[i]);
    });
    return pairwise_sum(parts);
  };
  double v1 = apply(coarse);
  double v2 = apply(fine);
  IntegralResult out;
  out.value = v2;
  out.error = std::abs(v2 - v1);
  double scale = std::max(std::abs(v2), 1.0);
  if (out.error > 1e-3 * scale)
    throw AccuracyError("sphere quadrature did not settle under refinement");
  return out;
}

}  // namespace weylglue
