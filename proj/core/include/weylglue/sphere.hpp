#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "weylglue/tensor.hpp"

namespace weylglue {

struct MonomialExponent {
  int p[4]{0, 0, 0, 0};
};

// Exact integral of x1^p0 x2^p1 x3^p2 x4^p3 over the unit 3-sphere.
double monomial_integral_s3(const MonomialExponent& m);

// Product rule on S^3 exact for polynomials up to `degree`.
struct S3Rule {
  std::vector<Vec4> points;
  std::vector<double> weights;
  int exact_degree = 0;
};
S3Rule s3_product_rule(int degree);

struct IntegralResult {
  double value = 0;
  double error = 0;  // rule-refinement or MC standard error
};

// Polynomial on S^3 given as a monomial list.
struct S3Polynomial {
  std::vector<std::pair<double, MonomialExponent>> terms;
};

enum class S3Method { ExactPolynomial, MonteCarlo };

IntegralResult integrate_s3(const S3Polynomial& f);
IntegralResult integrate_s3_mc(const std::function<double(const Vec4&)>& f,
                               std::int64_t samples, std::uint64_t seed);
// Black-box integration with the product rule; error bar from comparing two
// rule levels. Throws CapabilityError if refinement does not settle.
IntegralResult integrate_s3(const std::function<double(const Vec4&)>& f,
                            int degree_hint = 15);

}  // namespace weylglue
