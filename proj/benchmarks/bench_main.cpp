#include <benchmark/benchmark.h>

#include "weylglue/boundary.hpp"
#include "weylglue/rng.hpp"
#include "weylglue/series.hpp"
#include "weylglue/sphere.hpp"
#include "weylglue/tensor.hpp"

using namespace weylglue;

namespace {

Mat3 rand_tracefree(const CounterRng& rng, std::uint64_t base) {
  Mat3 b;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) b(i, j) = rng.normal(base + static_cast<std::uint64_t>(3 * i + j));
  b = 0.5 * (b + b.transpose()).eval();
  b -= (b.trace() / 3.0) * Mat3::Identity();
  return b;
}

WeylData bench_weyl() {
  CounterRng rng(1);
  return weyl_from_blocks(rand_tracefree(rng, 0), rand_tracefree(rng, 64));
}

}  // namespace

static void BM_coeff_c2(benchmark::State& state) {
  CylinderParams p{1.0 + std::pow(10.0, -state.range(0)), 1e-12};
  for (auto _ : state) benchmark::DoNotOptimize(coeff_c2(p).value);
}
BENCHMARK(BM_coeff_c2)->Arg(0)->Arg(1)->Arg(2);

static void BM_cylinder_jet(benchmark::State& state) {
  WeylData w = bench_weyl();
  CylinderParams p{1.5, 1e-10};
  for (auto _ : state) {
    CorrectionJet jet = correction_jet_cylinder(w, p);
    benchmark::DoNotOptimize(jet.hessian.max_abs());
  }
}
BENCHMARK(BM_cylinder_jet);

static void BM_jet_evaluator(benchmark::State& state) {
  WeylData w = bench_weyl();
  CorrectionJet jet = correction_jet_cylinder(w, CylinderParams{1.5, 1e-10});
  Vec4 y(0.01, -0.02, 0.01, -0.97);
  for (auto _ : state) benchmark::DoNotOptimize(jet.evaluator(y));
}
BENCHMARK(BM_jet_evaluator);

static void BM_boundary_nondivergence(benchmark::State& state) {
  WeylData w = bench_weyl();
  CorrectionJet jet = correction_jet_cylinder(w, CylinderParams{1.5, 1e-10});
  for (auto _ : state)
    benchmark::DoNotOptimize(nondivergence_boundary_integral(jet, w, 0.04).total);
}
BENCHMARK(BM_boundary_nondivergence);

static void BM_s3_rule_apply(benchmark::State& state) {
  S3Rule rule = s3_product_rule(static_cast<int>(state.range(0)));
  auto f = [](const Vec4& x) { return x[0] * x[0] * x[3] * x[3]; };
  for (auto _ : state) {
    double s = 0;
    for (std::size_t i = 0; i < rule.points.size(); ++i) s += rule.weights[i] * f(rule.points[i]);
    benchmark::DoNotOptimize(s);
  }
}
BENCHMARK(BM_s3_rule_apply)->Arg(7)->Arg(11)->Arg(15);

static void BM_star_product(benchmark::State& state) {
  WeylData w = bench_weyl();
  for (auto _ : state) benchmark::DoNotOptimize(star_product(w.tensor, w.tensor));
}
BENCHMARK(BM_star_product);

static void BM_derdzinski(benchmark::State& state) {
  WeylData w = bench_weyl();
  for (auto _ : state) benchmark::DoNotOptimize(derdzinski_diagonalize(w).eigen[0]);
}
BENCHMARK(BM_derdzinski);

BENCHMARK_MAIN();
