#pragma once

#include <functional>
#include <string>
#include <vector>

#include "weylglue/boundary.hpp"
#include "weylglue/chart.hpp"
#include "weylglue/series.hpp"
#include "weylglue/tensor.hpp"

namespace weylglue {

struct GluingConfig {
  double a = 1e-3;
  double gamma = 5e-2;
  double eps_chart = 0.5;
  double delta_chart = 0.5;
  bool measure_neck = false;  // numerically integrate the neck reconciliation

  void validate() const;  // a/gamma < 0.1 and gamma/eps < 0.1
};

enum class BalanceSign { Negative, Positive, Indeterminate };

struct BudgetLine {
  std::string name;
  double bound = 0;
  bool declared = false;  // true: not numerically certified at desk scale
};

struct EnergyReport {
  double a = 0;
  double gamma = 0;
  double t = 0;
  double z_side = 0;             // measured Z-side energy through order a^4
  double m_side = 0;             // a^4 V'(0), analytic
  double z_leading = 0;          // + (pi^2/2) a^4 gamma^-4 |W|^2 (measured)
  double m_leading = 0;          // - (pi^2/2) a^4 gamma^-4 |W|^2
  double neck_correction = 0;    // measured when enabled, else 0 with a budget line
  double interaction_term = 0;   // W^{kijl} d2_{kl} A_{ij}(0)
  double predicted_balance = 0;  // (2 pi^2/3) a^4 * interaction_term
  BalanceSign sign = BalanceSign::Indeterminate;
  std::vector<BudgetLine> error_budget;
  double budget_total = 0;  // sum of non-declared bounds

  std::string sign_string() const;
};

// M-side correction H_{ij}(z) = T_{kijl} z^k z^l |z|^{-4} phi(|z|) with a
// quintic cutoff (1 for r <= eps, 0 for r >= 2 eps).
MetricField h_correction(const CorrectionJet& jet, double eps);

struct VPrimeResult {
  double analytic = 0;        // -(pi^2/2) g^-4 |W|^2 + (4 pi^2/3) W.T
  double numeric = 0;         // difference quotient of V at the given s
  double boundary_term = 0;   // exact quadrature of the W.T boundary integral
  double cancellation = 0;    // the sphere-coefficient cancellation residual
  double s = 0;
  double relative_gap = 0;
};
// Difference quotient uses the symmetric integrand quotient plus the
// explicit hole term (see README notes on V'(0)).
VPrimeResult v_prime_zero(const WeylData& w, const CorrectionJet& jet, double gamma,
                          const MetricField& m_model, double s = 1e-8);

// Glued metric on the neck chart; eta realized by the cubic+quartic jet of A
// (the |x|^5 remainder is a declared budget line of the report).
MetricField build_glued_metric(const WeylData& w, const CorrectionJet& jet,
                               const GluingConfig& cfg);

EnergyReport energy_balance(const WeylData& w, const CorrectionJet& jet,
                            const GluingConfig& cfg);

struct PairingReport {
  std::array<double, 3> sd{};
  std::array<double, 3> asd{};
  double best_sum = 0;          // max over relative pairings of sum l+ l-
  std::array<int, 3> pairing{}; // the maximizing assignment
  BalanceSign verdict = BalanceSign::Indeterminate;
  double threshold_t = 0;       // quotient models: where the C2 term dominates
  std::vector<ElementRemainder> remainders;
  bool has_threshold = false;
};

PairingReport interaction_sign(const WeylData& w, double t);
PairingReport interaction_sign(const WeylData& w, const QuotientModel& model);

struct CapacityCutoff {
  std::function<double(double)> chi;  // radial profile
  double energy = 0;                  // int |grad^2 chi|^2 + |grad chi|^4
  double log_ratio = 0;               // log(delta/delta_tilde)
  bool no_decay_warning = false;
};
CapacityCutoff capacity_cutoff(double delta, double delta_tilde);

// Pointwise check of |W^g|^2 <= C (|dg^-1|^2 |dg|^2 + |dg|^4 + |d2 g|^2)
// along the cutoff profile for g = delta + chi(|x|) b^2 F0; returns the
// maximal observed ratio LHS/RHS.
double capacity_weyl_ratio(const CapacityCutoff& cut, const Mat4& f0, double b,
                           double delta, double delta_tilde);

}  // namespace weylglue
