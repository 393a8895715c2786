#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "weylglue/balance.hpp"
#include "weylglue/boundary.hpp"
#include "weylglue/errors.hpp"
#include "weylglue/rng.hpp"
#include "weylglue/series.hpp"
#include "weylglue/tensor.hpp"
#include "weylglue/verify.hpp"

namespace {

using json = nlohmann::ordered_json;
using namespace weylglue;

constexpr int kExitPass = 0;
constexpr int kExitCheckFail = 1;
constexpr int kExitUsage = 2;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    out += c;
  }
  out += "\"";
  return out;
}

std::map<std::string, std::string> parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  int ln = 0;
  while (std::getline(in, line)) {
    ++ln;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto first = line.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(ln) + ": expected key = value");
    auto trim = [](std::string s) {
      auto a = s.find_first_not_of(" \t\r\n");
      auto b = s.find_last_not_of(" \t\r\n");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    out.push_back(std::stod(item));
  }
  return out;
}

int cmd_coeffs(const std::vector<double>& ts, const std::string& out_path) {
  if (ts.empty()) {
    std::cerr << "error: --t needs at least one value > 1\n";
    return kExitUsage;
  }
  for (double t : ts)
    if (!(t > 1.0)) {
      std::cerr << "error: coefficient series need t > 1 (got " << t << ")\n";
      return kExitUsage;
    }
  std::ostringstream csv;
  csv << "t,C0,C1,C2,C2_asymptotic,ratio\n";
  for (double t : ts) {
    CylinderParams p{t, 1e-12};
    double c0 = coeff_c0(p).value;
    double c1 = coeff_c1(p).value;
    double c2 = coeff_c2(p).value;
    double ca = c2_asymptotic(t);
    csv << fmt(t) << ',' << fmt(c0) << ',' << fmt(c1) << ',' << fmt(c2) << ',' << fmt(ca)
        << ',' << fmt(c2 / ca) << "\n";
  }
  if (out_path.empty()) {
    std::cout << csv.str();
  } else {
    std::ofstream f(out_path, std::ios::binary);
    f << csv.str();
  }
  return kExitPass;
}

int cmd_verify(const std::string& suite, std::uint64_t seed, const std::string& out_path,
               const std::vector<std::string>& tol_args) {
  ToleranceOverrides tol;
  for (const auto& t : tol_args) {
    auto eq = t.find('=');
    if (eq == std::string::npos) {
      std::cerr << "error: --tol expects NAME=VALUE\n";
      return kExitUsage;
    }
    tol[t.substr(0, eq)] = std::stod(t.substr(eq + 1));
  }
  VerifyReport rep;
  try {
    rep = run_verify_suite(suite, seed, tol);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  json j;
  j["suite"] = rep.suite;
  j["seed"] = rep.seed;
  j["passed"] = rep.all_passed();
  json checks = json::array();
  for (const auto& c : rep.checks) {
    json jc;
    jc["name"] = c.name;
    jc["anchor"] = c.anchor;
    jc["passed"] = c.passed;
    jc["value"] = fmt(c.value);
    jc["tolerance"] = fmt(c.tolerance);
    if (!c.detail.empty()) jc["detail"] = c.detail;
    checks.push_back(jc);
  }
  j["checks"] = checks;
  std::string text = j.dump(2);
  text += "\n";
  if (out_path.empty()) {
    std::cout << text;
  } else {
    std::ofstream f(out_path, std::ios::binary);
    f << text;
  }
  for (const auto& c : rep.checks)
    if (!c.passed)
      std::cerr << "FAIL " << c.name << " [" << c.anchor << "] value=" << fmt(c.value)
                << " tol=" << fmt(c.tolerance) << "\n";
  return rep.all_passed() ? kExitPass : kExitCheckFail;
}

WeylData weyl_from_config(const std::map<std::string, std::string>& kv, std::uint64_t seed) {
  auto get = [&](const std::string& k, const std::string& dflt) {
    auto it = kv.find(k);
    return it == kv.end() ? dflt : it->second;
  };
  std::string source = get("w_source", "planted");
  if (source == "random") {
    CounterRng rng(seed);
    Mat3 bp, bm;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        bp(i, j) = rng.normal(static_cast<std::uint64_t>(3 * i + j));
        bm(i, j) = rng.normal(static_cast<std::uint64_t>(100 + 3 * i + j));
      }
    return weyl_from_blocks(bp, bm);
  }
  if (source != "planted") throw ConfigError("w_source must be planted or random");
  std::vector<double> ep = parse_list(get("eigen_plus", "1,0,-1"));
  std::vector<double> em = parse_list(get("eigen_minus", "1,0,-1"));
  if (ep.size() != 3 || em.size() != 3)
    throw ConfigError("eigen_plus / eigen_minus need three comma-separated values");
  Mat3 bp = Mat3::Zero(), bm = Mat3::Zero();
  for (int i = 0; i < 3; ++i) {
    bp(i, i) = ep[static_cast<std::size_t>(i)];
    bm(i, i) = em[static_cast<std::size_t>(i)];
  }
  return weyl_from_blocks(bp, bm);
}

int cmd_glue(const std::string& config_path, const std::string& out_prefix,
             std::uint64_t seed_flag, bool seed_set) {
  auto kv = parse_config_file(config_path);
  auto get = [&](const std::string& k, const std::string& dflt) {
    auto it = kv.find(k);
    return it == kv.end() ? dflt : it->second;
  };
  static const std::vector<std::string> known = {
      "t",          "a",        "gamma",        "eps",         "delta",
      "w_source",   "eigen_plus", "eigen_minus", "seed",        "quotient_model",
      "measure_neck", "truncation_tol", "out"};
  for (const auto& [k, v] : kv) {
    (void)v;
    bool ok = false;
    for (const auto& name : known) ok = ok || name == k;
    if (!ok) throw ConfigError("unknown config key: " + k);
  }

  std::uint64_t seed = seed_set ? seed_flag : std::stoull(get("seed", "42"));
  double t = std::stod(get("t", "1.05"));
  GluingConfig cfg;
  cfg.a = std::stod(get("a", "1e-3"));
  cfg.gamma = std::stod(get("gamma", "5e-2"));
  cfg.eps_chart = std::stod(get("eps", "0.5"));
  cfg.delta_chart = std::stod(get("delta", "0.5"));
  cfg.measure_neck = get("measure_neck", "0") == "1";
  double trunc = std::stod(get("truncation_tol", "1e-10"));

  WeylData w = weyl_from_config(kv, seed);

  CorrectionJet jet;
  std::vector<ElementRemainder> remainders;
  std::string model_path = get("quotient_model", "");
  PairingReport pairing;
  if (model_path.empty()) {
    CylinderParams p{t, trunc};
    jet = correction_jet_cylinder(w, p);
    pairing = interaction_sign(w, t);
  } else {
    std::ifstream in(model_path);
    if (!in) throw ConfigError("cannot open quotient model file: " + model_path);
    QuotientModel m = QuotientModel::parse(in, t, trunc);
    QuotientJetResult qr = correction_jet_quotient(w, m);
    jet = qr.jet;
    remainders = qr.remainders;
    pairing = interaction_sign(w, m);
  }

  EnergyReport rep = energy_balance(w, jet, cfg);

  // gamma-sweep diagnostics for the order-one extraction
  std::array<BoundaryIntegralReport, 3> sweep{
      nondivergence_boundary_integral(jet, w, cfg.gamma * 0.25),
      nondivergence_boundary_integral(jet, w, cfg.gamma * 0.5),
      nondivergence_boundary_integral(jet, w, cfg.gamma)};
  SweepFit fit = fit_order_one(sweep);

  std::ostringstream rec;
  rec << "seed = " << seed << "\n";
  rec << "t = " << fmt(t) << "\n";
  rec << "a = " << fmt(cfg.a) << "\n";
  rec << "gamma = " << fmt(cfg.gamma) << "\n";
  rec << "weyl_norm_sq = " << fmt(w.norm_sq()) << "\n";
  rec << "z_side = " << fmt(rep.z_side) << "\n";
  rec << "m_side = " << fmt(rep.m_side) << "\n";
  rec << "z_leading = " << fmt(rep.z_leading) << "\n";
  rec << "m_leading = " << fmt(rep.m_leading) << "\n";
  rec << "leading_cancellation = " << fmt(rep.z_leading + rep.m_leading) << "\n";
  rec << "neck_correction = " << fmt(rep.neck_correction) << "\n";
  rec << "interaction_term = " << fmt(rep.interaction_term) << "\n";
  rec << "predicted_balance = " << fmt(rep.predicted_balance) << "\n";
  rec << "sign = " << rep.sign_string() << "\n";
  rec << "budget_total = " << fmt(rep.budget_total) << "\n";
  for (const auto& line : rep.error_budget)
    rec << "budget." << line.name << " = " << fmt(line.bound)
        << (line.declared ? " (declared)" : "") << "\n";
  rec << "sweep_order_one = " << fmt(fit.intercept) << "\n";
  rec << "sweep_r_squared = " << fmt(fit.r_squared) << "\n";
  rec << "pairing_best_sum = " << fmt(pairing.best_sum) << "\n";
  if (pairing.has_threshold) rec << "threshold_t = " << fmt(pairing.threshold_t) << "\n";
  for (std::size_t i = 0; i < remainders.size(); ++i) {
    rec << "remainder." << i << ".o44 = " << fmt(remainders[i].o44) << "\n";
    rec << "remainder." << i << ".bound_constant = " << fmt(remainders[i].bound_constant) << "\n";
    if (remainders[i].near_fixed_point)
      rec << "remainder." << i << ".warning = near-fixed-point element; bound blows up\n";
  }

  std::ostringstream csv;
  csv << "seed,t,a,gamma,z_side,m_side,interaction_term,predicted_balance,sign,budget_total\n";
  csv << seed << ',' << fmt(t) << ',' << fmt(cfg.a) << ',' << fmt(cfg.gamma) << ','
      << fmt(rep.z_side) << ',' << fmt(rep.m_side) << ',' << fmt(rep.interaction_term) << ','
      << fmt(rep.predicted_balance) << ',' << csv_quote(rep.sign_string()) << ','
      << fmt(rep.budget_total) << "\n";

  std::string prefix = out_prefix.empty() ? get("out", "glue_report") : out_prefix;
  {
    std::ofstream f(prefix + ".txt", std::ios::binary);
    f << rec.str();
  }
  {
    std::ofstream f(prefix + ".csv", std::ios::binary);
    f << csv.str();
  }
  std::cout << rec.str();
  return kExitPass;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"weylglue: desk-scale verification of a Weyl-energy gluing construction"};
  app.require_subcommand(1);

  std::string t_list, out_path, config_path, suite = "all";
  std::uint64_t seed = 42;
  std::vector<std::string> tol_args;

  auto* coeffs = app.add_subcommand("coeffs", "tabulate the lattice-sum coefficients");
  coeffs->add_option("--t", t_list, "comma-separated t values (> 1)")->required();
  coeffs->add_option("--out", out_path, "output CSV path (default stdout)");

  auto* verify = app.add_subcommand("verify", "run lemma-verification suites");
  verify->add_option("--suite", suite, "tensor|series|boundary|balance|all");
  verify->add_option("--seed", seed, "rng seed recorded in the report");
  verify->add_option("--out", out_path, "output JSON path (default stdout)");
  verify->add_option("--tol", tol_args, "tolerance override NAME=VALUE (repeatable)");

  auto* glue = app.add_subcommand("glue", "full gluing energy report");
  glue->add_option("--config", config_path, "key = value config file")->required();
  glue->add_option("--out", out_path, "output path prefix");
  auto* seed_opt = glue->add_option("--seed", seed, "override the config seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitPass : kExitUsage;
  }

  try {
    if (coeffs->parsed()) return cmd_coeffs(parse_list(t_list), out_path);
    if (verify->parsed()) return cmd_verify(suite, seed, out_path, tol_args);
    if (glue->parsed()) return cmd_glue(config_path, out_path, seed, seed_opt->count() > 0);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitCheckFail;
  }
  return kExitUsage;
}
