#include "weylglue/jet4.hpp"

#include <cmath>
#include <vector>

#include "weylglue/errors.hpp"

namespace weylglue {

namespace {

struct MonomialTable {
  // exponents[n] = (a,b,c,d) with a+b+c+d <= 4
  std::array<std::array<int, 4>, Jet4::kTerms> exponents{};
  int index[5][5][5][5];  // -1 where degree > 4
  // products: for each (m,n) with deg sum <= 4, target index
  std::vector<std::array<int, 3>> products;  // (m, n, k)
  std::array<double, Jet4::kTerms> fact_weight{};  // multinomial m! = a!b!c!d!

  MonomialTable() {
    for (auto& p3 : index)
      for (auto& p2 : p3)
        for (auto& p1 : p2)
          for (int& v : p1) v = -1;
    int n = 0;
    for (int deg = 0; deg <= 4; ++deg)
      for (int a = deg; a >= 0; --a)
        for (int b = deg - a; b >= 0; --b)
          for (int c = deg - a - b; c >= 0; --c) {
            int d = deg - a - b - c;
            exponents[static_cast<std::size_t>(n)] = {a, b, c, d};
            index[a][b][c][d] = n;
            ++n;
          }
    auto fact = [](int k) { return k <= 1 ? 1.0 : (k == 2 ? 2.0 : (k == 3 ? 6.0 : 24.0)); };
    for (int m = 0; m < Jet4::kTerms; ++m) {
      auto& e = exponents[static_cast<std::size_t>(m)];
      fact_weight[static_cast<std::size_t>(m)] =
          fact(e[0]) * fact(e[1]) * fact(e[2]) * fact(e[3]);
    }
    for (int m = 0; m < Jet4::kTerms; ++m)
      for (int k = 0; k < Jet4::kTerms; ++k) {
        auto& em = exponents[static_cast<std::size_t>(m)];
        auto& ek = exponents[static_cast<std::size_t>(k)];
        int a = em[0] + ek[0], b = em[1] + ek[1], c = em[2] + ek[2], d = em[3] + ek[3];
        if (a + b + c + d <= 4) products.push_back({m, k, index[a][b][c][d]});
      }
  }
};

const MonomialTable& table() {
  static const MonomialTable t;
  return t;
}

}  // namespace

Jet4 Jet4::variable(int var, double value) {
  Jet4 j;
  j.c_[0] = value;
  int e[4] = {0, 0, 0, 0};
  e[var] = 1;
  j.c_[static_cast<std::size_t>(table().index[e[0]][e[1]][e[2]][e[3]])] = 1.0;
  return j;
}

double Jet4::deriv1(int i) const {
  int e[4] = {0, 0, 0, 0};
  e[i] += 1;
  int n = table().index[e[0]][e[1]][e[2]][e[3]];
  return c_[static_cast<std::size_t>(n)] * table().fact_weight[static_cast<std::size_t>(n)];
}

double Jet4::deriv2(int i, int j) const {
  int e[4] = {0, 0, 0, 0};
  e[i] += 1;
  e[j] += 1;
  int n = table().index[e[0]][e[1]][e[2]][e[3]];
  return c_[static_cast<std::size_t>(n)] * table().fact_weight[static_cast<std::size_t>(n)];
}

double Jet4::deriv3(int i, int j, int k) const {
  int e[4] = {0, 0, 0, 0};
  e[i] += 1;
  e[j] += 1;
  e[k] += 1;
  int n = table().index[e[0]][e[1]][e[2]][e[3]];
  return c_[static_cast<std::size_t>(n)] * table().fact_weight[static_cast<std::size_t>(n)];
}

double Jet4::deriv4(int i, int j, int k, int l) const {
  int e[4] = {0, 0, 0, 0};
  e[i] += 1;
  e[j] += 1;
  e[k] += 1;
  e[l] += 1;
  int n = table().index[e[0]][e[1]][e[2]][e[3]];
  return c_[static_cast<std::size_t>(n)] * table().fact_weight[static_cast<std::size_t>(n)];
}

Jet4& Jet4::operator+=(const Jet4& o) {
  for (int n = 0; n < kTerms; ++n) c_[static_cast<std::size_t>(n)] += o.c_[static_cast<std::size_t>(n)];
  return *this;
}

Jet4& Jet4::operator-=(const Jet4& o) {
  for (int n = 0; n < kTerms; ++n) c_[static_cast<std::size_t>(n)] -= o.c_[static_cast<std::size_t>(n)];
  return *this;
}

Jet4& Jet4::operator*=(double s) {
  for (double& x : c_) x *= s;
  return *this;
}

Jet4 operator*(const Jet4& a, const Jet4& b) {
  Jet4 out;
  for (const auto& p : table().products)
    out.c_[static_cast<std::size_t>(p[2])] +=
        a.c_[static_cast<std::size_t>(p[0])] * b.c_[static_cast<std::size_t>(p[1])];
  return out;
}

Jet4 Jet4::pow(double p) const {
  double v = c_[0];
  if (v == 0.0) throw PoleError("jet power at a zero base value");
  // f^p = v^p (1 + w)^p with w = (f - v)/v, truncated binomial series
  Jet4 w = *this;
  w *= 1.0 / v;
  w.c_[0] = 0.0;
  Jet4 out = Jet4::constant(1.0);
  Jet4 wp = Jet4::constant(1.0);
  double coef = 1.0;
  for (int k = 1; k <= 4; ++k) {
    coef *= (p - (k - 1)) / k;
    wp = wp * w;
    Jet4 term = wp;
    term *= coef;
    out += term;
  }
  out *= std::pow(v, p);
  return out;
}

SymJet singular_quadform_jet(const Tensor4& w, const std::array<Jet4, 4>& u) {
  // pair products u^mu u^nu
  std::array<Jet4, 16> uu;
  for (int m = 0; m < 4; ++m)
    for (int n = m; n < 4; ++n) {
      uu[static_cast<std::size_t>(m * 4 + n)] = u[static_cast<std::size_t>(m)] * u[static_cast<std::size_t>(n)];
      if (n != m) uu[static_cast<std::size_t>(n * 4 + m)] = uu[static_cast<std::size_t>(m * 4 + n)];
    }
  Jet4 r2 = uu[0] + uu[5] + uu[10] + uu[15];
  Jet4 inv4 = r2.pow(-2.0);

  SymJet out;
  for (int i = 0; i < 4; ++i)
    for (int j = i; j < 4; ++j) {
      Jet4 q;
      for (int m = 0; m < 4; ++m)
        for (int n = 0; n < 4; ++n) {
          double c = w(m, i, j, n);
          if (c != 0.0) {
            Jet4 t = uu[static_cast<std::size_t>(m * 4 + n)];
            t *= c;
            q += t;
          }
        }
      Jet4 res = q * inv4;
      res *= -1.0 / 3.0;
      out(i, j) = res;
      if (j != i) out(j, i) = out(i, j);
    }
  return out;
}

}  // namespace weylglue
