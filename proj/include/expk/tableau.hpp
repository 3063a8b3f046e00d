#pragma once

#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "expk/errors.hpp"
#include "expk/rational.hpp"

namespace expk {

// Coefficients of an exponential-K/W scheme
//   k_i = phi(h gamma A) (h F_i + h A sum_j gammaM_ij k_j),
//   F_i = f(y_n + sum_j alpha_ij k_j),   y_{n+1} = y_n + sum_i b_i k_i.
// b_hat holds embedded weights; they are stored and serialized only.
struct ExpKTableau {
  int s = 0;
  Rat gamma;
  std::vector<std::vector<Rat>> alpha;   // strictly lower triangular
  std::vector<std::vector<Rat>> gammaM;  // strictly lower triangular
  std::vector<Rat> b;
  std::vector<Rat> b_hat;

  Rat beta(int i, int j) const { return alpha[i][j] + gammaM[i][j]; }

  // Row sums over j < i.
  Rat alpha_row(int i) const {
    Rat sum = 0;
    for (int j = 0; j < i; ++j) sum += alpha[i][j];
    return sum;
  }
  Rat gamma_row(int i) const {
    Rat sum = 0;
    for (int j = 0; j < i; ++j) sum += gammaM[i][j];
    return sum;
  }
  Rat beta_row(int i) const { return alpha_row(i) + gamma_row(i); }
};

inline ExpKTableau make_tableau(int s, Rat gamma) {
  ExpKTableau t;
  t.s = s;
  t.gamma = std::move(gamma);
  t.alpha.assign(s, std::vector<Rat>(s, Rat(0)));
  t.gammaM.assign(s, std::vector<Rat>(s, Rat(0)));
  t.b.assign(s, Rat(0));
  t.b_hat.assign(s, Rat(0));
  return t;
}

// Fourth-order exponential-K tableau. All entries as published except
// alpha_32, whose printed value +1/80 contradicts the order-condition system
// and the companion choices alpha_3 = 1/2, beta_43 = -1/4; the consistent
// value is -1/80 (with it all nine order-4 conditions hold exactly).
inline ExpKTableau expk4_tableau() {
  ExpKTableau t = make_tableau(4, Rat(1, 4));
  t.alpha[1][0] = rat(1);
  t.alpha[2][0] = rat(41, 80);
  t.alpha[2][1] = rat(-1, 80);
  t.alpha[3][0] = rat(1, 4);
  t.alpha[3][1] = rat(1, 12);
  t.alpha[3][2] = rat(1, 6);
  t.gammaM[1][0] = rat(7, 8);
  t.gammaM[2][0] = rat(1, 16);
  t.gammaM[2][1] = rat(0);
  t.gammaM[3][0] = rat(-1, 32);
  t.gammaM[3][1] = rat(1, 24);
  t.gammaM[3][2] = rat(-5, 12);
  t.b = {rat(1, 6), rat(1, 6), rat(0), rat(2, 3)};
  t.b_hat = {rat(8, 3), rat(1), rat(-8, 3), rat(0)};
  return t;
}

// One order condition: lhs = sum_j b_j Phi_j(tau), rhs = P_tau(gamma).
struct ConditionResidual {
  std::string label;
  int order = 0;
  Rat lhs;
  Rat rhs;
  Rat residual;  // lhs - rhs
};

struct ConditionReport {
  std::vector<ConditionResidual> residuals;
  bool pass = false;  // all residuals exactly zero
};

namespace detail {

inline ConditionResidual make_cond(std::string label, int order, Rat lhs, Rat rhs) {
  ConditionResidual c;
  c.label = std::move(label);
  c.order = order;
  c.lhs = std::move(lhs);
  c.rhs = std::move(rhs);
  c.residual = c.lhs - c.rhs;
  return c;
}

inline ConditionReport finish_report(std::vector<ConditionResidual> rs) {
  ConditionReport rep;
  rep.residuals = std::move(rs);
  rep.pass = true;
  for (const auto& c : rep.residuals)
    if (c.residual != 0) rep.pass = false;
  return rep;
}

}  // namespace detail

// The nine order conditions for a fourth-order exponential-K method, one per
// TK-tree up to order four. Evaluated exactly; pass iff every residual is 0.
inline ConditionReport check_tk_conditions(const ExpKTableau& t, int p) {
  if (p < 1 || p > 4) throw scheme_error("check_tk_conditions: order must be 1..4");
  const int s = t.s;
  const Rat g = t.gamma;
  std::vector<ConditionResidual> rs;

  auto add = [&](const char* label, int order, Rat lhs, Rat rhs) {
    if (order <= p) rs.push_back(detail::make_cond(label, order, std::move(lhs), std::move(rhs)));
  };

  Rat c1 = 0, c2 = 0, c3 = 0, c4 = 0, c5 = 0, c6 = 0, c7 = 0, c8 = 0, c9 = 0;
  for (int j = 0; j < s; ++j) {
    c1 += t.b[j];
    c2 += t.b[j] * t.beta_row(j);
    c3 += t.b[j] * t.alpha_row(j) * t.alpha_row(j);
    c5 += t.b[j] * t.alpha_row(j) * t.alpha_row(j) * t.alpha_row(j);
    Rat bb = 0, ab = 0, aa2 = 0, ga2 = 0, bbb = 0;
    for (int k = 0; k < j; ++k) {
      bb += t.beta(j, k) * t.beta_row(k);
      ab += t.alpha[j][k] * t.beta_row(k);
      aa2 += t.alpha[j][k] * t.alpha_row(k) * t.alpha_row(k);
      ga2 += t.gammaM[j][k] * t.alpha_row(k) * t.alpha_row(k);
      for (int l = 0; l < k; ++l)
        bbb += t.beta(j, k) * t.beta(k, l) * t.beta_row(l);
    }
    c4 += t.b[j] * bb;
    c6 += t.b[j] * t.alpha_row(j) * ab;
    c7 += t.b[j] * aa2;
    c8 += t.b[j] * ga2;
    c9 += t.b[j] * bbb;
  }

  const Rat half(1, 2), third(1, 3), quarter(1, 4);
  add("tk1", 1, c1, Rat(1));
  add("tk2", 2, c2, half * (1 - g));
  add("tk3", 3, c3, third);
  add("tk4", 3, c4, third * (half - g) * (1 - g));
  add("tk5", 4, c5, quarter);
  add("tk6", 4, c6, Rat(1, 8) - g / 6);
  add("tk7", 4, c7, Rat(1, 12));
  add("tk8", 4, c8, -g / 6);
  add("tk9", 4, c9, quarter * (third - g) * (half - g) * (1 - g));
  return detail::finish_report(std::move(rs));
}

// Same system written out as conditions (a)..(h) for a four-stage tableau.
inline ConditionReport check_expk_order4(const ExpKTableau& t) {
  if (t.s != 4) throw scheme_error("check_expk_order4: tableau must have 4 stages");
  ConditionReport rep = check_tk_conditions(t, 4);
  const char* labels[] = {"(a)", "(b)", "(c)", "(d)", "(e)",
                          "(f)", "(g1)", "(g2)", "(h)"};
  for (std::size_t i = 0; i < rep.residuals.size(); ++i)
    rep.residuals[i].label = labels[i];
  return rep;
}

// All 21 exponential-W conditions up to order p. An edge into node k
// contributes alpha_jk when its parent is meagre and gammaM_jk when fat;
// right-hand sides are polynomials in gamma.
inline ConditionReport check_expw_conditions(const ExpKTableau& t, int p) {
  if (p < 1 || p > 4) throw scheme_error("check_expw_conditions: order must be 1..4");
  const int s = t.s;
  const Rat g = t.gamma;

  // Row-sum helpers; chain sums accumulate over internal indexes.
  auto arow = [&](int j) { return t.alpha_row(j); };
  auto grow = [&](int j) { return t.gamma_row(j); };

  Rat lhs[22];
  for (int i = 1; i <= 21; ++i) lhs[i] = 0;
  for (int j = 0; j < s; ++j) {
    const Rat bj = t.b[j];
    lhs[1] += bj;
    lhs[2] += bj * arow(j);
    lhs[3] += bj * grow(j);
    lhs[4] += bj * arow(j) * arow(j);
    lhs[9] += bj * arow(j) * arow(j) * arow(j);
    for (int k = 0; k < j; ++k) {
      lhs[5] += bj * t.alpha[j][k] * arow(k);
      lhs[6] += bj * t.alpha[j][k] * grow(k);
      lhs[7] += bj * t.gammaM[j][k] * arow(k);
      lhs[8] += bj * t.gammaM[j][k] * grow(k);
      lhs[10] += bj * arow(j) * t.alpha[j][k] * arow(k);
      lhs[11] += bj * arow(j) * t.alpha[j][k] * grow(k);
      lhs[12] += bj * t.alpha[j][k] * arow(k) * arow(k);
      lhs[13] += bj * t.gammaM[j][k] * arow(k) * arow(k);
      for (int l = 0; l < k; ++l) {
        lhs[14] += bj * t.alpha[j][k] * t.alpha[k][l] * arow(l);
        lhs[15] += bj * t.alpha[j][k] * t.alpha[k][l] * grow(l);
        lhs[16] += bj * t.alpha[j][k] * t.gammaM[k][l] * arow(l);
        lhs[17] += bj * t.alpha[j][k] * t.gammaM[k][l] * grow(l);
        lhs[18] += bj * t.gammaM[j][k] * t.alpha[k][l] * arow(l);
        lhs[19] += bj * t.gammaM[j][k] * t.alpha[k][l] * grow(l);
        lhs[20] += bj * t.gammaM[j][k] * t.gammaM[k][l] * arow(l);
        lhs[21] += bj * t.gammaM[j][k] * t.gammaM[k][l] * grow(l);
      }
    }
  }

  const Rat g2 = g * g, g3 = g * g * g;
  struct Row {
    int order;
    Rat rhs;
  };
  const Row rows[22] = {{0, 0},
                        {1, Rat(1)},
                        {2, Rat(1, 2)},
                        {2, -g / 2},
                        {3, Rat(1, 3)},
                        {3, Rat(1, 6)},
                        {3, -g / 4},
                        {3, -g / 4},
                        {3, g2 / 3},
                        {4, Rat(1, 4)},
                        {4, Rat(1, 8)},
                        {4, -g / 6},
                        {4, Rat(1, 12)},
                        {4, -g / 6},
                        {4, Rat(1, 24)},
                        {4, -g / 12},
                        {4, -g / 12},
                        {4, g2 / 6},
                        {4, -g / 12},
                        {4, g2 / 8},
                        {4, g2 / 6},
                        {4, -g3 / 4}};

  std::vector<ConditionResidual> rs;
  for (int i = 1; i <= 21; ++i)
    if (rows[i].order <= p)
      rs.push_back(detail::make_cond("w" + std::to_string(i), rows[i].order,
                                     lhs[i], rows[i].rhs));
  return detail::finish_report(std::move(rs));
}

// ---------------------------------------------------------------------------
// Plain-text serialization, key = value with rationals as "num/den".

inline std::string serialize_tableau(const ExpKTableau& t) {
  std::ostringstream os;
  os << "s = " << t.s << "\n";
  os << "gamma = " << format_rational(t.gamma) << "\n";
  for (int i = 1; i < t.s; ++i)
    for (int j = 0; j < i; ++j)
      os << "alpha." << (i + 1) << "." << (j + 1) << " = "
         << format_rational(t.alpha[i][j]) << "\n";
  for (int i = 1; i < t.s; ++i)
    for (int j = 0; j < i; ++j)
      os << "gamma." << (i + 1) << "." << (j + 1) << " = "
         << format_rational(t.gammaM[i][j]) << "\n";
  for (int i = 0; i < t.s; ++i)
    os << "b." << (i + 1) << " = " << format_rational(t.b[i]) << "\n";
  for (int i = 0; i < t.s; ++i)
    os << "b_hat." << (i + 1) << " = " << format_rational(t.b_hat[i]) << "\n";
  return os.str();
}

inline ExpKTableau parse_tableau(const std::string& text) {
  // First pass: collect keys, find s.
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw config_error("tableau: missing '=' in line: " + line);
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return (a == std::string::npos) ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty() || val.empty())
      throw config_error("tableau: malformed line: " + line);
    if (kv.count(key)) throw config_error("tableau: duplicate key " + key);
    kv[key] = val;
  }
  auto it = kv.find("s");
  if (it == kv.end()) throw config_error("tableau: missing key 's'");
  const int s = std::stoi(it->second);
  if (s < 1 || s > 64) throw config_error("tableau: bad stage count");
  ExpKTableau t = make_tableau(s, Rat(0));
  kv.erase(it);

  for (const auto& [key, val] : kv) {
    if (key == "gamma") {
      t.gamma = parse_rational(val);
      continue;
    }
    // name.i or name.i.j
    const auto d1 = key.find('.');
    if (d1 == std::string::npos)
      throw config_error("tableau: unknown key " + key);
    const std::string name = key.substr(0, d1);
    const auto d2 = key.find('.', d1 + 1);
    try {
      if (d2 == std::string::npos) {
        const int i = std::stoi(key.substr(d1 + 1)) - 1;
        if (i < 0 || i >= s) throw config_error("tableau: index out of range in " + key);
        if (name == "b")
          t.b[i] = parse_rational(val);
        else if (name == "b_hat")
          t.b_hat[i] = parse_rational(val);
        else
          throw config_error("tableau: unknown key " + key);
      } else {
        const int i = std::stoi(key.substr(d1 + 1, d2 - d1 - 1)) - 1;
        const int j = std::stoi(key.substr(d2 + 1)) - 1;
        if (i < 0 || i >= s || j < 0 || j >= i)
          throw config_error("tableau: indices not strictly lower in " + key);
        if (name == "alpha")
          t.alpha[i][j] = parse_rational(val);
        else if (name == "gamma")
          t.gammaM[i][j] = parse_rational(val);
        else
          throw config_error("tableau: unknown key " + key);
      }
    } catch (const config_error&) {
      throw;
    } catch (const std::exception&) {
      throw config_error("tableau: malformed key " + key);
    }
  }
  return t;
}

}  // namespace expk
