#pragma once

#include <array>
#include <iomanip>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "expk/bseries.hpp"
#include "expk/krylov.hpp"
#include "expk/linalg.hpp"
#include "expk/rational.hpp"
#include "expk/scheme_spec.hpp"
#include "expk/tableau.hpp"

namespace expk {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

// Pinned tolerances for the randomized property suites.
namespace check_tol {
constexpr double powers = 1e-10;        // (V H V^T)^k vs V H^k V^T
constexpr double reduced_phi = 1e-10;   // split phi action vs dense oracle
constexpr double jacobian_powers = 1e-9;  // A^k f vs J^k f, k < m
}  // namespace check_tol

// Frozen published per-tree coefficients of the reduced-space variants.
// Columns: exp4k, exp4sp, erow4k, erow4sp. Row order follows tw_catalog().
inline const std::array<std::array<const char*, 4>, 21>&
variant_coefficient_table() {
  static const std::array<std::array<const char*, 4>, 21> table = {{
      {"1", "1", "1", "1"},
      {"1/2", "0", "1/2", "0"},
      {"0", "1/2", "0", "1/2"},
      {"1/3", "1/3", "1/3", "1/3"},
      {"1/6", "0", "1/12", "0"},
      {"1/120", "0", "1/12", "0"},
      {"-1/36", "0", "1/15", "0"},
      {"7/360", "1/6", "-1/15", "1/6"},
      {"1/4", "1/4", "1/4", "1/4"},
      {"1/6", "0", "1/12", "0"},
      {"-1/24", "1/8", "1/24", "1/8"},
      {"1/12", "0", "1/24", "0"},
      {"0", "1/12", "1/24", "1/12"},
      {"0", "0", "0", "0"},
      {"1/20", "0", "1/48", "0"},
      {"1/18", "0", "1/24", "0"},
      {"-1537/24300", "0", "-1/48", "0"},
      {"1/36", "0", "1/120", "0"},
      {"-23/720", "0", "1/80", "0"},
      {"-1/27", "0", "-1/60", "0"},
      {"3943/97200", "1/24", "-1/240", "1/24"},
  }};
  return table;
}

inline const std::array<const char*, 4>& variant_column_ids() {
  static const std::array<const char*, 4> ids = {"exp4k", "exp4sp", "erow4k",
                                                 "erow4sp"};
  return ids;
}

// The nine exact order conditions of the four-stage tableau. Residuals are
// rational, so pass means identically zero.
inline std::vector<CheckResult> check_tableau_conditions(const ExpKTableau& t) {
  std::vector<CheckResult> out;
  const ConditionReport report = check_expk_order4(t);
  for (const ConditionResidual& r : report.residuals) {
    CheckResult c;
    c.name = "tableau condition " + r.label;
    c.pass = (r.residual == 0);
    c.detail = "residual " + format_rational(r.residual);
    out.push_back(std::move(c));
  }
  return out;
}

namespace detail {

inline SchemeSpec verify_spec(Family f, Variant v) {
  SchemeSpec s;
  s.family = f;
  s.variant = v;
  return s;
}

}  // namespace detail

// Recomputes the four variant coefficient columns through the series algebra
// and compares every entry with the frozen table.
inline std::vector<CheckResult> check_variant_table() {
  const auto& expected = variant_coefficient_table();
  const auto& ids = variant_column_ids();
  const BSeries cols[4] = {
      scheme_bseries(detail::verify_spec(Family::exp4, Variant::ktype)),
      scheme_bseries(detail::verify_spec(Family::exp4, Variant::sp)),
      scheme_bseries(detail::verify_spec(Family::erow4, Variant::ktype)),
      scheme_bseries(detail::verify_spec(Family::erow4, Variant::sp)),
  };
  std::vector<CheckResult> out;
  for (int col = 0; col < 4; ++col) {
    CheckResult c;
    c.name = std::string("variant coefficients ") + ids[col];
    c.pass = true;
    int matched = 0;
    for (int row = 0; row < 21; ++row) {
      const Rat want = parse_rational(expected[row][col]);
      if (cols[col].coeff[row] == want) {
        ++matched;
      } else if (c.pass) {
        c.pass = false;
        c.detail = "tree " + std::to_string(row + 1) + ": computed " +
                   format_rational(cols[col].coeff[row]) + ", frozen " +
                   format_rational(want);
      }
    }
    if (c.pass) c.detail = "all 21 entries match";
    out.push_back(std::move(c));
  }
  return out;
}

// Class-sum order classification for every shipped scheme at M = 4.
inline std::vector<CheckResult> check_order_classification() {
  struct Row {
    Family family;
    Variant variant;
    int want;
  };
  const std::vector<Row> rows = {
      {Family::expk, Variant::ktype, 4},
      {Family::exp4, Variant::standard, 4},
      {Family::exp4, Variant::ktype, 4},
      {Family::exp4, Variant::sp, 3},
      {Family::erow4, Variant::standard, 4},
      {Family::erow4, Variant::ktype, 3},
      {Family::erow4, Variant::sp, 3},
  };
  std::vector<CheckResult> out;
  for (const Row& r : rows) {
    const SchemeSpec s = detail::verify_spec(r.family, r.variant);
    const int got = classify_order(scheme_bseries(s), 4);
    CheckResult c;
    c.name = "order classification " + s.id();
    c.pass = (got == r.want);
    c.detail = "order " + std::to_string(got) + ", expected " +
               std::to_string(r.want);
    out.push_back(std::move(c));
  }
  return out;
}

namespace detail {

struct LemmaInstance {
  Matrix j;
  Vector b;
  int m_request;
};

inline LemmaInstance random_lemma_instance(std::mt19937& rng) {
  std::uniform_int_distribution<int> size_dist(4, 12);
  std::uniform_real_distribution<double> entry(-1.0, 1.0);
  const int n = size_dist(rng);
  Matrix j(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) j(r, c) = entry(rng);
  j *= 2.0 / one_norm(j);
  Vector b(n);
  for (int r = 0; r < n; ++r) b(r) = entry(rng);
  std::uniform_int_distribution<int> m_dist(1, n);
  return {std::move(j), std::move(b), m_dist(rng)};
}

inline CheckResult suite_result(const std::string& name, int trials,
                                double worst, double tol,
                                const std::string& where) {
  CheckResult c;
  c.name = name;
  c.pass = worst <= tol;
  std::ostringstream os;
  os << trials << " instances, max deviation " << std::scientific
     << std::setprecision(2) << worst << " (tolerance " << tol << ")";
  if (!c.pass) os << ", first failure at " << where;
  c.detail = os.str();
  return c;
}

}  // namespace detail

// Powers of the projected operator: (V H V^T)^k x = V H^k V^T x for
// 1 <= k <= m, probed on random vectors.
inline CheckResult check_powers_suite(int trials, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> entry(-1.0, 1.0);
  double worst = 0.0;
  std::string where = "-";
  for (int t = 0; t < trials; ++t) {
    const auto inst = detail::random_lemma_instance(rng);
    const LinOp op = [&inst](const Vector& v) { return Vector(inst.j * v); };
    const KrylovBasis basis = arnoldi(op, inst.b, inst.m_request);
    Vector x(inst.b.size());
    for (Eigen::Index r = 0; r < x.size(); ++r) x(r) = entry(rng);
    Matrix hk = Matrix::Identity(basis.m, basis.m);
    Vector ax = x;
    for (Eigen::Index k = 1; k <= basis.m; ++k) {
      ax = apply_approx_jacobian(basis, ax);
      hk = basis.H * hk;
      const Vector split = basis.V * (hk * (basis.V.transpose() * x));
      const double dev = (ax - split).norm() / std::max(1.0, x.norm());
      if (dev > worst) {
        worst = dev;
        if (dev > check_tol::powers && where == "-")
          where = "trial " + std::to_string(t) + ", power " +
                  std::to_string(k);
      }
    }
  }
  return detail::suite_result("projected operator powers", trials, worst,
                              check_tol::powers, where);
}

// Split phi application against the dense oracle phi_k(scale * V H V^T).
inline CheckResult check_reduced_phi_suite(int trials, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> entry(-1.0, 1.0);
  std::uniform_int_distribution<int> k_dist(1, 4);
  double worst = 0.0;
  std::string where = "-";
  for (int t = 0; t < trials; ++t) {
    const auto inst = detail::random_lemma_instance(rng);
    const LinOp op = [&inst](const Vector& v) { return Vector(inst.j * v); };
    const KrylovBasis basis = arnoldi(op, inst.b, inst.m_request);
    const int k = k_dist(rng);
    const double scale = entry(rng);
    Vector w(inst.b.size());
    for (Eigen::Index r = 0; r < w.size(); ++r) w(r) = entry(rng);
    const Matrix a_dense =
        basis.V * basis.H * basis.V.transpose();
    const Vector want = phi_matrix(k, scale * a_dense) * w;
    const Vector got = reduced_phi_apply(basis, k, scale, w);
    const double dev = (got - want).norm() / std::max(1.0, want.norm());
    if (dev > worst) {
      worst = dev;
      if (dev > check_tol::reduced_phi && where == "-")
        where = "trial " + std::to_string(t);
    }
  }
  return detail::suite_result("split phi application", trials, worst,
                              check_tol::reduced_phi, where);
}

// The projected operator reproduces true Jacobian powers on the start
// vector: A^k b = J^k b for 0 <= k <= m - 1.
inline CheckResult check_jacobian_powers_suite(int trials, unsigned seed) {
  std::mt19937 rng(seed);
  double worst = 0.0;
  std::string where = "-";
  for (int t = 0; t < trials; ++t) {
    const auto inst = detail::random_lemma_instance(rng);
    const LinOp op = [&inst](const Vector& v) { return Vector(inst.j * v); };
    const KrylovBasis basis = arnoldi(op, inst.b, inst.m_request);
    Vector ab = inst.b;
    Vector jb = inst.b;
    for (Eigen::Index k = 1; k < basis.m; ++k) {
      ab = apply_approx_jacobian(basis, ab);
      jb = inst.j * jb;
      const double dev = (ab - jb).norm() / std::max(1e-300, jb.norm());
      if (dev > worst) {
        worst = dev;
        if (dev > check_tol::jacobian_powers && where == "-")
          where = "trial " + std::to_string(t) + ", power " +
                  std::to_string(k);
      }
    }
  }
  return detail::suite_result("exact powers on the start vector", trials,
                              worst, check_tol::jacobian_powers, where);
}

inline std::vector<CheckResult> check_lemma_suites(int trials, unsigned seed) {
  return {check_powers_suite(trials, seed),
          check_reduced_phi_suite(trials, seed + 1),
          check_jacobian_powers_suite(trials, seed + 2)};
}

// Full verification battery over a given tableau (normally expk4_tableau()).
inline std::vector<CheckResult> run_verification(const ExpKTableau& t,
                                                 int trials, unsigned seed) {
  std::vector<CheckResult> out = check_tableau_conditions(t);
  for (auto& c : check_variant_table()) out.push_back(std::move(c));
  for (auto& c : check_order_classification()) out.push_back(std::move(c));
  for (auto& c : check_lemma_suites(trials, seed)) out.push_back(std::move(c));
  return out;
}

// Printable 21 x 4 coefficient table, recomputed through the series algebra.
inline std::string format_variant_table() {
  const auto& trees = tw_catalog();
  const auto& ids = variant_column_ids();
  const BSeries exact = exact_solution_bseries();
  const BSeries cols[4] = {
      scheme_bseries(detail::verify_spec(Family::exp4, Variant::ktype)),
      scheme_bseries(detail::verify_spec(Family::exp4, Variant::sp)),
      scheme_bseries(detail::verify_spec(Family::erow4, Variant::ktype)),
      scheme_bseries(detail::verify_spec(Family::erow4, Variant::sp)),
  };
  std::ostringstream os;
  os << std::left << std::setw(6) << "tree" << std::setw(7) << "order"
     << std::setw(14) << "exact";
  for (int c = 0; c < 4; ++c) os << std::setw(14) << ids[c];
  os << '\n';
  for (int row = 0; row < 21; ++row) {
    os << std::left << std::setw(6) << (row + 1) << std::setw(7)
       << trees[row].order << std::setw(14)
       << format_rational(exact.coeff[row]);
    for (int c = 0; c < 4; ++c)
      os << std::setw(14) << format_rational(cols[c].coeff[row]);
    os << '\n';
  }
  return os.str();
}

}  // namespace expk
