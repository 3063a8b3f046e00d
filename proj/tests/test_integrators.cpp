#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <utility>
#include <vector>

#include "expk/integrators.hpp"
#include "expk/problems.hpp"
#include "test_util.hpp"

using expk::AdaptiveSpec;
using expk::Family;
using expk::LinOp;
using expk::Matrix;
using expk::OdeProblem;
using expk::SchemeSpec;
using expk::StepStats;
using expk::Variant;
using expk::Vector;

namespace {

double rel_err(const Vector& got, const Vector& want) {
  return (got - want).norm() / std::max(1.0, want.norm());
}

// Linear right-hand side y' = lam * y with exact Jacobian.
OdeProblem linear_problem(const Matrix& lam, const Vector& y0) {
  OdeProblem p;
  p.name = "linear";
  p.dim = lam.rows();
  p.t0 = 0.0;
  p.t1 = 1.0;
  p.y0 = y0;
  p.rhs = [lam](double, const Vector& y) { return Vector(lam * y); };
  p.jvp = [lam](double, const Vector&, const Vector& v) {
    return Vector(lam * v);
  };
  return p;
}

// Scalar Riccati equation y' = y^2, y(0) = 1, solution 1/(1 - t).
OdeProblem riccati_problem() {
  OdeProblem p;
  p.name = "riccati";
  p.dim = 1;
  p.t0 = 0.0;
  p.t1 = 0.5;
  p.y0 = Vector::Constant(1, 1.0);
  p.rhs = [](double, const Vector& y) {
    return Vector(Vector::Constant(1, y[0] * y[0]));
  };
  p.jvp = [](double, const Vector& y, const Vector& v) {
    return Vector(Vector::Constant(1, 2.0 * y[0] * v[0]));
  };
  return p;
}

SchemeSpec spec_of(Family f, Variant v, int m, double tol = 1e-12) {
  SchemeSpec s;
  s.family = f;
  s.variant = v;
  s.M = m;
  s.adaptive.tol = tol;
  return s;
}

std::vector<SchemeSpec> all_schemes(int m, double tol = 1e-12) {
  return {spec_of(Family::expk, Variant::ktype, m, tol),
          spec_of(Family::exp4, Variant::standard, m, tol),
          spec_of(Family::exp4, Variant::ktype, m, tol),
          spec_of(Family::exp4, Variant::sp, m, tol),
          spec_of(Family::erow4, Variant::standard, m, tol),
          spec_of(Family::erow4, Variant::ktype, m, tol),
          spec_of(Family::erow4, Variant::sp, m, tol)};
}

// Least-squares slope of log(error) against log(h).
double fitted_order(const std::vector<double>& hs,
                    const std::vector<double>& errs) {
  const int n = static_cast<int>(hs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = 0; i < n; ++i) {
    const double x = std::log(hs[i]);
    const double y = std::log(errs[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace

TEST_CASE("every scheme reproduces the matrix exponential on linear systems",
          "[integrators]") {
  const int n = 12;
  const Matrix lam =
      testutil::with_one_norm(testutil::random_matrix(n, 901), 2.0);
  const Vector y0 = testutil::random_vector(n, 902);
  const OdeProblem p = linear_problem(lam, y0);

  const double h = 0.1;
  const double t1 = 0.5;
  const Vector want = expk::expm(t1 * lam) * y0;

  for (const SchemeSpec& s : all_schemes(n)) {
    INFO("scheme " << s.id());
    const auto run = expk::integrate(p, s, h, 0.0, t1, y0);
    CHECK(rel_err(run.y, want) < 1e-9);
  }
}

TEST_CASE("schemes are fourth order on a scalar nonlinear equation",
          "[integrators]") {
  // In one dimension the basis is exact at M = 1, so every variant meets its
  // full order.
  const OdeProblem p = riccati_problem();
  const std::vector<double> hs = {1.0 / 20.0, 1.0 / 40.0, 1.0 / 80.0};
  const double exact = 2.0;  // y(1/2) of 1/(1 - t)

  for (const SchemeSpec& s : all_schemes(1)) {
    INFO("scheme " << s.id());
    std::vector<double> errs;
    for (double h : hs) {
      const auto run = expk::integrate(p, s, h, 0.0, 0.5, p.y0);
      errs.push_back(std::abs(run.y[0] - exact));
    }
    const double slope = fitted_order(hs, errs);
    INFO("errors " << errs[0] << " " << errs[1] << " " << errs[2]);
    CHECK(slope > 3.6);
    CHECK(slope < 4.6);
  }
}

TEST_CASE("per-step work counters match the scheme structure",
          "[integrators]") {
  const OdeProblem p = expk::lorenz96(8, 8.0);
  const double h = 0.01;
  const int m = 4;

  struct Expect {
    SchemeSpec spec;
    long long f, builds, phis;
  };
  const std::vector<Expect> table = {
      {spec_of(Family::expk, Variant::ktype, m), 4, 1, 1},
      {spec_of(Family::exp4, Variant::standard, m), 3, 3, 7},
      {spec_of(Family::exp4, Variant::ktype, m), 3, 1, 3},
      {spec_of(Family::exp4, Variant::sp, m), 3, 1, 3},
      {spec_of(Family::erow4, Variant::standard, m), 3, 3, 7},
      {spec_of(Family::erow4, Variant::ktype, m), 3, 1, 4},
      {spec_of(Family::erow4, Variant::sp, m), 3, 1, 4},
  };

  for (const auto& e : table) {
    INFO("scheme " << e.spec.id());
    const auto r = expk::step_scheme(p, e.spec, 0.0, p.y0, h);
    CHECK(r.stats.f_evals == e.f);
    CHECK(r.stats.arnoldi_builds == e.builds);
    CHECK(r.stats.phi_evals == e.phis);
    CHECK(r.stats.jv_products >= r.stats.arnoldi_vectors);
  }

  SECTION("fixed-M variants use exactly M vectors away from breakdown") {
    const auto r =
        expk::step_scheme(p, spec_of(Family::exp4, Variant::ktype, m), 0.0,
                          p.y0, h);
    CHECK(r.stats.arnoldi_vectors == m);
  }

  SECTION("direct defect products add to the Arnoldi column count") {
    const auto r = expk::step_scheme(p, spec_of(Family::exp4, Variant::sp, m),
                                     0.0, p.y0, h);
    CHECK(r.stats.jv_products == r.stats.arnoldi_vectors + 2);
  }
}

TEST_CASE("adaptive projection handles degenerate operators exactly",
          "[integrators]") {
  StepStats st;

  SECTION("zero operator gives b / k! at dimension one") {
    const Vector b = testutil::random_vector(7, 903);
    const LinOp zero_op = [](const Vector& v) {
      return Vector(Vector::Zero(v.size()));
    };
    AdaptiveSpec ad;
    auto outs = expk::adaptive_phi_actions(zero_op, b, {{1, 0.7}, {2, 0.7}},
                                           ad, st);
    CHECK((outs[0] - b).norm() < 1e-14);
    CHECK((outs[1] - 0.5 * b).norm() < 1e-14);
    CHECK(st.arnoldi_vectors == 1);  // happy breakdown immediately
  }

  SECTION("zero vector short-circuits without building a basis") {
    const Vector b = Vector::Zero(5);
    int calls = 0;
    const LinOp op = [&calls](const Vector& v) {
      ++calls;
      return Vector(2.0 * v);
    };
    auto [y, m] = expk::adaptive_phi_action(op, b, 0.3, 1, 1e-10, 1, 30);
    CHECK(y.norm() == 0.0);
    CHECK(m == 0);
    CHECK(calls == 0);
  }

  SECTION("invariant subspace terminates early and is exact") {
    // Block-diagonal operator; b lives in the leading 2x2 block.
    Matrix a = Matrix::Zero(6, 6);
    a.topLeftCorner(2, 2) << 0.3, -1.1, 0.8, 0.2;
    a.bottomRightCorner(4, 4) =
        testutil::with_one_norm(testutil::random_matrix(4, 904), 1.0);
    Vector b = Vector::Zero(6);
    b[0] = 0.4;
    b[1] = -1.3;
    const LinOp op = [&a](const Vector& v) { return Vector(a * v); };
    auto [y, m] = expk::adaptive_phi_action(op, b, 0.5, 1, 1e-12, 1, 6);
    CHECK(m <= 2);
    const Vector want = expk::phi_matrix(1, 0.5 * a) * b;
    CHECK((y - want).norm() < 1e-10);
  }
}

TEST_CASE("adaptive projection converges to the dense phi action",
          "[integrators]") {
  const int n = 40;
  const Matrix a =
      testutil::with_one_norm(testutil::random_matrix(n, 905), 3.0);
  const Vector b = testutil::random_vector(n, 906);
  const LinOp op = [&a](const Vector& v) { return Vector(a * v); };

  for (int k : {1, 3}) {
    auto [y, m] = expk::adaptive_phi_action(op, b, 0.4, k, 1e-12, 1, n);
    const Vector want = expk::phi_matrix(k, 0.4 * a) * b;
    INFO("k = " << k << ", dimension used " << m);
    CHECK((y - want).norm() / want.norm() < 1e-9);
  }

  SECTION("an unreachable tolerance raises a convergence error") {
    CHECK_THROWS_AS(expk::adaptive_phi_action(op, b, 5.0, 1, 1e-300, 1, 5),
                    expk::convergence_error);
  }
}

TEST_CASE("driver validates spans, step counts and state health",
          "[integrators]") {
  const OdeProblem p = expk::lorenz96(8, 8.0);
  const SchemeSpec s = spec_of(Family::expk, Variant::ktype, 4);

  SECTION("zero-length span returns the initial state untouched") {
    const auto run = expk::integrate(p, s, 0.05, 0.3, 0.3, p.y0);
    CHECK(run.y == p.y0);
    CHECK(run.stats.f_evals == 0);
  }

  SECTION("non-integer step counts are rejected") {
    CHECK_THROWS_AS(expk::integrate(p, s, 0.3, 0.0, 1.0, p.y0),
                    expk::config_error);
    CHECK_THROWS_AS(expk::integrate(p, s, -0.1, 0.0, 1.0, p.y0),
                    expk::config_error);
    CHECK_THROWS_AS(expk::integrate(p, s, 0.1, 1.0, 0.0, p.y0),
                    expk::config_error);
  }

  SECTION("a near-integer step count within round-off is accepted") {
    const double h = 0.1 + 1e-12;
    const auto run = expk::integrate(p, s, h, 0.0, 0.3, p.y0);
    CHECK(run.stats.f_evals == 3 * 4);
  }

  SECTION("integration equals repeated stepping") {
    const SchemeSpec sk = spec_of(Family::exp4, Variant::ktype, 4);
    const auto run = expk::integrate(p, sk, 0.05, 0.0, 0.1, p.y0);
    auto one = expk::step_scheme(p, sk, 0.0, p.y0, 0.05);
    auto two = expk::step_scheme(p, sk, 0.05, one.y, 0.05);
    CHECK((run.y - two.y).norm() == 0.0);
  }

  SECTION("invalid states surface as instability with the step index") {
    const OdeProblem swe = expk::shallow_water(8, 8);
    Vector bad = swe.y0;
    bad.tail(8 * 8).setConstant(-1.0);  // drained height layer
    try {
      expk::integrate(swe, s, 0.01, 0.0, 0.05, bad);
      FAIL("expected instability_error");
    } catch (const expk::instability_error& e) {
      CHECK(e.step == 0);
    }
  }

  SECTION("finite-time blow-up surfaces as instability") {
    const OdeProblem r = riccati_problem();
    const SchemeSpec s1 = spec_of(Family::expk, Variant::ktype, 1);
    try {
      expk::integrate(r, s1, 0.25, 0.0, 5.0, r.y0);
      FAIL("expected instability_error");
    } catch (const expk::instability_error& e) {
      CHECK(e.step < 20);
    }
  }
}

TEST_CASE("coarse convergence check on a chaotic flow", "[integrators]") {
  const OdeProblem p = expk::lorenz96(8, 8.0);
  const double t1 = 0.3;

  // Tight-tolerance reference from the adaptive full-order scheme.
  const SchemeSpec ref = spec_of(Family::exp4, Variant::standard, 8, 1e-13);
  const Vector want = expk::integrate(p, ref, t1 / 256.0, 0.0, t1, p.y0).y;

  const SchemeSpec s = spec_of(Family::expk, Variant::ktype, 5);
  std::vector<double> hs, errs;
  for (int div : {8, 16, 32}) {
    const double h = t1 / div;
    hs.push_back(h);
    errs.push_back(rel_err(expk::integrate(p, s, h, 0.0, t1, p.y0).y, want));
  }
  const double slope = fitted_order(hs, errs);
  INFO("errors " << errs[0] << " " << errs[1] << " " << errs[2]);
  CHECK(slope > 3.4);
  CHECK(slope < 5.2);
}
