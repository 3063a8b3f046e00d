#pragma once

#include <chrono>
#include <cmath>
#include <utility>
#include <vector>

#include "expk/errors.hpp"
#include "expk/krylov.hpp"
#include "expk/linalg.hpp"
#include "expk/problems.hpp"
#include "expk/scheme_spec.hpp"
#include "expk/tableau.hpp"

namespace expk {

// Work counters accumulated across steps. jv_products counts every
// Jacobian-vector invocation (Arnoldi columns and direct defect products);
// phi_evals counts distinct reduced phi matrices materialized; builds and
// vectors track Arnoldi constructions.
struct StepStats {
  long long f_evals = 0;
  long long jv_products = 0;
  long long arnoldi_vectors = 0;
  long long phi_evals = 0;
  long long arnoldi_builds = 0;
  double wall_time = 0.0;

  StepStats& operator+=(const StepStats& o) {
    f_evals += o.f_evals;
    jv_products += o.jv_products;
    arnoldi_vectors += o.arnoldi_vectors;
    phi_evals += o.phi_evals;
    arnoldi_builds += o.arnoldi_builds;
    wall_time += o.wall_time;
    return *this;
  }
};

struct StepResult {
  Vector y;
  StepStats stats;
};

namespace detail {

inline Vector eval_rhs(const OdeProblem& p, double t, const Vector& y,
                       StepStats& st) {
  ++st.f_evals;
  return p.rhs(t, y);
}

// Jacobian-vector product frozen at (t, y), with call counting.
inline LinOp frozen_jvp(const OdeProblem& p, double t, const Vector& y,
                        StepStats& st) {
  return [&p, t, &y, &st](const Vector& v) {
    ++st.jv_products;
    return p.jvp(t, y, v);
  };
}

}  // namespace detail

// One request phi_k(scale * A) b against a shared Krylov basis.
struct PhiRequest {
  int k;
  double scale;
};

// Grows one Arnoldi basis for (jvp, b) until every requested reduced phi
// action satisfies the residual estimate ||b|| h_{m+1,m} |e_m^T phi e_1|
// <= tol, then returns ||b|| V phi_k(scale H) e1 per request. A zero b
// short-circuits to zero results without building anything.
inline std::vector<Vector> adaptive_phi_actions(const LinOp& jvp,
                                                const Vector& b,
                                                const std::vector<PhiRequest>& reqs,
                                                const AdaptiveSpec& ad,
                                                StepStats& st) {
  std::vector<Vector> out(reqs.size());
  const double beta = b.norm();
  if (beta == 0.0) {
    for (auto& v : out) v = Vector::Zero(b.size());
    return out;
  }
  if (ad.m_min < 1 || ad.m_max < ad.m_min)
    throw config_error("adaptive projection: need 1 <= m_min <= m_max");

  ArnoldiProcess proc(jvp, b);
  ++st.arnoldi_builds;
  std::vector<Matrix> phis(reqs.size());
  while (true) {
    while (proc.m() < ad.m_min && !proc.breakdown()) proc.advance();
    const Matrix h = proc.hessenberg();
    const Eigen::Index m = proc.m();
    bool all_ok = true;
    for (std::size_t r = 0; r < reqs.size(); ++r) {
      phis[r] = phi_matrix(reqs[r].k, reqs[r].scale * h);
      if (!proc.breakdown() &&
          beta * proc.tail() * std::abs(phis[r](m - 1, 0)) > ad.tol)
        all_ok = false;
    }
    if (all_ok || proc.breakdown()) break;
    if (m >= ad.m_max)
      throw convergence_error(
          "adaptive projection: residual above tolerance at m_max");
    proc.advance();
  }
  st.arnoldi_vectors += proc.m();
  st.phi_evals += static_cast<long long>(reqs.size());
  const Matrix v = proc.basis_matrix();
  for (std::size_t r = 0; r < reqs.size(); ++r)
    out[r] = beta * (v * phis[r].col(0));
  return out;
}

// Single-action convenience form; returns the vector and the basis size used.
inline std::pair<Vector, Eigen::Index> adaptive_phi_action(
    const LinOp& jvp, const Vector& b, double scale, int k, double tol,
    int m_min, int m_max) {
  if (tol <= 0) throw config_error("adaptive projection: tol must be positive");
  StepStats st;
  AdaptiveSpec ad;
  ad.m_min = m_min;
  ad.m_max = m_max;
  ad.tol = tol;
  auto outs = adaptive_phi_actions(jvp, b, {{k, scale}}, ad, st);
  return {std::move(outs[0]), static_cast<Eigen::Index>(st.arnoldi_vectors)};
}

// One step of the tableau-driven single-projection integrator:
//   k_i = phi_1(h gamma A)(h F_i + h A sum_j gammaM_ij k_j),
// computed in the reduced space with the out-of-space stage residue carried
// through h (F_i - V psi_i).
inline StepResult step_expk(const OdeProblem& p, const Vector& yn, double h,
                            const ExpKTableau& t, int M, double tn = 0.0) {
  StepStats st;
  const int s = t.s;
  const Vector fn = detail::eval_rhs(p, tn, yn, st);
  if (fn.norm() == 0.0) return {yn, st};  // exact equilibrium

  const LinOp jv = detail::frozen_jvp(p, tn, yn, st);
  const KrylovBasis basis = arnoldi(jv, fn, M);
  ++st.arnoldi_builds;
  st.arnoldi_vectors += basis.m;

  const double gamma = to_double(t.gamma);
  const Matrix phi = phi_matrix(1, (h * gamma) * basis.H);
  ++st.phi_evals;

  std::vector<Vector> k(s), lam(s);
  for (int i = 0; i < s; ++i) {
    Vector u = yn;
    for (int j = 0; j < i; ++j)
      if (t.alpha[i][j] != 0) u += to_double(t.alpha[i][j]) * k[j];
    const Vector fi = (i == 0) ? fn : detail::eval_rhs(p, tn, u, st);
    const Vector psi = basis.V.transpose() * fi;
    Vector reduced = h * psi;
    Vector gsum = Vector::Zero(basis.m);
    bool any = false;
    for (int j = 0; j < i; ++j)
      if (t.gammaM[i][j] != 0) {
        gsum += to_double(t.gammaM[i][j]) * lam[j];
        any = true;
      }
    if (any) reduced += h * (basis.H * gsum);
    lam[i] = phi * reduced;
    k[i] = basis.V * lam[i] + h * (fi - basis.V * psi);
  }
  Vector ynext = yn;
  for (int i = 0; i < s; ++i)
    if (t.b[i] != 0) ynext += to_double(t.b[i]) * k[i];
  return {std::move(ynext), st};
}

namespace detail {

// exp4 stage weights.
constexpr double kW4[3] = {-7.0 / 300.0, 97.0 / 150.0, -37.0 / 300.0};
constexpr double kW7[3] = {59.0 / 300.0, -7.0 / 75.0, 269.0 / 300.0};

inline StepResult step_exp4_standard(const OdeProblem& p, const Vector& yn,
                                     double h, const AdaptiveSpec& ad,
                                     double tn) {
  StepStats st;
  const Vector fn = eval_rhs(p, tn, yn, st);
  const LinOp jv = frozen_jvp(p, tn, yn, st);
  const std::vector<PhiRequest> thirds = {{1, h / 3.0}, {1, 2.0 * h / 3.0}, {1, h}};

  const auto kf = adaptive_phi_actions(jv, fn, thirds, ad, st);
  const Vector w4 = kW4[0] * kf[0] + kW4[1] * kf[1] + kW4[2] * kf[2];
  const Vector u4 = yn + h * w4;
  const Vector d4 = eval_rhs(p, tn, u4, st) - fn - h * jv(w4);

  const auto kd = adaptive_phi_actions(jv, d4, thirds, ad, st);
  const Vector w7 = kW7[0] * kf[0] + kW7[1] * kf[1] + kW7[2] * kf[2] +
                    (2.0 / 3.0) * (kd[0] + kd[1] + kd[2]);
  const Vector u7 = yn + h * w7;
  const Vector d7 = eval_rhs(p, tn, u7, st) - fn - h * jv(w7);

  const auto ke = adaptive_phi_actions(jv, d7, {{1, h / 3.0}}, ad, st);
  Vector ynext = yn + h * (kf[2] + kd[0] - (4.0 / 3.0) * kd[1] + kd[2] +
                           (1.0 / 6.0) * ke[0]);
  return {std::move(ynext), st};
}

inline StepResult step_exp4_projected(const OdeProblem& p, const Vector& yn,
                                      double h, bool exact_defects, int M,
                                      double tn) {
  StepStats st;
  const Vector fn = eval_rhs(p, tn, yn, st);
  if (fn.norm() == 0.0) return {yn, st};
  const LinOp jv = frozen_jvp(p, tn, yn, st);
  const KrylovBasis basis = arnoldi(jv, fn, M);
  ++st.arnoldi_builds;
  st.arnoldi_vectors += basis.m;
  const Matrix& v = basis.V;
  const Matrix& hm = basis.H;

  const Matrix phi_a = phi_matrix(1, (h / 3.0) * hm);
  const Matrix phi_b = phi_matrix(1, (2.0 * h / 3.0) * hm);
  const Matrix phi_c = phi_matrix(1, h * hm);
  st.phi_evals += 3;

  const Vector psi0 = v.transpose() * fn;
  const Vector lam1 = phi_a * psi0;
  const Vector lam2 = phi_b * psi0;
  const Vector lam3 = phi_c * psi0;

  // Stage 4 block: defect of u4, still in the span of the single basis.
  const Vector sig4 = kW4[0] * lam1 + kW4[1] * lam2 + kW4[2] * lam3;
  const Vector u4 = yn + h * (v * sig4);
  const Vector f4 = eval_rhs(p, tn, u4, st);
  Vector delta4, dperp4;
  if (exact_defects) {
    const Vector d4 = f4 - fn - h * jv(v * sig4);
    delta4 = v.transpose() * d4;
    dperp4 = d4 - v * delta4;
  } else {
    const Vector psi4 = v.transpose() * f4;
    delta4 = psi4 - psi0 - h * (hm * sig4);
    dperp4 = f4 - v * psi4;
  }
  const Vector lam4 = phi_a * delta4;
  const Vector lam5 = phi_b * delta4;
  const Vector lam6 = phi_c * delta4;

  // Stage 7 block: the out-of-space part of w7 is annihilated by A, so the
  // reduced defect sees only sig7.
  const Vector sig7 = kW7[0] * lam1 + kW7[1] * lam2 + kW7[2] * lam3 +
                      (2.0 / 3.0) * (lam4 + lam5 + lam6);
  const Vector w7 = v * sig7 + 2.0 * dperp4;
  const Vector u7 = yn + h * w7;
  const Vector f7 = eval_rhs(p, tn, u7, st);
  Vector delta7, dperp7;
  if (exact_defects) {
    const Vector d7 = f7 - fn - h * jv(w7);
    delta7 = v.transpose() * d7;
    dperp7 = d7 - v * delta7;
  } else {
    const Vector psi7 = v.transpose() * f7;
    delta7 = psi7 - psi0 - h * (hm * sig7);
    dperp7 = f7 - v * psi7;
  }
  const Vector lam7 = phi_a * delta7;

  const Vector reduced =
      lam3 + lam4 - (4.0 / 3.0) * lam5 + lam6 + (1.0 / 6.0) * lam7;
  Vector ynext =
      yn + h * (v * reduced + (2.0 / 3.0) * dperp4 + (1.0 / 6.0) * dperp7);
  return {std::move(ynext), st};
}

inline StepResult step_erow4_standard(const OdeProblem& p, const Vector& yn,
                                      double h, const AdaptiveSpec& ad,
                                      double tn) {
  StepStats st;
  const Vector fn = eval_rhs(p, tn, yn, st);
  const LinOp jv = frozen_jvp(p, tn, yn, st);

  const auto kf = adaptive_phi_actions(jv, fn, {{1, h / 2.0}, {1, h}}, ad, st);
  const Vector w2 = 0.5 * kf[0];
  const Vector u2 = yn + h * w2;
  const Vector d2 = eval_rhs(p, tn, u2, st) - fn - h * jv(w2);

  const auto kd = adaptive_phi_actions(jv, d2, {{1, h}, {3, h}, {4, h}}, ad, st);
  const Vector w4 = kf[1] + kd[0];
  const Vector u4 = yn + h * w4;
  const Vector d4 = eval_rhs(p, tn, u4, st) - fn - h * jv(w4);

  const auto ke = adaptive_phi_actions(jv, d4, {{3, h}, {4, h}}, ad, st);
  Vector ynext = yn + h * (kf[1] + 16.0 * kd[1] - 48.0 * kd[2] - 2.0 * ke[0] +
                           12.0 * ke[1]);
  return {std::move(ynext), st};
}

inline StepResult step_erow4_projected(const OdeProblem& p, const Vector& yn,
                                       double h, bool exact_defects, int M,
                                       double tn) {
  StepStats st;
  const Vector fn = eval_rhs(p, tn, yn, st);
  if (fn.norm() == 0.0) return {yn, st};
  const LinOp jv = frozen_jvp(p, tn, yn, st);
  const KrylovBasis basis = arnoldi(jv, fn, M);
  ++st.arnoldi_builds;
  st.arnoldi_vectors += basis.m;
  const Matrix& v = basis.V;
  const Matrix& hm = basis.H;

  const Matrix phi1_half = phi_matrix(1, 0.5 * h * hm);
  const Matrix phi1_full = phi_matrix(1, h * hm);
  const Matrix phi3_full = phi_matrix(3, h * hm);
  const Matrix phi4_full = phi_matrix(4, h * hm);
  st.phi_evals += 4;

  const Vector psi0 = v.transpose() * fn;
  const Vector lam1 = phi1_half * psi0;
  const Vector lam2 = phi1_full * psi0;

  const Vector sig2 = 0.5 * lam1;
  const Vector u2 = yn + h * (v * sig2);
  const Vector f2 = eval_rhs(p, tn, u2, st);
  Vector delta2, dperp2;
  if (exact_defects) {
    const Vector d2 = f2 - fn - h * jv(v * sig2);
    delta2 = v.transpose() * d2;
    dperp2 = d2 - v * delta2;
  } else {
    const Vector psi2 = v.transpose() * f2;
    delta2 = psi2 - psi0 - h * (hm * sig2);
    dperp2 = f2 - v * psi2;
  }
  const Vector lam3 = phi1_full * delta2;
  const Vector lam4 = phi3_full * delta2;
  const Vector lam5 = phi4_full * delta2;

  // w4 = k2 + k3; its out-of-space part dperp2 is annihilated by A.
  const Vector sig4 = lam2 + lam3;
  const Vector w4 = v * sig4 + dperp2;
  const Vector u4 = yn + h * w4;
  const Vector f4 = eval_rhs(p, tn, u4, st);
  Vector delta4, dperp4;
  if (exact_defects) {
    const Vector d4 = f4 - fn - h * jv(w4);
    delta4 = v.transpose() * d4;
    dperp4 = d4 - v * delta4;
  } else {
    const Vector psi4 = v.transpose() * f4;
    delta4 = psi4 - psi0 - h * (hm * sig4);
    dperp4 = f4 - v * psi4;
  }
  const Vector lam6 = phi3_full * delta4;
  const Vector lam7 = phi4_full * delta4;

  // Update k2 + 16 k4 - 48 k5 - 2 k6 + 12 k7 with the 1/3! and 1/4!
  // out-of-space factors of the phi_3 / phi_4 stages.
  const Vector reduced =
      lam2 + 16.0 * lam4 - 48.0 * lam5 - 2.0 * lam6 + 12.0 * lam7;
  const double c2 = 16.0 / 6.0 - 48.0 / 24.0;  // = 2/3
  const double c4 = -2.0 / 6.0 + 12.0 / 24.0;  // = 1/6
  Vector ynext = yn + h * (v * reduced + c2 * dperp2 + c4 * dperp4);
  return {std::move(ynext), st};
}

}  // namespace detail

inline StepResult step_exp4(const OdeProblem& p, const Vector& yn, double h,
                            Variant variant, int M,
                            const AdaptiveSpec& ad = AdaptiveSpec{},
                            double tn = 0.0) {
  switch (variant) {
    case Variant::standard:
      return detail::step_exp4_standard(p, yn, h, ad, tn);
    case Variant::ktype:
      return detail::step_exp4_projected(p, yn, h, false, M, tn);
    case Variant::sp:
      return detail::step_exp4_projected(p, yn, h, true, M, tn);
  }
  throw scheme_error("step_exp4: unknown variant");
}

inline StepResult step_erow4(const OdeProblem& p, const Vector& yn, double h,
                             Variant variant, int M,
                             const AdaptiveSpec& ad = AdaptiveSpec{},
                             double tn = 0.0) {
  switch (variant) {
    case Variant::standard:
      return detail::step_erow4_standard(p, yn, h, ad, tn);
    case Variant::ktype:
      return detail::step_erow4_projected(p, yn, h, false, M, tn);
    case Variant::sp:
      return detail::step_erow4_projected(p, yn, h, true, M, tn);
  }
  throw scheme_error("step_erow4: unknown variant");
}

inline StepResult step_scheme(const OdeProblem& p, const SchemeSpec& s,
                              double tn, const Vector& yn, double h) {
  switch (s.family) {
    case Family::expk:
      return step_expk(p, yn, h, expk4_tableau(), s.M, tn);
    case Family::exp4:
      return step_exp4(p, yn, h, s.variant, s.M, s.adaptive, tn);
    case Family::erow4:
      return step_erow4(p, yn, h, s.variant, s.M, s.adaptive, tn);
  }
  throw scheme_error("step_scheme: unknown family");
}

struct IntegrateResult {
  Vector y;
  StepStats stats;
};

// Fixed-step driver. (t1 - t0)/h must land on an integer step count within
// round-off; non-finite or invalid states abort with the failing step index.
inline IntegrateResult integrate(const OdeProblem& p, const SchemeSpec& s,
                                 double h, double t0, double t1,
                                 const Vector& y0) {
  const double span = t1 - t0;
  if (span < 0.0) throw config_error("integrate: t1 must be >= t0");
  long long n = 0;
  if (span > 0.0) {
    if (!(h > 0.0)) throw config_error("integrate: h must be positive");
    const double r = span / h;
    const double nearest = std::llround(r);
    if (std::abs(r - nearest) > 1e-8 * std::max(1.0, std::abs(r)))
      throw config_error("integrate: (t1 - t0)/h is not an integer step count");
    n = static_cast<long long>(nearest);
  }

  Vector y = y0;
  StepStats total;
  const auto start = std::chrono::steady_clock::now();
  for (long long i = 0; i < n; ++i) {
    const double tn = t0 + static_cast<double>(i) * h;
    try {
      StepResult r = step_scheme(p, s, tn, y, h);
      y = std::move(r.y);
      total += r.stats;
    } catch (const invalid_state_error& e) {
      throw instability_error(std::string("integrate: ") + e.what(),
                              static_cast<std::size_t>(i));
    } catch (const overflow_error& e) {
      throw instability_error(std::string("integrate: ") + e.what(),
                              static_cast<std::size_t>(i));
    }
    if (!y.allFinite())
      throw instability_error("integrate: non-finite state",
                              static_cast<std::size_t>(i));
  }
  total.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return {std::move(y), total};
}

}  // namespace expk
