#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "expk/errors.hpp"

namespace expk {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Induced infinity norm (max absolute row sum).
inline double inf_norm(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  return a.cwiseAbs().rowwise().sum().maxCoeff();
}

// Induced one norm (max absolute column sum).
inline double one_norm(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  return a.cwiseAbs().colwise().sum().maxCoeff();
}

namespace detail {

// Pivot magnitudes below 1e-14 * ||A||_inf count as singular.
inline Eigen::PartialPivLU<Matrix> checked_lu(const Matrix& a) {
  if (a.rows() != a.cols()) throw dimension_error("lu_solve: matrix not square");
  Eigen::PartialPivLU<Matrix> lu(a);
  const double thresh = 1e-14 * inf_norm(a);
  const double min_pivot = lu.matrixLU().diagonal().cwiseAbs().minCoeff();
  if (!(min_pivot > thresh) || thresh == 0.0)
    throw singular_matrix_error("lu_solve: pivot below singularity threshold");
  return lu;
}

}  // namespace detail

inline Vector lu_solve(const Matrix& a, const Vector& b) {
  if (b.size() != a.rows()) throw dimension_error("lu_solve: size mismatch");
  return detail::checked_lu(a).solve(b);
}

namespace detail {

// Diagonal Pade numerators for e^A, degrees 3..13 (denominator is the same
// polynomial with alternating signs, handled via U/V splitting).
inline void pade_uv_3(const Matrix& a, const Matrix& a2, Matrix& u, Matrix& v) {
  const double b[] = {120., 60., 12., 1.};
  const Matrix ident = Matrix::Identity(a.rows(), a.cols());
  u = a * (b[3] * a2 + b[1] * ident);
  v = b[2] * a2 + b[0] * ident;
}

inline void pade_uv_5(const Matrix& a, const Matrix& a2, const Matrix& a4,
                      Matrix& u, Matrix& v) {
  const double b[] = {30240., 15120., 3360., 420., 30., 1.};
  const Matrix ident = Matrix::Identity(a.rows(), a.cols());
  u = a * (b[5] * a4 + b[3] * a2 + b[1] * ident);
  v = b[4] * a4 + b[2] * a2 + b[0] * ident;
}

inline void pade_uv_7(const Matrix& a, const Matrix& a2, const Matrix& a4,
                      const Matrix& a6, Matrix& u, Matrix& v) {
  const double b[] = {17297280., 8648640., 1995840., 277200., 25200., 1512., 56., 1.};
  const Matrix ident = Matrix::Identity(a.rows(), a.cols());
  u = a * (b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident);
  v = b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident;
}

inline void pade_uv_9(const Matrix& a, const Matrix& a2, const Matrix& a4,
                      const Matrix& a6, const Matrix& a8, Matrix& u, Matrix& v) {
  const double b[] = {17643225600., 8821612800., 2075673600., 302702400.,
                      30270240.,    2162160.,    110880.,     3960.,
                      90.,          1.};
  const Matrix ident = Matrix::Identity(a.rows(), a.cols());
  u = a * (b[9] * a8 + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident);
  v = b[8] * a8 + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident;
}

inline void pade_uv_13(const Matrix& a, const Matrix& a2, const Matrix& a4,
                       const Matrix& a6, Matrix& u, Matrix& v) {
  const double b[] = {64764752532480000., 32382376266240000., 7771770303897600.,
                      1187353796428800.,  129060195264000.,   10559470521600.,
                      670442572800.,      33522128640.,       1323241920.,
                      40840800.,          960960.,            16380.,
                      182.,               1.};
  const Matrix ident = Matrix::Identity(a.rows(), a.cols());
  u = a * (a6 * (b[13] * a6 + b[11] * a4 + b[9] * a2) + b[7] * a6 + b[5] * a4 +
           b[3] * a2 + b[1] * ident);
  v = a6 * (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 + b[4] * a4 +
      b[2] * a2 + b[0] * ident;
}

}  // namespace detail

// Matrix exponential by scaling and squaring with diagonal Pade approximants.
// Degree picked from the one norm; degree 13 with squaring above its threshold.
inline Matrix expm(const Matrix& a) {
  if (a.rows() != a.cols()) throw dimension_error("expm: matrix not square");
  const double nrm = one_norm(a);
  Matrix u, v;
  int squarings = 0;

  if (nrm <= 1.495585217958292e-2) {
    const Matrix a2 = a * a;
    detail::pade_uv_3(a, a2, u, v);
  } else if (nrm <= 2.539398330063230e-1) {
    const Matrix a2 = a * a;
    const Matrix a4 = a2 * a2;
    detail::pade_uv_5(a, a2, a4, u, v);
  } else if (nrm <= 9.504178996162932e-1) {
    const Matrix a2 = a * a;
    const Matrix a4 = a2 * a2;
    const Matrix a6 = a4 * a2;
    detail::pade_uv_7(a, a2, a4, a6, u, v);
  } else if (nrm <= 2.097847961257068e0) {
    const Matrix a2 = a * a;
    const Matrix a4 = a2 * a2;
    const Matrix a6 = a4 * a2;
    const Matrix a8 = a6 * a2;
    detail::pade_uv_9(a, a2, a4, a6, a8, u, v);
  } else {
    const double theta13 = 5.371920351148152;
    double scaled_nrm = nrm;
    while (scaled_nrm > theta13) {
      scaled_nrm /= 2.0;
      ++squarings;
    }
    const Matrix as = a / std::pow(2.0, squarings);
    const Matrix a2 = as * as;
    const Matrix a4 = a2 * a2;
    const Matrix a6 = a4 * a2;
    detail::pade_uv_13(as, a2, a4, a6, u, v);
  }

  // (V - U) X = (V + U)
  Eigen::PartialPivLU<Matrix> lu(v - u);
  Matrix e = lu.solve(v + u);
  for (int i = 0; i < squarings; ++i) e = e * e;
  if (!e.allFinite()) throw overflow_error("expm: non-finite result");
  return e;
}

namespace detail {

inline double factorial(int k) {
  double f = 1.0;
  for (int i = 2; i <= k; ++i) f *= i;
  return f;
}

// phi_1..phi_kmax of Z, all at once, from one exponential of the
// ((k+1)n)x((k+1)n) block companion form
//   [ Z  I  0 ... ]
//   [ 0  0  I ... ]
//   [ ...       0 ]
// whose top block row of exp(.) reads [e^Z, phi_1(Z), ..., phi_kmax(Z)].
inline std::vector<Matrix> phi_chain_augmented(int k_max, const Matrix& z) {
  const Eigen::Index n = z.rows();
  const Eigen::Index dim = n * (k_max + 1);
  Matrix w = Matrix::Zero(dim, dim);
  w.topLeftCorner(n, n) = z;
  for (int j = 0; j < k_max; ++j)
    w.block(j * n, (j + 1) * n, n, n) = Matrix::Identity(n, n);
  const Matrix e = expm(w);
  std::vector<Matrix> phis;
  phis.reserve(k_max);
  for (int c = 1; c <= k_max; ++c) phis.push_back(e.block(0, c * n, n, n));
  return phis;
}

}  // namespace detail

// phi_k(Z) for k >= 1, where phi_k(z) = sum_{i>=0} z^i / (k+i)!.
// Small ||Z|| uses the augmented-matrix route (the recurrence divides by Z and
// is singular at 0). Larger ||Z|| walks the recurrence
// phi_{k+1}(Z) = Z^{-1} (phi_k(Z) - I/k!) when Z is well conditioned for it;
// each recurrence level amplifies round-off by about ||Z^{-1}||, so the walk
// is taken only while ||Z^{-1}||^{k-1} stays within 1e4, and the augmented
// route covers the rest (including numerically singular Z).
inline Matrix phi_matrix(int k, const Matrix& z) {
  if (k < 1) throw dimension_error("phi_matrix: k must be >= 1");
  if (z.rows() != z.cols()) throw dimension_error("phi_matrix: matrix not square");
  if (one_norm(z) > 1e-2) {
    try {
      Eigen::PartialPivLU<Matrix> lu = detail::checked_lu(z);
      const double inv_nrm = one_norm(lu.inverse());
      if (std::pow(std::max(inv_nrm, 1.0), k - 1) <= 1e4) {
        const Matrix ident = Matrix::Identity(z.rows(), z.cols());
        Matrix phi = lu.solve(expm(z) - ident);  // phi_1
        for (int j = 1; j < k; ++j) {
          const Matrix rhs = phi - ident / detail::factorial(j);
          phi = lu.solve(rhs);
        }
        if (!phi.allFinite())
          throw overflow_error("phi_matrix: non-finite result");
        return phi;
      }
    } catch (const singular_matrix_error&) {
      // fall through to the augmented route
    }
  }
  return detail::phi_chain_augmented(k, z).back();
}

// [phi_1(scale H) v, ..., phi_kmax(scale H) v] from a single exponential of
// the (M+k_max)x(M+k_max) augmented matrix
//   [ scale*H  v e_1^T ]
//   [    0        S    ]
// with S the upper-shift nilpotent block.
inline std::vector<Vector> phi_via_augmented(const Matrix& h, const Vector& v,
                                             int k_max, double scale) {
  if (h.rows() != h.cols()) throw dimension_error("phi_via_augmented: H not square");
  if (v.size() != h.rows()) throw dimension_error("phi_via_augmented: size mismatch");
  if (k_max < 1) throw dimension_error("phi_via_augmented: k_max must be >= 1");
  const Eigen::Index m = h.rows();
  Matrix w = Matrix::Zero(m + k_max, m + k_max);
  w.topLeftCorner(m, m) = scale * h;
  w.block(0, m, m, 1) = v;
  for (int j = 0; j + 1 < k_max; ++j) w(m + j, m + j + 1) = 1.0;
  const Matrix e = expm(w);
  std::vector<Vector> out;
  out.reserve(k_max);
  for (int c = 0; c < k_max; ++c) out.push_back(e.block(0, m + c, m, 1));
  return out;
}

}  // namespace expk
