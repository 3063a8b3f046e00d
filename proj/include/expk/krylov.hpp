#pragma once

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "expk/errors.hpp"
#include "expk/linalg.hpp"

namespace expk {

// Matrix-free linear operator v -> J v.
using LinOp = std::function<Vector(const Vector&)>;

// Orthonormal basis V of a Krylov space together with the projected
// Hessenberg matrix H = V^T J V. Carrier of the approximation A = V H V^T.
struct KrylovBasis {
  Matrix V;         // N x m, orthonormal columns
  Matrix H;         // m x m, upper Hessenberg
  Eigen::Index m;   // achieved dimension (<= requested)
  bool breakdown;   // true when the iteration terminated early
  double residual;  // subdiagonal tail |h_{m+1,m}| at termination
};

// Incremental modified Arnoldi iteration. Each advance() orthogonalizes
// J v_m against the current basis (one re-orthogonalization pass when the
// norm drops below kappa = 0.25 of its pre-projection value) and either
// appends the next basis vector or records a happy breakdown when the
// subdiagonal tail falls below 1e-12 * ||b||.
class ArnoldiProcess {
 public:
  ArnoldiProcess(LinOp jvp, const Vector& b)
      : jvp_(std::move(jvp)), beta_(b.norm()) {
    if (beta_ == 0.0) throw zero_vector_error("arnoldi: starting vector is zero");
    vs_.push_back(b / beta_);
  }

  // Process one column. Returns false iff a happy breakdown occurred
  // (no further extension is possible). Post: m() grew by one.
  bool advance() {
    if (broke_) return false;
    const Eigen::Index j = cols_;
    Vector w = jvp_(vs_[static_cast<std::size_t>(j)]);
    if (w.size() != vs_[0].size())
      throw dimension_error("arnoldi: operator changed vector length");
    grow_h(j + 1);

    const double pre = w.norm();
    for (Eigen::Index i = 0; i <= j; ++i) {
      const double hij = vs_[static_cast<std::size_t>(i)].dot(w);
      w -= hij * vs_[static_cast<std::size_t>(i)];
      h_(i, j) = hij;
    }
    if (w.norm() < kKappa * pre) {
      for (Eigen::Index i = 0; i <= j; ++i) {
        const double rho = vs_[static_cast<std::size_t>(i)].dot(w);
        w -= rho * vs_[static_cast<std::size_t>(i)];
        h_(i, j) += rho;
      }
    }

    tail_ = w.norm();
    ++cols_;
    if (tail_ < 1e-12 * beta_) {
      broke_ = true;
      return false;
    }
    h_(j + 1, j) = tail_;
    vs_.push_back(w / tail_);
    return true;
  }

  Eigen::Index m() const { return cols_; }
  bool breakdown() const { return broke_; }
  double tail() const { return tail_; }
  double beta() const { return beta_; }

  // Square projected matrix over the processed columns.
  Matrix hessenberg() const { return h_.topLeftCorner(cols_, cols_); }

  Matrix basis_matrix() const {
    Matrix v(vs_[0].size(), cols_);
    for (Eigen::Index j = 0; j < cols_; ++j)
      v.col(j) = vs_[static_cast<std::size_t>(j)];
    return v;
  }

  KrylovBasis snapshot() const {
    if (cols_ == 0) throw dimension_error("arnoldi: no columns processed");
    return KrylovBasis{basis_matrix(), hessenberg(), cols_, broke_, tail_};
  }

 private:
  static constexpr double kKappa = 0.25;

  void grow_h(Eigen::Index need) {
    if (h_.rows() < need + 1) {
      Matrix bigger = Matrix::Zero(2 * need + 2, 2 * need + 1);
      bigger.topLeftCorner(h_.rows(), h_.cols()) = h_;
      h_ = std::move(bigger);
    }
  }

  LinOp jvp_;
  double beta_;
  std::vector<Vector> vs_;
  Matrix h_ = Matrix::Zero(0, 0);
  Eigen::Index cols_ = 0;
  bool broke_ = false;
  double tail_ = 0.0;
};

// Basis of span{b, Jb, ..., J^{m-1}b} with m <= M; m < M only on happy
// breakdown (the basis is returned truncated, never padded).
inline KrylovBasis arnoldi(const LinOp& jvp, const Vector& b, Eigen::Index M) {
  if (M < 1) throw dimension_error("arnoldi: M must be >= 1");
  ArnoldiProcess proc(jvp, b);
  while (proc.m() < M && proc.advance()) {
  }
  return proc.snapshot();
}

// v -> V (H (V^T v)), the action of A = V H V^T.
inline Vector apply_approx_jacobian(const KrylovBasis& basis, const Vector& v) {
  if (v.size() != basis.V.rows())
    throw dimension_error("apply_approx_jacobian: length mismatch");
  return basis.V * (basis.H * (basis.V.transpose() * v));
}

// phi_k(scale * A) w  =  (w - V V^T w)/k!  +  V phi_k(scale * H) V^T w.
// The orthogonal complement enters through the k! term only.
inline Vector reduced_phi_apply(const KrylovBasis& basis, int k, double scale,
                                const Vector& w) {
  if (w.size() != basis.V.rows())
    throw dimension_error("reduced_phi_apply: length mismatch");
  const Vector c = basis.V.transpose() * w;
  const Vector in_space = basis.V * (phi_matrix(k, scale * basis.H) * c);
  return (w - basis.V * c) / detail::factorial(k) + in_space;
}

}  // namespace expk
