#pragma once

#include <algorithm>
#include <array>
#include <string>
#include <utility>
#include <vector>

#include "expk/errors.hpp"
#include "expk/rational.hpp"
#include "expk/scheme_spec.hpp"
#include "expk/tableau.hpp"

namespace expk {

// Two-colored rooted tree over {meagre, fat}. End vertices are meagre and
// fat vertices are singly branched, which caps the catalog at 21 trees of
// order <= 4. Node 0 is the root; parent[i] < i.
struct TwTree {
  int id;                     // 1..21, table row order
  int order;                  // node count
  std::array<int, 4> parent;  // parent[i], -1 for the root, unused slots -1
  std::array<char, 4> color;  // 'm' or 'F' per node, unused slots 0
  int symmetry;               // sigma(tau); housed, not used numerically
  const char* differential;   // elementary differential, A = frozen Jacobian
};

inline const std::array<TwTree, 21>& tw_catalog() {
  static const std::array<TwTree, 21> cat = {{
      {1, 1, {-1, -1, -1, -1}, {'m', 0, 0, 0}, 1, "f"},
      {2, 2, {-1, 0, -1, -1}, {'m', 'm', 0, 0}, 1, "f'f"},
      {3, 2, {-1, 0, -1, -1}, {'F', 'm', 0, 0}, 1, "Af"},
      {4, 3, {-1, 0, 0, -1}, {'m', 'm', 'm', 0}, 2, "f''(f,f)"},
      {5, 3, {-1, 0, 1, -1}, {'m', 'm', 'm', 0}, 1, "f'f'f"},
      {6, 3, {-1, 0, 1, -1}, {'m', 'F', 'm', 0}, 1, "f'Af"},
      {7, 3, {-1, 0, 1, -1}, {'F', 'm', 'm', 0}, 1, "Af'f"},
      {8, 3, {-1, 0, 1, -1}, {'F', 'F', 'm', 0}, 1, "AAf"},
      {9, 4, {-1, 0, 0, 0}, {'m', 'm', 'm', 'm'}, 6, "f'''(f,f,f)"},
      {10, 4, {-1, 0, 1, 0}, {'m', 'm', 'm', 'm'}, 1, "f''(f'f,f)"},
      {11, 4, {-1, 0, 1, 0}, {'m', 'F', 'm', 'm'}, 1, "f''(Af,f)"},
      {12, 4, {-1, 0, 1, 1}, {'m', 'm', 'm', 'm'}, 2, "f'f''(f,f)"},
      {13, 4, {-1, 0, 1, 1}, {'F', 'm', 'm', 'm'}, 2, "Af''(f,f)"},
      {14, 4, {-1, 0, 1, 2}, {'m', 'm', 'm', 'm'}, 1, "f'f'f'f"},
      {15, 4, {-1, 0, 1, 2}, {'m', 'm', 'F', 'm'}, 1, "f'f'Af"},
      {16, 4, {-1, 0, 1, 2}, {'m', 'F', 'm', 'm'}, 1, "f'Af'f"},
      {17, 4, {-1, 0, 1, 2}, {'m', 'F', 'F', 'm'}, 1, "f'AAf"},
      {18, 4, {-1, 0, 1, 2}, {'F', 'm', 'm', 'm'}, 1, "Af'f'f"},
      {19, 4, {-1, 0, 1, 2}, {'F', 'm', 'F', 'm'}, 1, "Af'Af"},
      {20, 4, {-1, 0, 1, 2}, {'F', 'F', 'm', 'm'}, 1, "AAf'f"},
      {21, 4, {-1, 0, 1, 2}, {'F', 'F', 'F', 'm'}, 1, "AAAf"},
  }};
  return cat;
}

// Formal series a.empty * y + sum_i coeff[i] * h^|tau_i| F(tau_i)(y),
// truncated past order four. Arithmetic is defined as hidden friends so the
// overloads participate only when a BSeries argument is present.
struct BSeries {
  Rat empty{0};
  std::array<Rat, 21> coeff{};

  bool operator==(const BSeries& o) const {
    return empty == o.empty && coeff == o.coeff;
  }

  friend BSeries operator+(const BSeries& a, const BSeries& b) {
    BSeries r;
    r.empty = a.empty + b.empty;
    for (int i = 0; i < 21; ++i) r.coeff[i] = a.coeff[i] + b.coeff[i];
    return r;
  }
  friend BSeries operator-(const BSeries& a, const BSeries& b) {
    BSeries r;
    r.empty = a.empty - b.empty;
    for (int i = 0; i < 21; ++i) r.coeff[i] = a.coeff[i] - b.coeff[i];
    return r;
  }
  friend BSeries operator*(const Rat& c, const BSeries& a) {
    BSeries r;
    r.empty = c * a.empty;
    for (int i = 0; i < 21; ++i) r.coeff[i] = c * a.coeff[i];
    return r;
  }
  friend BSeries operator*(const BSeries& a, const Rat& c) { return c * a; }
};

// Series of the unexpanded state y (the expansion point itself).
inline BSeries identity_bseries() {
  BSeries a;
  a.empty = 1;
  return a;
}

// Series of h f(B(a, y)). Each output tree has a meagre root whose child
// subtrees are drawn from a; indexes below are the fixed catalog wiring.
inline BSeries compose_f(const BSeries& a) {
  if (a.empty != 1)
    throw normalization_error("compose_f: series must expand around y (empty = 1)");
  const auto& x = a.coeff;
  BSeries r;
  r.coeff[0] = 1;                  // f
  r.coeff[1] = x[0];               // f'f
  r.coeff[3] = x[0] * x[0];        // f''(f,f)
  r.coeff[4] = x[1];               // f'f'f
  r.coeff[5] = x[2];               // f'Af
  r.coeff[8] = x[0] * x[0] * x[0]; // f'''(f,f,f)
  r.coeff[9] = x[0] * x[1];        // f''(f'f,f)
  r.coeff[10] = x[0] * x[2];       // f''(Af,f)
  r.coeff[11] = x[3];              // f'f''(f,f)
  r.coeff[13] = x[4];              // f'f'f'f
  r.coeff[14] = x[5];              // f'f'Af
  r.coeff[15] = x[6];              // f'Af'f
  r.coeff[16] = x[7];              // f'AAf
  return r;
}

// Series of h A B(a, y): prepends a fat root. The empty coefficient is
// dropped (A acts on the deviation terms only; stage series have empty 0).
inline BSeries mult_A(const BSeries& a) {
  const auto& x = a.coeff;
  BSeries r;
  r.coeff[2] = x[0];   // Af
  r.coeff[6] = x[1];   // Af'f
  r.coeff[7] = x[2];   // AAf
  r.coeff[12] = x[3];  // Af''(f,f)
  r.coeff[17] = x[4];  // Af'f'f
  r.coeff[18] = x[5];  // Af'Af
  r.coeff[19] = x[6];  // AAf'f
  r.coeff[20] = x[7];  // AAAf
  return r;
}

// Series of h J B(a, y) with J = f'(y) frozen at the expansion point:
// prepends a meagre singly-branched root.
inline BSeries mult_J(const BSeries& a) {
  const auto& x = a.coeff;
  BSeries r;
  r.coeff[1] = x[0];   // f'f
  r.coeff[4] = x[1];   // f'f'f
  r.coeff[5] = x[2];   // f'Af
  r.coeff[11] = x[3];  // f'f''(f,f)
  r.coeff[13] = x[4];  // f'f'f'f
  r.coeff[14] = x[5];  // f'f'Af
  r.coeff[15] = x[6];  // f'AAf
  r.coeff[16] = x[7];  // f'AAf
  return r;
}

// Truncated power series p(hX) = d0 + d1 (hX) + ... + d4 (hX)^4 of a matrix
// function applied in a scheme stage.
struct SeriesOperator {
  std::array<Rat, 5> d{};
};

inline SeriesOperator identity_operator() {
  SeriesOperator op;
  op.d[0] = 1;
  return op;
}

// phi_k(scale * hX) with phi_k(z) = sum_i z^i / (k+i)!.
inline SeriesOperator phi_exponential(int k, const Rat& scale) {
  SeriesOperator op;
  Rat p = 1;
  for (int i = 0; i < 5; ++i) {
    op.d[i] = p / rat_factorial(k + i);
    p *= scale;
  }
  return op;
}

// (I - gamma hX)^(-1), the Rosenbrock stage operator. Provided for reuse;
// no shipped scheme uses it.
inline SeriesOperator phi_rosenbrock(const Rat& gamma) {
  SeriesOperator op;
  Rat p = 1;
  for (int i = 0; i < 5; ++i) {
    op.d[i] = p;
    p *= gamma;
  }
  return op;
}

namespace detail {

// p(hX) B(a,y) where one application of X is `mult`; d0 also carries the
// empty coefficient through untouched.
template <typename Mult>
BSeries apply_operator(const SeriesOperator& op, const BSeries& a, Mult mult) {
  BSeries r = op.d[0] * a;
  BSeries power = a;
  for (int k = 1; k < 5; ++k) {
    power = mult(power);
    r = r + op.d[k] * power;
  }
  return r;
}

}  // namespace detail

// phi-type operator application with the frozen-A chains of the figure rows.
inline BSeries mult_phi(const SeriesOperator& op, const BSeries& a) {
  return detail::apply_operator(op, a, [](const BSeries& s) { return mult_A(s); });
}

// Same expansion with exact-Jacobian chains (standard-variant stages).
inline BSeries mult_phi_exactJ(const SeriesOperator& op, const BSeries& a) {
  return detail::apply_operator(op, a, [](const BSeries& s) { return mult_J(s); });
}

// Numerical-solution series of a tableau-driven scheme: per stage
//   k_i = phi_1(gamma hA)(h f(u_i) + hA sum_j gammaM_ij k_j),
//   u_i = y + sum_j alpha_ij k_j,  a_n = y + sum_i b_i k_i.
inline BSeries tableau_bseries(const ExpKTableau& t) {
  const SeriesOperator phi1 = phi_exponential(1, t.gamma);
  const BSeries a0 = identity_bseries();
  std::vector<BSeries> k(t.s);
  for (int i = 0; i < t.s; ++i) {
    BSeries u = a0;
    BSeries g;
    for (int j = 0; j < i; ++j) {
      u = u + t.alpha[i][j] * k[j];
      g = g + t.gammaM[i][j] * k[j];
    }
    k[i] = mult_phi(phi1, compose_f(u) + mult_A(g));
  }
  BSeries an = a0;
  for (int i = 0; i < t.s; ++i) an = an + t.b[i] * k[i];
  return an;
}

namespace detail {

// Stage algebra shared by the three forms of each scheme. The two operator
// slots select the matrix in the phi arguments and in the defect terms:
// standard (J, J); reduced/K-type (A, A); single projection (A, J). The
// K-type perpendicular corrections cancel against the out-of-space part of
// the reduced phi application, leaving exactly the frozen-A expansion.
struct SchemeAlgebra {
  bool phi_uses_A = true;
  bool defect_uses_A = true;

  BSeries phi(int k, const Rat& scale, const BSeries& a) const {
    const SeriesOperator op = phi_exponential(k, scale);
    return phi_uses_A ? mult_phi(op, a) : mult_phi_exactJ(op, a);
  }
  BSeries defect(const BSeries& w) const {
    return defect_uses_A ? mult_A(w) : mult_J(w);
  }
};

inline SchemeAlgebra algebra_for(Variant v) {
  SchemeAlgebra alg;
  switch (v) {
    case Variant::standard:
      alg.phi_uses_A = false;
      alg.defect_uses_A = false;
      break;
    case Variant::ktype:
      alg.phi_uses_A = true;
      alg.defect_uses_A = true;
      break;
    case Variant::sp:
      alg.phi_uses_A = true;
      alg.defect_uses_A = false;
      break;
  }
  return alg;
}

inline BSeries exp4_bseries(const SchemeAlgebra& alg) {
  const BSeries a0 = identity_bseries();
  const BSeries f0 = compose_f(a0);
  const Rat third(1, 3), two_thirds(2, 3);

  const BSeries k1 = alg.phi(1, third, f0);
  const BSeries k2 = alg.phi(1, two_thirds, f0);
  const BSeries k3 = alg.phi(1, Rat(1), f0);

  const BSeries w4 = rat(-7, 300) * k1 + rat(97, 150) * k2 + rat(-37, 300) * k3;
  const BSeries d4 = compose_f(a0 + w4) - f0 - alg.defect(w4);
  const BSeries k4 = alg.phi(1, third, d4);
  const BSeries k5 = alg.phi(1, two_thirds, d4);
  const BSeries k6 = alg.phi(1, Rat(1), d4);

  const BSeries w7 = rat(59, 300) * k1 + rat(-7, 75) * k2 + rat(269, 300) * k3 +
                     two_thirds * (k4 + k5 + k6);
  const BSeries d7 = compose_f(a0 + w7) - f0 - alg.defect(w7);
  const BSeries k7 = alg.phi(1, third, d7);

  return a0 + k3 + k4 + rat(-4, 3) * k5 + k6 + rat(1, 6) * k7;
}

inline BSeries erow4_bseries(const SchemeAlgebra& alg) {
  const BSeries a0 = identity_bseries();
  const BSeries f0 = compose_f(a0);

  const BSeries k1 = alg.phi(1, Rat(1, 2), f0);
  const BSeries k2 = alg.phi(1, Rat(1), f0);

  const BSeries w2 = Rat(1, 2) * k1;
  const BSeries d2 = compose_f(a0 + w2) - f0 - alg.defect(w2);
  const BSeries k3 = alg.phi(1, Rat(1), d2);
  const BSeries k4 = alg.phi(3, Rat(1), d2);
  const BSeries k5 = alg.phi(4, Rat(1), d2);

  const BSeries w4 = k2 + k3;
  const BSeries d4 = compose_f(a0 + w4) - f0 - alg.defect(w4);
  const BSeries k6 = alg.phi(3, Rat(1), d4);
  const BSeries k7 = alg.phi(4, Rat(1), d4);

  return a0 + k2 + rat(16) * k4 + rat(-48) * k5 + rat(-2) * k6 + rat(12) * k7;
}

}  // namespace detail

// Numerical-solution series of any shipped scheme.
inline BSeries scheme_bseries(const SchemeSpec& scheme) {
  switch (scheme.family) {
    case Family::expk:
      return tableau_bseries(expk4_tableau());
    case Family::exp4:
      return detail::exp4_bseries(detail::algebra_for(scheme.variant));
    case Family::erow4:
      return detail::erow4_bseries(detail::algebra_for(scheme.variant));
  }
  throw scheme_error("scheme_bseries: unknown scheme");
}

// Series of the exact flow truncated at order four: 1/gamma-density on
// meagre trees, zero on every tree containing a fat vertex.
inline BSeries exact_solution_bseries() {
  BSeries e;
  e.empty = 1;
  e.coeff[0] = 1;           // f
  e.coeff[1] = rat(1, 2);   // f'f
  e.coeff[3] = rat(1, 3);   // f''(f,f)
  e.coeff[4] = rat(1, 6);   // f'f'f
  e.coeff[8] = rat(1, 4);   // f'''(f,f,f)
  e.coeff[9] = rat(1, 8);   // f''(f'f,f)
  e.coeff[11] = rat(1, 12); // f'f''(f,f)
  e.coeff[13] = rat(1, 24); // f'f'f'f
  return e;
}

namespace detail {

// A node's subtree is a linear chain when every node in it has at most one
// child; only such fat nodes may be recolored meagre when the chain fits in
// an M-dimensional Krylov space.
inline bool subtree_is_chain(const TwTree& t, int node, int& length) {
  std::array<int, 4> child_count{};
  std::array<bool, 4> in_sub{};
  in_sub[node] = true;
  length = 1;
  for (int i = node + 1; i < t.order; ++i) {
    if (t.parent[i] >= 0 && in_sub[t.parent[i]]) {
      in_sub[i] = true;
      ++length;
      if (++child_count[t.parent[i]] > 1) return false;
    }
  }
  // Branching below the subtree root also disqualifies nodes inside it,
  // already counted above; nodes outside never attach to in_sub by parent
  // ordering (parent[i] < i).
  for (int i = 0; i < t.order; ++i)
    if (in_sub[i] && child_count[i] > 1) return false;
  return true;
}

}  // namespace detail

// Partition of the 21 catalog ids into Krylov-equivalence classes at basis
// dimension M: a fat vertex whose subtree is a linear chain of order <= M is
// indistinguishable from a meagre one (the chain's differential is matched
// exactly in the Krylov space), so such trees collapse.
inline std::vector<std::vector<int>> tk_classes(int M) {
  struct Key {
    std::array<int, 4> parent;
    std::array<char, 4> color;
    int order;
    bool operator<(const Key& o) const {
      if (order != o.order) return order < o.order;
      if (parent != o.parent) return parent < o.parent;
      return color < o.color;
    }
  };
  std::vector<std::pair<Key, int>> keyed;
  for (const auto& t : tw_catalog()) {
    Key k{t.parent, t.color, t.order};
    for (int node = 0; node < t.order; ++node) {
      if (t.color[node] != 'F') continue;
      int len = 0;
      if (detail::subtree_is_chain(t, node, len) && len <= M)
        k.color[node] = 'm';
    }
    keyed.emplace_back(k, t.id);
  }
  std::sort(keyed.begin(), keyed.end(),
            [](const auto& a, const auto& b) {
              if (!(a.first < b.first) && !(b.first < a.first))
                return a.second < b.second;
              return a.first < b.first;
            });
  std::vector<std::vector<int>> classes;
  for (std::size_t i = 0; i < keyed.size(); ++i) {
    if (i == 0 || keyed[i - 1].first < keyed[i].first ||
        keyed[i].first < keyed[i - 1].first)
      classes.emplace_back();
    classes.back().push_back(keyed[i].second);
  }
  // Present classes ordered by their smallest member.
  std::sort(classes.begin(), classes.end(),
            [](const auto& a, const auto& b) { return a.front() < b.front(); });
  return classes;
}

// Largest p <= min(4, M) such that every Krylov-equivalence class of order
// <= p has the same coefficient sum in a as in the exact solution.
inline int classify_order(const BSeries& a, int M) {
  if (M < 1) throw dimension_error("classify_order: M must be >= 1");
  const BSeries exact = exact_solution_bseries();
  const auto classes = tk_classes(M);
  const auto& cat = tw_catalog();
  int p = std::min(4, M);
  for (const auto& cls : classes) {
    Rat got = 0, want = 0;
    for (int id : cls) {
      got += a.coeff[id - 1];
      want += exact.coeff[id - 1];
    }
    if (got != want) {
      const int ord = cat[cls.front() - 1].order;
      p = std::min(p, ord - 1);
    }
  }
  return std::max(p, 0);
}

}  // namespace expk
