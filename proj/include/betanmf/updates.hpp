#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "betanmf/constraints.hpp"
#include "betanmf/rootfind.hpp"
#include "betanmf/types.hpp"

namespace betanmf {

/// Terms of the separable majorizer at the current iterate.
///
/// For the plain and linearly constrained updates only C and D are used:
/// the minimizer of the majorizer is X ⊙ (C ⊘ D)^gamma(beta). The min-volume
/// update also carries S (quadratic branch) and M = (V ⊘ WH) H^T, which keeps
/// the update well defined when D vanishes (lambda = 0).
template <typename Scalar>
struct MajorizerCoefficients {
  Matrix<Scalar> C;
  Matrix<Scalar> D;
  Matrix<Scalar> S;
  Matrix<Scalar> M;
};

namespace detail {

template <typename Scalar>
void require_admissible(const Matrix<Scalar>& V, const BetaParams<Scalar>& p) {
  const bool ok = V.allFinite() && (p.beta <= Scalar(0) ? (V.array() > Scalar(0)).all() : (V.array() >= Scalar(0)).all());
  if (ok) return;
  for (Index n = 0; n < V.cols(); ++n) {
    for (Index f = 0; f < V.rows(); ++f) {
      const Scalar v = V(f, n);
      if (!(v >= Scalar(0)) || !std::isfinite(v)) {
        throw DomainError("data entry (" + std::to_string(f) + "," + std::to_string(n) +
                          ") is negative or not finite");
      }
      if (v == Scalar(0) && p.beta <= Scalar(0)) {
        throw DomainError("data entry (" + std::to_string(f) + "," + std::to_string(n) +
                          ") is zero, which is outside the domain for beta <= 0");
      }
    }
  }
}

// Columns per sweep block, so the F x block temporaries stay in cache.
inline Index column_block(Index F) { return std::max<Index>(8, 8192 / std::max<Index>(F, 1)); }

// num = (WH)^(beta-2) ⊙ V and den = (WH)^(beta-1); den is left empty for
// beta = 1 where it is all ones.
template <typename Scalar>
void weighted_ratios(const Eigen::Ref<const Matrix<Scalar>>& V, const Matrix<Scalar>& WH, const BetaParams<Scalar>& p,
                     Matrix<Scalar>& num, Matrix<Scalar>& den) {
  const Scalar b = p.beta;
  if (p.regime == Regime::KullbackLeibler) {
    num = V.cwiseQuotient(WH);
    den.resize(0, 0);
  } else if (p.regime == Regime::ItakuraSaito) {
    den = WH.cwiseInverse();
    num = V.cwiseProduct(den.cwiseAbs2());
  } else if (b == Scalar(2)) {
    num = V;
    den = WH;
  } else if (b == Scalar(0.5)) {
    den = WH.cwiseSqrt().cwiseInverse();
    num = V.cwiseProduct(den).cwiseQuotient(WH);
  } else if (b == Scalar(1.5)) {
    den = WH.cwiseSqrt();
    num = V.cwiseQuotient(den);
  } else {
    den = WH.array().pow(b - Scalar(1)).matrix();
    num = V.cwiseProduct(den).cwiseQuotient(WH);
  }
}

// x^g for the handful of exponents the MU actually uses.
template <typename Scalar>
Scalar pow_gamma(Scalar x, Scalar g) {
  if (g == Scalar(1)) return x;
  if (g == Scalar(0.5)) return std::sqrt(x);
  return std::pow(x, g);
}

}  // namespace detail

/// C = W^T((WH)^(beta-2) ⊙ V), D = W^T (WH)^(beta-1): coefficients for H.
template <typename Scalar>
MajorizerCoefficients<Scalar> mu_coefficients(const Matrix<Scalar>& V, const Matrix<Scalar>& W,
                                              const Matrix<Scalar>& H, const BetaParams<Scalar>& p) {
  detail::require_admissible(V, p);
  const Index N = V.cols();
  const bool kl = p.regime == Regime::KullbackLeibler;
  MajorizerCoefficients<Scalar> c;
  c.C.resize(W.cols(), N);
  if (kl) {
    c.D = W.colwise().sum().transpose().replicate(1, N);
  } else {
    c.D.resize(W.cols(), N);
  }
  Matrix<Scalar> WH, num, den;
  const Index B = detail::column_block(V.rows());
  for (Index j = 0; j < N; j += B) {
    const Index n = std::min(B, N - j);
    WH.noalias() = W * H.middleCols(j, n);
    detail::weighted_ratios<Scalar>(V.middleCols(j, n), WH, p, num, den);
    c.C.middleCols(j, n).noalias() = W.transpose() * num;
    if (!kl) c.D.middleCols(j, n).noalias() = W.transpose() * den;
  }
  return c;
}

/// Coefficients for the W subproblem, i.e. the H-side formulas applied to
/// the transposed model V^T ≈ H^T W^T.
template <typename Scalar>
MajorizerCoefficients<Scalar> mu_coefficients_for_W(const Matrix<Scalar>& V, const Matrix<Scalar>& W,
                                                    const Matrix<Scalar>& H, const BetaParams<Scalar>& p) {
  detail::require_admissible(V, p);
  const Index N = V.cols();
  const bool kl = p.regime == Regime::KullbackLeibler;
  MajorizerCoefficients<Scalar> c;
  c.C = Matrix<Scalar>::Zero(W.rows(), W.cols());
  if (kl) {
    c.D = H.rowwise().sum().transpose().replicate(W.rows(), 1);
  } else {
    c.D = Matrix<Scalar>::Zero(W.rows(), W.cols());
  }
  Matrix<Scalar> WH, num, den;
  const Index B = detail::column_block(V.rows());
  for (Index j = 0; j < N; j += B) {
    const Index n = std::min(B, N - j);
    WH.noalias() = W * H.middleCols(j, n);
    detail::weighted_ratios<Scalar>(V.middleCols(j, n), WH, p, num, den);
    c.C.noalias() += num * H.middleCols(j, n).transpose();
    if (!kl) c.D.noalias() += den * H.middleCols(j, n).transpose();
  }
  return c;
}

/// Standard multiplicative step X ⊙ (C ⊘ D)^gamma(beta).
template <typename Scalar>
Matrix<Scalar> update_unconstrained(const Matrix<Scalar>& Xt, const MajorizerCoefficients<Scalar>& coeff,
                                    const BetaParams<Scalar>& p) {
  const Scalar g = p.gamma_exp;
  if (g == Scalar(1)) return Xt.cwiseProduct(coeff.C.cwiseQuotient(coeff.D));
  if (g == Scalar(0.5)) return Xt.cwiseProduct(coeff.C.cwiseQuotient(coeff.D).cwiseSqrt());
  return Xt.cwiseProduct(coeff.C.cwiseQuotient(coeff.D).array().pow(g).matrix());
}

// ---------------------------------------------------------------------------
// Linear constraints

/// Per-entry minimizers y_q(mu) of the Lagrangian majorizer for one linear
/// constraint block, and the root function r(mu) = weights^T y(mu) - rhs.
///
/// For beta <= 1 and beta >= 2 the minimizer is the shifted multiplicative form
///   y_q = ytil_q (C_q / (D_q - mu w_q))^gamma(beta),   mu < min_q D_q / w_q.
/// For 1 < beta < 2 the shifted form is not the minimizer; the stationarity
/// condition reads D rho^(beta-1) - C rho^(beta-2) = mu w with rho = y/ytil,
/// which is solved per entry (in closed form at beta = 3/2).
template <typename Scalar>
class LinearBlock {
 public:
  LinearBlock(Vector<Scalar> ytil, Vector<Scalar> C, Vector<Scalar> D, Vector<Scalar> weights, Scalar rhs,
              const BetaParams<Scalar>& p)
      : rhs_(rhs), p_(p), exact_inner_(p.regime == Regime::BetweenOneAndTwo) {
    const Index Q = ytil.size();
    if (C.size() != Q || D.size() != Q || weights.size() != Q || Q == 0) {
      throw ValidationError("LinearBlock: inconsistent block sizes");
    }
    own_.resize(Q, 4);
    own_ << ytil, C, D, weights;
    bind_own();
  }

  /// Empty block, to be filled by gather().
  explicit LinearBlock(const BetaParams<Scalar>& p) : rhs_(0), p_(p), exact_inner_(p.regime == Regime::BetweenOneAndTwo) {}

  /// Non-owning block over Q entries held in four caller arrays, which must
  /// outlive it.
  static LinearBlock view(const Scalar* ytil, const Scalar* C, const Scalar* D, const Scalar* weights, Index Q,
                          Scalar rhs, const BetaParams<Scalar>& p) {
    LinearBlock b(p);
    b.y_ = ytil;
    b.c_ = C;
    b.d_ = D;
    b.w_ = weights;
    b.n_ = Q;
    b.rhs_ = rhs;
    return b;
  }

  LinearBlock(const LinearBlock& o) { *this = o; }
  LinearBlock& operator=(const LinearBlock& o) {
    if (this == &o) return *this;
    own_ = o.own_;
    rhs_ = o.rhs_;
    p_ = o.p_;
    exact_inner_ = o.exact_inner_;
    if (o.owning()) {
      bind_own();
    } else {
      y_ = o.y_;
      c_ = o.c_;
      d_ = o.d_;
      w_ = o.w_;
      n_ = o.n_;
    }
    return *this;
  }
  LinearBlock(LinearBlock&& o) noexcept { *this = o; }
  LinearBlock& operator=(LinearBlock&& o) noexcept { return *this = o; }

  /// Refills the block from the entries of lc, reusing storage.
  void gather(const Matrix<Scalar>& Xt, const MajorizerCoefficients<Scalar>& coeff,
              const LinearConstraint<Scalar>& lc) {
    const Index Q = static_cast<Index>(lc.set.size());
    if (lc.weights.size() != Q || Q == 0) throw ValidationError("LinearBlock: inconsistent block sizes");
    if (own_.rows() != Q) own_.resize(Q, 4);
    Scalar* y = own_.data();
    gather_into(Xt, coeff, lc, y, y + Q, y + 2 * Q, y + 3 * Q);
    bind_own();
    rhs_ = lc.rhs;
  }

  /// Copies the current values, coefficients and weights of lc's entries
  /// into four caller arrays.
  static void gather_into(const Matrix<Scalar>& Xt, const MajorizerCoefficients<Scalar>& coeff,
                          const LinearConstraint<Scalar>& lc, Scalar* ytil, Scalar* C, Scalar* D, Scalar* weights) {
    const Index Q = static_cast<Index>(lc.set.size());
    const Index ldx = Xt.rows(), ldc = coeff.C.rows(), ldd = coeff.D.rows();
    const Scalar* x = Xt.data();
    const Scalar* c = coeff.C.data();
    const Scalar* d = coeff.D.data();
    const auto* e = lc.set.data();
    const Scalar* w = lc.weights.data();
    for (Index q = 0; q < Q; ++q) {
      ytil[q] = x[e[q].col * ldx + e[q].row];
      C[q] = c[e[q].col * ldc + e[q].row];
      D[q] = d[e[q].col * ldd + e[q].row];
      weights[q] = w[q];
    }
  }

  /// Open upper bound of the multiplier domain.
  Scalar pole() const {
    if (exact_inner_) return std::numeric_limits<Scalar>::infinity();
    Scalar t = std::numeric_limits<Scalar>::infinity();
    for (Index q = 0; q < n_; ++q) t = std::min(t, d_[q] / w_[q]);
    return t;
  }

  Scalar entry(Index q, Scalar mu) const { return y_[q] * ratio(q, mu); }

  Vector<Scalar> entries(Scalar mu) const {
    Vector<Scalar> y(n_);
    for (Index q = 0; q < n_; ++q) y(q) = entry(q, mu);
    return y;
  }

  RootEval<Scalar> operator()(Scalar mu) const {
    Scalar r = -rhs_;
    Scalar dr(0);
    if (!exact_inner_) {
      const Scalar g = p_.gamma_exp;
      // dy/dmu = g w y / (D - mu w), d2y/dmu2 = g (g + 1) w^2 y / (D - mu w)^2
      Scalar d2r(0);
      if (g == Scalar(1)) {
        for (Index q = 0; q < n_; ++q) {
          const Scalar w = w_[q];
          const Scalar inv = Scalar(1) / (d_[q] - mu * w);
          const Scalar wy = w * y_[q] * c_[q] * inv;
          const Scalar s1 = w * wy * inv;
          r += wy;
          dr += s1;
          d2r += w * s1 * inv;
        }
        return {r, dr, Scalar(2) * d2r};
      }
      for (Index q = 0; q < n_; ++q) {
        if (c_[q] == Scalar(0)) continue;
        const Scalar w = w_[q];
        const Scalar inv = Scalar(1) / (d_[q] - mu * w);
        const Scalar wy = w * y_[q] * detail::pow_gamma(c_[q] * inv, g);
        const Scalar s1 = w * wy * inv;
        r += wy;
        dr += s1;
        d2r += w * s1 * inv;
      }
      return {r, g * dr, g * (g + Scalar(1)) * d2r};
    }
    for (Index q = 0; q < n_; ++q) {
      const Scalar rho = ratio(q, mu);
      const Scalar y = y_[q] * rho;
      r += w_[q] * y;
      dr += w_[q] * y_[q] * ratio_slope(q, mu, rho);
    }
    return {r, dr};
  }

  Index size() const { return n_; }

 private:
  bool owning() const { return n_ > 0 && y_ == own_.data(); }

  void bind_own() {
    n_ = own_.rows();
    y_ = own_.data();
    c_ = y_ + n_;
    d_ = y_ + 2 * n_;
    w_ = y_ + 3 * n_;
  }

  Scalar ratio(Index q, Scalar mu) const {
    const Scalar c = c_[q];
    const Scalar d = d_[q];
    const Scalar m = mu * w_[q];
    if (!exact_inner_) {
      if (c == Scalar(0)) return Scalar(0);
      return detail::pow_gamma(c / (d - m), p_.gamma_exp);
    }
    return inner_ratio(c, d, m);
  }

  // d rho / d mu
  Scalar ratio_slope(Index q, Scalar mu, Scalar rho) const {
    const Scalar w = w_[q];
    if (rho == Scalar(0)) return Scalar(0);
    if (!exact_inner_) {
      return p_.gamma_exp * rho * w / (d_[q] - mu * w);
    }
    const Scalar b = p_.beta;
    // phi(rho) = D rho^(b-1) - C rho^(b-2); phi'(rho) = rho^(b-3) ((b-1) D rho + (2-b) C)
    const Scalar denom = (b - Scalar(1)) * d_[q] * rho + (Scalar(2) - b) * c_[q];
    return w * std::pow(rho, Scalar(3) - b) / denom;
  }

  // Solves D rho - C - m rho^(2-beta) = 0 for rho > 0.
  Scalar inner_ratio(Scalar c, Scalar d, Scalar m) const {
    const Scalar b = p_.beta;
    if (c == Scalar(0)) {
      return m > Scalar(0) ? std::pow(m / d, Scalar(1) / (b - Scalar(1))) : Scalar(0);
    }
    if (b == Scalar(1.5)) {
      // D s^2 - m s - C = 0 with s = sqrt(rho)
      const Scalar disc = std::sqrt(m * m + Scalar(4) * d * c);
      const Scalar s = m >= Scalar(0) ? (m + disc) / (Scalar(2) * d) : Scalar(2) * c / (disc - m);
      return s * s;
    }
    const Scalar a = Scalar(2) - b;
    auto fn = [&](Scalar rho) { return d * rho - c - m * std::pow(rho, a); };
    auto dfn = [&](Scalar rho) { return d - m * a * std::pow(rho, a - Scalar(1)); };
    Scalar lo, hi;
    const Scalar start = c / d;
    if (m >= Scalar(0)) {
      lo = start;
      hi = start;
      while (fn(hi) <= Scalar(0)) hi *= Scalar(2);
    } else {
      hi = start;
      lo = start;
      while (fn(lo) >= Scalar(0)) lo *= Scalar(0.5);
    }
    Scalar x = hi;
    const Scalar eps = std::numeric_limits<Scalar>::epsilon();
    for (int it = 0; it < 200; ++it) {
      const Scalar fx = fn(x);
      if (fx == Scalar(0)) return x;
      if (fx > Scalar(0)) hi = x; else lo = x;
      Scalar next = x - fx / dfn(x);
      if (!(next > lo && next < hi)) next = lo + (hi - lo) / Scalar(2);
      if (std::abs(next - x) <= Scalar(2) * eps * x) return next;
      x = next;
    }
    return x;
  }

  Eigen::Matrix<Scalar, Eigen::Dynamic, 4> own_;  // ytil, C, D, weights when owning
  const Scalar* y_{nullptr};
  const Scalar* c_{nullptr};
  const Scalar* d_{nullptr};
  const Scalar* w_{nullptr};
  Index n_{0};
  Scalar rhs_{0};
  BetaParams<Scalar> p_;
  bool exact_inner_{false};
};

template <typename Scalar>
struct LinearBlockResult {
  Vector<Scalar> entries;
  Scalar mu{0};
  int newton_iters{0};
};

/// Constrained minimizer of the majorizer over one block, from gathered
/// block values.
template <typename Scalar>
LinearBlockResult<Scalar> solve_linear_block(const LinearBlock<Scalar>& block, const RootOptions<Scalar>& ropts) {
  auto prob = make_root_problem<Scalar>(std::cref(block), RootShape::IncreasingConvexLeftOfPole, block.pole(), ropts);
  const auto root = solve_increasing_convex(prob);
  return {block.entries(root.root), root.root, root.iters};
}

template <typename Scalar>
LinearBlock<Scalar> gather_linear_block(const Matrix<Scalar>& Xt, const MajorizerCoefficients<Scalar>& coeff,
                                        const LinearConstraint<Scalar>& lc, const BetaParams<Scalar>& p) {
  LinearBlock<Scalar> block(p);
  block.gather(Xt, coeff, lc);
  return block;
}

/// Closed-form constrained update of the entries of one linear constraint.
template <typename Scalar>
LinearBlockResult<Scalar> update_linear_constrained(const Matrix<Scalar>& Xt,
                                                    const MajorizerCoefficients<Scalar>& coeff,
                                                    const LinearConstraint<Scalar>& lc,
                                                    const BetaParams<Scalar>& p,
                                                    const RootOptions<Scalar>& ropts = {}) {
  return solve_linear_block(gather_linear_block(Xt, coeff, lc, p), ropts);
}

// ---------------------------------------------------------------------------
// Min-volume KL (beta = 1), column-simplex W

/// Gram inverse Y = (W^T W + delta I)^-1 and its nonnegative split.
template <typename Scalar>
struct MinVolState {
  Matrix<Scalar> Y;
  Matrix<Scalar> Yplus;
  Matrix<Scalar> Yminus;
  Scalar lambda{0};
  Scalar delta{1};
};

template <typename Scalar>
MinVolState<Scalar> minvol_state(const Matrix<Scalar>& Wt, Scalar lambda, Scalar delta) {
  if (!(lambda >= Scalar(0))) throw ValidationError("min-vol: lambda must be nonnegative");
  if (!(delta > Scalar(0))) throw ValidationError("min-vol: delta must be positive");
  const Index K = Wt.cols();
  Matrix<Scalar> gram = Wt.transpose() * Wt;
  gram.diagonal().array() += delta;
  Eigen::LLT<Matrix<Scalar>> llt(gram);
  if (llt.info() != Eigen::Success) throw DomainError("min-vol: W^T W + delta I is not positive definite");
  MinVolState<Scalar> s;
  s.Y = llt.solve(Matrix<Scalar>::Identity(K, K));
  s.Y = (Scalar(0.5) * (s.Y + s.Y.transpose())).eval();
  s.Yplus = s.Y.cwiseMax(Scalar(0));
  s.Yminus = (-s.Y).cwiseMax(Scalar(0));
  s.lambda = lambda;
  s.delta = delta;
  return s;
}

/// C = e H^T - 4 lambda W Y-, D = 4 lambda W (Y+ + Y-), S = 2 D ⊙ M with
/// M = (V ⊘ WH) H^T.
template <typename Scalar>
MajorizerCoefficients<Scalar> minvol_coefficients(const Matrix<Scalar>& V, const Matrix<Scalar>& Wt,
                                                  const Matrix<Scalar>& H, const MinVolState<Scalar>& st) {
  const Matrix<Scalar> WH = Wt * H;
  MajorizerCoefficients<Scalar> c;
  c.M.noalias() = V.cwiseQuotient(WH) * H.transpose();
  c.C = H.rowwise().sum().transpose().replicate(Wt.rows(), 1);
  const Scalar four_l = Scalar(4) * st.lambda;
  if (st.lambda > Scalar(0)) {
    c.C.noalias() -= four_l * (Wt * st.Yminus);
    c.D.noalias() = four_l * (Wt * (st.Yplus + st.Yminus));
  } else {
    c.D = Matrix<Scalar>::Zero(Wt.rows(), Wt.cols());
  }
  c.S = Scalar(2) * c.D.cwiseProduct(c.M);
  return c;
}

namespace detail {

// Positive root x of (D/2) x^2 + A x - M = 0, i.e. (sqrt(A^2 + S) - A) / D with
// S = 2 D M. The conjugate form 2M / (sqrt(A^2+S) + A) is used for A >= 0.
template <typename Scalar>
Scalar quadratic_ratio(Scalar A, Scalar S, Scalar D, Scalar M, Scalar& root) {
  root = std::sqrt(A * A + S);
  if (A >= Scalar(0)) {
    const Scalar den = root + A;
    if (den == Scalar(0)) return M == Scalar(0) ? Scalar(0) : std::numeric_limits<Scalar>::infinity();
    return Scalar(2) * M / den;
  }
  if (D == Scalar(0)) return std::numeric_limits<Scalar>::infinity();
  return (root - A) / D;
}

// M entry, recovered from S = 2 D M when only S and D were supplied.
template <typename Scalar>
Scalar minvol_m(const MajorizerCoefficients<Scalar>& c, Index f, Index k) {
  if (c.M.size() != 0) return c.M(f, k);
  return c.D(f, k) > Scalar(0) ? c.S(f, k) / (Scalar(2) * c.D(f, k)) : Scalar(0);
}

}  // namespace detail

/// W = Wt ⊙ (sqrt((C + e mu^T)^2 + S) - (C + e mu^T)) ⊘ D, in stable form.
template <typename Scalar>
Matrix<Scalar> update_minvol_W(const Matrix<Scalar>& Wt, const MajorizerCoefficients<Scalar>& coeff,
                               const Vector<Scalar>& mu) {
  Matrix<Scalar> W(Wt.rows(), Wt.cols());
  for (Index k = 0; k < Wt.cols(); ++k) {
    for (Index f = 0; f < Wt.rows(); ++f) {
      Scalar root;
      W(f, k) = Wt(f, k) * detail::quadratic_ratio(coeff.C(f, k) + mu(k), coeff.S(f, k), coeff.D(f, k),
                                                   detail::minvol_m(coeff, f, k), root);
    }
  }
  return W;
}

template <typename Scalar>
struct MinVolMultipliers {
  Vector<Scalar> mu;
  int newton_iters{0};
};

/// One scalar root per column so that every updated column sums to one.
///
/// Each column sum is decreasing and convex in mu_k; the solver works on
/// nu = -mu where it is increasing and convex.
template <typename Scalar>
MinVolMultipliers<Scalar> solve_minvol_multipliers(const Matrix<Scalar>& Wt, const MajorizerCoefficients<Scalar>& coeff,
                                                   const RootOptions<Scalar>& ropts = {}) {
  const Index F = Wt.rows();
  const Index K = Wt.cols();
  MinVolMultipliers<Scalar> out;
  out.mu.resize(K);
  for (Index k = 0; k < K; ++k) {
    // Entries without curvature (D = 0) have a pole at A = 0, i.e. nu = C.
    Scalar pole = std::numeric_limits<Scalar>::infinity();
    for (Index f = 0; f < F; ++f) {
      if (coeff.D(f, k) == Scalar(0) && detail::minvol_m(coeff, f, k) > Scalar(0) && Wt(f, k) > Scalar(0)) {
        pole = std::min(pole, coeff.C(f, k));
      }
    }
    auto eval = [&, k](Scalar nu) {
      Scalar r(-1), dr(0);
      for (Index f = 0; f < F; ++f) {
        Scalar root;
        const Scalar x = detail::quadratic_ratio(coeff.C(f, k) - nu, coeff.S(f, k), coeff.D(f, k),
                                                 detail::minvol_m(coeff, f, k), root);
        const Scalar w = Wt(f, k) * x;
        r += w;
        if (x > Scalar(0)) dr += w / root;
      }
      return RootEval<Scalar>{r, dr};
    };
    auto prob = make_root_problem<Scalar>(eval, RootShape::IncreasingConvexLeftOfPole, pole, ropts);
    try {
      const auto res = solve_increasing_convex(prob);
      out.mu(k) = -res.root;
      out.newton_iters += res.iters;
    } catch (const RootError& e) {
      throw RootError(e.kind(), std::string(e.what()) + " (W column " + std::to_string(k) + ")");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sparse H and sphere-constrained W (beta = 1)

/// H = Ht ⊙ (C ⊘ (D + lambda e^T))^gamma(beta); row k of the denominator is
/// shifted by lambda_k.
template <typename Scalar>
Matrix<Scalar> update_sparse_H(const Matrix<Scalar>& Ht, const MajorizerCoefficients<Scalar>& coeff,
                               const Vector<Scalar>& lambda, const BetaParams<Scalar>& p) {
  if (p.beta > Scalar(1)) throw ValidationError("update_sparse_H: the l1-penalized update requires beta <= 1");
  if (lambda.size() != Ht.rows()) throw ValidationError("update_sparse_H: lambda length must equal K");
  if ((lambda.array() < Scalar(0)).any()) throw ValidationError("update_sparse_H: lambda must be nonnegative");
  MajorizerCoefficients<Scalar> shifted{coeff.C, coeff.D.colwise() + lambda, {}, {}};
  return update_unconstrained(Ht, shifted, p);
}

template <typename Scalar>
struct SphereColumnResult {
  Vector<Scalar> column;
  Scalar mu{0};
  int newton_iters{0};
  bool fallback{false};
  /// Factor applied to the plain multiplicative column on the fallback path;
  /// the matching row of H must be divided by it.
  Scalar scale{1};
};

/// Minimizer of the KL majorizer on the sphere ||w||^2 = rho for one column:
/// w = 2 S ⊘ (sqrt(C^2 + 8 mu S) + C) with mu > 0 the root of ||w(mu)||^2 = rho.
///
/// When no positive root exists (||S ⊘ C||^2 <= rho) the column falls back to
/// the plain multiplicative step rescaled onto the sphere.
template <typename Scalar>
SphereColumnResult<Scalar> solve_sphere_column(const Vector<Scalar>& C, const Vector<Scalar>& S, Scalar rho,
                                               const RootOptions<Scalar>& ropts = {}) {
  if (!(rho > Scalar(0))) throw ValidationError("sphere constraint: rho must be positive");
  const Index F = C.size();
  auto column_at = [&](Scalar mu, Index f, Scalar& R) {
    R = std::sqrt(C(f) * C(f) + Scalar(8) * mu * S(f));
    return Scalar(2) * S(f) / (R + C(f));
  };
  auto eval = [&](Scalar mu) {
    Scalar r = -rho, dr(0);
    for (Index f = 0; f < F; ++f) {
      Scalar R;
      const Scalar w = column_at(mu, f, R);
      r += w * w;
      if (w > Scalar(0)) dr -= Scalar(4) * w * w * w / R;
    }
    return RootEval<Scalar>{r, dr};
  };
  const Scalar probe = Scalar(1e-12) * (Scalar(1) + C.cwiseAbs().maxCoeff());
  auto prob = make_root_problem<Scalar>(eval, RootShape::DecreasingConvexOnPositives, probe, ropts);
  SphereColumnResult<Scalar> out;
  out.column.resize(F);
  if (auto res = solve_decreasing_convex_positive(prob)) {
    Scalar R;
    for (Index f = 0; f < F; ++f) out.column(f) = column_at(res->root, f, R);
    out.mu = res->root;
    out.newton_iters = res->iters;
    return out;
  }
  out.fallback = true;
  out.column = S.cwiseQuotient(C);
  const Scalar norm = out.column.norm();
  if (!(norm > Scalar(0))) throw DomainError("sphere fallback: multiplicative column vanished");
  out.scale = std::sqrt(rho) / norm;
  out.column *= out.scale;
  return out;
}

/// Sphere-constrained update of column sc.column of W at beta = 1.
template <typename Scalar>
SphereColumnResult<Scalar> update_sphere_W(const Matrix<Scalar>& Wt, const Matrix<Scalar>& V, const Matrix<Scalar>& H,
                                           const SphereConstraint<Scalar>& sc,
                                           const RootOptions<Scalar>& ropts = {}) {
  const Index k = sc.column;
  const Matrix<Scalar> WH = Wt * H;
  const Vector<Scalar> ratio = V.cwiseQuotient(WH) * H.row(k).transpose();
  const Vector<Scalar> C = Vector<Scalar>::Constant(Wt.rows(), H.row(k).sum());
  const Vector<Scalar> S = Wt.col(k).cwiseProduct(ratio);
  return solve_sphere_column(C, S, sc.radius_sq, ropts);
}

// ---------------------------------------------------------------------------
// Whole-factor update

template <typename Scalar>
struct FactorUpdateReport {
  int newton_iters{0};
  double newton_seconds{0};
  std::vector<Scalar> multipliers;  // linear constraints first, then spheres
  /// (column, scale) for every sphere column that took the fallback path.
  std::vector<std::pair<Index, Scalar>> fallbacks;
};

/// Updates every entry of X once: constrained blocks through their
/// multiplier, free entries through the plain multiplicative step. Sphere
/// constraints use the beta = 1 coefficients (C = coeff.D, S = X ⊙ coeff.C).
/// Entries are floored at floor_value afterwards.
///
/// If linear_mu is given it holds one multiplier per linear constraint: the
/// values on entry (when sized to match) are the first Newton probes, and the
/// new roots are stored back. Iterating drivers pass the same vector each
/// time, so each solve starts next to its previous root.
template <typename Scalar>
FactorUpdateReport<Scalar> update_factor(Matrix<Scalar>& X, const MajorizerCoefficients<Scalar>& coeff,
                                         const ConstraintSet<Scalar>& cs, const BetaParams<Scalar>& p,
                                         const RootOptions<Scalar>& ropts, Scalar floor_value,
                                         bool record_multipliers = false,
                                         std::vector<Scalar>* linear_mu = nullptr) {
  FactorUpdateReport<Scalar> rep;
  Matrix<Scalar> next = update_unconstrained(X, coeff, p);
  if (!cs.empty()) {
    using clock = std::chrono::steady_clock;
    double newton_s = 0;
    const std::size_t L = cs.linear.size();
    if (record_multipliers) rep.multipliers.reserve(L + cs.spheres.size());
    const bool warm = linear_mu && linear_mu->size() == L;
    if (linear_mu && !warm) linear_mu->assign(L, Scalar(0));
    // Linear blocks go in chunks: copy the entry data out, solve every
    // multiplier (the timed part), then write the new entries.
    constexpr std::size_t kChunk = 256;
    std::vector<Index> offset;
    std::vector<Scalar> buf;
    std::vector<RootResult<Scalar>> roots;
    for (std::size_t j0 = 0; j0 < L; j0 += kChunk) {
      const std::size_t j1 = std::min(L, j0 + kChunk);
      offset.assign(1, 0);
      for (std::size_t j = j0; j < j1; ++j) {
        const auto& lc = cs.linear[j];
        const Index Q = static_cast<Index>(lc.set.size());
        if (lc.weights.size() != Q || Q == 0) throw ValidationError("linear constraint: inconsistent block sizes");
        offset.push_back(offset.back() + Q);
      }
      const Index total = offset.back();
      buf.resize(static_cast<std::size_t>(4 * total));
      Scalar* yb = buf.data();
      Scalar* cb = yb + total;
      Scalar* db = yb + 2 * total;
      Scalar* wb = yb + 3 * total;
      auto view = [&](std::size_t j) {
        const Index o = offset[j - j0];
        return LinearBlock<Scalar>::view(yb + o, cb + o, db + o, wb + o, offset[j - j0 + 1] - o, cs.linear[j].rhs, p);
      };
      for (std::size_t j = j0; j < j1; ++j) {
        const Index o = offset[j - j0];
        LinearBlock<Scalar>::gather_into(X, coeff, cs.linear[j], yb + o, cb + o, db + o, wb + o);
      }

      roots.resize(j1 - j0);
      const auto t0 = clock::now();
      for (std::size_t j = j0; j < j1; ++j) {
        const auto block = view(j);
        try {
          auto prob = make_root_problem<Scalar>(std::cref(block), RootShape::IncreasingConvexLeftOfPole, block.pole(), ropts);
          if (warm) prob.start = (*linear_mu)[j];
          roots[j - j0] = solve_increasing_convex(prob);
        } catch (const RootError& e) {
          throw RootError(e.kind(), std::string(e.what()) + " (linear constraint " + std::to_string(j) + ")");
        }
      }
      newton_s += std::chrono::duration<double>(clock::now() - t0).count();

      for (std::size_t j = j0; j < j1; ++j) {
        const auto& lc = cs.linear[j];
        const auto block = view(j);
        const auto& root = roots[j - j0];
        for (std::size_t q = 0; q < lc.set.size(); ++q) {
          next(lc.set[q].row, lc.set[q].col) = block.entry(static_cast<Index>(q), root.root);
        }
        rep.newton_iters += root.iters;
        if (linear_mu) (*linear_mu)[j] = root.root;
        if (record_multipliers) rep.multipliers.push_back(root.root);
      }
    }
    const auto t0 = clock::now();
    for (const auto& sc : cs.spheres) {
      if (p.regime != Regime::KullbackLeibler) {
        throw ValidationError("sphere constraints are only supported for beta = 1");
      }
      const Vector<Scalar> C = coeff.D.col(sc.column);
      const Vector<Scalar> S = X.col(sc.column).cwiseProduct(coeff.C.col(sc.column));
      auto res = solve_sphere_column(C, S, sc.radius_sq, ropts);
      next.col(sc.column) = res.column;
      rep.newton_iters += res.newton_iters;
      if (res.fallback) rep.fallbacks.emplace_back(sc.column, res.scale);
      if (record_multipliers) rep.multipliers.push_back(res.mu);
    }
    rep.newton_seconds = newton_s + std::chrono::duration<double>(clock::now() - t0).count();
  }
  X = next.cwiseMax(floor_value);
  return rep;
}

}  // namespace betanmf
