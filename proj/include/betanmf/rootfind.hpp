#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "betanmf/types.hpp"

namespace betanmf {

/// Value and slope of a scalar root function at one point.
template <typename Scalar>
struct RootEval {
  Scalar value;
  Scalar slope;
  /// r'' at the same point, or NaN when not supplied. Only used where r'' is
  /// known to be nondecreasing (increasing convex case, r''' >= 0).
  Scalar curvature{std::numeric_limits<Scalar>::quiet_NaN()};
};

enum class RootShape {
  IncreasingConvexLeftOfPole,  // linear constraints: root in (-inf, t)
  DecreasingConvexOnPositives  // sphere constraints: root in (0, +inf)
};

template <typename Scalar>
struct RootOptions {
  /// Convergence is declared once |r| <= tol_residual; the returned root is
  /// one further (unevaluated) Newton step, so its residual is usually far
  /// below the tolerance.
  Scalar tol_residual{1e-6};
  int max_iters{200};
  bool record_iterates{false};
};

template <typename Scalar>
struct RootResult {
  Scalar root{0};
  Scalar residual{0};
  int iters{0};
  std::vector<Scalar> iterates;  // Newton iterates, when requested
};

class RootError : public std::runtime_error {
 public:
  enum class Kind { NoSignChange, MaxIters, NonFinite };
  RootError(Kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Scalar root problem. `eval` returns RootEval{r(mu), r'(mu)}.
template <typename Scalar, typename Fn>
struct RootProblem {
  Fn eval;
  RootShape shape{RootShape::IncreasingConvexLeftOfPole};
  /// Pole / domain bound t for the increasing case (may be +inf).
  Scalar upper_bound_t{std::numeric_limits<Scalar>::infinity()};
  /// Left probe point for the decreasing case.
  Scalar probe{Scalar(1e-12)};
  /// First probe for the increasing case; ignored unless it lies below t.
  Scalar start{0};
  RootOptions<Scalar> options{};
};

template <typename Scalar, typename Fn>
RootProblem<Scalar, Fn> make_root_problem(Fn eval, RootShape shape, Scalar bound_or_probe,
                                          const RootOptions<Scalar>& opts = {}) {
  RootProblem<Scalar, Fn> p{std::move(eval), shape};
  if (shape == RootShape::IncreasingConvexLeftOfPole) {
    p.upper_bound_t = bound_or_probe;
  } else {
    p.probe = bound_or_probe;
  }
  p.options = opts;
  return p;
}

namespace detail {

// Newton iteration inside the bracket [lo, hi] of an increasing function with
// r(lo) < 0 < r(hi). Starts at x0, which must be one of the bracket ends.
// Steps leaving the open bracket are replaced by bisection, so the bracket
// never loses its sign change.
template <typename Scalar, typename Fn>
RootResult<Scalar> bracketed_newton(const Fn& eval, Scalar lo, Scalar hi, Scalar x0, RootEval<Scalar> e0,
                                    int used, const RootOptions<Scalar>& opts) {
  const Scalar eps = std::numeric_limits<Scalar>::epsilon();
  RootResult<Scalar> res;
  Scalar x = x0;
  RootEval<Scalar> e = e0;
  Scalar best_x = x;
  Scalar best_r = std::abs(e.value);
  int iters = used;
  if (opts.record_iterates) res.iterates.push_back(x);

  while (e.value != Scalar(0)) {
    if (best_r <= opts.tol_residual) {
      // Converged. Convergence is quadratic here, so one more Newton step from
      // the current point shrinks the residual to rounding level; it is taken
      // without evaluating r again. best_r stays an upper bound.
      if (std::abs(e.value) == best_r) {
        const Scalar next = x - e.value / e.slope;
        if (std::isfinite(next) && next >= lo && next <= hi) {
          best_x = next;
          if (opts.record_iterates) res.iterates.push_back(next);
        }
      }
      break;
    }
    if (e.value > Scalar(0) && e.curvature >= Scalar(0)) {
      // Right of the root with r'' nondecreasing: the Newton step lands at a
      // point where 0 <= r <= r''(x) d^2 / 2, so it needs no evaluation when
      // that bound already meets the tolerance.
      const Scalar d = e.value / e.slope;
      const Scalar next = x - d;
      if (e.curvature * d * d / Scalar(2) <= opts.tol_residual && std::isfinite(next) && next >= lo) {
        best_x = next;
        best_r = e.curvature * d * d / Scalar(2);
        if (opts.record_iterates) res.iterates.push_back(next);
        break;
      }
    }
    if (iters >= opts.max_iters) {
      throw RootError(RootError::Kind::MaxIters,
                      "root solver: no convergence after " + std::to_string(iters) +
                          " iterations (|r| = " + std::to_string(best_r) + ")");
    }
    Scalar next = x - e.value / e.slope;
    const bool lo_finite = std::isfinite(lo);
    const bool hi_finite = std::isfinite(hi);
    const bool inside = std::isfinite(next) && (!lo_finite || next > lo) && (!hi_finite || next < hi);
    if (!inside) {
      if (lo_finite && hi_finite) {
        next = lo + (hi - lo) / Scalar(2);
      } else {
        // An unbounded side only arises on the convex side of the root, where
        // the Newton step cannot leave the bracket except through rounding.
        break;
      }
    }
    ++iters;
    x = next;
    e = eval(x);
    if (!std::isfinite(e.value) || !std::isfinite(e.slope)) {
      throw RootError(RootError::Kind::NonFinite, "root solver: non-finite function value");
    }
    if (opts.record_iterates) res.iterates.push_back(x);
    if (e.value > Scalar(0)) {
      hi = x;
    } else {
      lo = x;
    }
    const Scalar a = std::abs(e.value);
    if (a < best_r) {
      best_r = a;
      best_x = x;
    }
    if (lo_finite && hi_finite && std::abs(hi - lo) <= Scalar(4) * eps * (std::abs(lo) + std::abs(hi))) break;
  }
  if (e.value == Scalar(0)) {
    best_x = x;
    best_r = Scalar(0);
  }
  if (best_r > opts.tol_residual) {
    throw RootError(RootError::Kind::MaxIters,
                    "root solver: stalled with |r| = " + std::to_string(best_r));
  }
  res.root = best_x;
  res.residual = best_r;
  res.iters = iters;
  return res;
}

}  // namespace detail

/// Root of a strictly increasing, strictly convex r on (-inf, t).
///
/// Probes mu = start first (0 by default, min(0, t - 1) if start >= t). If
/// r > 0 there Newton decreases monotonically to the root. Otherwise one
/// Newton step from the left lands right of the root (convexity); if that
/// step overshoots t, points are pushed geometrically toward t
/// (t - (t - start)/2^m, or 2^m when t is infinite) until r turns positive.
template <typename Scalar, typename Fn>
RootResult<Scalar> solve_increasing_convex(const RootProblem<Scalar, Fn>& prob) {
  const auto& opts = prob.options;
  const Scalar t = prob.upper_bound_t;
  const Scalar inf = std::numeric_limits<Scalar>::infinity();
  const bool finite_t = std::isfinite(t);
  const Scalar base = !finite_t || prob.start < t ? prob.start : std::min(Scalar(0), t - Scalar(1));

  Scalar lo = -inf;
  Scalar x = base;
  RootEval<Scalar> e = prob.eval(x);
  int used = 1;
  if (!std::isfinite(e.value)) throw RootError(RootError::Kind::NonFinite, "root solver: r(start) not finite");
  if (e.value <= Scalar(0)) {
    if (e.value == Scalar(0)) return RootResult<Scalar>{x, Scalar(0), used, {}};
    lo = x;
    bool found = false;
    const Scalar step = x - e.value / e.slope;
    if (std::isfinite(step) && step > x && (!finite_t || step < t)) {
      const RootEval<Scalar> es = prob.eval(step);
      ++used;
      if (es.value == Scalar(0)) return RootResult<Scalar>{step, Scalar(0), used, {}};
      if (es.value > Scalar(0) && std::isfinite(es.value)) {
        x = step;
        e = es;
        found = true;
      } else if (std::isfinite(es.value)) {
        lo = step;
      }
    }
    for (int m = 1; !found && m <= 1100 && used < opts.max_iters; ++m) {
      const Scalar cand = finite_t ? t - (t - base) / std::ldexp(Scalar(1), m) : std::ldexp(Scalar(1), m);
      if (finite_t && !(cand < t)) break;
      if (cand <= lo) continue;
      e = prob.eval(cand);
      ++used;
      x = cand;
      if (e.value > Scalar(0) && std::isfinite(e.value)) {
        found = true;
        break;
      }
      if (e.value == Scalar(0)) return RootResult<Scalar>{x, Scalar(0), used, {}};
      lo = cand;
    }
    if (!found) {
      throw RootError(RootError::Kind::NoSignChange, "root solver: r never becomes positive below the pole");
    }
  }
  return detail::bracketed_newton(prob.eval, lo, x, x, e, used, opts);
}

/// Root of a strictly decreasing convex r on (0, +inf), or nullopt when
/// r(probe) <= 0, i.e. no positive root exists to the right of the probe.
///
/// Brackets the root by doubling, then runs Newton from the last point with
/// r > 0; for a decreasing convex function the iterates increase
/// monotonically toward the root.
template <typename Scalar, typename Fn>
std::optional<RootResult<Scalar>> solve_decreasing_convex_positive(const RootProblem<Scalar, Fn>& prob) {
  const auto& opts = prob.options;
  Scalar lo = prob.probe;
  RootEval<Scalar> elo = prob.eval(lo);
  int used = 1;
  if (!std::isfinite(elo.value)) throw RootError(RootError::Kind::NonFinite, "root solver: r(probe) not finite");
  if (elo.value <= Scalar(0)) return std::nullopt;

  Scalar hi = std::max(Scalar(1), Scalar(2) * lo);
  RootEval<Scalar> ehi = prob.eval(hi);
  ++used;
  while (ehi.value > Scalar(0)) {
    if (used >= opts.max_iters) {
      throw RootError(RootError::Kind::NoSignChange, "root solver: r stays positive while doubling");
    }
    lo = hi;
    elo = ehi;
    hi *= Scalar(2);
    ehi = prob.eval(hi);
    ++used;
  }
  if (ehi.value == Scalar(0)) return RootResult<Scalar>{hi, Scalar(0), used, {}};
  // Work on -r so the bracketed iteration sees an increasing function.
  auto neg = [&prob](Scalar mu) {
    const auto e = prob.eval(mu);
    return RootEval<Scalar>{-e.value, -e.slope};
  };
  return detail::bracketed_newton(neg, lo, hi, lo, RootEval<Scalar>{-elo.value, -elo.slope}, used, opts);
}

}  // namespace betanmf
