#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "betanmf/types.hpp"

// Brute-force reference solvers. Slow by design; used by the tests and by
// the CLI's --verify mode, never by the fitting drivers.

namespace betanmf {

template <typename Scalar>
struct OracleConfig {
  int grid_points{2001};
  int refine_rounds{6};
  /// Feasible segment parameters are kept in [domain_pad, 1 - domain_pad].
  Scalar domain_pad{0};
};

template <typename Scalar>
using EntryFunction = std::function<Scalar(Scalar)>;

/// Separable majorizer of one entry as a function of its new value y, up to
/// an additive constant, for the current value ytil and coefficients C, D.
/// Its unconstrained minimizer is ytil (C/D)^gamma(beta).
template <typename Scalar>
EntryFunction<Scalar> majorizer_entry(Scalar ytil, Scalar C, Scalar D, const BetaParams<Scalar>& p) {
  const Scalar b = p.beta;
  switch (p.regime) {
    case Regime::BelowOne:
    case Regime::ItakuraSaito:
      return [=](Scalar y) {
        const Scalar r = y / ytil;
        return ytil * (C * std::pow(r, b - Scalar(1)) / (Scalar(1) - b) + D * r);
      };
    case Regime::KullbackLeibler:
      return [=](Scalar y) {
        const Scalar r = y / ytil;
        return ytil * (-C * std::log(r) + D * r);
      };
    case Regime::BetweenOneAndTwo:
      return [=](Scalar y) {
        const Scalar r = y / ytil;
        return ytil * (D * std::pow(r, b) / b - C * std::pow(r, b - Scalar(1)) / (b - Scalar(1)));
      };
    case Regime::AtOrAboveTwo:
      return [=](Scalar y) {
        const Scalar r = y / ytil;
        return ytil * (D * std::pow(r, b) / b - C * r);
      };
  }
  return {};
}

namespace detail {

// Golden-section minimum of a unimodal f on [a, b].
template <typename Scalar, typename Fn>
Scalar golden_section(const Fn& f, Scalar a, Scalar b, Scalar xtol) {
  const Scalar invphi = (std::sqrt(Scalar(5)) - Scalar(1)) / Scalar(2);
  Scalar c = b - invphi * (b - a);
  Scalar d = a + invphi * (b - a);
  Scalar fc = f(c);
  Scalar fd = f(d);
  for (int it = 0; it < 400 && (b - a) > xtol; ++it) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = f(d);
    }
  }
  return fc <= fd ? c : d;
}

}  // namespace detail

/// Minimizes sum_q g_q(y_q) subject to weights^T y = rhs, y >= 0, by search
/// over the feasible set (Q = 2: a segment, Q = 3: a triangle). Each g_q must
/// be convex on (0, inf); +inf or NaN values at the boundary are tolerated.
template <typename Scalar>
Vector<Scalar> minimize_majorizer_on_simplex_slice(const std::vector<EntryFunction<Scalar>>& g,
                                                   const Vector<Scalar>& weights, Scalar rhs,
                                                   const OracleConfig<Scalar>& cfg = {}) {
  const std::size_t Q = g.size();
  if (Q < 2 || Q > 3) throw ValidationError("oracle: block size must be 2 or 3");
  if (weights.size() != static_cast<Index>(Q)) throw ValidationError("oracle: one weight per entry expected");
  if ((weights.array() <= Scalar(0)).any() || !(rhs > Scalar(0))) {
    throw ValidationError("oracle: weights and rhs must be positive");
  }
  if (cfg.grid_points < 3) throw ValidationError("oracle: grid_points must be at least 3");
  const Scalar inf = std::numeric_limits<Scalar>::infinity();
  const Scalar xtol = Scalar(1e-14);
  const Scalar lo = cfg.domain_pad;
  const Scalar hi = Scalar(1) - cfg.domain_pad;

  // Barycentric point s (sum 1) mapped onto the slice.
  auto value = [&](const Scalar* s) {
    Scalar total(0);
    for (std::size_t q = 0; q < Q; ++q) {
      const Scalar y = s[q] * rhs / weights(static_cast<Index>(q));
      const Scalar v = y > Scalar(0) ? g[q](y) : inf;
      if (!std::isfinite(v)) return inf;
      total += v;
    }
    return total;
  };
  auto to_y = [&](const Scalar* s) {
    Vector<Scalar> y(static_cast<Index>(Q));
    for (std::size_t q = 0; q < Q; ++q) y(static_cast<Index>(q)) = s[q] * rhs / weights(static_cast<Index>(q));
    return y;
  };

  if (Q == 2) {
    auto f = [&](Scalar t) {
      const Scalar s[2] = {t, Scalar(1) - t};
      return value(s);
    };
    const Scalar t = detail::golden_section(f, lo, hi, xtol);
    const Scalar s[2] = {t, Scalar(1) - t};
    return to_y(s);
  }

  // Q = 3: s = (a, (1-a) u, (1-a)(1-u)). The partial minimum over u of a
  // convex function is convex in a, so grid refinement on a is safe.
  auto inner = [&](Scalar a, Scalar& ubest) {
    auto f = [&](Scalar u) {
      const Scalar s[3] = {a, (Scalar(1) - a) * u, (Scalar(1) - a) * (Scalar(1) - u)};
      return value(s);
    };
    ubest = detail::golden_section(f, lo, hi, xtol);
    return f(ubest);
  };
  Scalar a_lo = lo, a_hi = hi;
  Scalar best_a = Scalar(0.5), best_u = Scalar(0.5), best_v = inf;
  for (int round = 0; round < std::max(1, cfg.refine_rounds); ++round) {
    const int n = cfg.grid_points;
    const Scalar h = (a_hi - a_lo) / Scalar(n - 1);
    int best_i = 0;
    for (int i = 0; i < n; ++i) {
      const Scalar a = a_lo + h * Scalar(i);
      Scalar u;
      const Scalar v = inner(a, u);
      if (v < best_v) {
        best_v = v;
        best_a = a;
        best_u = u;
        best_i = i;
      }
    }
    const Scalar center = a_lo + h * Scalar(best_i);
    a_lo = std::max(lo, center - h);
    a_hi = std::min(hi, center + h);
    if (a_hi - a_lo <= xtol) break;
  }
  auto outer = [&](Scalar a) {
    Scalar u;
    return inner(a, u);
  };
  const Scalar a = detail::golden_section(outer, a_lo, a_hi, xtol);
  Scalar u;
  if (inner(a, u) <= best_v) {
    best_a = a;
    best_u = u;
  }
  const Scalar s[3] = {best_a, (Scalar(1) - best_a) * best_u, (Scalar(1) - best_a) * (Scalar(1) - best_u)};
  return to_y(s);
}

enum class ScanSpacing {
  Linear,
  /// Linear grid plus points accumulating geometrically at the upper end.
  TowardUpper
};

/// Number of strict sign changes of r over `samples` interior points of
/// (lo, hi). Exact zeros are skipped.
template <typename Scalar>
int scan_root_uniqueness(const std::function<Scalar(Scalar)>& r, Scalar lo, Scalar hi, int samples,
                         ScanSpacing spacing = ScanSpacing::Linear) {
  if (samples < 2 || !(hi > lo)) return 0;
  std::vector<Scalar> xs;
  xs.reserve(static_cast<std::size_t>(2 * samples));
  for (int i = 1; i <= samples; ++i) xs.push_back(lo + (hi - lo) * Scalar(i) / Scalar(samples + 1));
  if (spacing == ScanSpacing::TowardUpper) {
    const Scalar width = hi - lo;
    for (int i = 0; i < samples; ++i) {
      const Scalar e = Scalar(-12) * Scalar(i) / Scalar(samples - 1);
      xs.push_back(hi - width * std::pow(Scalar(10), e));
    }
    std::sort(xs.begin(), xs.end());
  }
  int changes = 0;
  int last_sign = 0;
  for (const Scalar x : xs) {
    if (!(x > lo && x < hi)) continue;
    const Scalar v = r(x);
    if (v == Scalar(0) || std::isnan(v)) continue;
    const int sgn = v > Scalar(0) ? 1 : -1;
    if (last_sign != 0 && sgn != last_sign) ++changes;
    last_sign = sgn;
  }
  return changes;
}

}  // namespace betanmf
