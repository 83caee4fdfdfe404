#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "betanmf/types.hpp"

namespace betanmf {

namespace detail {

inline std::string fmt_entry(Index r, Index c) {
  return "(" + std::to_string(r) + "," + std::to_string(c) + ")";
}

template <typename Scalar>
void require_positive_pair(Scalar x, Scalar y, const char* what) {
  if (!(x > Scalar(0)) || !(y > Scalar(0))) {
    throw DomainError(std::string(what) + ": requires x > 0 and y > 0");
  }
}

}  // namespace detail

/// Scalar beta-divergence d_beta(x|y).
///
/// Zero data is admissible for beta > 0 (with 0 log 0 = 0 at beta = 1);
/// for beta <= 0 both arguments must be strictly positive.
template <typename Scalar>
Scalar d_beta(Scalar x, Scalar y, const BetaParams<Scalar>& p) {
  using std::log;
  using std::pow;
  if (!(y > Scalar(0))) throw DomainError("d_beta: y must be positive");
  if (x < Scalar(0)) throw DomainError("d_beta: x must be nonnegative");
  if (x == Scalar(0) && p.beta <= Scalar(0)) {
    throw DomainError("d_beta: x = 0 is outside the domain for beta <= 0");
  }
  Scalar d;
  switch (p.regime) {
    case Regime::KullbackLeibler:
      d = (x == Scalar(0)) ? y : x * log(x / y) - x + y;
      break;
    case Regime::ItakuraSaito:
      d = x / y - log(x / y) - Scalar(1);
      break;
    default: {
      const Scalar b = p.beta;
      if (b == Scalar(2)) {
        d = Scalar(0.5) * (x - y) * (x - y);
      } else {
        d = (pow(x, b) + (b - Scalar(1)) * pow(y, b) - b * x * pow(y, b - Scalar(1))) /
            (b * (b - Scalar(1)));
      }
    }
  }
  return std::max(d, Scalar(0));
}

/// Convex part of the convex-concave split of d_beta, as a function of y.
template <typename Scalar>
Scalar split_convex(Scalar x, Scalar y, const BetaParams<Scalar>& p) {
  using std::log;
  using std::pow;
  detail::require_positive_pair(x, y, "split_convex");
  const Scalar b = p.beta;
  switch (p.regime) {
    case Regime::BelowOne:
      return x * pow(y, b - Scalar(1)) / (Scalar(1) - b);
    case Regime::ItakuraSaito:
      return x / y;
    case Regime::KullbackLeibler:
      return -x * log(y);
    case Regime::BetweenOneAndTwo:
      return pow(y, b) / b - x * pow(y, b - Scalar(1)) / (b - Scalar(1));
    case Regime::AtOrAboveTwo:
      return pow(y, b) / b;
  }
  return Scalar(0);
}

/// Concave part of the split; split_convex + split_concave == d_beta.
template <typename Scalar>
Scalar split_concave(Scalar x, Scalar y, const BetaParams<Scalar>& p) {
  using std::log;
  using std::pow;
  detail::require_positive_pair(x, y, "split_concave");
  const Scalar b = p.beta;
  switch (p.regime) {
    case Regime::BelowOne:
      return pow(y, b) / b - pow(x, b) / (b * (Scalar(1) - b));
    case Regime::ItakuraSaito:
      return log(y / x) - Scalar(1);
    case Regime::KullbackLeibler:
      return y + x * log(x) - x;
    case Regime::BetweenOneAndTwo:
      return pow(x, b) / (b * (b - Scalar(1)));
    case Regime::AtOrAboveTwo:
      return -x * pow(y, b - Scalar(1)) / (b - Scalar(1)) + pow(x, b) / (b * (b - Scalar(1)));
  }
  return Scalar(0);
}

/// d/dy of split_convex. Strictly increasing in y.
template <typename Scalar>
Scalar split_convex_d1(Scalar x, Scalar y, const BetaParams<Scalar>& p) {
  using std::pow;
  detail::require_positive_pair(x, y, "split_convex_d1");
  const Scalar b = p.beta;
  switch (p.regime) {
    case Regime::BelowOne:
      return -x * pow(y, b - Scalar(2));
    case Regime::ItakuraSaito:
      return -x / (y * y);
    case Regime::KullbackLeibler:
      return -x / y;
    case Regime::BetweenOneAndTwo:
      return pow(y, b - Scalar(1)) - x * pow(y, b - Scalar(2));
    case Regime::AtOrAboveTwo:
      return pow(y, b - Scalar(1));
  }
  return Scalar(0);
}

/// d/dy of split_concave.
template <typename Scalar>
Scalar split_concave_d1(Scalar x, Scalar y, const BetaParams<Scalar>& p) {
  using std::pow;
  detail::require_positive_pair(x, y, "split_concave_d1");
  const Scalar b = p.beta;
  switch (p.regime) {
    case Regime::BelowOne:
      return pow(y, b - Scalar(1));
    case Regime::ItakuraSaito:
      return Scalar(1) / y;
    case Regime::KullbackLeibler:
      return Scalar(1);
    case Regime::BetweenOneAndTwo:
      return Scalar(0);
    case Regime::AtOrAboveTwo:
      return -x * pow(y, b - Scalar(2));
  }
  return Scalar(0);
}

/// Sum of entrywise divergences between V and an already formed product WH.
template <typename Scalar, typename DerivedV, typename DerivedP>
Scalar divergence(const Eigen::MatrixBase<DerivedV>& V, const Eigen::MatrixBase<DerivedP>& WH,
                  const BetaParams<Scalar>& p) {
  if (V.rows() != WH.rows() || V.cols() != WH.cols()) {
    throw ValidationError("divergence: V and WH shapes differ");
  }
  Scalar total(0);
  for (Index n = 0; n < V.cols(); ++n) {
    for (Index f = 0; f < V.rows(); ++f) {
      const Scalar x = V(f, n);
      const Scalar y = WH(f, n);
      if (p.regime == Regime::KullbackLeibler && x > Scalar(0) && y > Scalar(0)) {
        total += x * std::log(x / y) - x + y;
        continue;
      }
      try {
        total += d_beta(x, y, p);
      } catch (const DomainError& e) {
        throw DomainError(std::string(e.what()) + " at entry " + detail::fmt_entry(f, n));
      }
    }
  }
  return total;
}

/// D_beta(V | WH).
template <typename Scalar>
Scalar D_beta(const Matrix<Scalar>& V, const Matrix<Scalar>& W, const Matrix<Scalar>& H,
              const BetaParams<Scalar>& p) {
  if (W.cols() != H.rows() || V.rows() != W.rows() || V.cols() != H.cols()) {
    throw ValidationError("D_beta: incompatible shapes");
  }
  const Matrix<Scalar> WH = W * H;
  return divergence(V, WH, p);
}

}  // namespace betanmf
