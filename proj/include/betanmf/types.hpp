#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>

namespace betanmf {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Raised when an argument lies outside the domain of a divergence or update.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Raised for malformed models: bad constraint sets, incompatible shapes,
/// out-of-range parameters.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Regime {
  BelowOne,          // beta < 1, beta != 0
  ItakuraSaito,      // beta == 0
  KullbackLeibler,   // beta == 1
  BetweenOneAndTwo,  // 1 < beta < 2
  AtOrAboveTwo       // beta >= 2
};

/// Divergence order together with the exponent of its multiplicative update.
///
/// gamma_exp is 1/(2-beta) below 1, 1 on [1,2] and 1/(beta-1) above 2.
template <typename Scalar>
struct BetaParams {
  Scalar beta{1};
  Scalar gamma_exp{1};
  Regime regime{Regime::KullbackLeibler};

  BetaParams() = default;

  explicit BetaParams(Scalar b) : beta(b) {
    if (!std::isfinite(b)) throw DomainError("beta must be finite");
    if (b == Scalar(0)) {
      regime = Regime::ItakuraSaito;
    } else if (b == Scalar(1)) {
      regime = Regime::KullbackLeibler;
    } else if (b < Scalar(1)) {
      regime = Regime::BelowOne;
    } else if (b < Scalar(2)) {
      regime = Regime::BetweenOneAndTwo;
    } else {
      regime = Regime::AtOrAboveTwo;
    }
    if (b < Scalar(1)) {
      gamma_exp = Scalar(1) / (Scalar(2) - b);
    } else if (b <= Scalar(2)) {
      gamma_exp = Scalar(1);
    } else {
      gamma_exp = Scalar(1) / (b - Scalar(1));
    }
  }
};

}  // namespace betanmf
