#include <cmath>
#include <random>

#include "betanmf/divergence.hpp"
#include "doctest.h"

using namespace betanmf;
using P = BetaParams<double>;

TEST_CASE("gamma exponent and regime") {
  CHECK(P(0.5).gamma_exp == doctest::Approx(1 / 1.5));
  CHECK(P(0).gamma_exp == doctest::Approx(0.5));
  CHECK(P(1.5).gamma_exp == 1.0);
  CHECK(P(2).gamma_exp == 1.0);
  CHECK(P(3).gamma_exp == doctest::Approx(0.5));
  CHECK(P(-0.5).regime == Regime::BelowOne);
  CHECK(P(0).regime == Regime::ItakuraSaito);
  CHECK(P(1).regime == Regime::KullbackLeibler);
  CHECK(P(1.25).regime == Regime::BetweenOneAndTwo);
  CHECK(P(2).regime == Regime::AtOrAboveTwo);
  CHECK_THROWS_AS(P(NAN), DomainError);
}

TEST_CASE("d_beta special values") {
  CHECK(d_beta(2.0, 2.0, P(1)) == 0.0);
  CHECK(d_beta(3.0, 1.0, P(2)) == doctest::Approx(2.0));
  CHECK(d_beta(1.0, 2.0, P(0)) == doctest::Approx(std::log(2.0) - 0.5));
  CHECK(d_beta(0.0, 1.0, P(1)) == doctest::Approx(1.0));
  CHECK(d_beta(0.0, 2.0, P(0.5)) == doctest::Approx(2.0 * std::sqrt(2.0)));
}

TEST_CASE("d_beta domain") {
  CHECK_THROWS_AS(d_beta(1.0, 0.0, P(1)), DomainError);
  CHECK_THROWS_AS(d_beta(-1.0, 1.0, P(1)), DomainError);
  CHECK_THROWS_AS(d_beta(0.0, 1.0, P(0)), DomainError);
  CHECK_THROWS_AS(d_beta(0.0, 1.0, P(-0.5)), DomainError);
  CHECK_NOTHROW(d_beta(0.0, 1.0, P(0.5)));
}

TEST_CASE("matrix divergence") {
  Matrix<double> V(1, 1), W(1, 1), H(1, 1);
  V << 6;
  W << 2;
  H << 3;
  CHECK(D_beta(V, W, H, P(1)) == 0.0);
  H << 2;
  CHECK(D_beta(V, W, H, P(2)) == doctest::Approx(2.0));

  Matrix<double> V2(2, 2), WH(2, 2);
  V2 << 1, 0, 1, 1;
  WH << 1, 1, 1, 1;
  CHECK_THROWS_WITH_AS(divergence(V2, WH, P(0)), doctest::Contains("(0,1)"), DomainError);
  CHECK_THROWS_AS(divergence(V2, Matrix<double>(1, 2), P(1)), ValidationError);
}

TEST_CASE("split examples") {
  CHECK(split_convex(2.0, 3.0, P(1)) == doctest::Approx(-2 * std::log(3.0)));
  CHECK(split_concave(2.0, 3.0, P(1)) == doctest::Approx(1 + 2 * std::log(2.0)));
  CHECK(split_convex(2.0, 3.0, P(1)) + split_concave(2.0, 3.0, P(1)) == doctest::Approx(0.189070).epsilon(1e-5));
  CHECK(split_convex(1.0, 1.0, P(0)) == doctest::Approx(1.0));
  CHECK(split_concave(1.0, 1.0, P(0)) == doctest::Approx(-1.0));
  CHECK(split_convex(2.0, 1.0, P(2)) == doctest::Approx(0.5));
  CHECK(split_concave(2.0, 1.0, P(2)) == doctest::Approx(0.0));
  CHECK(split_convex_d1(1.0, 1.0, P(1)) == doctest::Approx(-1.0));
  CHECK(split_convex_d1(1.0, 2.0, P(0)) == doctest::Approx(-0.25));
  CHECK(split_convex_d1(0.5, 1.0, P(2)) == doctest::Approx(1.0));
  CHECK_THROWS_AS(split_convex(0.0, 1.0, P(1)), DomainError);
  CHECK_THROWS_AS(split_concave_d1(1.0, -1.0, P(1)), DomainError);
}

TEST_CASE("split properties on random samples") {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> logu(std::log(1e-3), std::log(1e3));
  const double betas[] = {-0.5, 0, 0.5, 1, 1.25, 1.5, 2, 3};
  for (int i = 0; i < 10000; ++i) {
    const double x = std::exp(logu(gen));
    const double y = std::exp(logu(gen));
    const P p(betas[i % 8]);
    const double d = d_beta(x, y, p);
    CHECK(d >= 0);
    const double s = split_convex(x, y, p) + split_concave(x, y, p);
    CHECK(std::abs(s - d) <= 1e-10 * (1 + std::abs(d)));
  }
}

TEST_CASE("derivatives match finite differences") {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> logu(std::log(1e-2), std::log(1e2));
  const double betas[] = {-0.5, 0, 0.5, 1, 1.25, 1.5, 2, 3};
  for (int i = 0; i < 2000; ++i) {
    const double x = std::exp(logu(gen));
    const double y = std::exp(logu(gen));
    const P p(betas[i % 8]);
    const double h = 1e-5 * y;
    const double fd1 = (split_convex(x, y + h, p) - split_convex(x, y - h, p)) / (2 * h);
    const double an1 = split_convex_d1(x, y, p);
    CHECK(std::abs(fd1 - an1) <= 1e-6 * std::max(1.0, std::abs(an1)));
    // the concave part carries a large y-independent term, so allow for its
    // rounding in the difference quotient
    const double up = split_concave(x, y + h, p), dn = split_concave(x, y - h, p);
    const double fd2 = (up - dn) / (2 * h);
    const double an2 = split_concave_d1(x, y, p);
    CHECK(std::abs(fd2 - an2) <= 1e-6 * std::max(1.0, std::abs(an2)) + 1e-14 * (std::abs(up) + std::abs(dn)) / h);
  }
}
