#include <cmath>
#include <random>

#include "betanmf/oracle.hpp"
#include "betanmf/updates.hpp"
#include "doctest.h"

using namespace betanmf;
using Vec = Vector<double>;
using Fn = EntryFunction<double>;

TEST_CASE("symmetric block") {
  Fn g = [](double y) { return (y - 0.3) * (y - 0.3); };
  const Vec y = minimize_majorizer_on_simplex_slice<double>({g, g}, Vec::Ones(2), 1.0);
  CHECK(y(0) == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(y(1) == doctest::Approx(0.5).epsilon(1e-9));
  const Vec y3 = minimize_majorizer_on_simplex_slice<double>({g, g, g}, Vec::Ones(3), 1.0);
  for (Index q = 0; q < 3; ++q) CHECK(y3(q) == doctest::Approx(1.0 / 3).epsilon(1e-7));
}

TEST_CASE("update example against the oracle") {
  const BetaParams<double> p(1);
  const Vec y = minimize_majorizer_on_simplex_slice<double>(
      {majorizer_entry(0.5, 1.0, 2.0, p), majorizer_entry(0.5, 3.0, 2.0, p)}, Vec::Ones(2), 1.0);
  CHECK(y(0) == doctest::Approx(0.25).epsilon(1e-5));
  CHECK(y(1) == doctest::Approx(0.75).epsilon(1e-5));
}

TEST_CASE("degenerate block puts the mass on the cheapest entry") {
  Fn flat = [](double y) { return y; };
  Fn steep = [](double y) { return 10 * y; };
  const Vec y = minimize_majorizer_on_simplex_slice<double>({steep, flat}, Vec::Ones(2), 2.0);
  CHECK(y(0) <= 1e-10);
  CHECK(y(1) == doctest::Approx(2.0));
}

TEST_CASE("oracle rejects bad input") {
  Fn g = [](double y) { return y * y; };
  CHECK_THROWS_AS(minimize_majorizer_on_simplex_slice<double>({g}, Vec::Ones(1), 1.0), ValidationError);
  CHECK_THROWS_AS(minimize_majorizer_on_simplex_slice<double>({g, g}, Vec::Ones(2), -1.0), ValidationError);
  OracleConfig<double> cfg;
  cfg.grid_points = 2;
  CHECK_THROWS_AS(minimize_majorizer_on_simplex_slice<double>({g, g, g}, Vec::Ones(3), 1.0, cfg), ValidationError);
}

TEST_CASE("majorizer entries are minimized by the multiplicative step") {
  for (double b : {-0.5, 0.0, 0.5, 1.0, 1.5, 2.0, 3.0}) {
    const BetaParams<double> p(b);
    const double yt = 0.7, C = 1.3, D = 0.6;
    const auto g = majorizer_entry(yt, C, D, p);
    const double ystar = yt * std::pow(C / D, p.gamma_exp);
    const double h = 1e-4 * ystar;
    CHECK(g(ystar) <= g(ystar + h));
    CHECK(g(ystar) <= g(ystar - h));
  }
}

TEST_CASE("sign change scan") {
  std::function<double(double)> id = [](double x) { return x; };
  CHECK(scan_root_uniqueness(id, -1.0, 1.0, 1000) == 1);
  std::function<double(double)> pos = [](double x) { return x * x + 1; };
  CHECK(scan_root_uniqueness(pos, -3.0, 3.0, 1000) == 0);
  std::function<double(double)> three = [](double x) { return x * (x - 1) * (x + 1); };
  CHECK(scan_root_uniqueness(three, -2.0, 2.0, 1001) == 3);
  std::function<double(double)> near_pole = [](double x) { return 1 / (1 - x) - 1e6; };
  CHECK(scan_root_uniqueness(near_pole, 0.0, 1.0, 200, ScanSpacing::TowardUpper) == 1);
}

TEST_CASE("random blocks agree with Newton") {
  std::mt19937_64 gen(13);
  std::uniform_real_distribution<double> u(0.2, 2.0);
  OracleConfig<double> cfg;
  cfg.grid_points = 101;
  cfg.refine_rounds = 6;
  for (double b : {0.0, 0.5, 1.0, 1.5}) {
    const BetaParams<double> p(b);
    for (int t = 0; t < 10; ++t) {
      const Index Q = 2 + t % 2;
      Vec y(Q), C(Q), D(Q), w(Q);
      std::vector<Fn> g;
      for (Index q = 0; q < Q; ++q) {
        y(q) = u(gen);
        C(q) = u(gen);
        D(q) = u(gen);
        w(q) = u(gen);
        g.push_back(majorizer_entry(y(q), C(q), D(q), p));
      }
      const double rhs = u(gen);
      const auto newton = solve_linear_block(LinearBlock<double>(y, C, D, w, rhs, p), RootOptions<double>{});
      const Vec ref = minimize_majorizer_on_simplex_slice(g, w, rhs, cfg);
      CHECK((ref - newton.entries).cwiseAbs().maxCoeff() <= 1e-5);
    }
  }
}
