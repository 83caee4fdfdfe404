#include <cmath>
#include <random>

#include "betanmf/algorithms.hpp"
#include "betanmf/synth.hpp"
#include "doctest.h"

using namespace betanmf;
using M = Matrix<double>;
using Vec = Vector<double>;
using Opts = SolverOptions<double>;

namespace {

Opts options(double beta, int iters, std::uint64_t seed = 1) {
  Opts o;
  o.beta = beta;
  o.max_iters = iters;
  o.seed = seed;
  return o;
}

void check_monotone(const ConvergenceTrace<double>& t) {
  const auto bad = t.first_increase(1e-12);
  if (bad) {
    INFO("iteration " << t.rows[*bad].iter << ": " << t.rows[*bad - 1].objective << " -> " << t.rows[*bad].objective);
    CHECK(false);
  }
}

}  // namespace

TEST_CASE("hoyer sparsity") {
  Vec one_hot = Vec::Zero(5);
  one_hot(2) = 3;
  CHECK(hoyer_sparsity(one_hot) == doctest::Approx(1.0));
  CHECK(hoyer_sparsity(Vec(Vec::Constant(7, 0.3))) == doctest::Approx(0.0).epsilon(1e-12));
  Vec v(2);
  v << 3, 4;
  CHECK(hoyer_sparsity(v) == doctest::Approx(0.03432).epsilon(1e-4));
  CHECK_THROWS_AS(hoyer_sparsity(Vec(Vec::Zero(3))), DomainError);
  CHECK_THROWS_AS(hoyer_sparsity(Vec(Vec::Constant(1, 1.0))), DomainError);
}

TEST_CASE("objective") {
  const M W = M::Identity(2, 2), H = M::Constant(2, 2, 1.0), V = M::Identity(2, 2) + M::Constant(2, 2, 0.5);
  const BetaParams<double> p(1);
  const auto plain = objective(V, W, H, p);
  CHECK(plain.penalty == 0);
  CHECK(plain.total == plain.divergence);
  const auto mv = objective(V, W, H, p, Penalty<double>::min_volume(1.0, 1.0));
  CHECK(mv.penalty == doctest::Approx(2 * std::log(2.0)));
  CHECK(objective(V, W, H, p, Penalty<double>::min_volume(0.0, 1.0)).total == plain.total);
  const auto sp = objective(V, M(M::Constant(2, 2, 1.0)), M(M::Identity(2, 2)), p, Penalty<double>::row_l1(Vec::Ones(2)));
  CHECK(sp.penalty == doctest::Approx(2.0));
}

TEST_CASE("empty constraint sets reproduce the baseline bit for bit") {
  const auto d = synth_simplex(12, 3, 20, Noise::Poisson, 0.05, 4);
  for (double b : {0.0, 1.0, 1.5}) {
    const auto base = fit_baseline(d.V, 3, options(b, 40));
    const auto con = fit_constrained(d.V, 3, ConstraintSet<double>{}, ConstraintSet<double>{}, options(b, 40));
    CHECK((base.W - con.W).cwiseAbs().maxCoeff() == 0);
    CHECK((base.H - con.H).cwiseAbs().maxCoeff() == 0);
    REQUIRE(base.trace.rows.size() == con.trace.rows.size());
    for (std::size_t i = 0; i < base.trace.rows.size(); ++i) CHECK(base.trace.rows[i].objective == con.trace.rows[i].objective);
  }
}

TEST_CASE("rank one exact data with a row-sum constraint") {
  Vec w(4), h(6);
  w << 1, 2, 0.5, 3;
  h << 0.2, 1, 0.7, 0.1, 2, 0.4;
  const M V = w * h.transpose();
  ConstraintSet<double> csH;
  LinearConstraint<double> lc;
  for (Index n = 0; n < 6; ++n) lc.set.push_back({0, n});
  lc.weights = Vec::Ones(6);
  lc.rhs = h.sum();
  csH.linear.push_back(lc);
  const auto r = fit_constrained(V, 1, ConstraintSet<double>{}, csH, options(1, 50));
  CHECK(r.trace.rows.back().objective <= 1e-8);
  CHECK(std::abs(r.H.sum() - h.sum()) <= 1e-6);
}

TEST_CASE("ssnmf") {
  const auto d = synth_simplex(10, 3, 15, Noise::Gaussian, 0.01, 2);
  for (double b : {0.5, 1.0, 1.5}) {
    const auto r = fit_ssnmf(d.V, 3, options(b, 60));
    check_monotone(r.trace);
    for (const auto& row : r.trace.rows) CHECK(row.max_residual <= 1e-6);
    for (Index n = 0; n < r.H.cols(); ++n) CHECK(std::abs(r.H.col(n).sum() - 1) <= 1e-6);
  }
  const auto one = fit_ssnmf(d.V, 1, options(1, 20));
  CHECK((one.H.array() - 1).abs().maxCoeff() <= 1e-9);

  const auto two = fit_ssnmf(d.V, 3, options(2, 60));
  CHECK(two.trace.rows.back().objective <= two.trace.rows.front().objective);
}

TEST_CASE("min-vol") {
  const auto d = synth_separable(15, 3, 60, Noise::Poisson, 1e-3, 3);
  for (double lambda : {0.0, 0.05, 1.0}) {
    const auto r = fit_minvol_kl(d.V, 3, lambda, 0.1, options(1, 80));
    check_monotone(r.trace);
    for (const auto& row : r.trace.rows) CHECK(row.max_residual <= 1e-6);
    for (Index k = 0; k < 3; ++k) CHECK(std::abs(r.W.col(k).sum() - 1) <= 1e-6);
  }
  CHECK_THROWS_AS(fit_minvol_kl(d.V, 3, -1.0, 0.1, options(1, 5)), ValidationError);
  CHECK_THROWS_AS(fit_minvol_kl(d.V, 3, 1.0, 0.0, options(1, 5)), ValidationError);
  CHECK_THROWS_AS(fit_minvol_kl(d.V, 3, 1.0, 0.1, options(0.5, 5)), ValidationError);
}

TEST_CASE("sparse sphere") {
  const auto d = synth_sparse(20, 3, 50, 0.4, Noise::Poisson, 0.02, 5);
  const auto fixed = SparsitySchedule<double>::fixed(Vec::Constant(3, 0.5));
  const auto r = fit_sparse_sphere_kl(d.V, 3, fixed, 1.0, options(1, 80));
  check_monotone(r.trace);
  for (const auto& row : r.trace.rows) {
    if (row.fallback_count == 0) CHECK(row.max_residual <= 1e-6);
  }
  CHECK((r.lambda.array() == 0.5).all());

  SparsitySchedule<double> s;
  s.lambda0 = Vec::Constant(3, 0.1);
  s.it_min = 10;
  s.it_max = 40;
  s.target_sp = 0.9;
  Opts o = options(1, 60);
  const auto full = fit_sparse_sphere_kl(d.V, 3, s, 1.0, o);
  CHECK((full.lambda.array() >= 0.1).all());
  CHECK((full.lambda.array() <= 0.1 * std::pow(1.05, 31) * (1 + 1e-12)).all());
  auto past = fit_sparse_sphere_kl(d.V, 3, s, 1.0, [&] { auto x = o; x.max_iters = 40; return x; }());
  CHECK((past.lambda - full.lambda).norm() == 0);

  s.rate_alpha = 1.0;
  CHECK_THROWS_AS(fit_sparse_sphere_kl(d.V, 3, s, 1.0, o), ValidationError);
  s.rate_alpha = 1.05;
  s.it_max = 100;
  CHECK_THROWS_AS(fit_sparse_sphere_kl(d.V, 3, s, 1.0, o), ValidationError);
}

TEST_CASE("determinism and initialization") {
  const auto d = synth_simplex(8, 2, 12, Noise::Poisson, 0.1, 1);
  const auto a = fit_ssnmf(d.V, 2, options(1, 15, 99));
  const auto b = fit_ssnmf(d.V, 2, options(1, 15, 99));
  CHECK((a.W - b.W).norm() == 0);
  for (std::size_t i = 0; i < a.trace.rows.size(); ++i) CHECK(a.trace.rows[i].objective == b.trace.rows[i].objective);
  const auto c = fit_ssnmf(d.V, 2, options(1, 15, 100));
  CHECK((a.W - c.W).norm() > 0);

  // iteration 0 is already feasible
  CHECK(a.trace.rows.front().iter == 0);
  CHECK(a.trace.rows.front().max_residual <= 1e-12);

  InitialFactors<double> init;
  init.W = M::Constant(8, 2, 0.5);
  init.H = M::Constant(2, 12, 2.0);
  const auto e = fit_ssnmf(d.V, 2, options(1, 1), init);
  CHECK(e.trace.rows.front().max_residual <= 1e-12);
  init.H = M::Constant(3, 12, 2.0);
  CHECK_THROWS_AS(fit_ssnmf(d.V, 2, options(1, 1), init), ValidationError);
}

TEST_CASE("trace sampling") {
  const auto d = synth_simplex(8, 2, 12, Noise::Poisson, 0.1, 1);
  Opts o = options(1, 10);
  o.objective_every = 4;
  const auto r = fit_baseline(d.V, 2, o);
  REQUIRE(r.trace.rows.size() == 4);
  CHECK(r.trace.rows[1].iter == 4);
  CHECK(r.trace.rows[3].iter == 10);
}

TEST_CASE("validation") {
  const auto d = synth_simplex(6, 2, 8, Noise::Poisson, 0.1, 1);
  CHECK_THROWS_AS(fit_baseline(d.V, 0, options(1, 5)), ValidationError);
  CHECK_THROWS_AS(fit_baseline(d.V, 2, options(1, 0)), ValidationError);
  Opts o = options(1, 5);
  o.floor_eps = 0;
  CHECK_THROWS_AS(fit_baseline(d.V, 2, o), ValidationError);
  M Vz = d.V;
  Vz(0, 0) = 0;
  CHECK_THROWS_AS(fit_baseline(Vz, 2, options(0, 5)), DomainError);
  ConstraintSet<double> bad;
  bad.spheres.push_back({0, 1.0});
  CHECK_THROWS_AS(fit_constrained(d.V, 2, ConstraintSet<double>{}, bad, options(1, 5)), ValidationError);
  CHECK_THROWS_AS(fit_constrained(d.V, 2, bad, ConstraintSet<double>{}, options(0.5, 5)), ValidationError);
}
