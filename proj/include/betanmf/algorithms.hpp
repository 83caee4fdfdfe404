#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "betanmf/constraints.hpp"
#include "betanmf/divergence.hpp"
#include "betanmf/rootfind.hpp"
#include "betanmf/types.hpp"
#include "betanmf/updates.hpp"

namespace betanmf {

template <typename Scalar>
struct SolverOptions {
  int max_iters{300};
  Scalar beta{1};
  std::uint64_t seed{0};
  Scalar tol_residual{1e-6};
  int root_max_iters{200};
  /// Entries are clamped to floor_eps * max(V) after every update.
  Scalar floor_eps{1e-15};
  bool record_trace{true};
  /// A trace row is written every objective_every iterations (and always
  /// for iteration 0 and the last iteration).
  int objective_every{1};
  bool record_multipliers{false};
};

/// Dynamic l1 weights: within [it_min, it_max] every row whose Hoyer
/// sparsity is below target_sp gets lambda_k *= rate_alpha once per
/// iteration. Outside the window the weights are frozen.
template <typename Scalar>
struct SparsitySchedule {
  Vector<Scalar> lambda0;
  Scalar rate_alpha{1.05};
  Scalar target_sp{0.5};
  int it_min{1};
  int it_max{1};

  /// Constant weights: the window [0, 0] never contains an iteration.
  static SparsitySchedule fixed(Vector<Scalar> lambda) {
    SparsitySchedule s;
    s.lambda0 = std::move(lambda);
    s.it_min = 0;
    s.it_max = 0;
    return s;
  }
};

template <typename Scalar>
struct TraceRow {
  int iter{0};
  Scalar divergence{0};
  Scalar penalty{0};
  Scalar objective{0};
  Scalar max_residual{0};
  std::vector<Scalar> multipliers;
  int newton_iters{0};
  int fallback_count{0};  // sphere fallbacks taken during this iteration
  double elapsed_s{0};    // since the start of the fit
  double update_s{0};     // factor updates of this iteration only
  double newton_s{0};     // multiplier solves of this iteration only
};

template <typename Scalar>
struct ConvergenceTrace {
  std::vector<TraceRow<Scalar>> rows;

  int total_fallbacks() const {
    int n = 0;
    for (const auto& r : rows) n += r.fallback_count;
    return n;
  }

  /// Index of the first row whose objective exceeds its predecessor by more
  /// than rel_tol * (1 + |previous|), or nullopt. Rows that took a fallback
  /// are skipped when skip_fallbacks is set.
  std::optional<std::size_t> first_increase(Scalar rel_tol, bool skip_fallbacks = true) const {
    for (std::size_t i = 1; i < rows.size(); ++i) {
      if (skip_fallbacks && rows[i].fallback_count > 0) continue;
      const Scalar prev = rows[i - 1].objective;
      if (rows[i].objective - prev > rel_tol * (Scalar(1) + std::abs(prev))) return i;
    }
    return std::nullopt;
  }

  Scalar max_residual() const {
    Scalar m(0);
    for (const auto& r : rows) m = std::max(m, r.max_residual);
    return m;
  }
};

template <typename Scalar>
struct FitResult {
  Matrix<Scalar> W;
  Matrix<Scalar> H;
  ConvergenceTrace<Scalar> trace;
  Vector<Scalar> lambda;  // final row weights of the sparse model
};

/// Optional starting point; missing factors are drawn from the seed.
template <typename Scalar>
struct InitialFactors {
  std::optional<Matrix<Scalar>> W;
  std::optional<Matrix<Scalar>> H;
};

template <typename Scalar>
struct Penalty {
  enum class Kind { None, MinVolume, RowL1 };
  Kind kind{Kind::None};
  Scalar lambda{0};
  Scalar delta{1};
  Vector<Scalar> row_lambda;

  static Penalty none() { return {}; }
  static Penalty min_volume(Scalar lambda, Scalar delta) { return {Kind::MinVolume, lambda, delta, {}}; }
  static Penalty row_l1(Vector<Scalar> lambdas) { return {Kind::RowL1, 0, 1, std::move(lambdas)}; }
};

template <typename Scalar>
struct ObjectiveValue {
  Scalar divergence{0};
  Scalar penalty{0};
  Scalar total{0};
};

/// log det(W^T W + delta I) from the Cholesky factor.
template <typename Scalar>
Scalar logdet_gram(const Matrix<Scalar>& W, Scalar delta) {
  Matrix<Scalar> gram = W.transpose() * W;
  gram.diagonal().array() += delta;
  Eigen::LLT<Matrix<Scalar>> llt(gram);
  if (llt.info() != Eigen::Success) throw DomainError("logdet: W^T W + delta I is not positive definite");
  return Scalar(2) * llt.matrixLLT().diagonal().array().log().sum();
}

template <typename Scalar>
ObjectiveValue<Scalar> objective(const Matrix<Scalar>& V, const Matrix<Scalar>& W, const Matrix<Scalar>& H,
                                 const BetaParams<Scalar>& p, const Penalty<Scalar>& pen = {}) {
  ObjectiveValue<Scalar> o;
  o.divergence = D_beta(V, W, H, p);
  switch (pen.kind) {
    case Penalty<Scalar>::Kind::None:
      break;
    case Penalty<Scalar>::Kind::MinVolume:
      if (pen.lambda != Scalar(0)) o.penalty = pen.lambda * logdet_gram(W, pen.delta);
      break;
    case Penalty<Scalar>::Kind::RowL1:
      if (pen.row_lambda.size() != H.rows()) throw ValidationError("objective: one l1 weight per row of H expected");
      o.penalty = pen.row_lambda.dot(H.cwiseAbs().rowwise().sum());
      break;
  }
  o.total = o.divergence + o.penalty;
  return o;
}

/// Hoyer sparsity (sqrt(N) - ||x||_1/||x||_2) / (sqrt(N) - 1).
template <typename Derived>
typename Derived::Scalar hoyer_sparsity(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  const Index N = x.size();
  if (N < 2) throw DomainError("hoyer_sparsity: needs at least two entries");
  const Scalar l2 = x.norm();
  if (!(l2 > Scalar(0))) throw DomainError("hoyer_sparsity: zero vector");
  const Scalar sq = std::sqrt(Scalar(N));
  return (sq - x.cwiseAbs().sum() / l2) / (sq - Scalar(1));
}

namespace detail {

template <typename Scalar>
struct StepStats {
  int newton_iters{0};
  double newton_s{0};
  int fallbacks{0};
  std::vector<Scalar> multipliers;

  void absorb(FactorUpdateReport<Scalar>&& r) {
    newton_iters += r.newton_iters;
    newton_s += r.newton_seconds;
    fallbacks += static_cast<int>(r.fallbacks.size());
    multipliers.insert(multipliers.end(), r.multipliers.begin(), r.multipliers.end());
  }
};

template <typename Scalar>
void check_options(const SolverOptions<Scalar>& o) {
  if (o.max_iters < 1) throw ValidationError("max_iters must be at least 1");
  if (!(o.floor_eps > Scalar(0))) throw ValidationError("floor_eps must be positive");
  if (!(o.tol_residual > Scalar(0))) throw ValidationError("tol_residual must be positive");
  if (o.objective_every < 1) throw ValidationError("objective_every must be at least 1");
  if (o.root_max_iters < 1) throw ValidationError("root_max_iters must be at least 1");
}

template <typename Scalar>
void check_data(const Matrix<Scalar>& V, Index K, const BetaParams<Scalar>& p) {
  if (V.rows() == 0 || V.cols() == 0) throw ValidationError("data matrix is empty");
  if (K < 1) throw ValidationError("rank must be at least 1");
  require_admissible(V, p);
}

template <typename Scalar>
Scalar floor_value(const Matrix<Scalar>& V, Scalar floor_eps) {
  const Scalar m = V.maxCoeff();
  return m > Scalar(0) ? floor_eps * m : floor_eps;
}

// Uniform (0, 1] entries; W is drawn before H, both column-major.
template <typename Scalar>
void draw_factors(Index F, Index N, Index K, std::uint64_t seed, const InitialFactors<Scalar>& init,
                  Matrix<Scalar>& W, Matrix<Scalar>& H) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<Scalar> unif(Scalar(0), Scalar(1));
  auto draw = [&](Index r, Index c) {
    Matrix<Scalar> X(r, c);
    for (Index j = 0; j < X.size(); ++j) X.data()[j] = Scalar(1) - unif(gen);
    return X;
  };
  W = draw(F, K);
  H = draw(K, N);
  if (init.W) {
    if (init.W->rows() != F || init.W->cols() != K) throw ValidationError("initial W has the wrong shape");
    if ((init.W->array() < Scalar(0)).any() || !init.W->allFinite()) {
      throw ValidationError("initial W must be finite and nonnegative");
    }
    W = *init.W;
  }
  if (init.H) {
    if (init.H->rows() != K || init.H->cols() != N) throw ValidationError("initial H has the wrong shape");
    if ((init.H->array() < Scalar(0)).any() || !init.H->allFinite()) {
      throw ValidationError("initial H must be finite and nonnegative");
    }
    H = *init.H;
  }
}

// Rescales every constrained block once so that it is feasible.
template <typename Scalar>
void project_once(Matrix<Scalar>& X, const ConstraintSet<Scalar>& cs, const std::string& factor) {
  for (const auto& lc : cs.linear) {
    Scalar s(0);
    for (std::size_t q = 0; q < lc.set.size(); ++q) s += lc.weights(static_cast<Index>(q)) * X(lc.set[q].row, lc.set[q].col);
    if (!(s > Scalar(0))) throw ValidationError("initial " + factor + " is zero on a constrained block");
    const Scalar c = lc.rhs / s;
    for (const auto& e : lc.set) X(e.row, e.col) *= c;
  }
  for (const auto& sc : cs.spheres) {
    const Scalar n = X.col(sc.column).norm();
    if (!(n > Scalar(0))) throw ValidationError("initial " + factor + " has a zero sphere column");
    X.col(sc.column) *= std::sqrt(sc.radius_sq) / n;
  }
}

template <typename Fn>
auto with_iteration_context(int it, Fn&& fn) {
  try {
    return fn();
  } catch (const RootError& e) {
    throw RootError(e.kind(), "iteration " + std::to_string(it) + ": " + e.what());
  } catch (const DomainError& e) {
    throw DomainError("iteration " + std::to_string(it) + ": " + e.what());
  }
}

// Shared alternating loop. `step(it)` updates the factors in place and
// returns StepStats; `evaluate()` returns the objective; `residual()` the
// worst constraint residual; `after(it)` runs once the iteration is done.
template <typename Scalar, typename Step, typename Eval, typename Residual, typename After>
ConvergenceTrace<Scalar> alternate(const SolverOptions<Scalar>& opts, Step step, Eval evaluate, Residual residual,
                                   After after) {
  using clock = std::chrono::steady_clock;
  ConvergenceTrace<Scalar> trace;
  const auto t0 = clock::now();
  auto record = [&](int it, const StepStats<Scalar>& st, double update_s) {
    const ObjectiveValue<Scalar> o = evaluate();
    TraceRow<Scalar> row;
    row.iter = it;
    row.divergence = o.divergence;
    row.penalty = o.penalty;
    row.objective = o.total;
    row.max_residual = residual();
    row.multipliers = st.multipliers;
    row.newton_iters = st.newton_iters;
    row.fallback_count = st.fallbacks;
    row.update_s = update_s;
    row.newton_s = st.newton_s;
    row.elapsed_s = std::chrono::duration<double>(clock::now() - t0).count();
    trace.rows.push_back(std::move(row));
  };
  if (opts.record_trace) record(0, {}, 0.0);
  StepStats<Scalar> pending;
  double pending_s = 0;
  for (int it = 1; it <= opts.max_iters; ++it) {
    const auto ts = clock::now();
    StepStats<Scalar> st = with_iteration_context(it, [&] { return step(it); });
    const double us = std::chrono::duration<double>(clock::now() - ts).count();
    after(it);
    // Rows that are skipped fold their counters into the next written row.
    pending.newton_iters += st.newton_iters;
    pending.newton_s += st.newton_s;
    pending.fallbacks += st.fallbacks;
    pending.multipliers = std::move(st.multipliers);
    pending_s += us;
    const bool last = it == opts.max_iters;
    if ((opts.record_trace && it % opts.objective_every == 0) || last) {
      with_iteration_context(it, [&] {
        record(it, pending, pending_s);
        return 0;
      });
      pending = {};
      pending_s = 0;
    }
  }
  return trace;
}

template <typename Scalar>
RootOptions<Scalar> root_options(const SolverOptions<Scalar>& o) {
  RootOptions<Scalar> r;
  r.tol_residual = o.tol_residual;
  r.max_iters = o.root_max_iters;
  return r;
}

}  // namespace detail

/// Alternating constrained multiplicative updates, H then W each iteration.
/// Entries covered by a constraint are updated through their multiplier, all
/// other entries by the plain step; every constraint holds after each update.
template <typename Scalar>
FitResult<Scalar> fit_constrained(const Matrix<Scalar>& V, Index K, const ConstraintSet<Scalar>& csW,
                                  const ConstraintSet<Scalar>& csH, const SolverOptions<Scalar>& opts,
                                  const InitialFactors<Scalar>& init = {}) {
  detail::check_options(opts);
  const BetaParams<Scalar> p(opts.beta);
  detail::check_data(V, K, p);
  const Index F = V.rows();
  const Index N = V.cols();
  require_valid(csW, F, K, "W");
  require_valid(csH, K, N, "H");
  if (!csH.spheres.empty()) throw ValidationError("constraints on H: sphere constraints apply to columns of W only");
  if (!csW.spheres.empty() && p.regime != Regime::KullbackLeibler) {
    throw ValidationError("constraints on W: sphere constraints require beta = 1");
  }

  FitResult<Scalar> res;
  detail::draw_factors(F, N, K, opts.seed, init, res.W, res.H);
  detail::project_once(res.W, csW, "W");
  detail::project_once(res.H, csH, "H");
  Matrix<Scalar>& W = res.W;
  Matrix<Scalar>& H = res.H;
  const Scalar eps = detail::floor_value(V, opts.floor_eps);
  const auto ropts = detail::root_options(opts);

  std::vector<Scalar> muH, muW;
  auto step = [&](int) {
    detail::StepStats<Scalar> st;
    st.absorb(update_factor(H, mu_coefficients(V, W, H, p), csH, p, ropts, eps, opts.record_multipliers, &muH));
    auto rw = update_factor(W, mu_coefficients_for_W(V, W, H, p), csW, p, ropts, eps, opts.record_multipliers, &muW);
    for (const auto& [col, scale] : rw.fallbacks) {
      H.row(col) = (H.row(col) / scale).cwiseMax(eps);
    }
    st.absorb(std::move(rw));
    return st;
  };
  auto evaluate = [&] { return objective(V, W, H, p); };
  auto residual = [&] { return std::max(max_residual(W, csW), max_residual(H, csH)); };
  res.trace = detail::alternate(opts, step, evaluate, residual, [](int) {});
  return res;
}

/// Plain multiplicative updates for both factors.
template <typename Scalar>
FitResult<Scalar> fit_baseline(const Matrix<Scalar>& V, Index K, const SolverOptions<Scalar>& opts,
                               const InitialFactors<Scalar>& init = {}) {
  return fit_constrained(V, K, ConstraintSet<Scalar>{}, ConstraintSet<Scalar>{}, opts, init);
}

/// Every column of H on the unit simplex.
template <typename Scalar>
FitResult<Scalar> fit_ssnmf(const Matrix<Scalar>& V, Index K, const SolverOptions<Scalar>& opts,
                            const InitialFactors<Scalar>& init = {}) {
  if (K < 1) throw ValidationError("rank must be at least 1");
  return fit_constrained(V, K, ConstraintSet<Scalar>{}, simplex_columns<Scalar>(K, V.cols()), opts, init);
}

/// KL-NMF with the volume penalty lambda * logdet(W^T W + delta I) and the
/// columns of W on the unit simplex.
template <typename Scalar>
FitResult<Scalar> fit_minvol_kl(const Matrix<Scalar>& V, Index K, Scalar lambda, Scalar delta,
                                const SolverOptions<Scalar>& opts, const InitialFactors<Scalar>& init = {}) {
  detail::check_options(opts);
  if (opts.beta != Scalar(1)) throw ValidationError("min-vol model is defined for beta = 1 only");
  if (!(lambda >= Scalar(0))) throw ValidationError("min-vol: lambda must be nonnegative");
  if (!(delta > Scalar(0))) throw ValidationError("min-vol: delta must be positive");
  const BetaParams<Scalar> p(Scalar(1));
  detail::check_data(V, K, p);
  const Index F = V.rows();
  const Index N = V.cols();

  FitResult<Scalar> res;
  detail::draw_factors(F, N, K, opts.seed, init, res.W, res.H);
  const auto simplexW = simplex_columns_of_W<Scalar>(F, K);
  detail::project_once(res.W, simplexW, "W");
  Matrix<Scalar>& W = res.W;
  Matrix<Scalar>& H = res.H;
  const Scalar eps = detail::floor_value(V, opts.floor_eps);
  const auto ropts = detail::root_options(opts);
  const auto pen = Penalty<Scalar>::min_volume(lambda, delta);

  auto step = [&](int) {
    detail::StepStats<Scalar> st;
    H = update_unconstrained(H, mu_coefficients(V, W, H, p), p).cwiseMax(eps);
    const auto state = minvol_state(W, lambda, delta);
    const auto coeff = minvol_coefficients(V, W, H, state);
    const auto tn = std::chrono::steady_clock::now();
    const auto mult = solve_minvol_multipliers(W, coeff, ropts);
    st.newton_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - tn).count();
    W = update_minvol_W(W, coeff, mult.mu).cwiseMax(eps);
    st.newton_iters = mult.newton_iters;
    if (opts.record_multipliers) st.multipliers.assign(mult.mu.data(), mult.mu.data() + mult.mu.size());
    return st;
  };
  auto evaluate = [&] { return objective(V, W, H, p, pen); };
  auto residual = [&] { return max_residual(W, simplexW); };
  res.trace = detail::alternate(opts, step, evaluate, residual, [](int) {});
  return res;
}

/// KL-NMF with row-wise l1 weights on H and every column of W on the sphere
/// of squared radius rho. The weights follow `schedule`.
template <typename Scalar>
FitResult<Scalar> fit_sparse_sphere_kl(const Matrix<Scalar>& V, Index K, const SparsitySchedule<Scalar>& schedule,
                                       Scalar rho, const SolverOptions<Scalar>& opts,
                                       const InitialFactors<Scalar>& init = {}) {
  detail::check_options(opts);
  if (opts.beta != Scalar(1)) throw ValidationError("sparse sphere model is defined for beta = 1 only");
  if (!(rho > Scalar(0))) throw ValidationError("rho must be positive");
  if (schedule.lambda0.size() != K) throw ValidationError("schedule: lambda0 needs one entry per row of H");
  if ((schedule.lambda0.array() < Scalar(0)).any()) throw ValidationError("schedule: lambda0 must be nonnegative");
  if (!(schedule.rate_alpha > Scalar(1))) throw ValidationError("schedule: rate_alpha must exceed 1");
  if (!(schedule.target_sp >= Scalar(0) && schedule.target_sp <= Scalar(1))) {
    throw ValidationError("schedule: target sparsity must lie in [0, 1]");
  }
  if (schedule.it_min < 0 || schedule.it_min > schedule.it_max || schedule.it_max > opts.max_iters) {
    throw ValidationError("schedule: window must satisfy it_min <= it_max <= max_iters");
  }
  const BetaParams<Scalar> p(Scalar(1));
  detail::check_data(V, K, p);
  const Index F = V.rows();
  const Index N = V.cols();
  if (N < 2) throw ValidationError("sparse sphere model needs at least two columns in V");

  FitResult<Scalar> res;
  res.lambda = schedule.lambda0;
  detail::draw_factors(F, N, K, opts.seed, init, res.W, res.H);
  const auto spheres = sphere_columns<Scalar>(K, rho);
  detail::project_once(res.W, spheres, "W");
  Matrix<Scalar>& W = res.W;
  Matrix<Scalar>& H = res.H;
  Vector<Scalar>& lambda = res.lambda;
  const Scalar eps = detail::floor_value(V, opts.floor_eps);
  const auto ropts = detail::root_options(opts);

  auto step = [&](int) {
    detail::StepStats<Scalar> st;
    H = update_sparse_H(H, mu_coefficients(V, W, H, p), lambda, p).cwiseMax(eps);
    auto rw = update_factor(W, mu_coefficients_for_W(V, W, H, p), spheres, p, ropts, eps, opts.record_multipliers);
    for (const auto& [col, scale] : rw.fallbacks) {
      H.row(col) = (H.row(col) / scale).cwiseMax(eps);
    }
    st.absorb(std::move(rw));
    return st;
  };
  auto evaluate = [&] { return objective(V, W, H, p, Penalty<Scalar>::row_l1(lambda)); };
  auto residual = [&] { return max_residual(W, spheres); };
  auto after = [&](int it) {
    if (it < schedule.it_min || it > schedule.it_max) return;
    for (Index k = 0; k < K; ++k) {
      if (hoyer_sparsity(H.row(k)) < schedule.target_sp) lambda(k) *= schedule.rate_alpha;
    }
  };
  res.trace = detail::alternate(opts, step, evaluate, residual, after);
  return res;
}

}  // namespace betanmf
