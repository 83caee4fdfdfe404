#include "betanmf/run.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>

#include "betanmf/io.hpp"
#include "betanmf/oracle.hpp"
#include "json.hpp"

namespace betanmf {

namespace fs = std::filesystem;
using nlohmann::json;

std::optional<Model> parse_model(const std::string& name) {
  if (name == "baseline") return Model::Baseline;
  if (name == "constrained") return Model::Constrained;
  if (name == "ssnmf") return Model::Ssnmf;
  if (name == "minvol") return Model::Minvol;
  if (name == "sparse-sphere") return Model::SparseSphere;
  return std::nullopt;
}

std::string to_string(Model m) {
  switch (m) {
    case Model::Baseline:
      return "baseline";
    case Model::Constrained:
      return "constrained";
    case Model::Ssnmf:
      return "ssnmf";
    case Model::Minvol:
      return "minvol";
    case Model::SparseSphere:
      return "sparse-sphere";
  }
  return "unknown";
}

namespace {

int window_end(const RunManifest& m) { return m.window_max < 0 ? m.solver.max_iters : m.window_max; }

json manifest_json(const RunManifest& m) {
  const auto& s = m.solver;
  json j = {
      {"model", to_string(m.model)},
      {"input", m.input},
      {"w0", m.w0},
      {"h0", m.h0},
      {"constraints", m.constraints},
      {"out", m.out_dir},
      {"rank", m.rank},
      {"beta", s.beta},
      {"iters", s.max_iters},
      {"seed", s.seed},
      {"tol_residual", s.tol_residual},
      {"floor_eps", s.floor_eps},
      {"objective_every", s.objective_every},
      {"verify", m.verify},
  };
  if (m.model == Model::Minvol) {
    j["lambda"] = m.lambda;
    j["delta"] = m.delta;
  }
  if (m.model == Model::SparseSphere) {
    j["lambda"] = m.lambda;
    j["rho"] = m.rho;
    j["target_sparsity"] = m.target_sparsity;
    j["alpha_rate"] = m.alpha_rate;
    j["schedule_window"] = {m.window_min, window_end(m)};
  }
  return j;
}

void check_file(const std::string& path, const char* what) {
  if (!path.empty() && !fs::is_regular_file(path)) throw io::IoError(std::string(what) + " '" + path + "' does not exist");
}

// Newton against the brute-force minimizer for every linear block of size
// 2 or 3, at the final factors.
json verify_linear_blocks(const Matrix<double>& V, const Matrix<double>& W, const Matrix<double>& H,
                          const ConstraintSet<double>& csW, const ConstraintSet<double>& csH, const BetaParams<double>& p,
                          const RootOptions<double>& ropts) {
  constexpr double kTolerance = 1e-5;
  constexpr std::size_t kMaxBlocks = 20;
  std::size_t checked = 0;
  double worst = 0;
  auto check = [&](const Matrix<double>& X, const MajorizerCoefficients<double>& coeff,
                   const ConstraintSet<double>& cs) {
    std::size_t here = 0;
    for (const auto& lc : cs.linear) {
      if (lc.set.size() < 2 || lc.set.size() > 3 || here >= kMaxBlocks) continue;
      const auto newton = update_linear_constrained(X, coeff, lc, p, ropts);
      std::vector<EntryFunction<double>> g;
      for (const auto& e : lc.set) g.push_back(majorizer_entry(X(e.row, e.col), coeff.C(e.row, e.col), coeff.D(e.row, e.col), p));
      const Vector<double> ref = minimize_majorizer_on_simplex_slice(g, lc.weights, lc.rhs, OracleConfig<double>{});
      worst = std::max(worst, (ref - newton.entries).cwiseAbs().maxCoeff());
      ++here;
    }
    checked += here;
  };
  check(H, mu_coefficients(V, W, H, p), csH);
  check(W, mu_coefficients_for_W(V, W, H, p), csW);
  return {{"applicable", true},
          {"blocks_checked", checked},
          {"max_abs_difference", worst},
          {"tolerance", kTolerance},
          {"agree", worst <= kTolerance}};
}

json error_record(int code, const char* kind, const std::string& message) {
  return {{"status", "error"}, {"exit_code", code}, {"kind", kind}, {"message", message}};
}

int run_checked(const RunManifest& m) {
  validate_manifest(m);
  Matrix<double> V = io::load_matrix(m.input);
  io::require_nonnegative(V, m.input);
  const BetaParams<double> p(m.solver.beta);
  try {
    detail::require_admissible(V, p);
  } catch (const DomainError& e) {
    throw ValidationError(m.input + ": " + e.what());
  }
  InitialFactors<double> init;
  if (!m.w0.empty()) init.W = io::load_matrix(m.w0);
  if (!m.h0.empty()) init.H = io::load_matrix(m.h0);

  io::ConstraintFile cf;
  if (!m.constraints.empty()) cf = io::load_constraints(m.constraints);

  fs::create_directories(m.out_dir);
  const auto t0 = std::chrono::steady_clock::now();
  FitResult<double> fit;
  switch (m.model) {
    case Model::Baseline:
      fit = fit_baseline(V, m.rank, m.solver, init);
      break;
    case Model::Constrained:
      fit = fit_constrained(V, m.rank, cf.W, cf.H, m.solver, init);
      break;
    case Model::Ssnmf:
      fit = fit_ssnmf(V, m.rank, m.solver, init);
      cf.H = simplex_columns<double>(m.rank, V.cols());
      break;
    case Model::Minvol:
      fit = fit_minvol_kl(V, m.rank, m.lambda, m.delta, m.solver, init);
      break;
    case Model::SparseSphere: {
      SparsitySchedule<double> sched;
      sched.lambda0 = Vector<double>::Constant(m.rank, m.lambda);
      sched.rate_alpha = m.alpha_rate;
      sched.target_sp = m.target_sparsity;
      sched.it_min = m.window_min;
      sched.it_max = window_end(m);
      fit = fit_sparse_sphere_kl(V, m.rank, sched, m.rho, m.solver, init);
      break;
    }
  }
  const double total_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const fs::path out(m.out_dir);
  io::save_matrix(fit.W, (out / "W.csv").string());
  io::save_matrix(fit.H, (out / "H.csv").string());
  io::write_trace_csv(fit.trace, (out / "trace.csv").string());

  const auto& last = fit.trace.rows.back();
  double newton_s = 0, update_s = 0;
  for (const auto& r : fit.trace.rows) {
    newton_s += r.newton_s;
    update_s += r.update_s;
  }
  json summary = {
      {"status", "ok"},
      {"model", to_string(m.model)},
      {"iterations", m.solver.max_iters},
      {"final",
       {{"objective", last.objective},
        {"divergence", last.divergence},
        {"penalty", last.penalty},
        {"max_constraint_residual", last.max_residual}}},
      {"max_constraint_residual_all_rows", fit.trace.max_residual()},
      {"fallback_count", fit.trace.total_fallbacks()},
      {"timing",
       {{"total_s", total_s},
        {"updates_s", update_s},
        {"per_iteration_s", update_s / m.solver.max_iters},
        {"newton_s", newton_s}}},
      {"manifest", manifest_json(m)},
  };
  if (m.model == Model::SparseSphere) {
    summary["lambda_final"] = std::vector<double>(fit.lambda.data(), fit.lambda.data() + fit.lambda.size());
    std::vector<double> sp;
    for (Index k = 0; k < fit.H.rows(); ++k) sp.push_back(hoyer_sparsity(fit.H.row(k)));
    summary["row_sparsity"] = sp;
  }
  if (m.verify) {
    if (m.model == Model::Baseline || m.model == Model::Constrained || m.model == Model::Ssnmf) {
      summary["verify"] = verify_linear_blocks(V, fit.W, fit.H, cf.W, cf.H, p, detail::root_options(m.solver));
    } else {
      summary["verify"] = {{"applicable", false}, {"reason", "oracle covers separable linear-constraint blocks only"}};
    }
  }
  std::ofstream js(out / "summary.json");
  if (!js) throw io::IoError((out / "summary.json").string() + ": cannot open for writing");
  js << summary.dump(2) << '\n';
  if (!js) throw io::IoError((out / "summary.json").string() + ": write failed");
  return kOk;
}

}  // namespace

void validate_manifest(const RunManifest& m) {
  if (m.input.empty()) throw ValidationError("an input matrix is required");
  check_file(m.input, "input");
  check_file(m.w0, "initial W");
  check_file(m.h0, "initial H");
  check_file(m.constraints, "constraint file");
  if (m.rank < 1) throw ValidationError("rank must be at least 1");
  if (m.solver.max_iters < 1) throw ValidationError("iters must be at least 1");
  if (!std::isfinite(m.solver.beta)) throw ValidationError("beta must be finite");
  if (!m.constraints.empty() && m.model != Model::Constrained) {
    throw ValidationError("a constraint file is only used by the constrained model");
  }
  if ((m.model == Model::Minvol || m.model == Model::SparseSphere) && m.solver.beta != 1.0) {
    throw ValidationError(to_string(m.model) + " is defined for beta = 1 only");
  }
  if (!(m.lambda >= 0)) throw ValidationError("lambda must be nonnegative");
  if (!(m.delta > 0)) throw ValidationError("delta must be positive");
  if (!(m.rho > 0)) throw ValidationError("rho must be positive");
  if (!(m.target_sparsity >= 0 && m.target_sparsity <= 1)) throw ValidationError("target sparsity must lie in [0, 1]");
  if (!(m.alpha_rate > 1)) throw ValidationError("alpha rate must exceed 1");
  const int b = window_end(m);
  if (m.window_min < 0 || m.window_min > b || b > m.solver.max_iters) {
    throw ValidationError("schedule window must satisfy 0 <= a <= b <= iters");
  }
}

int run(const RunManifest& m, std::ostream& err) {
  try {
    return run_checked(m);
  } catch (const ValidationError& e) {
    err << error_record(kValidation, "validation", e.what()).dump() << '\n';
    return kValidation;
  } catch (const io::IoError& e) {
    err << error_record(kIo, "io", e.what()).dump() << '\n';
    return kIo;
  } catch (const fs::filesystem_error& e) {
    err << error_record(kIo, "io", e.what()).dump() << '\n';
    return kIo;
  } catch (const RootError& e) {
    err << error_record(kSolver, "solver", e.what()).dump() << '\n';
    return kSolver;
  } catch (const DomainError& e) {
    err << error_record(kSolver, "solver", e.what()).dump() << '\n';
    return kSolver;
  }
}

}  // namespace betanmf
