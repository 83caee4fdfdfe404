// betanmf: fit constrained beta-NMF models and generate synthetic data.

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "betanmf/io.hpp"
#include "betanmf/run.hpp"
#include "betanmf/synth.hpp"
#include "json.hpp"

namespace {

int error_exit(int code, const char* kind, const std::string& msg) {
  std::cerr << nlohmann::json{{"status", "error"}, {"exit_code", code}, {"kind", kind}, {"message", msg}}.dump()
            << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace betanmf;
  CLI::App app{"Multiplicative updates for beta-NMF with exact equality constraints"};
  app.require_subcommand(1);

  RunManifest m;
  std::string model = "baseline";
  std::vector<int> window;
  auto* fit = app.add_subcommand("fit", "Factorize a nonnegative matrix");
  fit->add_option("--input,-i", m.input, "Data matrix V (.csv, .mtx)")->required();
  fit->add_option("--model", model, "baseline | constrained | ssnmf | minvol | sparse-sphere")
      ->capture_default_str()
      ->check(CLI::IsMember({"baseline", "constrained", "ssnmf", "minvol", "sparse-sphere"}));
  fit->add_option("--beta", m.solver.beta, "Divergence order")->capture_default_str();
  fit->add_option("--rank,-k", m.rank, "Factorization rank K")->capture_default_str();
  fit->add_option("--iters", m.solver.max_iters, "Number of iterations")->capture_default_str();
  fit->add_option("--seed", m.solver.seed, "Seed for the random initialization")->capture_default_str();
  fit->add_option("--lambda", m.lambda, "Penalty weight (minvol) or initial l1 weight (sparse-sphere)")
      ->capture_default_str();
  fit->add_option("--delta", m.delta, "Gram shift in logdet(W^T W + delta I)")->capture_default_str();
  fit->add_option("--rho", m.rho, "Squared column norm of W (sparse-sphere)")->capture_default_str();
  fit->add_option("--target-sparsity", m.target_sparsity, "Hoyer sparsity target of the rows of H")
      ->capture_default_str();
  fit->add_option("--alpha-rate", m.alpha_rate, "Growth factor of the l1 weights")->capture_default_str();
  fit->add_option("--schedule-window", window, "Iterations a,b during which the l1 weights may grow")
      ->delimiter(',')
      ->expected(2);
  fit->add_option("--constraints", m.constraints, "Constraint file (constrained model)");
  fit->add_option("--w0", m.w0, "Initial W");
  fit->add_option("--h0", m.h0, "Initial H");
  fit->add_option("--tol", m.solver.tol_residual, "Constraint residual tolerance")->capture_default_str();
  fit->add_option("--objective-every", m.solver.objective_every, "Trace row interval")->capture_default_str();
  fit->add_option("--out,-o", m.out_dir, "Output directory")->capture_default_str();
  fit->add_flag("--verify", m.verify, "Check constrained blocks against the brute-force oracle");

  std::string kind = "simplex", noise_name = "poisson", out_dir = ".";
  Index F = 50, K = 4, N = 500;
  double level = 0, density = 0.3;
  std::uint64_t seed = 0;
  auto* synth = app.add_subcommand("synth", "Write synthetic V, W_true, H_true");
  synth->add_option("--kind", kind, "simplex | separable | sparse")
      ->capture_default_str()
      ->check(CLI::IsMember({"simplex", "separable", "sparse"}));
  synth->add_option("--rows,-F", F, "Rows of V")->capture_default_str();
  synth->add_option("--rank,-k", K, "Rank")->capture_default_str();
  synth->add_option("--cols,-N", N, "Columns of V")->capture_default_str();
  synth->add_option("--noise", noise_name, "gaussian | poisson | gamma")
      ->capture_default_str()
      ->check(CLI::IsMember({"gaussian", "poisson", "gamma", "gamma-multiplicative"}));
  synth->add_option("--level", level, "Noise level (0: exact product)")->capture_default_str();
  synth->add_option("--density", density, "Active fraction of H (sparse kind)")->capture_default_str();
  synth->add_option("--seed", seed, "Seed")->capture_default_str();
  synth->add_option("--out,-o", out_dir, "Output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return error_exit(kValidation, "validation", e.what());
  }

  if (*fit) {
    m.model = *parse_model(model);
    if (window.size() == 2) {
      m.window_min = window[0];
      m.window_max = window[1];
    }
    return run(m, std::cerr);
  }

  try {
    const Noise noise = *parse_noise(noise_name);
    SynthData d;
    if (kind == "simplex") {
      d = synth_simplex(F, K, N, noise, level, seed);
    } else if (kind == "separable") {
      d = synth_separable(F, K, N, noise, level, seed);
    } else {
      d = synth_sparse(F, K, N, density, noise, level, seed);
    }
    std::filesystem::create_directories(out_dir);
    const std::filesystem::path out(out_dir);
    io::save_matrix(d.V, (out / "V.csv").string());
    io::save_matrix(d.W, (out / "W_true.csv").string());
    io::save_matrix(d.H, (out / "H_true.csv").string());
  } catch (const ValidationError& e) {
    return error_exit(kValidation, "validation", e.what());
  } catch (const std::exception& e) {
    return error_exit(kIo, "io", e.what());
  }
  return kOk;
}
