#pragma once

#include <optional>
#include <ostream>
#include <string>

#include "betanmf/algorithms.hpp"

namespace betanmf {

enum class Model { Baseline, Constrained, Ssnmf, Minvol, SparseSphere };

std::optional<Model> parse_model(const std::string& name);
std::string to_string(Model m);

/// Everything one CLI fit needs. Paths other than `input` may be empty.
struct RunManifest {
  Model model{Model::Baseline};
  std::string input;
  std::string w0;
  std::string h0;
  std::string constraints;
  std::string out_dir{"."};
  SolverOptions<double> solver{};
  Index rank{2};
  double lambda{0};
  double delta{0.1};
  double rho{1};
  double target_sparsity{0.5};
  double alpha_rate{1.05};
  int window_min{1};
  int window_max{-1};  // -1: up to the last iteration
  bool verify{false};
};

enum ExitCode : int { kOk = 0, kValidation = 2, kSolver = 3, kIo = 4 };

/// Throws ValidationError or io::IoError when the manifest is unusable.
void validate_manifest(const RunManifest& m);

/// Runs one fit and writes W.csv, H.csv, trace.csv and summary.json into
/// m.out_dir. Failures are reported as a one-line JSON record on `err` and
/// mapped to the exit codes above.
int run(const RunManifest& m, std::ostream& err);

}  // namespace betanmf
