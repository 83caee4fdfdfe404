#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "betanmf/types.hpp"

namespace betanmf {

enum class Noise { Gaussian, Poisson, GammaMultiplicative };

std::optional<Noise> parse_noise(const std::string& name);
std::string to_string(Noise n);

struct SynthData {
  Matrix<double> V;
  Matrix<double> W;  // ground truth
  Matrix<double> H;
};

/// Applies the noise model to a clean product P:
///   gaussian: max(0, P + level N(0,1))
///   poisson:  level * Poisson(P / level)
///   gamma:    P ⊙ Gamma(1/level^2, level^2)   (unit mean, std level)
/// level = 0 returns P unchanged.
Matrix<double> corrupt(const Matrix<double>& P, Noise noise, double level, std::uint64_t seed);

/// W uniform on (0,1], H columns Dirichlet(1,...,1).
SynthData synth_simplex(Index F, Index K, Index N, Noise noise, double level, std::uint64_t seed);

/// Columns of W on the unit simplex; the first K columns of H are the
/// identity (pure pixels), the rest Dirichlet(1,...,1). Every column of the
/// clean product lies in the convex hull of the columns of W.
SynthData synth_separable(Index F, Index K, Index N, Noise noise, double level, std::uint64_t seed);

/// W uniform on (0,1]; each entry of H is active with probability
/// `density` and then uniform on (0,1]; every row and column keeps at least
/// one active entry.
SynthData synth_sparse(Index F, Index K, Index N, double density, Noise noise, double level, std::uint64_t seed);

}  // namespace betanmf
