#include "betanmf/synth.hpp"

#include <algorithm>
#include <random>

namespace betanmf {

std::optional<Noise> parse_noise(const std::string& name) {
  if (name == "gaussian") return Noise::Gaussian;
  if (name == "poisson") return Noise::Poisson;
  if (name == "gamma" || name == "gamma-multiplicative") return Noise::GammaMultiplicative;
  return std::nullopt;
}

std::string to_string(Noise n) {
  switch (n) {
    case Noise::Gaussian:
      return "gaussian";
    case Noise::Poisson:
      return "poisson";
    case Noise::GammaMultiplicative:
      return "gamma-multiplicative";
  }
  return "unknown";
}

namespace {

double unit_open_left(std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return 1.0 - u(gen);
}

Matrix<double> uniform_matrix(Index r, Index c, std::mt19937_64& gen) {
  Matrix<double> M(r, c);
  for (Index j = 0; j < M.size(); ++j) M.data()[j] = unit_open_left(gen);
  return M;
}

void dirichlet_column(Eigen::Ref<Vector<double>> col, std::mt19937_64& gen) {
  std::exponential_distribution<double> e(1.0);
  for (Index k = 0; k < col.size(); ++k) col(k) = e(gen);
  col /= col.sum();
}

void check_dims(Index F, Index K, Index N, double level) {
  if (F < 1 || K < 1 || N < 1) throw ValidationError("synthetic data: dimensions must be positive");
  if (!(level >= 0)) throw ValidationError("synthetic data: noise level must be nonnegative");
}

}  // namespace

Matrix<double> corrupt(const Matrix<double>& P, Noise noise, double level, std::uint64_t seed) {
  if (!(level >= 0)) throw ValidationError("noise level must be nonnegative");
  if (level == 0) return P;
  std::mt19937_64 gen(seed);
  Matrix<double> V(P.rows(), P.cols());
  switch (noise) {
    case Noise::Gaussian: {
      std::normal_distribution<double> n(0.0, 1.0);
      for (Index j = 0; j < P.size(); ++j) V.data()[j] = std::max(0.0, P.data()[j] + level * n(gen));
      break;
    }
    case Noise::Poisson: {
      for (Index j = 0; j < P.size(); ++j) {
        const double rate = P.data()[j] / level;
        if (rate > 0) {
          std::poisson_distribution<long long> pois(rate);
          V.data()[j] = level * static_cast<double>(pois(gen));
        } else {
          V.data()[j] = 0;
        }
      }
      break;
    }
    case Noise::GammaMultiplicative: {
      const double shape = 1.0 / (level * level);
      std::gamma_distribution<double> g(shape, level * level);
      for (Index j = 0; j < P.size(); ++j) V.data()[j] = P.data()[j] * g(gen);
      break;
    }
  }
  return V;
}

SynthData synth_simplex(Index F, Index K, Index N, Noise noise, double level, std::uint64_t seed) {
  check_dims(F, K, N, level);
  std::mt19937_64 gen(seed);
  SynthData d;
  d.W = uniform_matrix(F, K, gen);
  d.H.resize(K, N);
  for (Index n = 0; n < N; ++n) dirichlet_column(d.H.col(n), gen);
  d.V = corrupt(d.W * d.H, noise, level, gen());
  return d;
}

SynthData synth_separable(Index F, Index K, Index N, Noise noise, double level, std::uint64_t seed) {
  check_dims(F, K, N, level);
  if (N < K) throw ValidationError("synthetic separable data: need N >= K");
  std::mt19937_64 gen(seed);
  SynthData d;
  d.W = uniform_matrix(F, K, gen);
  for (Index k = 0; k < K; ++k) d.W.col(k) /= d.W.col(k).sum();
  d.H.resize(K, N);
  d.H.leftCols(K).setIdentity();
  for (Index n = K; n < N; ++n) dirichlet_column(d.H.col(n), gen);
  d.V = corrupt(d.W * d.H, noise, level, gen());
  return d;
}

SynthData synth_sparse(Index F, Index K, Index N, double density, Noise noise, double level, std::uint64_t seed) {
  check_dims(F, K, N, level);
  if (!(density > 0 && density <= 1)) throw ValidationError("synthetic sparse data: density must lie in (0, 1]");
  std::mt19937_64 gen(seed);
  std::bernoulli_distribution active(density);
  SynthData d;
  d.W = uniform_matrix(F, K, gen);
  d.H = Matrix<double>::Zero(K, N);
  for (Index n = 0; n < N; ++n) {
    for (Index k = 0; k < K; ++k) {
      if (active(gen)) d.H(k, n) = unit_open_left(gen);
    }
  }
  std::uniform_int_distribution<Index> pick_k(0, K - 1), pick_n(0, N - 1);
  for (Index n = 0; n < N; ++n) {
    if ((d.H.col(n).array() == 0).all()) d.H(pick_k(gen), n) = unit_open_left(gen);
  }
  for (Index k = 0; k < K; ++k) {
    if ((d.H.row(k).array() == 0).all()) d.H(k, pick_n(gen)) = unit_open_left(gen);
  }
  d.V = corrupt(d.W * d.H, noise, level, gen());
  return d;
}

}  // namespace betanmf
