#pragma once

// Entropic optimal transport with unit regularization:
//
//   D_W(mu, nu) = min_{T in Pi(mu, nu)} <d, T> + KL(T, mu x nu),
//
// solved by Sinkhorn scaling in the log domain.

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "noisyot/channels.hpp"
#include "noisyot/matrix.hpp"
#include "noisyot/measures.hpp"

namespace noisyot {

/// Coupling of row_marginal and col_marginal.
struct TransportPlan {
  Matrix matrix;
  ProbMeasure row_marginal;
  ProbMeasure col_marginal;
};

struct SinkhornOptions {
  double tol = 1e-10;
  int max_iter = 10000;
  /// Record the marginal error every this many iterations (0 disables).
  int checkpoint_every = 0;
  /// Initial column potential g (size of nu); zeros when absent.
  const std::vector<double>* warm_start = nullptr;
};

struct SinkhornReport {
  double value = 0.0;
  TransportPlan plan;
  int iterations = 0;
  /// Max of the L1 row and column marginal errors of `plan`.
  double final_marginal_error = 0.0;
  bool converged = false;
  std::vector<double> checkpoints;
  /// Dual potentials with T_ij = mu_i nu_j exp(f_i + g_j - d_ij). Entries
  /// outside the supports are zero.
  std::vector<double> f;
  std::vector<double> g;
};

/// Throws InfeasibleError when no coupling has finite cost.
SinkhornReport eot_distance(const ProbMeasure& mu, const ProbMeasure& nu, const Matrix& cost,
                            const SinkhornOptions& options = {});

/// True when some coupling of mu and nu avoids every +inf cost entry.
/// Decided by a max-flow over the finite-cost pattern.
bool has_feasible_plan(std::span<const double> mu, std::span<const double> nu,
                       const Matrix& cost);

/// Splitting of KL(T', T(P)) into transport, mutual information, latent and
/// observed terms. When T' is not absolutely continuous with respect to T(P)
/// every field is +inf and `violation` holds the offending entry.
struct ChainDecomposition {
  double transport = 0.0;
  double mutual_information = 0.0;
  double latent_kl = 0.0;
  double observed_kl = 0.0;
  double sum = 0.0;
  /// KL(T', T(P)) evaluated directly.
  double direct = 0.0;
  std::optional<std::pair<std::size_t, std::size_t>> violation;
};

ChainDecomposition kl_chain_decomposition(const Matrix& t_prime, const Channel& ch,
                                          const ProbMeasure& p);

}  // namespace noisyot
