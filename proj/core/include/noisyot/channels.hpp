#pragma once

// Observation channels: a latent symbol i in {0..n-1} is observed as symbol j
// in {0..n'-1} with probability K(i, j) = exp(-d(i, j)) * m'(j).

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "noisyot/matrix.hpp"
#include "noisyot/measures.hpp"

namespace noisyot {

/// Row-stochastic observation kernel together with its cost matrix d and
/// base weights m'. Immutable after construction.
///
/// Invariants: rows of kernel() sum to one within 1e-9; kernel(i, j) == 0
/// exactly when cost(i, j) == +inf.
class Channel {
public:
  /// Builds the channel whose cost is taken verbatim; the kernel is
  /// exp(-cost) * base renormalized per row. Used when reloading a channel
  /// that was produced by one of the factories below, so the kernel is
  /// reproduced bit for bit.
  static Channel from_canonical_cost(Matrix cost, BaseWeights base);

  std::size_t sources() const noexcept { return kernel_.rows(); }
  std::size_t observations() const noexcept { return kernel_.cols(); }

  const Matrix& cost() const noexcept { return cost_; }
  const Matrix& kernel() const noexcept { return kernel_; }
  const BaseWeights& base() const noexcept { return base_; }

  std::span<const double> row(std::size_t i) const { return kernel_.row(i); }

  friend bool operator==(const Channel&, const Channel&) = default;

private:
  Channel(Matrix cost, Matrix kernel, BaseWeights base)
      : cost_(std::move(cost)), kernel_(std::move(kernel)), base_(std::move(base)) {}

  Matrix cost_;
  Matrix kernel_;
  BaseWeights base_;
};

/// Joint law T(P)(i, j) = P_i K(i, j) of a latent draw and its observation.
struct JointMeasure {
  Matrix matrix;

  std::vector<double> row_marginal() const { return matrix.row_sums(); }
  std::vector<double> col_marginal() const { return matrix.col_sums(); }
};

/// Channel from a cost matrix and base weights. Rows of exp(-d) m' must sum to
/// one within 1e-6 (InvalidChannelError names the first offending row); they
/// are renormalized and the cost recomputed as -log(K / m').
Channel channel_from_cost(const Matrix& cost, const BaseWeights& base);

/// Channel with the given row-stochastic kernel and counting base weights.
Channel channel_from_kernel(const Matrix& kernel);

/// Identity kernel: observations equal the latent symbol.
Channel channel_noiseless(std::size_t n);

/// Every row equals `target`: observations carry no information.
Channel channel_irrelevant(const ProbMeasure& target, std::size_t n);

/// Discretized Gaussian noise: K(i, j) proportional to
/// exp(-(source_i - obs_j)^2 / (2 sigma^2)), each row renormalized.
Channel channel_gaussian_grid(std::span<const double> source_grid,
                              std::span<const double> obs_grid, double sigma);

/// (O * P)_j = sum_i P_i K(i, j).
ProbMeasure convolve(const Channel& ch, const ProbMeasure& p);
std::vector<double> convolve(const Channel& ch, std::span<const double> p);

JointMeasure joint_measure(const Channel& ch, const ProbMeasure& p);

/// Draws latent symbols from p and passes each through the channel; only the
/// observed symbols are returned.
SampleRecord sample_noisy(const ProbMeasure& p, const Channel& ch, std::size_t n,
                          std::uint64_t seed);

/// Reusable form of sample_noisy for Monte Carlo loops: fills `counts` with
/// the per-symbol observation counts of n noisy draws from stream `seed`.
class NoisySampler {
public:
  NoisySampler(const ProbMeasure& p, const Channel& ch);
  void draw_counts(std::size_t n, std::uint64_t seed, std::vector<std::uint32_t>& counts) const;
  void draw(std::size_t n, std::uint64_t seed, std::vector<std::uint32_t>& indices) const;

private:
  DiscreteSampler latent_;
  std::vector<DiscreteSampler> rows_;
  std::size_t observations_;
};

}  // namespace noisyot
