#pragma once

// Probability measures on a finite alphabet {0, ..., size-1}.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "noisyot/rng.hpp"

namespace noisyot {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// Nonnegative weights summing to one.
///
/// Construction accepts sums within 1e-9 of one and rescales them exactly;
/// anything further off, negative, or non-finite is rejected with DomainError.
class ProbMeasure {
public:
  ProbMeasure() = default;
  explicit ProbMeasure(std::vector<double> weights);

  static ProbMeasure uniform(std::size_t size);
  static ProbMeasure point_mass(std::size_t size, std::size_t at);
  /// Normalizes arbitrary nonnegative weights with a positive sum.
  static ProbMeasure normalized(std::vector<double> weights);

  std::size_t size() const noexcept { return w_.size(); }
  double operator[](std::size_t i) const { return w_[i]; }
  std::span<const double> weights() const noexcept { return w_; }
  const std::vector<double>& vector() const noexcept { return w_; }
  auto begin() const noexcept { return w_.begin(); }
  auto end() const noexcept { return w_.end(); }

  friend bool operator==(const ProbMeasure&, const ProbMeasure&) = default;

private:
  std::vector<double> w_;
};

/// Strictly positive reference weights, not necessarily normalized.
class BaseWeights {
public:
  BaseWeights() = default;
  explicit BaseWeights(std::vector<double> weights);

  /// All-ones counting measure.
  static BaseWeights counting(std::size_t size);

  std::size_t size() const noexcept { return w_.size(); }
  double operator[](std::size_t i) const { return w_[i]; }
  std::span<const double> weights() const noexcept { return w_; }

  friend bool operator==(const BaseWeights&, const BaseWeights&) = default;

private:
  std::vector<double> w_;
};

/// Draws from a finite alphabet together with the seed that produced them.
struct SampleRecord {
  std::uint64_t seed = 0;
  std::size_t support_size = 0;
  std::vector<std::uint32_t> indices;

  friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

/// sum_i p_i log(p_i / q_i) with 0 log(0/q) = 0 and p log(p/0) = +inf.
/// q may be unnormalized, in which case the result can be negative.
double kl_divergence(std::span<const double> p, std::span<const double> q);
double kl_divergence(const ProbMeasure& p, const ProbMeasure& q);
double kl_divergence(const ProbMeasure& p, const BaseWeights& q);

/// Total variation, (1/2) sum_i |p_i - q_i|.
double tv_distance(std::span<const double> p, std::span<const double> q);
double tv_distance(const ProbMeasure& p, const ProbMeasure& q);

ProbMeasure empirical_measure(const SampleRecord& samples);
ProbMeasure empirical_measure(std::span<const std::uint32_t> indices, std::size_t size);
ProbMeasure empirical_from_counts(std::span<const std::uint32_t> counts);

/// Per-symbol counts of a sample.
std::vector<std::uint32_t> count_indices(std::span<const std::uint32_t> indices,
                                         std::size_t size);

/// Inverse-CDF sampler over a fixed measure.
class DiscreteSampler {
public:
  explicit DiscreteSampler(std::span<const double> weights);
  std::uint32_t operator()(Rng& rng) const;
  std::size_t size() const noexcept { return cdf_.size(); }

private:
  std::vector<double> cdf_;
  std::uint32_t last_positive_ = 0;
};

/// n i.i.d. draws from p using stream Rng(seed).
SampleRecord sample_iid(const ProbMeasure& p, std::size_t n, std::uint64_t seed);

}  // namespace noisyot
