#include "noisyot/measures.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "noisyot/errors.hpp"

namespace noisyot {

namespace {

constexpr double kSumTolerance = 1e-9;

void require_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": size mismatch (" + std::to_string(a) +
                         " vs " + std::to_string(b) + ")");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// ProbMeasure / BaseWeights

ProbMeasure::ProbMeasure(std::vector<double> weights) : w_(std::move(weights)) {
  if (w_.empty()) throw DomainError("ProbMeasure: empty support");
  double total = 0.0;
  for (double v : w_) {
    if (!std::isfinite(v) || v < 0.0) {
      throw DomainError("ProbMeasure: weights must be finite and nonnegative");
    }
    total += v;
  }
  if (std::abs(total - 1.0) > kSumTolerance) {
    throw DomainError("ProbMeasure: weights sum to " + std::to_string(total) +
                      ", not 1");
  }
  for (double& v : w_) v /= total;
}

ProbMeasure ProbMeasure::uniform(std::size_t size) {
  if (size == 0) throw DomainError("ProbMeasure::uniform: size 0");
  return ProbMeasure(std::vector<double>(size, 1.0 / static_cast<double>(size)));
}

ProbMeasure ProbMeasure::point_mass(std::size_t size, std::size_t at) {
  if (at >= size) throw DimensionError("ProbMeasure::point_mass: index out of range");
  std::vector<double> w(size, 0.0);
  w[at] = 1.0;
  return ProbMeasure(std::move(w));
}

ProbMeasure ProbMeasure::normalized(std::vector<double> weights) {
  double total = 0.0;
  for (double v : weights) {
    if (!std::isfinite(v) || v < 0.0) {
      throw DomainError("ProbMeasure::normalized: weights must be finite and nonnegative");
    }
    total += v;
  }
  if (!(total > 0.0)) throw DomainError("ProbMeasure::normalized: zero total mass");
  for (double& v : weights) v /= total;
  return ProbMeasure(std::move(weights));
}

BaseWeights::BaseWeights(std::vector<double> weights) : w_(std::move(weights)) {
  if (w_.empty()) throw DomainError("BaseWeights: empty support");
  for (double v : w_) {
    if (!std::isfinite(v) || !(v > 0.0)) {
      throw DomainError("BaseWeights: weights must be finite and strictly positive");
    }
  }
}

BaseWeights BaseWeights::counting(std::size_t size) {
  return BaseWeights(std::vector<double>(size, 1.0));
}

// ---------------------------------------------------------------------------
// Divergences

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  require_same_size(p.size(), q.size(), "kl_divergence");
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0) return kInfinity;
    sum += p[i] * std::log(p[i] / q[i]);
  }
  return sum;
}

double kl_divergence(const ProbMeasure& p, const ProbMeasure& q) {
  // Rounding can leave a sum of order -1e-17 for p == q.
  return std::max(0.0, kl_divergence(p.weights(), q.weights()));
}

double kl_divergence(const ProbMeasure& p, const BaseWeights& q) {
  return kl_divergence(p.weights(), q.weights());
}

double tv_distance(std::span<const double> p, std::span<const double> q) {
  require_same_size(p.size(), q.size(), "tv_distance");
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) sum += std::abs(p[i] - q[i]);
  return 0.5 * sum;
}

double tv_distance(const ProbMeasure& p, const ProbMeasure& q) {
  return tv_distance(p.weights(), q.weights());
}

// ---------------------------------------------------------------------------
// Empirical measures and sampling

std::vector<std::uint32_t> count_indices(std::span<const std::uint32_t> indices,
                                         std::size_t size) {
  std::vector<std::uint32_t> counts(size, 0);
  for (std::uint32_t idx : indices) {
    if (idx >= size) {
      throw DimensionError("empirical_measure: index " + std::to_string(idx) +
                           " outside support of size " + std::to_string(size));
    }
    ++counts[idx];
  }
  return counts;
}

ProbMeasure empirical_from_counts(std::span<const std::uint32_t> counts) {
  std::uint64_t total = 0;
  for (auto c : counts) total += c;
  if (total == 0) throw DomainError("empirical_measure: empty sample");
  std::vector<double> w(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) {
    w[i] = static_cast<double>(counts[i]) / static_cast<double>(total);
  }
  return ProbMeasure(std::move(w));
}

ProbMeasure empirical_measure(std::span<const std::uint32_t> indices, std::size_t size) {
  if (indices.empty()) throw DomainError("empirical_measure: empty sample");
  const auto counts = count_indices(indices, size);
  return empirical_from_counts(counts);
}

ProbMeasure empirical_measure(const SampleRecord& samples) {
  return empirical_measure(samples.indices, samples.support_size);
}

DiscreteSampler::DiscreteSampler(std::span<const double> weights) : cdf_(weights.size()) {
  if (weights.empty()) throw DomainError("DiscreteSampler: empty support");
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    cdf_[i] = acc;
    if (weights[i] > 0.0) last_positive_ = static_cast<std::uint32_t>(i);
  }
  // Scale so the last cumulative value is exactly the total; a uniform draw
  // can then never fall past the final positive-mass symbol.
  for (double& c : cdf_) c /= acc;
  for (std::size_t i = last_positive_; i < cdf_.size(); ++i) cdf_[i] = 1.0;
}

std::uint32_t DiscreteSampler::operator()(Rng& rng) const {
  const double u = rng.uniform();
  const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  const auto idx = static_cast<std::uint32_t>(it - cdf_.begin());
  return std::min(idx, last_positive_);
}

SampleRecord sample_iid(const ProbMeasure& p, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw DomainError("sample_iid: n must be positive");
  const DiscreteSampler sampler(p.weights());
  Rng rng(seed);
  SampleRecord rec{seed, p.size(), {}};
  rec.indices.resize(n);
  for (auto& idx : rec.indices) idx = sampler(rng);
  return rec;
}

}  // namespace noisyot
