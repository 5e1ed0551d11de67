#include "noisyot/channels.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "noisyot/errors.hpp"

namespace noisyot {

namespace {

constexpr double kRowTolerance = 1e-6;
// Kernel entries below this are flushed to an exact zero with cost +inf.
constexpr double kFlushThreshold = 1e-300;

Matrix kernel_from_cost(const Matrix& cost, const BaseWeights& base) {
  Matrix k(cost.rows(), cost.cols());
  for (std::size_t i = 0; i < cost.rows(); ++i) {
    for (std::size_t j = 0; j < cost.cols(); ++j) {
      const double d = cost(i, j);
      k(i, j) = std::isinf(d) && d > 0 ? 0.0 : std::exp(-d) * base[j];
      if (k(i, j) < kFlushThreshold) k(i, j) = 0.0;
    }
  }
  return k;
}

void check_rows(const Matrix& kernel, double tol) {
  const auto sums = kernel.row_sums();
  for (std::size_t i = 0; i < sums.size(); ++i) {
    if (!(std::abs(sums[i] - 1.0) <= tol)) {
      throw InvalidChannelError(i, "channel row " + std::to_string(i) + " sums to " +
                                       std::to_string(sums[i]) +
                                       "; each row must be a probability vector");
    }
  }
}

void normalize_rows(Matrix& kernel) {
  const auto sums = kernel.row_sums();
  for (std::size_t i = 0; i < kernel.rows(); ++i) {
    for (double& v : kernel.row(i)) v /= sums[i];
  }
}

Matrix cost_from_kernel(const Matrix& kernel, const BaseWeights& base) {
  Matrix cost(kernel.rows(), kernel.cols());
  for (std::size_t i = 0; i < kernel.rows(); ++i) {
    for (std::size_t j = 0; j < kernel.cols(); ++j) {
      const double k = kernel(i, j);
      cost(i, j) = k < kFlushThreshold ? kInfinity : -std::log(k / base[j]);
    }
  }
  return cost;
}

void validate_cost_shape(const Matrix& cost, const BaseWeights& base) {
  if (cost.rows() == 0 || cost.cols() == 0) throw DomainError("channel: empty cost matrix");
  if (cost.cols() != base.size()) {
    throw DimensionError("channel: cost has " + std::to_string(cost.cols()) +
                         " columns but base has " + std::to_string(base.size()) +
                         " weights");
  }
  for (double d : cost.data()) {
    if (std::isnan(d) || (std::isinf(d) && d < 0)) {
      throw DomainError("channel: cost entries must be real or +inf");
    }
  }
}

}  // namespace

Channel Channel::from_canonical_cost(Matrix cost, BaseWeights base) {
  validate_cost_shape(cost, base);
  Matrix kernel = kernel_from_cost(cost, base);
  check_rows(kernel, kRowTolerance);
  normalize_rows(kernel);
  // Flushed entries must carry +inf cost so the zero pattern matches.
  for (std::size_t i = 0; i < kernel.rows(); ++i) {
    for (std::size_t j = 0; j < kernel.cols(); ++j) {
      if (kernel(i, j) == 0.0) cost(i, j) = kInfinity;
    }
  }
  return Channel(std::move(cost), std::move(kernel), std::move(base));
}

Channel channel_from_cost(const Matrix& cost, const BaseWeights& base) {
  validate_cost_shape(cost, base);
  Matrix kernel = kernel_from_cost(cost, base);
  check_rows(kernel, kRowTolerance);
  normalize_rows(kernel);
  return Channel::from_canonical_cost(cost_from_kernel(kernel, base), base);
}

Channel channel_from_kernel(const Matrix& kernel) {
  for (double v : kernel.data()) {
    if (!std::isfinite(v) || v < 0.0) {
      throw DomainError("channel_from_kernel: entries must be finite and nonnegative");
    }
  }
  const auto base = BaseWeights::counting(kernel.cols());
  check_rows(kernel, kRowTolerance);
  return channel_from_cost(cost_from_kernel(kernel, base), base);
}

Channel channel_noiseless(std::size_t n) {
  if (n == 0) throw DomainError("channel_noiseless: n must be positive");
  Matrix cost(n, n, kInfinity);
  for (std::size_t i = 0; i < n; ++i) cost(i, i) = 0.0;
  return Channel::from_canonical_cost(std::move(cost), BaseWeights::counting(n));
}

Channel channel_irrelevant(const ProbMeasure& target, std::size_t n) {
  if (n == 0) throw DomainError("channel_irrelevant: n must be positive");
  Matrix kernel(n, target.size());
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(target.begin(), target.end(), kernel.row(i).begin());
  }
  return channel_from_kernel(kernel);
}

Channel channel_gaussian_grid(std::span<const double> source_grid,
                              std::span<const double> obs_grid, double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw DomainError("channel_gaussian_grid: sigma must be positive");
  }
  if (source_grid.empty() || obs_grid.empty()) {
    throw DomainError("channel_gaussian_grid: grids must be nonempty");
  }
  const auto increasing = [](std::span<const double> g) {
    return std::adjacent_find(g.begin(), g.end(), std::greater_equal<>()) == g.end();
  };
  if (!increasing(source_grid) || !increasing(obs_grid)) {
    throw DomainError("channel_gaussian_grid: grids must be strictly increasing");
  }
  Matrix kernel(source_grid.size(), obs_grid.size());
  const double scale = 1.0 / (2.0 * sigma * sigma);
  std::vector<double> logw(obs_grid.size());
  for (std::size_t i = 0; i < source_grid.size(); ++i) {
    for (std::size_t j = 0; j < obs_grid.size(); ++j) {
      const double diff = source_grid[i] - obs_grid[j];
      logw[j] = -diff * diff * scale;
    }
    // Shift by the row maximum so rows far from the observation grid keep
    // their nearest entries instead of underflowing entirely.
    const double top = *std::max_element(logw.begin(), logw.end());
    double total = 0.0;
    for (std::size_t j = 0; j < obs_grid.size(); ++j) {
      kernel(i, j) = std::exp(logw[j] - top);
      total += kernel(i, j);
    }
    for (double& v : kernel.row(i)) {
      v /= total;
      if (v < kFlushThreshold) v = 0.0;
    }
  }
  normalize_rows(kernel);
  return channel_from_kernel(kernel);
}

std::vector<double> convolve(const Channel& ch, std::span<const double> p) {
  if (p.size() != ch.sources()) {
    throw DimensionError("convolve: measure has size " + std::to_string(p.size()) +
                         " but channel has " + std::to_string(ch.sources()) + " sources");
  }
  std::vector<double> out(ch.observations(), 0.0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    const auto row = ch.row(i);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += p[i] * row[j];
  }
  return out;
}

ProbMeasure convolve(const Channel& ch, const ProbMeasure& p) {
  return ProbMeasure(convolve(ch, p.weights()));
}

JointMeasure joint_measure(const Channel& ch, const ProbMeasure& p) {
  if (p.size() != ch.sources()) throw DimensionError("joint_measure: size mismatch");
  JointMeasure t{Matrix(ch.sources(), ch.observations())};
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto row = ch.row(i);
    for (std::size_t j = 0; j < ch.observations(); ++j) t.matrix(i, j) = p[i] * row[j];
  }
  return t;
}

NoisySampler::NoisySampler(const ProbMeasure& p, const Channel& ch)
    : latent_(p.weights()), observations_(ch.observations()) {
  if (p.size() != ch.sources()) throw DimensionError("sample_noisy: size mismatch");
  rows_.reserve(ch.sources());
  for (std::size_t i = 0; i < ch.sources(); ++i) rows_.emplace_back(ch.row(i));
}

void NoisySampler::draw(std::size_t n, std::uint64_t seed,
                        std::vector<std::uint32_t>& indices) const {
  if (n == 0) throw DomainError("sample_noisy: n must be positive");
  Rng rng(seed);
  indices.resize(n);
  for (auto& idx : indices) {
    const auto latent = latent_(rng);
    idx = rows_[latent](rng);
  }
}

void NoisySampler::draw_counts(std::size_t n, std::uint64_t seed,
                               std::vector<std::uint32_t>& counts) const {
  if (n == 0) throw DomainError("sample_noisy: n must be positive");
  Rng rng(seed);
  counts.assign(observations_, 0);
  for (std::size_t k = 0; k < n; ++k) {
    const auto latent = latent_(rng);
    ++counts[rows_[latent](rng)];
  }
}

SampleRecord sample_noisy(const ProbMeasure& p, const Channel& ch, std::size_t n,
                          std::uint64_t seed) {
  const NoisySampler sampler(p, ch);
  SampleRecord rec{seed, ch.observations(), {}};
  sampler.draw(n, seed, rec.indices);
  return rec;
}

}  // namespace noisyot
