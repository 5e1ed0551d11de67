#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

namespace noisyot {

/// Least-squares line y = intercept + slope * x.
struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double stderr_slope = 0.0;
  std::size_t points = 0;
  /// False with fewer than two distinct x values.
  bool defined = false;
};

/// Weighted least squares. With empty weights this is ordinary least squares
/// and the standard error comes from the residuals; with weights taken as
/// inverse variances it is sqrt(1 / sum w (x - xbar)^2).
SlopeFit fit_slope(std::span<const double> x, std::span<const double> y,
                   std::span<const double> weights = {});

/// log C(n, k) + k log p + (n - k) log(1 - p), with 0 log 0 = 0.
double log_binomial_pmf(std::uint64_t n, std::uint64_t k, double p);

/// log of sum over k in [0, n] with predicate(k) of C(n,k) p^k (1-p)^(n-k),
/// accumulated by log-sum-exp. -inf when no count qualifies.
double log_exact_binomial_tail(double p, std::uint64_t n,
                               const std::function<bool(std::uint64_t)>& predicate);

double exact_binomial_tail(double p, std::uint64_t n,
                           const std::function<bool(std::uint64_t)>& predicate);

/// Streaming log-sum-exp accumulator.
class LogSum {
public:
  void add(double log_term);
  double value() const;

private:
  double top_ = -std::numeric_limits<double>::infinity();
  double scaled_ = 0.0;
};

}  // namespace noisyot
