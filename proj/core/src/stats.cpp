#include "noisyot/stats.hpp"

#include <cmath>
#include <limits>

#include "noisyot/errors.hpp"

namespace noisyot {

SlopeFit fit_slope(std::span<const double> x, std::span<const double> y,
                   std::span<const double> weights) {
  if (x.size() != y.size() || (!weights.empty() && weights.size() != x.size())) {
    throw DimensionError("fit_slope: size mismatch");
  }
  SlopeFit fit;
  fit.points = x.size();
  const bool weighted = !weights.empty();
  double sw = 0.0, sx = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double w = weighted ? weights[i] : 1.0;
    sw += w;
    sx += w * x[i];
    sy += w * y[i];
  }
  if (x.size() < 2 || !(sw > 0.0)) return fit;
  const double xbar = sx / sw;
  const double ybar = sy / sw;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double w = weighted ? weights[i] : 1.0;
    sxx += w * (x[i] - xbar) * (x[i] - xbar);
    sxy += w * (x[i] - xbar) * (y[i] - ybar);
  }
  if (!(sxx > 0.0)) return fit;
  fit.defined = true;
  fit.slope = sxy / sxx;
  fit.intercept = ybar - fit.slope * xbar;
  if (weighted) {
    fit.stderr_slope = std::sqrt(1.0 / sxx);
  } else if (x.size() > 2) {
    double rss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double r = y[i] - fit.intercept - fit.slope * x[i];
      rss += r * r;
    }
    fit.stderr_slope = std::sqrt(rss / static_cast<double>(x.size() - 2) / sxx);
  }
  return fit;
}

double log_binomial_pmf(std::uint64_t n, std::uint64_t k, double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("log_binomial_pmf: p must lie in [0, 1]");
  if (k > n) return -std::numeric_limits<double>::infinity();
  const double nd = static_cast<double>(n);
  const double kd = static_cast<double>(k);
  double out = std::lgamma(nd + 1.0) - std::lgamma(kd + 1.0) - std::lgamma(nd - kd + 1.0);
  if (k > 0) out += kd * std::log(p);
  if (k < n) out += (nd - kd) * std::log1p(-p);
  return out;
}

void LogSum::add(double log_term) {
  if (std::isinf(log_term) && log_term < 0) return;
  if (log_term <= top_) {
    scaled_ += std::exp(log_term - top_);
  } else {
    scaled_ = scaled_ * std::exp(top_ - log_term) + 1.0;
    top_ = log_term;
  }
}

double LogSum::value() const {
  if (scaled_ == 0.0) return -std::numeric_limits<double>::infinity();
  return top_ + std::log(scaled_);
}

double log_exact_binomial_tail(double p, std::uint64_t n,
                               const std::function<bool(std::uint64_t)>& predicate) {
  LogSum acc;
  for (std::uint64_t k = 0; k <= n; ++k) {
    if (predicate(k)) acc.add(log_binomial_pmf(n, k, p));
  }
  return acc.value();
}

double exact_binomial_tail(double p, std::uint64_t n,
                           const std::function<bool(std::uint64_t)>& predicate) {
  return std::exp(log_exact_binomial_tail(p, n, predicate));
}

}  // namespace noisyot
