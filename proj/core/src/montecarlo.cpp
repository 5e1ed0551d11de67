#include "noisyot/montecarlo.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <string>
#include <thread>

#include "noisyot/errors.hpp"
#include "noisyot/rng.hpp"
#include "noisyot/stats.hpp"

namespace noisyot {

namespace {

class CachedEvent {
public:
  explicit CachedEvent(EventFn fn) : fn_(std::move(fn)) {}

  EventOutcome operator()(const std::vector<std::uint32_t>& counts) {
    auto it = cache_.find(counts);
    if (it != cache_.end()) return it->second;
    const auto out = fn_(counts);
    cache_.emplace(counts, out);
    return out;
  }

private:
  EventFn fn_;
  std::map<std::vector<std::uint32_t>, EventOutcome> cache_;
};

void validate(std::span<const std::size_t> n_grid, std::size_t reps) {
  if (n_grid.empty()) throw DomainError("error-rate estimation: empty N grid");
  for (std::size_t k = 0; k < n_grid.size(); ++k) {
    if (n_grid[k] == 0) throw DomainError("error-rate estimation: N must be positive");
    if (k > 0 && n_grid[k] <= n_grid[k - 1]) {
      throw DomainError("error-rate estimation: N grid must be strictly increasing");
    }
  }
  if (reps == 0) throw DomainError("error-rate estimation: reps must be positive");
}

}  // namespace

void fit_report_slope(ErrorRateReport& report) {
  std::vector<double> xs, ys, ws;
  for (std::size_t k = 0; k < report.n_grid.size(); ++k) {
    if (report.sentinel[k] || !std::isfinite(report.log_prob[k])) continue;
    xs.push_back(static_cast<double>(report.n_grid[k]));
    ys.push_back(report.log_prob[k]);
    if (report.method == EstimationMethod::MonteCarlo) {
      // Delta method: var(log f) ~ (1 - f) / (reps f).
      const double r = static_cast<double>(report.reps[k]);
      const double f = report.errors[k] / r;
      ws.push_back(r * f / std::max(1.0 - f, 1.0 / r));
    }
  }
  const auto fit = fit_slope(xs, ys, ws);
  report.slope_defined = fit.defined;
  report.slope = fit.defined ? fit.slope : 0.0;
  report.slope_stderr = fit.stderr_slope;
}

ErrorRateReport estimate_event_rate(const ProbMeasure& latent, const Channel& ch,
                                    std::span<const std::size_t> n_grid, std::size_t reps,
                                    std::uint64_t seed, const EventFactory& make_event,
                                    const MonteCarloOptions& options) {
  validate(n_grid, reps);
  if (latent.size() != ch.sources()) {
    throw DimensionError("error-rate estimation: measure does not fit the channel");
  }
  const std::size_t grid = n_grid.size();
  ErrorRateReport report;
  report.n_grid.assign(n_grid.begin(), n_grid.end());
  report.errors.assign(grid, 0.0);
  report.reps.assign(grid, 0);
  report.log_prob.assign(grid, 0.0);
  report.sentinel.assign(grid, 0);
  report.log_upper_bound.assign(grid, 0.0);
  report.mean_value.assign(grid, 0.0);

  if (options.exact_binary && ch.observations() == 2) {
    report.method = EstimationMethod::ExactBinomial;
    const double q = std::clamp(convolve(ch, latent.weights())[1], 0.0, 1.0);
    CachedEvent event(make_event());
    std::vector<std::uint32_t> counts(2);
    for (std::size_t g = 0; g < grid; ++g) {
      const std::size_t n = n_grid[g];
      LogSum hits;
      double mean = 0.0, weight = 0.0;
      for (std::size_t k = 0; k <= n; ++k) {
        const double lp = log_binomial_pmf(n, k, q);
        if (std::isinf(lp)) continue;
        counts[0] = static_cast<std::uint32_t>(n - k);
        counts[1] = static_cast<std::uint32_t>(k);
        const auto out = event(counts);
        if (!std::isnan(out.value)) {
          mean += std::exp(lp) * out.value;
          weight += std::exp(lp);
        }
        if (out.hit) hits.add(lp);
      }
      report.log_prob[g] = hits.value();
      report.errors[g] = std::exp(report.log_prob[g]);
      report.sentinel[g] = std::isinf(report.log_prob[g]) ? 1 : 0;
      report.log_upper_bound[g] = report.log_prob[g];
      report.mean_value[g] = weight > 0.0 ? mean / weight : std::nan("");
    }
    fit_report_slope(report);
    return report;
  }

  report.method = EstimationMethod::MonteCarlo;
  const NoisySampler sampler(latent, ch);
  const unsigned threads = std::max(1u, options.threads);
  std::vector<char> hit(reps);
  std::vector<double> value(reps);

  for (std::size_t g = 0; g < grid; ++g) {
    const std::size_t n = n_grid[g];
    const auto work = [&](std::size_t begin, std::size_t end) {
      CachedEvent event(make_event());
      std::vector<std::uint32_t> counts;
      for (std::size_t rep = begin; rep < end; ++rep) {
        sampler.draw_counts(n, substream_seed(seed, n, rep), counts);
        const auto out = event(counts);
        hit[rep] = out.hit ? 1 : 0;
        value[rep] = out.value;
      }
    };
    if (threads == 1) {
      work(0, reps);
    } else {
      std::vector<std::thread> pool;
      std::exception_ptr failure;
      std::mutex failure_mutex;
      for (unsigned t = 0; t < threads; ++t) {
        const std::size_t begin = reps * t / threads;
        const std::size_t end = reps * (t + 1) / threads;
        pool.emplace_back([&, begin, end] {
          try {
            work(begin, end);
          } catch (...) {
            const std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        });
      }
      for (auto& th : pool) th.join();
      if (failure) std::rethrow_exception(failure);
    }
    // Reduce serially so the sums never depend on the thread count.
    std::size_t count = 0, valued = 0;
    double total = 0.0;
    for (std::size_t rep = 0; rep < reps; ++rep) {
      count += static_cast<std::size_t>(hit[rep]);
      if (std::isnan(value[rep])) continue;
      total += value[rep];
      ++valued;
    }
    const double r = static_cast<double>(reps);
    report.reps[g] = reps;
    report.errors[g] = static_cast<double>(count);
    report.mean_value[g] = valued > 0 ? total / static_cast<double>(valued) : std::nan("");
    if (count == 0) {
      report.sentinel[g] = 1;
      report.log_prob[g] = -kInfinity;
      report.log_upper_bound[g] = std::log(3.0 / r);
    } else {
      report.log_prob[g] = std::log(static_cast<double>(count) / r);
      report.log_upper_bound[g] = report.log_prob[g];
    }
  }
  fit_report_slope(report);
  return report;
}

}  // namespace noisyot
