#pragma once

// Frequency of an event of the noisy empirical counts across sample sizes,
// with the exponential rate fitted by least squares on log-frequencies.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "noisyot/channels.hpp"
#include "noisyot/measures.hpp"

namespace noisyot {

enum class EstimationMethod { MonteCarlo, ExactBinomial };

struct ErrorRateReport {
  std::vector<std::size_t> n_grid;
  /// Event counts (Monte Carlo) or event probabilities (exact enumeration).
  std::vector<double> errors;
  /// Replications per N; zero for exact enumeration.
  std::vector<std::size_t> reps;
  /// Natural log of the event frequency; -inf when no replication hit.
  std::vector<double> log_prob;
  /// Set for zero-count cells, which are left out of the fit.
  std::vector<char> sentinel;
  /// log(3 / reps) on sentinel cells (rule of three), else equal to log_prob.
  std::vector<double> log_upper_bound;
  /// Mean of the per-replication value returned by the event (e.g. a budget),
  /// ignoring NaN values; NaN when every value was NaN.
  std::vector<double> mean_value;
  double slope = 0.0;
  double slope_stderr = 0.0;
  bool slope_defined = false;
  EstimationMethod method = EstimationMethod::MonteCarlo;
};

struct EventOutcome {
  bool hit = false;
  double value = 0.0;
};

/// Must be a pure function of the counts; results are cached per thread.
using EventFn = std::function<EventOutcome(std::span<const std::uint32_t> counts)>;
/// Called once per worker thread so events may keep private scratch space.
using EventFactory = std::function<EventFn()>;

struct MonteCarloOptions {
  unsigned threads = 1;
  /// Enumerate all count vectors exactly when the observation alphabet is binary.
  bool exact_binary = true;
};

/// Replication `rep` at sample size N draws its data from stream
/// substream_seed(seed, N, rep), so the report is a pure function of the
/// arguments and does not depend on options.threads.
ErrorRateReport estimate_event_rate(const ProbMeasure& latent, const Channel& ch,
                                    std::span<const std::size_t> n_grid, std::size_t reps,
                                    std::uint64_t seed, const EventFactory& make_event,
                                    const MonteCarloOptions& options = {});

/// Refits the slope of `report` from its finite log_prob entries.
void fit_report_slope(ErrorRateReport& report);

}  // namespace noisyot
