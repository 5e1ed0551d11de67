#include "noisyot/inference.hpp"

#include <cmath>

#include "noisyot/errors.hpp"

namespace noisyot {

namespace {

EventFactory test_event(const TestSpec& spec, bool count_rejections) {
  return [&spec, count_rejections]() -> EventFn {
    return [&spec, count_rejections](std::span<const std::uint32_t> counts) {
      const auto decision = h_delta_test(empirical_from_counts(counts), spec);
      const bool reject = decision == TestDecision::RejectNull;
      return EventOutcome{reject == count_rejections, 0.0};
    };
  };
}

}  // namespace

void validate(const TestSpec& spec) {
  if (!(spec.radius > 0.0) || !std::isfinite(spec.radius)) {
    throw DomainError("test spec: radius must be a positive real");
  }
  if (!(spec.delta >= 0.0) || !std::isfinite(spec.delta)) {
    throw DomainError("test spec: delta must be a nonnegative real");
  }
  if (spec.null_measure.size() != spec.channel.sources()) {
    throw DimensionError("test spec: null measure does not fit the channel");
  }
  if (spec.alt_measure && spec.alt_measure->size() != spec.channel.sources()) {
    throw DimensionError("test spec: alternative measure does not fit the channel");
  }
}

TestDecision h_delta_test(const ProbMeasure& p_emp, const TestSpec& spec,
                          const SmoothedRateOptions& options) {
  const auto eval = smoothed_rate(p_emp, spec.null_measure, spec.channel, spec.delta, options);
  return eval.value <= spec.radius + options.tol ? TestDecision::AcceptNull
                                                 : TestDecision::RejectNull;
}

ErrorRateReport type1_rate(const TestSpec& spec, std::span<const std::size_t> n_grid,
                           std::size_t reps, std::uint64_t seed,
                           const MonteCarloOptions& options) {
  validate(spec);
  return estimate_event_rate(spec.null_measure, spec.channel, n_grid, reps, seed,
                             test_event(spec, true), options);
}

ErrorRateReport type2_rate(const TestSpec& spec, std::span<const std::size_t> n_grid,
                           std::size_t reps, std::uint64_t seed,
                           const MonteCarloOptions& options) {
  validate(spec);
  if (!spec.alt_measure) throw DomainError("type2_rate: the spec has no alternative measure");
  return estimate_event_rate(*spec.alt_measure, spec.channel, n_grid, reps, seed,
                             test_event(spec, false), options);
}

}  // namespace noisyot
