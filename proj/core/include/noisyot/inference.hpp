#pragma once

// The test family h^delta: accept the null P0 iff I^delta(P'_N, P0) <= r.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>

#include "noisyot/channels.hpp"
#include "noisyot/measures.hpp"
#include "noisyot/montecarlo.hpp"
#include "noisyot/rate.hpp"

namespace noisyot {

struct TestSpec {
  ProbMeasure null_measure;
  std::optional<ProbMeasure> alt_measure{};
  Channel channel;
  double radius = 0.0;
  double delta = 0.0;
};

enum class TestDecision { AcceptNull, RejectNull };

/// Throws DomainError/DimensionError for an inconsistent spec.
void validate(const TestSpec& spec);

/// Ties within the solver tolerance accept the null.
TestDecision h_delta_test(const ProbMeasure& p_emp, const TestSpec& spec,
                          const SmoothedRateOptions& options = {});

/// Rejection frequency of h^delta under data drawn from P0 through the channel.
ErrorRateReport type1_rate(const TestSpec& spec, std::span<const std::size_t> n_grid,
                           std::size_t reps, std::uint64_t seed,
                           const MonteCarloOptions& options = {});

/// Acceptance frequency under data drawn from P1. Uses the same streams as
/// type1_rate, so with P1 = P0 the two frequencies sum to one.
ErrorRateReport type2_rate(const TestSpec& spec, std::span<const std::size_t> n_grid,
                           std::size_t reps, std::uint64_t seed,
                           const MonteCarloOptions& options = {});

}  // namespace noisyot
