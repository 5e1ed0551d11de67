#include <doctest.h>

#include <cmath>

#include "generators.hpp"
#include "noisyot/errors.hpp"
#include "noisyot/inference.hpp"
#include "noisyot/stats.hpp"
#include "oracles.hpp"

using namespace noisyot;

namespace {

TestSpec binary_spec(double r, double delta) {
  return TestSpec{.null_measure = ProbMeasure({0.5, 0.5}),
                  .alt_measure = ProbMeasure({0.9, 0.1}),
                  .channel = channel_noiseless(2),
                  .radius = r,
                  .delta = delta};
}

/// Upper end of {x : KL([x, 1-x], [1/2, 1/2]) <= r}, by bisection.
double kl_ball_edge(double r) {
  double lo = 0.5, hi = 1.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (oracle::kl2(mid, 0.5) <= r ? lo : hi) = mid;
  }
  return lo;
}

}  // namespace

TEST_CASE("h_delta_test examples") {
  const auto ch = channel_from_kernel(Matrix{{0.9, 0.1}, {0.2, 0.8}});
  TestSpec spec{.null_measure = ProbMeasure({0.3, 0.7}), .channel = ch, .radius = 1e-6, .delta = 0.0};
  CHECK(h_delta_test(convolve(ch, spec.null_measure), spec) == TestDecision::AcceptNull);
  spec.delta = 1.0;
  CHECK(h_delta_test(ProbMeasure({1.0, 0.0}), spec) == TestDecision::AcceptNull);

  auto b = binary_spec(0.05, 0.01);
  const auto p_emp = ProbMeasure({0.95, 0.05});
  CHECK(oracle::smoothed_rate_binary(0.95, 0.5, 0.01) ==
        doctest::Approx(oracle::kl2(0.94, 0.5)).epsilon(1e-9));
  CHECK(h_delta_test(p_emp, b) == TestDecision::RejectNull);
}

TEST_CASE("acceptance at delta = 0 is reachable on finite alphabets") {
  auto b = binary_spec(0.05, 0.0);
  CHECK(h_delta_test(ProbMeasure({0.5, 0.5}), b) == TestDecision::AcceptNull);
  CHECK(h_delta_test(ProbMeasure({0.6, 0.4}), b) == TestDecision::AcceptNull);
}

TEST_CASE("boundary ties accept the null") {
  const double x = 0.7;
  auto b = binary_spec(oracle::kl2(x, 0.5), 0.0);
  CHECK(h_delta_test(ProbMeasure({x, 1 - x}), b) == TestDecision::AcceptNull);
}

TEST_CASE("acceptance sets are nested in r and in delta") {
  testgen::Gen g(12);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = g.index(1, 4), m = g.index(2, 4);
    const auto ch = g.channel(n, m, 0.2);
    TestSpec spec{.null_measure = g.measure(n), .channel = ch, .radius = 0.01, .delta = 0.0};
    const auto p_emp = g.measure(m, 0.3);
    bool accepted = false;
    for (double r : {0.01, 0.03, 0.1, 0.3, 1.0}) {
      spec.radius = r;
      const bool acc = h_delta_test(p_emp, spec) == TestDecision::AcceptNull;
      CHECK((!accepted || acc));
      accepted = acc;
    }
    spec.radius = 0.05;
    accepted = false;
    for (double d : {0.0, 0.01, 0.05, 0.1, 0.3}) {
      spec.delta = d;
      const bool acc = h_delta_test(p_emp, spec) == TestDecision::AcceptNull;
      CHECK((!accepted || acc));
      accepted = acc;
    }
  }
}

TEST_CASE("spec validation") {
  auto b = binary_spec(0.0, 0.0);
  CHECK_THROWS_AS(validate(b), DomainError);
  b = binary_spec(0.1, -1.0);
  CHECK_THROWS_AS(validate(b), DomainError);
  b = binary_spec(0.1, 0.0);
  b.null_measure = ProbMeasure({1.0});
  CHECK_THROWS_AS(validate(b), DimensionError);
}

TEST_CASE("binary type-I rate by exact enumeration") {
  const auto spec = binary_spec(0.05, 0.02);
  const std::vector<std::size_t> grid{50, 100, 200};
  const auto rep = type1_rate(spec, grid, 100000, 1);
  CHECK(rep.method == EstimationMethod::ExactBinomial);
  REQUIRE(rep.slope_defined);
  CHECK(rep.slope <= -0.05 + 0.02);

  // Rejection set from the closed-form acceptance interval of the binary case.
  const double edge = kl_ball_edge(0.05) + 0.02;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const std::uint64_t n = grid[k];
    const double tail = exact_binomial_tail(0.5, n, [&](std::uint64_t c) {
      const double x = double(c) / double(n);
      return std::abs(x - 0.5) > edge - 0.5 + 1e-9;
    });
    CHECK(rep.errors[k] == doctest::Approx(tail).epsilon(1e-6));
  }
}

TEST_CASE("binary type-II slope against the distance to the acceptance region") {
  const auto spec = binary_spec(0.05, 0.02);
  const std::vector<std::size_t> grid{50, 100, 200};
  const auto rep = type2_rate(spec, grid, 100000, 1);
  REQUIRE(rep.slope_defined);
  const double nearest = kl_ball_edge(0.05) + 0.02;
  const double target = -oracle::kl2(nearest, 0.9);
  CHECK(rep.slope == doctest::Approx(target).epsilon(0.2));
}

TEST_CASE("type-II with P1 = P0 is the complement of type-I") {
  const auto ch = channel_from_kernel(Matrix{{0.6, 0.3, 0.1}, {0.1, 0.3, 0.6}});
  TestSpec spec{.null_measure = ProbMeasure({0.4, 0.6}), .channel = ch, .radius = 0.02, .delta = 0.01};
  spec.alt_measure = spec.null_measure;
  const std::vector<std::size_t> grid{10, 20};
  const auto t1 = type1_rate(spec, grid, 500, 77);
  const auto t2 = type2_rate(spec, grid, 500, 77);
  for (std::size_t k = 0; k < grid.size(); ++k) CHECK(t1.errors[k] + t2.errors[k] == 500.0);
}

TEST_CASE("type-II without separation stays near one") {
  const auto ch = channel_from_kernel(Matrix{{0.6, 0.3, 0.1}, {0.1, 0.3, 0.6}});
  TestSpec spec{.null_measure = ProbMeasure({0.4, 0.6}), .channel = ch, .radius = 0.2, .delta = 0.05};
  spec.alt_measure = ProbMeasure({0.45, 0.55});
  const std::vector<std::size_t> grid{50, 100, 200};
  const auto t2 = type2_rate(spec, grid, 300, 5);
  CHECK(t2.errors.back() >= 299.0);
  CHECK(std::abs(t2.slope) <= 1e-3);
}

TEST_CASE("huge radius never rejects and yields sentinels") {
  const auto ch = channel_from_kernel(Matrix{{0.6, 0.3, 0.1}, {0.1, 0.3, 0.6}});
  TestSpec spec{.null_measure = ProbMeasure({0.4, 0.6}), .channel = ch, .radius = 10.0, .delta = 0.0};
  const std::vector<std::size_t> grid{10, 20, 40};
  const auto rep = type1_rate(spec, grid, 200, 9);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    CHECK(rep.errors[k] == 0.0);
    CHECK(rep.sentinel[k]);
    CHECK(std::isinf(rep.log_prob[k]));
    CHECK(rep.log_upper_bound[k] == doctest::Approx(std::log(3.0 / 200.0)));
  }
  CHECK_FALSE(rep.slope_defined);
}

TEST_CASE("type1_rate is deterministic and independent of threads") {
  const auto ch = channel_from_kernel(Matrix{{0.6, 0.3, 0.1}, {0.1, 0.3, 0.6}});
  TestSpec spec{.null_measure = ProbMeasure({0.4, 0.6}), .channel = ch, .radius = 0.02, .delta = 0.01};
  const std::vector<std::size_t> grid{10, 30};
  MonteCarloOptions serial, parallel;
  parallel.threads = 8;
  const auto a = type1_rate(spec, grid, 400, 3, serial);
  const auto b = type1_rate(spec, grid, 400, 3, parallel);
  CHECK(a.errors == b.errors);
  CHECK(a.slope == b.slope);
  CHECK(type1_rate(spec, grid, 400, 4).errors != a.errors);
}
