#include <doctest.h>

#include <cmath>

#include "generators.hpp"
#include "noisyot/errors.hpp"
#include "noisyot/transport.hpp"
#include "oracles.hpp"

using namespace noisyot;

namespace {

double product_plan_cost(const ProbMeasure& mu, const ProbMeasure& nu, const Matrix& d) {
  double s = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    for (std::size_t j = 0; j < nu.size(); ++j) s += mu[i] * nu[j] * d(i, j);
  }
  return s;
}

double marginal_error(const SinkhornReport& r, const ProbMeasure& mu, const ProbMeasure& nu) {
  const auto rows = r.plan.matrix.row_sums();
  const auto cols = r.plan.matrix.col_sums();
  double e = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) e = std::max(e, std::abs(rows[i] - mu[i]));
  for (std::size_t j = 0; j < cols.size(); ++j) e = std::max(e, std::abs(cols[j] - nu[j]));
  return e;
}

}  // namespace

TEST_CASE("point masses give the unique plan") {
  const Matrix d{{1.0, 2.5}, {3.0, 4.0}};
  const auto r = eot_distance(ProbMeasure::point_mass(2, 0), ProbMeasure::point_mass(2, 1), d);
  CHECK(r.value == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(r.plan.matrix(0, 1) == doctest::Approx(1.0));
}

TEST_CASE("constant cost gives the product plan") {
  testgen::Gen g(4);
  const auto mu = g.measure(4), nu = g.measure(3);
  const auto r = eot_distance(mu, nu, Matrix(4, 3, 1.7));
  CHECK(r.value == doctest::Approx(1.7).epsilon(1e-10));
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 3; ++j) CHECK(r.plan.matrix(i, j) == doctest::Approx(mu[i] * nu[j]));
  }
}

TEST_CASE("2x2 value matches the one-parameter scan") {
  const double d[2][2] = {{0.0, 1.0}, {1.0, 0.0}};
  const auto r = eot_distance(ProbMeasure({0.5, 0.5}), ProbMeasure({0.5, 0.5}),
                              Matrix{{0.0, 1.0}, {1.0, 0.0}});
  CHECK(std::abs(r.value - oracle::eot_2x2(0.5, 0.5, d)) <= 1e-6);

  testgen::Gen g(12);
  for (int t = 0; t < 20; ++t) {
    const double mu0 = g.uniform(0.05, 0.95), nu0 = g.uniform(0.05, 0.95);
    const double c[2][2] = {{g.uniform(0, 3), g.uniform(0, 3)}, {g.uniform(0, 3), g.uniform(0, 3)}};
    const auto rep = eot_distance(ProbMeasure({mu0, 1 - mu0}), ProbMeasure({nu0, 1 - nu0}),
                                  Matrix{{c[0][0], c[0][1]}, {c[1][0], c[1][1]}});
    CHECK(std::abs(rep.value - oracle::eot_2x2(mu0, nu0, c, 200000)) <= 1e-6);
  }
}

TEST_CASE("random instances: feasibility, bracket and symmetry") {
  testgen::Gen g(99);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = g.index(1, 32), m = g.index(1, 32);
    const auto mu = g.measure(n, 0.2), nu = g.measure(m, 0.2);
    const auto d = g.cost(n, m);
    const auto r = eot_distance(mu, nu, d);
    CHECK(r.converged);
    CHECK(marginal_error(r, mu, nu) <= 1e-8);
    CHECK(r.value >= -1e-12);
    CHECK(r.value <= product_plan_cost(mu, nu, d) + 1e-9);
  }
  for (int t = 0; t < 30; ++t) {
    const std::size_t n = g.index(2, 10);
    auto d = g.cost(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      d(i, i) = 0.0;
      for (std::size_t j = 0; j < i; ++j) d(i, j) = d(j, i);
    }
    const auto a = g.measure(n), b = g.measure(n);
    CHECK(std::abs(eot_distance(a, b, d).value - eot_distance(b, a, d).value) <= 1e-8);
  }
}

TEST_CASE("checkpointed marginal error never increases") {
  testgen::Gen g(5);
  for (int t = 0; t < 30; ++t) {
    const std::size_t n = g.index(2, 20);
    SinkhornOptions opts;
    opts.checkpoint_every = 1;
    opts.tol = 1e-13;
    const auto r = eot_distance(g.measure(n), g.measure(n), g.cost(n, n, 8.0), opts);
    REQUIRE(r.checkpoints.size() >= 1);
    for (std::size_t k = 1; k < r.checkpoints.size(); ++k) {
      CHECK(r.checkpoints[k] <= r.checkpoints[k - 1] * (1 + 1e-12) + 1e-300);
    }
  }
}

TEST_CASE("large and infinite costs") {
  const double inf = kInfinity;
  const auto r = eot_distance(ProbMeasure({0.5, 0.5}), ProbMeasure({0.5, 0.5}),
                              Matrix{{0.0, 700.0}, {700.0, 0.0}});
  CHECK(std::isfinite(r.value));
  CHECK(r.value == doctest::Approx(std::log(2.0)).epsilon(1e-8));

  const auto diag = eot_distance(ProbMeasure({0.3, 0.7}), ProbMeasure({0.3, 0.7}),
                                 Matrix{{0.0, inf}, {inf, 0.0}});
  CHECK(diag.plan.matrix(0, 1) == 0.0);
  CHECK_THROWS_AS(eot_distance(ProbMeasure({0.3, 0.7}), ProbMeasure({0.5, 0.5}),
                               Matrix{{0.0, inf}, {inf, 0.0}}),
                  InfeasibleError);
  CHECK_FALSE(has_feasible_plan(std::vector<double>{0.3, 0.7}, std::vector<double>{0.5, 0.5},
                                Matrix{{0.0, inf}, {inf, 0.0}}));
  CHECK(has_feasible_plan(std::vector<double>{0.3, 0.7}, std::vector<double>{0.3, 0.7},
                          Matrix{{0.0, inf}, {inf, 0.0}}));
}

TEST_CASE("non-convergence is flagged, value still returned") {
  SinkhornOptions opts;
  opts.max_iter = 1;
  opts.tol = 1e-15;
  testgen::Gen g(8);
  const auto r = eot_distance(g.measure(6), g.measure(6), g.cost(6, 6, 10.0), opts);
  CHECK_FALSE(r.converged);
  CHECK(std::isfinite(r.value));
  CHECK_THROWS_AS(eot_distance(ProbMeasure({1.0}), ProbMeasure({0.5, 0.5}), Matrix(2, 2)),
                  DimensionError);
}

TEST_CASE("chain decomposition") {
  const auto ch = channel_from_kernel(Matrix{{0.7, 0.2, 0.1}, {0.1, 0.8, 0.1}, {0.3, 0.3, 0.4}});
  const ProbMeasure p({0.2, 0.5, 0.3});
  const auto t = joint_measure(ch, p).matrix;
  const auto same = kl_chain_decomposition(t, ch, p);
  CHECK(std::abs(same.sum) <= 1e-12);
  CHECK(std::abs(same.direct) <= 1e-12);

  // The product of the marginals has zero mutual information. Under a
  // noiseless channel it is not absolutely continuous with respect to T(P),
  // so the irrelevant channel, whose T(P) has full support, carries the check.
  const auto nl = channel_noiseless(3);
  Matrix prod(3, 3);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) prod(i, j) = p[i] * p[j];
  }
  const auto indep = kl_chain_decomposition(prod, channel_irrelevant(p, 3), p);
  CHECK(std::abs(indep.mutual_information) <= 1e-14);

  // Violations of absolute continuity.
  const auto v = kl_chain_decomposition(prod, nl, p);
  CHECK(std::isinf(v.sum));
  REQUIRE(v.violation.has_value());
  CHECK(v.violation->first != v.violation->second);
}

TEST_CASE("chain decomposition sum equals direct KL on random triples") {
  testgen::Gen g(2024);
  for (int s = 0; s < 200; ++s) {
    const std::size_t n = g.index(1, 6), m = g.index(1, 6);
    const auto ch = g.channel(n, m, 0.25);
    const auto p = g.measure(n, 0.2);
    const auto tp = joint_measure(ch, p).matrix;
    Matrix t_prime(n, m);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        t_prime(i, j) = tp(i, j) > 0.0 && g.coin(0.85) ? g.uniform(0.01, 1.0) : 0.0;
        total += t_prime(i, j);
      }
    }
    if (total == 0.0) continue;
    std::vector<double> flat_t, flat_ref;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        t_prime(i, j) /= total;
        flat_t.push_back(t_prime(i, j));
        flat_ref.push_back(tp(i, j));
      }
    }
    const auto dec = kl_chain_decomposition(t_prime, ch, p);
    const double direct = oracle::kl(flat_t, flat_ref);
    CHECK(std::abs(dec.sum - direct) <= 1e-9);
    CHECK(dec.mutual_information >= -1e-15);
  }
}
