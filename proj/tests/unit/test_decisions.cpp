#include <doctest.h>

#include <cmath>

#include "generators.hpp"
#include "noisyot/errors.hpp"
#include "noisyot/decisions.hpp"
#include "noisyot/experiment.hpp"
#include "noisyot/stats.hpp"
#include "oracles.hpp"

using namespace noisyot;

namespace {

DecisionProblem two_by_two(double a, double b, double c, double d) {
  return DecisionProblem{.loss = Matrix{{a, b}, {c, d}}, .decision_labels = {"a", "b"}};
}

AmbiguitySpec full_simplex(const Channel& ch, double r, double delta) {
  return AmbiguitySpec{.radius = r, .delta = delta, .channel = ch};
}

}  // namespace

TEST_CASE("expected cost and SAA") {
  const auto prob = two_by_two(0, 1, 1, 0);
  CHECK(expected_cost(0, ProbMeasure({0.3, 0.7}), prob) == doctest::Approx(0.7));
  const auto rx = solve_saa(ProbMeasure({0.3, 0.7}), prob);
  CHECK(rx.decision_index == 1);
  CHECK(rx.budget == doctest::Approx(0.3));
  // Ties go to the lowest index.
  CHECK(solve_saa(ProbMeasure({0.5, 0.5}), prob).decision_index == 0);
  const std::vector<double> near{1.0, 1.0 - 1e-9, 0.5 + 1e-7, 0.5};
  CHECK(select_decision(near, 1e-6) == 2);
  CHECK_THROWS_AS(expected_cost(2, ProbMeasure({0.5, 0.5}), prob), DimensionError);
}

TEST_CASE("formulation names round trip") {
  for (auto f : {Formulation::SaaPlugin, Formulation::MlePlugin, Formulation::EntropicDro,
                 Formulation::OtDro, Formulation::KernelDeconvolution}) {
    CHECK(parse_formulation(formulation_name(f)) == f);
  }
  CHECK_THROWS_AS(parse_formulation("bogus"), ValidationError);
}

TEST_CASE("EM examples and monotone likelihood") {
  const auto nl = channel_noiseless(3);
  const ProbMeasure obs({0.2, 0.3, 0.5});
  const auto em = mle_em(obs, nl);
  for (std::size_t i = 0; i < 3; ++i) CHECK(em.estimate[i] == doctest::Approx(obs[i]).epsilon(1e-8));

  const auto irr = channel_irrelevant(ProbMeasure({0.5, 0.5}), 3);
  const auto flat = mle_em(ProbMeasure({0.9, 0.1}), irr);
  for (std::size_t i = 0; i < 3; ++i) CHECK(flat.estimate[i] == doctest::Approx(1.0 / 3.0));

  testgen::Gen g(6);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = g.index(2, 6), m = g.index(2, 6);
    const auto ch = g.channel(n, m, 0.2);
    const auto run = mle_em(g.measure(m, 0.2), ch);
    for (std::size_t k = 1; k < run.log_likelihood.size(); ++k) {
      CHECK(run.log_likelihood[k] >= run.log_likelihood[k - 1] - 1e-12);
    }
  }
}

TEST_CASE("entropic DRO matches the binary bisection oracle") {
  testgen::Gen g(71);
  for (int t = 0; t < 40; ++t) {
    const double c[2] = {g.uniform(0, 5), g.uniform(0, 5)};
    const double p0 = g.uniform(0.05, 0.95);
    const double r = g.uniform(0.001, 0.5);
    const DecisionProblem prob{.loss = Matrix{{c[0], c[1]}}, .decision_labels = {"z"}};
    const auto v = entropic_dro_predictor(0, ProbMeasure({p0, 1 - p0}), r, prob);
    CHECK(std::abs(v.value - oracle::entropic_dro_binary(c, p0, r)) <= 1e-6);
  }
  const DecisionProblem prob{.loss = Matrix{{1.0, 2.0}}, .decision_labels = {"z"}};
  CHECK(entropic_dro_predictor(0, ProbMeasure({0.4, 0.6}), 1e-12, prob).value ==
        doctest::Approx(1.6).epsilon(1e-5));
}

TEST_CASE("OT-DRO matches the binary oracle") {
  testgen::Gen g(3030);
  int compared = 0;
  for (int t = 0; t < 20; ++t) {
    const double k[2][2] = {{g.uniform(0.55, 0.95), 0}, {g.uniform(0.05, 0.45), 0}};
    const double kk[2][2] = {{k[0][0], 1 - k[0][0]}, {k[1][0], 1 - k[1][0]}};
    const auto ch = channel_from_kernel(Matrix{{kk[0][0], kk[0][1]}, {kk[1][0], kk[1][1]}});
    const double c[2] = {g.uniform(0, 4), g.uniform(0, 4)};
    const double p_obs0 = g.uniform(0.1, 0.9);
    const double r = g.uniform(0.005, 0.2);
    const double delta = g.coin(0.3) ? 0.0 : g.uniform(0.0, 0.1);
    const DecisionProblem prob{.loss = Matrix{{c[0], c[1]}}, .decision_labels = {"z"}};
    const auto v = ot_dro_predictor(0, ProbMeasure({p_obs0, 1 - p_obs0}),
                                    full_simplex(ch, r, delta), prob);
    const double ref = oracle::ot_dro_binary(c, kk, p_obs0, r, delta);
    if (std::isinf(ref)) {
      CHECK(v.empty);
      continue;
    }
    ++compared;
    CHECK(std::abs(v.value - ref) <= 1e-3);
  }
  CHECK(compared >= 10);
}

TEST_CASE("OT-DRO value sits between the plug-in value and the largest loss") {
  testgen::Gen g(44);
  for (int t = 0; t < 60; ++t) {
    const std::size_t n = g.index(2, 5), m = g.index(2, 5);
    const auto ch = g.channel(n, m, 0.0);
    const auto p = g.measure(n);
    const auto p_obs = convolve(ch, p);
    DecisionProblem prob{.loss = Matrix(2, n)};
    for (std::size_t z = 0; z < 2; ++z) {
      for (std::size_t i = 0; i < n; ++i) prob.loss(z, i) = g.uniform(0, 3);
    }
    const auto v = ot_dro_predictor(0, p_obs, full_simplex(ch, g.uniform(0.01, 0.3), 0.0), prob);
    double top = 0.0;
    for (std::size_t i = 0; i < n; ++i) top = std::max(top, prob.loss(0, i));
    CHECK(v.value >= expected_cost(0, p, prob) - 1e-7);
    CHECK(v.value <= top + 1e-9);
  }
}

TEST_CASE("robust values are nondecreasing in r and delta") {
  testgen::Gen g(5150);
  for (int t = 0; t < 40; ++t) {
    const std::size_t n = g.index(2, 4), m = g.index(2, 4);
    const auto ch = g.channel(n, m, 0.0);
    const auto p_obs = convolve(ch, g.measure(n));
    DecisionProblem prob{.loss = Matrix(1, n)};
    for (std::size_t i = 0; i < n; ++i) prob.loss(0, i) = g.uniform(0, 3);
    double prev = -kInfinity;
    for (double r : {0.01, 0.03, 0.1, 0.3}) {
      const double v = ot_dro_predictor(0, p_obs, full_simplex(ch, r, 0.02), prob).value;
      CHECK(v >= prev - 1e-7);
      prev = v;
    }
    prev = -kInfinity;
    for (double d : {0.0, 0.02, 0.05, 0.1}) {
      const double v = ot_dro_predictor(0, p_obs, full_simplex(ch, 0.05, d), prob).value;
      CHECK(v >= prev - 1e-7);
      prev = v;
    }
  }
}

TEST_CASE("explicit prior list") {
  const auto ch = channel_from_kernel(Matrix{{0.8, 0.2}, {0.3, 0.7}});
  const auto prob = two_by_two(0, 1, 1, 0);
  AmbiguitySpec spec = full_simplex(ch, 0.02, 0.0);
  spec.family = PriorFamily::ExplicitList;
  spec.priors = {ProbMeasure({0.5, 0.5}), ProbMeasure({0.9, 0.1}), ProbMeasure({0.6, 0.4})};
  const auto p_obs = convolve(ch, ProbMeasure({0.55, 0.45}));
  const auto v = ot_dro_predictor(0, p_obs, spec, prob);
  // Only the priors whose push-forward lies in the ball count.
  double expect = -kInfinity;
  for (const auto& pr : spec.priors) {
    if (smoothed_rate(p_obs, pr, ch, 0.0).value <= 0.02) expect = std::max(expect, pr[1]);
  }
  CHECK(v.value == doctest::Approx(expect));
  spec.priors = {ProbMeasure({0.0, 1.0})};
  CHECK(ot_dro_predictor(0, p_obs, spec, prob).empty);
  CHECK_THROWS_AS(ot_dro_prescribe(p_obs, spec, prob), InfeasibleError);
}

TEST_CASE("symmetric problems break ties toward the lowest index") {
  const auto ch = channel_from_kernel(Matrix{{0.8, 0.2}, {0.2, 0.8}});
  const auto rx = ot_dro_prescribe(ProbMeasure({0.5, 0.5}), full_simplex(ch, 0.05, 0.01),
                                   two_by_two(0, 1, 1, 0));
  CHECK(rx.decision_index == 0);
  CHECK(rx.per_decision_values[0] == doctest::Approx(rx.per_decision_values[1]).epsilon(1e-6));
  CHECK(rx.budget == rx.per_decision_values[0]);
}

TEST_CASE("newsvendor OT-DRO budget dominates the MLE budget") {
  const std::vector<double> grid{0, 1, 2, 3, 4};
  const auto prob = newsvendor_problem(grid, 2.0, 1.0, 1e-6);
  CHECK(prob.loss(0, 4) == 8.0);
  CHECK(prob.loss(4, 0) == 4.0);
  CHECK(prob.decision_labels[2] == "order=2");
  const auto ch = channel_gaussian_grid(grid, grid, 0.5);
  const auto p_obs = convolve(ch, ProbMeasure({0.1, 0.2, 0.4, 0.2, 0.1}));
  const auto mle = solve_saa(mle_em(p_obs, ch).estimate, prob);
  const auto robust = ot_dro_prescribe(p_obs, full_simplex(ch, 0.05, 0.05), prob);
  CHECK(robust.budget >= mle.budget - 1e-9);
  REQUIRE(robust.worst_case_witness.has_value());
  CHECK(expected_cost(robust.decision_index, *robust.worst_case_witness, prob) ==
        doctest::Approx(robust.budget).epsilon(1e-6));
}

TEST_CASE("dominance pruning keeps the decision and budget") {
  testgen::Gen g(808);
  int solved = 0;
  for (int t = 0; t < 25; ++t) {
    const std::size_t n = g.index(2, 6), m = g.index(2, 6);
    const auto ch = g.channel(n, m, 0.0);
    const auto p_obs = g.measure(m, 0.1);
    DecisionProblem prob{.loss = Matrix(g.index(2, 6), n)};
    for (std::size_t z = 0; z < prob.loss.rows(); ++z) {
      for (std::size_t i = 0; i < n; ++i) prob.loss(z, i) = g.uniform(0, 3);
    }
    const auto spec = full_simplex(ch, g.uniform(0.01, 0.2), g.uniform(0.0, 0.1));
    OtDroOptions pruned;
    pruned.prune_dominated = true;
    if (ot_dro_predictor(0, p_obs, spec, prob).empty) {
      CHECK_THROWS_AS(ot_dro_prescribe(p_obs, spec, prob, pruned), InfeasibleError);
      continue;
    }
    ++solved;
    const auto a = ot_dro_prescribe(p_obs, spec, prob);
    const auto b = ot_dro_prescribe(p_obs, spec, prob, pruned);
    // Warm starts depend on the solve order, so values agree to solver tolerance.
    CHECK(a.decision_index == b.decision_index);
    CHECK(std::abs(a.budget - b.budget) <= 1e-6);
    for (std::size_t z = 0; z < a.per_decision_values.size(); ++z) {
      CHECK(b.per_decision_values[z] <= a.per_decision_values[z] + 1e-6);
    }
  }
  CHECK(solved >= 10);
}

TEST_CASE("joint objective gradient matches central differences") {
  testgen::Gen g(91);
  for (int t = 0; t < 30; ++t) {
    const std::size_t n = g.index(2, 5), m = g.index(2, 5);
    const auto ch = g.channel(n, m, 0.0);
    std::vector<double> c(n);
    for (auto& v : c) v = g.uniform(-2, 2);
    const auto p = g.interior(n, 0.05).vector();
    const auto p2 = g.interior(m, 0.05).vector();
    const double lambda = g.uniform(0.1, 3.0);
    const auto f = joint_objective(c, p, p2, ch, lambda);
    const double h = 1e-6;
    for (std::size_t i = 0; i < n; ++i) {
      auto up = p, dn = p;
      up[i] += h;
      dn[i] -= h;
      const double fd = (joint_objective(c, up, p2, ch, lambda).value -
                         joint_objective(c, dn, p2, ch, lambda).value) / (2 * h);
      CHECK(std::abs(fd - f.grad_p[i]) <= 1e-4 * std::max(1.0, std::abs(fd)));
    }
    for (std::size_t j = 0; j < m; ++j) {
      auto up = p2, dn = p2;
      up[j] += h;
      dn[j] -= h;
      const double fd = (joint_objective(c, p, up, ch, lambda).value -
                         joint_objective(c, p, dn, ch, lambda).value) / (2 * h);
      CHECK(std::abs(fd - f.grad_p2[j]) <= 1e-4 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("disappointment rates") {
  const std::vector<double> grid{0, 1, 2};
  const auto prob = newsvendor_problem(grid, 2.0, 1.0, 1e-6);
  const auto ch = channel_gaussian_grid(grid, grid, 0.8);
  const ProbMeasure truth({0.3, 0.4, 0.3});
  const auto spec = full_simplex(ch, 0.05, 0.02);
  const std::vector<std::size_t> ns{10, 40};

  const auto saa = disappointment_rate(Formulation::SaaPlugin, truth, spec, prob, ns, 300, 4);
  const auto dro = disappointment_rate(Formulation::OtDro, truth, spec, prob, ns, 300, 4);
  CHECK(saa.rates.errors[0] > dro.rates.errors[0]);
  CHECK(dro.rates.mean_value[0] > saa.rates.mean_value[0]);
  CHECK(dro.target_rate == doctest::Approx(-0.05));

  MonteCarloOptions eight;
  eight.threads = 8;
  const auto par = disappointment_rate(Formulation::OtDro, truth, spec, prob, ns, 300, 4, eight);
  CHECK(par.rates.errors == dro.rates.errors);
  CHECK(par.rates.mean_value == dro.rates.mean_value);

  // SAA needs the observation and latent alphabets to coincide.
  const auto wide = channel_gaussian_grid(grid, std::vector<double>{0, 0.5, 1, 1.5, 2}, 0.8);
  CHECK_THROWS(disappointment_rate(Formulation::SaaPlugin, truth, full_simplex(wide, 0.05, 0.0),
                                   prob, ns, 10, 1));
}

TEST_CASE("binary alphabet disappointment by exact enumeration") {
  const std::vector<double> grid{0, 1};
  const auto prob = newsvendor_problem(grid, 2.0, 1.0, 1e-6);
  const auto nl = channel_noiseless(2);
  const ProbMeasure truth({0.4, 0.6});

  // SAA orders 1 whenever the sample has at least a third of its mass on 1;
  // it disappoints when that budget undercuts the true cost.
  const std::vector<std::size_t> small{5, 10, 20};
  const auto saa = disappointment_rate(Formulation::SaaPlugin, truth, full_simplex(nl, 0.05, 0.0),
                                       prob, small, 1, 0);
  CHECK(saa.rates.method == EstimationMethod::ExactBinomial);
  for (std::size_t k = 0; k < small.size(); ++k) {
    const auto n = small[k];
    const double expect = exact_binomial_tail(0.6, n, [&](std::uint64_t c) {
      const double x = double(c) / double(n);
      const double cost0 = 2.0 * x, cost1 = 1.0 - x;
      const std::size_t z = cost1 < cost0 - 1e-6 ? 1 : 0;
      const double budget = z == 0 ? cost0 : cost1;
      const double truth_cost = z == 0 ? 2.0 * 0.6 : 0.4;
      return truth_cost > budget;
    });
    CHECK(saa.rates.errors[k] == doctest::Approx(expect).epsilon(1e-9));
    CHECK(saa.rates.errors[k] > 0.0);
  }

  const std::vector<std::size_t> ns{50, 100, 200};
  const auto dro = disappointment_rate(Formulation::OtDro, truth, full_simplex(nl, 0.05, 0.02),
                                       prob, ns, 1, 0);
  CHECK(dro.rates.method == EstimationMethod::ExactBinomial);
  if (dro.rates.slope_defined) {
    CHECK(dro.rates.slope <= -0.05 + 0.02);
  } else {
    for (char s : dro.rates.sentinel) CHECK(s);
  }

  // A radius covering the whole simplex makes the budget the largest loss.
  const auto safe = disappointment_rate(Formulation::OtDro, truth, full_simplex(nl, 50.0, 0.0),
                                        prob, ns, 1, 0);
  for (std::size_t k = 0; k < ns.size(); ++k) {
    CHECK(safe.rates.errors[k] == 0.0);
    CHECK(safe.rates.sentinel[k]);
  }
}
