#include "noisyot/decisions.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "noisyot/errors.hpp"

namespace noisyot {

namespace {

constexpr std::array<std::pair<Formulation, std::string_view>, 5> kFormulationNames{{
    {Formulation::SaaPlugin, "SAA_plugin"},
    {Formulation::MlePlugin, "MLE_plugin"},
    {Formulation::EntropicDro, "EntropicDRO"},
    {Formulation::OtDro, "OTDRO"},
    {Formulation::KernelDeconvolution, "KernelDeconvolution"},
}};

void require_decision(std::size_t z, const DecisionProblem& prob) {
  if (z >= prob.loss.rows()) {
    throw DimensionError("decision index " + std::to_string(z) + " out of range (" +
                         std::to_string(prob.loss.rows()) + " decisions)");
  }
}

void require_support(std::size_t size, const DecisionProblem& prob, const char* what) {
  if (size != prob.loss.cols()) {
    throw DimensionError(std::string(what) + ": measure of size " + std::to_string(size) +
                         " does not match a loss over " + std::to_string(prob.loss.cols()) +
                         " outcomes");
  }
}

double log_likelihood(std::span<const double> p_obs, std::span<const double> push) {
  double ll = 0.0;
  for (std::size_t j = 0; j < p_obs.size(); ++j) {
    if (p_obs[j] > 0.0) ll += p_obs[j] * std::log(push[j]);
  }
  return ll;
}

template <class Predictor>
Prescription prescribe_by(std::size_t decisions, double epsilon, Predictor&& predictor) {
  Prescription out;
  out.per_decision_values.resize(decisions);
  std::vector<std::optional<ProbMeasure>> witnesses(decisions);
  for (std::size_t z = 0; z < decisions; ++z) {
    auto v = predictor(z);
    out.per_decision_values[z] = v.value;
    witnesses[z] = std::move(v.witness);
  }
  out.decision_index = select_decision(out.per_decision_values, epsilon);
  out.budget = out.per_decision_values[out.decision_index];
  out.worst_case_witness = std::move(witnesses[out.decision_index]);
  return out;
}

}  // namespace

std::string_view formulation_name(Formulation f) {
  for (const auto& [value, name] : kFormulationNames) {
    if (value == f) return name;
  }
  return "unknown";
}

Formulation parse_formulation(std::string_view name) {
  for (const auto& [value, known] : kFormulationNames) {
    if (known == name) return value;
  }
  throw ValidationError("unknown formulation '" + std::string(name) + "'");
}

void validate(const DecisionProblem& prob) {
  if (prob.loss.rows() == 0 || prob.loss.cols() == 0) {
    throw ValidationError("decision problem: empty loss matrix");
  }
  for (double v : prob.loss.data()) {
    if (!std::isfinite(v)) throw ValidationError("decision problem: loss entries must be finite");
  }
  if (!(prob.epsilon > 0.0) || !std::isfinite(prob.epsilon)) {
    throw ValidationError("decision problem: epsilon must be a positive real");
  }
  if (!prob.decision_labels.empty() && prob.decision_labels.size() != prob.loss.rows()) {
    throw ValidationError("decision problem: one label per decision is required");
  }
}

void validate(const AmbiguitySpec& spec) {
  if (!(spec.radius > 0.0) || !std::isfinite(spec.radius)) {
    throw ValidationError("ambiguity spec: radius must be a positive real");
  }
  if (!(spec.delta >= 0.0) || !std::isfinite(spec.delta)) {
    throw ValidationError("ambiguity spec: delta must be a nonnegative real");
  }
  if (spec.family == PriorFamily::ExplicitList) {
    if (spec.priors.empty()) throw ValidationError("ambiguity spec: the prior list is empty");
    for (const auto& p : spec.priors) {
      if (p.size() != spec.channel.sources()) {
        throw ValidationError("ambiguity spec: a listed prior does not fit the channel");
      }
    }
  }
}

double expected_cost(std::size_t z, const ProbMeasure& p, const DecisionProblem& prob) {
  require_decision(z, prob);
  require_support(p.size(), prob, "expected_cost");
  const auto row = prob.loss.row(z);
  double s = 0.0;
  for (std::size_t i = 0; i < row.size(); ++i) s += row[i] * p[i];
  return s;
}

std::size_t select_decision(std::span<const double> values, double epsilon) {
  if (values.empty()) throw DomainError("select_decision: no decisions");
  const double best = *std::min_element(values.begin(), values.end());
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (values[k] < best + epsilon || values[k] == best) return k;
  }
  return 0;
}

Prescription solve_saa(const ProbMeasure& p_est, const DecisionProblem& prob) {
  validate(prob);
  require_support(p_est.size(), prob, "solve_saa");
  return prescribe_by(prob.loss.rows(), prob.epsilon, [&](std::size_t z) {
    return RobustValue{expected_cost(z, p_est, prob), p_est};
  });
}

EmResult mle_em(const ProbMeasure& p_obs_emp, const Channel& ch, const EmOptions& options) {
  if (p_obs_emp.size() != ch.observations()) {
    throw DimensionError("mle_em: observed measure does not fit the channel");
  }
  const std::size_t n = ch.sources();
  const std::size_t m = ch.observations();
  const auto& k = ch.kernel();
  std::vector<double> p(n, 1.0 / static_cast<double>(n)), next(n);
  auto push = convolve(ch, p);

  EmResult out;
  out.log_likelihood.push_back(log_likelihood(p_obs_emp.weights(), push));
  out.converged = false;
  for (int it = 0; it < options.max_iter; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        // A symbol no prior can produce leaves the likelihood at -inf for every P.
        if (p_obs_emp[j] > 0.0 && push[j] > 0.0) s += p_obs_emp[j] * k(i, j) / push[j];
      }
      next[i] = p[i] * s;
    }
    const double total = std::accumulate(next.begin(), next.end(), 0.0);
    for (double& v : next) v /= total;
    const auto next_push = convolve(ch, next);
    const double ll = log_likelihood(p_obs_emp.weights(), next_push);
    const double gain = ll - out.log_likelihood.back();
    p.swap(next);
    push = next_push;
    out.log_likelihood.push_back(ll);
    out.iterations = it + 1;
    if (!(gain >= options.tol)) {
      out.converged = true;
      break;
    }
  }
  out.estimate = ProbMeasure::normalized(std::move(p));
  return out;
}

RobustValue entropic_dro_predictor(std::size_t z, const ProbMeasure& p_emp, double r,
                                   const DecisionProblem& prob) {
  require_decision(z, prob);
  require_support(p_emp.size(), prob, "entropic_dro_predictor");
  if (!(r > 0.0) || !std::isfinite(r)) {
    throw DomainError("entropic_dro_predictor: radius must be a positive real");
  }
  const auto l = prob.loss.row(z);
  const std::size_t n = l.size();
  const double lmax = *std::max_element(l.begin(), l.end());
  const double lmin = *std::min_element(l.begin(), l.end());
  RobustValue out;
  if (lmax == lmin) {
    out.value = lmax;
    out.witness = p_emp;
    return out;
  }

  // Dual: minimize h(alpha) = alpha - e^{-r} prod_i (alpha - l_i)^{p_i} over
  // alpha >= max l. h is convex; bisect on the sign of h'.
  const double shrink = std::exp(-r);
  const auto lam = [&](double alpha) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (p_emp[i] == 0.0) continue;
      const double gap = alpha - l[i];
      if (gap <= 0.0) return 0.0;
      s += p_emp[i] * std::log(gap);
    }
    return shrink * std::exp(s);
  };
  const auto dh = [&](double alpha) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (p_emp[i] == 0.0) continue;
      const double gap = alpha - l[i];
      if (gap <= 0.0) return -kInfinity;
      s += p_emp[i] / gap;
    }
    return 1.0 - lam(alpha) * s;
  };

  double alpha;
  if (dh(lmax) >= 0.0) {
    alpha = lmax;
  } else {
    const double span = lmax - lmin;
    double lo = lmax, hi = lmax + span;
    while (dh(hi) < 0.0) {
      lo = hi;
      hi = lmax + 2.0 * (hi - lmax);
      if (hi - lmax > 1e300) {
        out.converged = false;
        break;
      }
    }
    for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(hi)); ++it) {
      const double mid = 0.5 * (lo + hi);
      (dh(mid) < 0.0 ? lo : hi) = mid;
    }
    alpha = 0.5 * (lo + hi);
  }
  const double lambda = lam(alpha);
  out.value = alpha - lambda;

  std::vector<double> w(n, 0.0);
  double used = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (p_emp[i] > 0.0 && alpha > l[i]) {
      w[i] = lambda * p_emp[i] / (alpha - l[i]);
      used += w[i];
    }
  }
  if (used < 1.0) {
    // The remaining mass sits on the worst outcome outside the data support.
    std::size_t worst = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (p_emp[i] == 0.0 && (worst == n || l[i] > l[worst])) worst = i;
    }
    if (worst < n) w[worst] += 1.0 - used;
  }
  out.witness = ProbMeasure::normalized(std::move(w));
  return out;
}

Prescription entropic_dro_prescribe(const ProbMeasure& p_emp, double r,
                                    const DecisionProblem& prob) {
  validate(prob);
  return prescribe_by(prob.loss.rows(), prob.epsilon, [&](std::size_t z) {
    return entropic_dro_predictor(z, p_emp, r, prob);
  });
}

JointObjective joint_objective(std::span<const double> c, std::span<const double> p,
                               std::span<const double> p2, const Channel& ch, double lambda) {
  const std::size_t n = ch.sources();
  const std::size_t m = ch.observations();
  if (c.size() != n || p.size() != n || p2.size() != m) {
    throw DimensionError("joint_objective: sizes do not match the channel");
  }
  const auto& k = ch.kernel();
  const auto y = convolve(ch, p);
  JointObjective out;
  out.grad_p.assign(c.begin(), c.end());
  out.grad_p2.assign(m, 0.0);
  double kl = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    if (p2[j] > 0.0) {
      kl += p2[j] * std::log(p2[j] / y[j]);
      out.grad_p2[j] = -lambda * (std::log(p2[j] / y[j]) + 1.0);
    } else {
      out.grad_p2[j] = kInfinity;
    }
  }
  out.value = std::inner_product(c.begin(), c.end(), p.begin(), 0.0) - lambda * kl;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      if (p2[j] > 0.0) s += p2[j] * k(i, j) / y[j];
    }
    out.grad_p[i] += lambda * s;
  }
  return out;
}

DisappointmentReport disappointment_rate(Formulation formulation, const ProbMeasure& p_true,
                                         const AmbiguitySpec& spec,
                                         const DecisionProblem& prob,
                                         std::span<const std::size_t> n_grid, std::size_t reps,
                                         std::uint64_t seed,
                                         const MonteCarloOptions& options) {
  validate(prob);
  validate(spec);
  require_support(p_true.size(), prob, "disappointment_rate");
  const Channel& ch = spec.channel;
  if (p_true.size() != ch.sources()) {
    throw DimensionError("disappointment_rate: true measure does not fit the channel");
  }
  const bool plugs_observed =
      formulation == Formulation::SaaPlugin || formulation == Formulation::EntropicDro;
  if (plugs_observed && ch.sources() != ch.observations()) {
    throw ValidationError(std::string(formulation_name(formulation)) +
                          " plugs the observed measure into the loss and needs equal "
                          "latent and observed alphabets");
  }
  if (formulation == Formulation::KernelDeconvolution) {
    throw Error("formulation KernelDeconvolution is not implemented");
  }

  std::vector<double> true_cost(prob.loss.rows());
  for (std::size_t z = 0; z < true_cost.size(); ++z) true_cost[z] = expected_cost(z, p_true, prob);

  OtDroOptions pruned;
  pruned.prune_dominated = true;

  const EventFactory factory = [&]() -> EventFn {
    return [&](std::span<const std::uint32_t> counts) {
      const auto p_emp = empirical_from_counts(counts);
      Prescription rx;
      switch (formulation) {
        case Formulation::SaaPlugin:
          rx = solve_saa(p_emp, prob);
          break;
        case Formulation::MlePlugin:
          rx = solve_saa(mle_em(p_emp, ch).estimate, prob);
          break;
        case Formulation::EntropicDro:
          rx = entropic_dro_prescribe(p_emp, spec.radius, prob);
          break;
        case Formulation::OtDro:
          try {
            rx = ot_dro_prescribe(p_emp, spec, prob, pruned);
          } catch (const InfeasibleError&) {
            // sup over an empty set: the budget is -inf and always disappoints.
            return EventOutcome{true, std::nan("")};
          }
          break;
        case Formulation::KernelDeconvolution:
          break;
      }
      return EventOutcome{true_cost[rx.decision_index] > rx.budget, rx.budget};
    };
  };

  DisappointmentReport out;
  out.formulation = formulation;
  out.target_rate = -spec.radius;
  out.rates = estimate_event_rate(p_true, ch, n_grid, reps, seed, factory, options);
  return out;
}

}  // namespace noisyot
