#pragma once

// Data-driven predictor/prescriptor pairs over a finite decision list.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "noisyot/channels.hpp"
#include "noisyot/matrix.hpp"
#include "noisyot/measures.hpp"
#include "noisyot/montecarlo.hpp"

namespace noisyot {

/// loss(k, i) is the cost of decision k when the latent outcome is i.
struct DecisionProblem {
  Matrix loss;
  std::vector<std::string> decision_labels{};
  double epsilon = 1e-6;
};

enum class PriorFamily { FullSimplex, ExplicitList };

struct AmbiguitySpec {
  double radius = 0.0;
  double delta = 0.0;
  PriorFamily family = PriorFamily::FullSimplex;
  /// Candidate priors when family == ExplicitList.
  std::vector<ProbMeasure> priors{};
  Channel channel;
};

struct Prescription {
  std::size_t decision_index = 0;
  double budget = 0.0;
  std::vector<double> per_decision_values;
  std::optional<ProbMeasure> worst_case_witness;
};

/// Value of a robust predictor at one decision. An empty ambiguity set gives
/// value = -inf with `empty` set.
struct RobustValue {
  double value = 0.0;
  std::optional<ProbMeasure> witness;
  bool empty = false;
  bool converged = true;
  /// Certified upper bound minus value (FullSimplex solver only).
  double gap = 0.0;
};

enum class Formulation { SaaPlugin, MlePlugin, EntropicDro, OtDro, KernelDeconvolution };

std::string_view formulation_name(Formulation f);
/// Accepts the names printed by formulation_name; throws ValidationError otherwise.
Formulation parse_formulation(std::string_view name);

void validate(const DecisionProblem& prob);
void validate(const AmbiguitySpec& spec);

double expected_cost(std::size_t z, const ProbMeasure& p, const DecisionProblem& prob);

/// Lowest index whose value is below min + epsilon.
std::size_t select_decision(std::span<const double> values, double epsilon);

Prescription solve_saa(const ProbMeasure& p_est, const DecisionProblem& prob);

struct EmOptions {
  double tol = 1e-10;
  int max_iter = 10000;
};

struct EmResult {
  ProbMeasure estimate;
  /// Log-likelihood sum_j p_j log (O*P)_j at the initializer and after every update.
  std::vector<double> log_likelihood;
  int iterations = 0;
  bool converged = true;
};

/// Maximum-likelihood deconvolution by EM from the uniform initializer.
EmResult mle_em(const ProbMeasure& p_obs_emp, const Channel& ch, const EmOptions& options = {});

/// sup { E_P loss(z, .) : KL(p_emp, P) <= r }.
RobustValue entropic_dro_predictor(std::size_t z, const ProbMeasure& p_emp, double r,
                                   const DecisionProblem& prob);
Prescription entropic_dro_prescribe(const ProbMeasure& p_emp, double r,
                                    const DecisionProblem& prob);

struct OtDroOptions {
  /// Target for the certified duality gap, relative to 1 + max |loss|.
  double tol = 1e-8;
  int max_outer = 60;
  int max_inner = 200;
  /// ot_dro_prescribe only: skip decisions whose lower bound from already
  /// found worst-case witnesses exceeds the best value by more than epsilon.
  /// Such decisions can never be selected; their per_decision_values entry
  /// then holds that lower bound instead of the exact value.
  bool prune_dominated = false;
};

/// sup { E_P loss(z, .) : P in the prior family, I^delta(p_obs_emp, P) <= r }.
RobustValue ot_dro_predictor(std::size_t z, const ProbMeasure& p_obs_emp,
                             const AmbiguitySpec& spec, const DecisionProblem& prob,
                             const OtDroOptions& options = {});

/// Throws InfeasibleError when the ambiguity set is empty.
Prescription ot_dro_prescribe(const ProbMeasure& p_obs_emp, const AmbiguitySpec& spec,
                              const DecisionProblem& prob, const OtDroOptions& options = {});

/// F(P, P'') = c.P - lambda KL(P'', O*P), the Lagrangian the robust
/// predictor maximizes jointly, with its gradient in both arguments.
struct JointObjective {
  double value = 0.0;
  std::vector<double> grad_p;
  std::vector<double> grad_p2;
};

JointObjective joint_objective(std::span<const double> c, std::span<const double> p,
                               std::span<const double> p2, const Channel& ch, double lambda);

struct DisappointmentReport {
  Formulation formulation = Formulation::SaaPlugin;
  /// Rates of the event "true expected cost exceeds the budget". mean_value
  /// holds the mean finite budget; replications with an empty ambiguity set
  /// count as disappointments and are left out of that mean.
  ErrorRateReport rates;
  double target_rate = 0.0;
};

DisappointmentReport disappointment_rate(Formulation formulation, const ProbMeasure& p_true,
                                         const AmbiguitySpec& spec,
                                         const DecisionProblem& prob,
                                         std::span<const std::size_t> n_grid, std::size_t reps,
                                         std::uint64_t seed,
                                         const MonteCarloOptions& options = {});

}  // namespace noisyot
