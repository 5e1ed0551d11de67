#pragma once

// Rate function of the noisy empirical measure,
//
//   I(P', P) = inf_Q D_W(Q, P') + KL(Q, P) + KL(P', m') = KL(P', O*P),
//
// and its delta-smoothed version I^delta(P', P) = inf { I(P'', P) : tv(P'', P') <= delta }.

#include <optional>
#include <span>
#include <vector>

#include "noisyot/channels.hpp"
#include "noisyot/measures.hpp"
#include "noisyot/transport.hpp"

namespace noisyot {

enum class RateMethod { ClosedForm, Variational };

/// The three terms of the variational formula at a particular Q.
struct RateTerms {
  double transport = 0.0;  ///< D_W(Q, P')
  double latent_kl = 0.0;  ///< KL(Q, P)
  double base_kl = 0.0;    ///< KL(P', m'); negative when m' has mass above one
  double total = 0.0;
};

struct RateEvaluation {
  double value = 0.0;
  std::optional<ProbMeasure> witness_q;
  std::optional<TransportPlan> witness_plan;
  RateMethod method = RateMethod::ClosedForm;
  int iterations = 0;
  bool converged = true;
  /// Frank-Wolfe gap of the final Q (variational only).
  double gap = 0.0;
  /// Terms evaluated at the closed-form witness (variational only).
  std::optional<RateTerms> closed_form_terms;
};

struct VariationalOptions {
  double tol = 1e-8;
  int max_iter = 10000;
};

struct SmoothedRateOptions {
  double tol = 1e-7;
  int max_iter = 10000;
};

struct SmoothedRateEvaluation {
  double value = 0.0;
  ProbMeasure witness_p2;
  double delta = 0.0;
  int iterations = 0;
  double gap = 0.0;
  bool converged = true;
};

/// KL(P', O*P) with the column-wise optimal plan T'_ij = P'_j T(P)_ij / (O*P)_j.
RateEvaluation rate_closed_form(const ProbMeasure& p_obs, const ProbMeasure& p,
                                const Channel& ch);

/// Minimizes the variational formula over Q by entropic mirror descent. Each
/// step solves the transport problem for the current Q by Sinkhorn and
/// multiplies Q by (P exp(-f) / Q)^eta, f being the row potential.
RateEvaluation rate_variational(const ProbMeasure& p_obs, const ProbMeasure& p,
                                const Channel& ch, const VariationalOptions& options = {});

/// Throws InfeasibleError when q admits no finite-cost coupling with p_obs.
RateTerms evaluate_rate_terms(const ProbMeasure& p_obs, const ProbMeasure& q,
                              const ProbMeasure& p, const Channel& ch);

/// I^delta by Frank-Wolfe with away steps over the simplex intersected with
/// the TV ball around p_obs.
SmoothedRateEvaluation smoothed_rate(const ProbMeasure& p_obs, const ProbMeasure& p,
                                     const Channel& ch, double delta,
                                     const SmoothedRateOptions& options = {});

/// Exact minimizer of KL(x, y) over probability vectors x with
/// tv(x, p_hat) <= delta, for a probability vector y.
///
/// The solution is x_j = clamp(p_hat_j, a y_j, b y_j) on {y > 0} and zero
/// elsewhere. `region` marks each coordinate: +1 where x = a y (inflow), -1
/// where x = b y (outflow), 0 where x = p_hat, and 2 on {y = 0}. When y is
/// already inside the ball, x = y, value = 0 and `inside` is set.
struct KlTvProjection {
  double value = 0.0;
  std::vector<double> x;
  double a = 1.0;
  double b = 1.0;
  std::vector<int> region;
  bool inside = false;
  /// Mass of p_hat on {y = 0}; value is +inf when it exceeds delta.
  double forced_mass = 0.0;
};

KlTvProjection kl_tv_projection(std::span<const double> p_hat, std::span<const double> y,
                                double delta);

}  // namespace noisyot
