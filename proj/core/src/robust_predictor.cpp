// Worst-case expected loss over { P : I^delta(p_obs, P) <= r }.
//
// For the full simplex the problem is max c.P subject to h(P) <= r with
// h(P) = min { KL(x, O*P) : tv(x, p_obs) <= delta }, a convex function whose
// value, gradient and Hessian follow from the exact projection in rate.cpp.
// The constraint is dualized with a scalar multiplier lambda; for each lambda
// the concave Lagrangian c.P - lambda h(P) is maximized by projected Newton
// steps on the simplex. Every primal iterate with h <= r is a certified lower
// bound and every Lagrangian value an upper bound, so the returned value is
// feasible and its gap is known.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "noisyot/decisions.hpp"
#include "noisyot/errors.hpp"
#include "noisyot/rate.hpp"

namespace noisyot {

namespace {

constexpr double kLambdaMax = 1e6;
constexpr double kArmijo = 1e-4;

struct InnerResult {
  double psi = 0.0;
  double h = 0.0;
  double fw_gap = 0.0;
};

/// Evaluates h and its derivatives for a fixed kernel, p_obs and delta.
class ConstraintFunction {
public:
  ConstraintFunction(const Matrix& kernel, std::span<const double> p_obs, double delta)
      : k_(kernel), p_obs_(p_obs), delta_(delta), y_(kernel.cols()) {}

  std::size_t n() const { return k_.rows(); }
  std::size_t m() const { return k_.cols(); }

  double value(std::span<const double> p) {
    std::fill(y_.begin(), y_.end(), 0.0);
    for (std::size_t i = 0; i < n(); ++i) {
      if (p[i] == 0.0) continue;
      const auto row = k_.row(i);
      for (std::size_t j = 0; j < m(); ++j) y_[j] += p[i] * row[j];
    }
    proj_ = kl_tv_projection(p_obs_, y_, delta_);
    return proj_.value;
  }

  /// Gradient of h at the point of the last value() call.
  void gradient(Eigen::VectorXd& out) const {
    out.setZero(static_cast<Eigen::Index>(n()));
    for (std::size_t j = 0; j < m(); ++j) {
      if (y_[j] == 0.0) continue;
      const double dg = -proj_.x[j] / y_[j];
      for (std::size_t i = 0; i < n(); ++i) out[static_cast<Eigen::Index>(i)] += k_(i, j) * dg;
    }
  }

  /// Hessian of h at the point of the last value() call:
  /// K diag(p_obs / y^2 on the unclamped set) K^T plus rank-one terms for the
  /// inflow and outflow blocks.
  void hessian(Eigen::MatrixXd& out) const {
    const auto nn = static_cast<Eigen::Index>(n());
    out.setZero(nn, nn);
    if (proj_.inside || std::isinf(proj_.value)) return;
    Eigen::VectorXd in_sum = Eigen::VectorXd::Zero(nn), out_sum = Eigen::VectorXd::Zero(nn);
    double y_in = 0.0, y_out = 0.0;
    for (std::size_t j = 0; j < m(); ++j) {
      const int region = proj_.region[j];
      if (region == 2) continue;
      if (region == 1) {
        y_in += y_[j];
        for (std::size_t i = 0; i < n(); ++i) in_sum[static_cast<Eigen::Index>(i)] += k_(i, j);
      } else if (region == -1) {
        y_out += y_[j];
        for (std::size_t i = 0; i < n(); ++i) out_sum[static_cast<Eigen::Index>(i)] += k_(i, j);
      } else if (p_obs_[j] > 0.0) {
        const double w = p_obs_[j] / (y_[j] * y_[j]);
        for (std::size_t a = 0; a < n(); ++a) {
          const double ka = k_(a, j) * w;
          if (ka == 0.0) continue;
          for (std::size_t b = 0; b < n(); ++b) {
            out(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) += ka * k_(b, j);
          }
        }
      }
    }
    if (y_in > 0.0) out += (proj_.a / y_in) * in_sum * in_sum.transpose();
    if (y_out > 0.0) out += (proj_.b / y_out) * out_sum * out_sum.transpose();
  }

private:
  const Matrix& k_;
  std::span<const double> p_obs_;
  double delta_;
  std::vector<double> y_;
  KlTvProjection proj_;
};

/// minimize 0.5 q^T A q - b^T q over the probability simplex by a primal
/// active-set method started from the feasible point q.
void simplex_qp(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, Eigen::VectorXd& q) {
  const Eigen::Index n = q.size();
  std::vector<char> fixed(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) fixed[static_cast<std::size_t>(i)] = q[i] <= 0.0;
  std::vector<Eigen::Index> free_idx;
  for (int iter = 0; iter < 4 * static_cast<int>(n) + 20; ++iter) {
    free_idx.clear();
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!fixed[static_cast<std::size_t>(i)]) free_idx.push_back(i);
    }
    const auto f = static_cast<Eigen::Index>(free_idx.size());
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(f + 1, f + 1);
    Eigen::VectorXd rhs(f + 1);
    for (Eigen::Index r = 0; r < f; ++r) {
      for (Eigen::Index c = 0; c < f; ++c) kkt(r, c) = a(free_idx[r], free_idx[c]);
      kkt(r, f) = kkt(f, r) = 1.0;
      rhs[r] = b[free_idx[r]];
    }
    rhs[f] = 1.0;
    const Eigen::VectorXd sol = kkt.partialPivLu().solve(rhs);
    const double nu = sol[f];

    double step = 1.0;
    Eigen::Index blocking = -1;
    for (Eigen::Index r = 0; r < f; ++r) {
      const double cur = q[free_idx[r]];
      const double dir = sol[r] - cur;
      if (sol[r] < 0.0 && dir < 0.0) {
        const double t = cur / -dir;
        if (t < step) {
          step = t;
          blocking = free_idx[r];
        }
      }
    }
    for (Eigen::Index r = 0; r < f; ++r) {
      q[free_idx[r]] += step * (sol[r] - q[free_idx[r]]);
    }
    if (blocking >= 0) {
      q[blocking] = 0.0;
      fixed[static_cast<std::size_t>(blocking)] = 1;
      continue;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      if (fixed[static_cast<std::size_t>(i)]) q[i] = 0.0;
    }
    // Multipliers of the active bounds: mu = A q - b + nu must be >= 0.
    const Eigen::VectorXd grad = a * q - b;
    Eigen::Index release = -1;
    double worst = -1e-14 * (1.0 + b.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!fixed[static_cast<std::size_t>(i)]) continue;
      const double mu = grad[i] + nu;
      if (mu < worst) {
        worst = mu;
        release = i;
      }
    }
    if (release < 0) break;
    fixed[static_cast<std::size_t>(release)] = 0;
  }
  q = q.cwiseMax(0.0);
  q /= q.sum();
}

class FullSimplexSolver {
public:
  FullSimplexSolver(const Matrix& kernel, std::span<const double> p_obs, double delta, double r,
                    const OtDroOptions& options)
      : h_(kernel, p_obs, delta), r_(r), options_(options), n_(kernel.rows()) {
    vertex_h_.resize(n_);
    std::vector<double> e(n_, 0.0);
    for (std::size_t k = 0; k < n_; ++k) {
      e[k] = 1.0;
      vertex_h_[k] = h_.value(e);
      e[k] = 0.0;
    }
    find_feasible_point();
  }

  bool empty() const { return empty_; }

  std::span<const double> feasible_point() const { return {feasible_.data(), n_}; }

  RobustValue solve(std::span<const double> loss_row) {
    RobustValue out;
    if (empty_) {
      out.value = -kInfinity;
      out.empty = true;
      return out;
    }
    const auto nn = static_cast<Eigen::Index>(n_);
    Eigen::VectorXd c(nn);
    for (Eigen::Index i = 0; i < nn; ++i) c[i] = loss_row[static_cast<std::size_t>(i)];
    const double cmax = c.maxCoeff();
    const double scale = 1.0 + c.cwiseAbs().maxCoeff();
    const double tol = options_.tol * scale;

    for (std::size_t k = 0; k < n_; ++k) {
      if (c[static_cast<Eigen::Index>(k)] == cmax && vertex_h_[k] <= r_) {
        out.value = cmax;
        out.witness = ProbMeasure::point_mass(n_, k);
        return out;
      }
    }

    Eigen::VectorXd best = feasible_;
    double lower = c.dot(best);
    double upper = cmax;

    // Bracket: lo has h > r (lambda too small), hi has h <= r.
    double u_lo = 0.0, u_hi = 0.0, f_lo = 0.0, f_hi = 0.0;
    bool have_lo = false, have_hi = false;
    Eigen::VectorXd p_lo, p_hi;
    Eigen::VectorXd p = warm_p_.size() == nn ? warm_p_ : feasible_;

    const auto evaluate = [&](double u) {
      const double lambda = std::exp(u);
      const auto res = maximize(c, lambda, p);
      upper = std::min(upper, res.psi + res.fw_gap + lambda * r_);
      const double fval = res.h - r_;
      if (fval <= 0.0) {
        if (c.dot(p) > lower) {
          lower = c.dot(p);
          best = p;
        }
        u_hi = u;
        f_hi = fval;
        p_hi = p;
        have_hi = true;
      } else {
        u_lo = u;
        f_lo = fval;
        p_lo = p;
        have_lo = true;
      }
      return fval;
    };

    const double u_max = std::log(kLambdaMax * scale);
    const double u_min = std::log(1e-12 * scale);
    double u = std::log(warm_lambda_ > 0.0 ? warm_lambda_ : scale);
    evaluate(u);
    while (!have_hi && u < u_max && upper - lower > tol) evaluate(u = std::min(u_max, u + 2.0));
    while (!have_lo && u > u_min && upper - lower > tol) evaluate(u = std::max(u_min, u - 2.0));

    int side = 0;
    for (int it = 0; it < options_.max_outer && have_lo && have_hi; ++it) {
      if (upper - lower <= tol || std::abs(u_hi - u_lo) < 1e-13) break;
      // Illinois variant of regula falsi in log lambda.
      double next = (u_lo * f_hi - u_hi * f_lo) / (f_hi - f_lo);
      const double width = u_hi - u_lo;
      if (!std::isfinite(next) || (next - u_lo) / width < 0.01 || (next - u_lo) / width > 0.99) {
        next = 0.5 * (u_lo + u_hi);
      }
      p = (std::abs(next - u_lo) < std::abs(next - u_hi)) ? p_lo : p_hi;
      const double fval = evaluate(next);
      const int new_side = fval <= 0.0 ? 1 : -1;
      if (new_side == side) {
        if (side == 1) f_lo *= 0.5; else f_hi *= 0.5;
      }
      side = new_side;
    }

    // Near a jump of lambda -> h(P_lambda) the two bracket solutions can be
    // far apart; the largest feasible mixture of them is then optimal.
    if (upper - lower > tol && have_lo && have_hi) {
      Eigen::VectorXd mix(nn);
      double a = 0.0, b = 1.0;
      for (int it = 0; it < 60; ++it) {
        const double t = 0.5 * (a + b);
        mix = t * p_lo + (1.0 - t) * p_hi;
        (h_.value(std::span<const double>(mix.data(), n_)) <= r_ ? a : b) = t;
      }
      mix = a * p_lo + (1.0 - a) * p_hi;
      if (c.dot(mix) > lower) {
        lower = c.dot(mix);
        best = mix;
      }
    }

    if (have_hi) {
      warm_lambda_ = std::exp(u_hi);
      warm_p_ = p_hi;
    }
    out.value = lower;
    out.gap = std::max(0.0, upper - lower);
    out.converged = out.gap <= tol;
    std::vector<double> w(best.data(), best.data() + nn);
    out.witness = ProbMeasure::normalized(std::move(w));
    return out;
  }

private:
  /// Maximizes c.P - lambda h(P) from P (updated in place).
  InnerResult maximize(const Eigen::VectorXd& c, double lambda, Eigen::VectorXd& p) {
    const auto nn = static_cast<Eigen::Index>(n_);
    const auto view = [&](const Eigen::VectorXd& v) { return std::span<const double>(v.data(), n_); };
    InnerResult res;
    res.h = h_.value(view(p));
    res.psi = c.dot(p) - lambda * res.h;
    Eigen::VectorXd grad(nn), gh(nn), q(nn), trial(nn);
    Eigen::MatrixXd hess(nn, nn);
    const double tol = 1e-3 * options_.tol * (1.0 + c.cwiseAbs().maxCoeff());
    for (int it = 0; it < options_.max_inner; ++it) {
      h_.gradient(gh);
      grad = c - lambda * gh;
      res.fw_gap = grad.maxCoeff() - grad.dot(p);
      if (res.fw_gap <= tol) break;

      h_.hessian(hess);
      hess *= lambda;
      const double tau = 1e-10 + 1e-9 * hess.diagonal().cwiseAbs().maxCoeff();
      hess.diagonal().array() += tau;
      q = p;
      simplex_qp(hess, grad + hess * p, q);
      const Eigen::VectorXd d = q - p;
      const double slope = grad.dot(d);
      if (!(slope > 0.0)) break;

      double t = 1.0;
      bool moved = false;
      while (t > 1e-14) {
        trial = p + t * d;
        trial = trial.cwiseMax(0.0);
        trial /= trial.sum();
        const double ht = h_.value(view(trial));
        const double psi = c.dot(trial) - lambda * ht;
        if (std::isfinite(psi) && psi >= res.psi + kArmijo * t * slope) {
          p = trial;
          res.h = ht;
          res.psi = psi;
          moved = true;
          break;
        }
        t *= 0.5;
      }
      if (!moved) {
        h_.value(view(p));
        break;
      }
    }
    h_.gradient(gh);
    grad = c - lambda * gh;
    res.fw_gap = std::max(0.0, grad.maxCoeff() - grad.dot(p));
    return res;
  }

  void find_feasible_point() {
    const auto nn = static_cast<Eigen::Index>(n_);
    Eigen::VectorXd p = Eigen::VectorXd::Constant(nn, 1.0 / static_cast<double>(n_));
    std::size_t best_vertex = 0;
    for (std::size_t k = 1; k < n_; ++k) {
      if (vertex_h_[k] < vertex_h_[best_vertex]) best_vertex = k;
    }
    if (vertex_h_[best_vertex] <= r_) {
      feasible_ = Eigen::VectorXd::Zero(nn);
      feasible_[static_cast<Eigen::Index>(best_vertex)] = 1.0;
      return;
    }
    // Minimize h: maximize 0.P - 1 h(P).
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(nn);
    const auto res = maximize(zero, 1.0, p);
    feasible_ = p;
    empty_ = !(res.h <= r_);
  }

  ConstraintFunction h_;
  double r_;
  OtDroOptions options_;
  std::size_t n_;
  std::vector<double> vertex_h_;
  Eigen::VectorXd feasible_;
  bool empty_ = false;
  double warm_lambda_ = 0.0;
  Eigen::VectorXd warm_p_;
};

void require_sizes(const ProbMeasure& p_obs_emp, const AmbiguitySpec& spec,
                   const DecisionProblem& prob) {
  validate(prob);
  validate(spec);
  if (p_obs_emp.size() != spec.channel.observations()) {
    throw DimensionError("ot_dro: observed measure does not fit the channel");
  }
  if (prob.loss.cols() != spec.channel.sources()) {
    throw DimensionError("ot_dro: loss columns do not match the latent alphabet");
  }
}

class ExplicitListSolver {
public:
  ExplicitListSolver(const ProbMeasure& p_obs_emp, const AmbiguitySpec& spec) {
    for (const auto& prior : spec.priors) {
      SmoothedRateOptions opts;
      const auto eval = smoothed_rate(p_obs_emp, prior, spec.channel, spec.delta, opts);
      if (eval.value <= spec.radius + opts.tol) members_.push_back(&prior);
    }
  }

  bool empty() const { return members_.empty(); }

  RobustValue solve(std::span<const double> loss_row) const {
    RobustValue out;
    if (members_.empty()) {
      out.value = -kInfinity;
      out.empty = true;
      return out;
    }
    out.value = -kInfinity;
    for (const auto* p : members_) {
      const double v = std::inner_product(loss_row.begin(), loss_row.end(), p->begin(), 0.0);
      if (v > out.value) {
        out.value = v;
        out.witness = *p;
      }
    }
    return out;
  }

private:
  std::vector<const ProbMeasure*> members_;
};

/// Solves decisions in order of their cost at the initial feasible point and
/// skips those already dominated by a certified lower bound.
void run_pruned(FullSimplexSolver& solver, const DecisionProblem& prob,
                std::vector<double>& values, std::vector<std::optional<ProbMeasure>>& witnesses) {
  const std::size_t decisions = prob.loss.rows();
  const auto start = solver.feasible_point();
  const auto cost_at = [&](std::size_t z, std::span<const double> p) {
    const auto row = prob.loss.row(z);
    return std::inner_product(row.begin(), row.end(), p.begin(), 0.0);
  };
  std::vector<std::size_t> order(decisions);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> proxy(decisions);
  for (std::size_t z = 0; z < decisions; ++z) proxy[z] = cost_at(z, start);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return proxy[a] < proxy[b]; });

  double best = kInfinity;
  std::vector<const ProbMeasure*> found;
  for (std::size_t z : order) {
    double bound = proxy[z];
    for (const auto* w : found) bound = std::max(bound, cost_at(z, w->weights()));
    if (bound > best + prob.epsilon) {
      values[z] = bound;
      continue;
    }
    auto v = solver.solve(prob.loss.row(z));
    values[z] = v.value;
    best = std::min(best, v.value);
    witnesses[z] = std::move(v.witness);
    if (witnesses[z]) found.push_back(&*witnesses[z]);
  }
}

}  // namespace

RobustValue ot_dro_predictor(std::size_t z, const ProbMeasure& p_obs_emp,
                             const AmbiguitySpec& spec, const DecisionProblem& prob,
                             const OtDroOptions& options) {
  require_sizes(p_obs_emp, spec, prob);
  if (z >= prob.loss.rows()) throw DimensionError("ot_dro_predictor: decision out of range");
  if (spec.family == PriorFamily::ExplicitList) {
    return ExplicitListSolver(p_obs_emp, spec).solve(prob.loss.row(z));
  }
  FullSimplexSolver solver(spec.channel.kernel(), p_obs_emp.weights(), spec.delta, spec.radius,
                           options);
  return solver.solve(prob.loss.row(z));
}

Prescription ot_dro_prescribe(const ProbMeasure& p_obs_emp, const AmbiguitySpec& spec,
                              const DecisionProblem& prob, const OtDroOptions& options) {
  require_sizes(p_obs_emp, spec, prob);
  const std::size_t decisions = prob.loss.rows();
  Prescription out;
  out.per_decision_values.resize(decisions);
  std::vector<std::optional<ProbMeasure>> witnesses(decisions);

  const auto run = [&](auto& solver) {
    if (solver.empty()) {
      throw InfeasibleError("ot_dro_prescribe: the ambiguity set is empty");
    }
    for (std::size_t z = 0; z < decisions; ++z) {
      auto v = solver.solve(prob.loss.row(z));
      out.per_decision_values[z] = v.value;
      witnesses[z] = std::move(v.witness);
    }
  };
  if (spec.family == PriorFamily::ExplicitList) {
    ExplicitListSolver solver(p_obs_emp, spec);
    run(solver);
  } else {
    FullSimplexSolver solver(spec.channel.kernel(), p_obs_emp.weights(), spec.delta,
                             spec.radius, options);
    if (options.prune_dominated) {
      if (solver.empty()) throw InfeasibleError("ot_dro_prescribe: the ambiguity set is empty");
      run_pruned(solver, prob, out.per_decision_values, witnesses);
    } else {
      run(solver);
    }
  }
  out.decision_index = select_decision(out.per_decision_values, prob.epsilon);
  out.budget = out.per_decision_values[out.decision_index];
  out.worst_case_witness = std::move(witnesses[out.decision_index]);
  return out;
}

}  // namespace noisyot
