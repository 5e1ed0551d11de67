#include "noisyot/rate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include <Eigen/Dense>

#include "noisyot/errors.hpp"

namespace noisyot {

namespace {

void require_sizes(const ProbMeasure& p_obs, const ProbMeasure& p, const Channel& ch,
                   const char* what) {
  if (p.size() != ch.sources() || p_obs.size() != ch.observations()) {
    throw DimensionError(std::string(what) + ": measures of size " +
                         std::to_string(p_obs.size()) + " and " + std::to_string(p.size()) +
                         " do not fit a " + std::to_string(ch.sources()) + "x" +
                         std::to_string(ch.observations()) + " channel");
  }
}

// sum_j x_j log(x_j / y_j) over the coordinates where x_j > 0.
double kl_terms(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (x[j] > 0.0) s += x[j] * std::log(x[j] / y[j]);
  }
  return s;
}

struct UnionFind {
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t v) {
    while (parent[v] != v) v = parent[v] = parent[parent[v]];
    return v;
  }
  void unite(std::size_t a, std::size_t b) { parent[find(a)] = find(b); }
  std::vector<std::size_t> parent;
};

}  // namespace

RateEvaluation rate_closed_form(const ProbMeasure& p_obs, const ProbMeasure& p,
                                const Channel& ch) {
  require_sizes(p_obs, p, ch, "rate_closed_form");
  const auto push = convolve(ch, p.weights());
  RateEvaluation out;
  out.method = RateMethod::ClosedForm;
  out.value = std::max(0.0, kl_divergence(p_obs.weights(), push));
  if (std::isinf(out.value)) return out;

  Matrix plan(ch.sources(), ch.observations(), 0.0);
  for (std::size_t j = 0; j < ch.observations(); ++j) {
    if (p_obs[j] == 0.0) continue;
    for (std::size_t i = 0; i < ch.sources(); ++i) {
      plan(i, j) = p_obs[j] * p[i] * ch.kernel()(i, j) / push[j];
    }
  }
  auto q = ProbMeasure::normalized(plan.row_sums());
  out.witness_plan = TransportPlan{std::move(plan), q, p_obs};
  out.witness_q = std::move(q);
  return out;
}

RateTerms evaluate_rate_terms(const ProbMeasure& p_obs, const ProbMeasure& q,
                              const ProbMeasure& p, const Channel& ch) {
  require_sizes(p_obs, p, ch, "evaluate_rate_terms");
  if (q.size() != p.size()) throw DimensionError("evaluate_rate_terms: q has the wrong size");
  RateTerms t;
  t.transport = eot_distance(q, p_obs, ch.cost()).value;
  t.latent_kl = kl_divergence(q, p);
  t.base_kl = kl_divergence(p_obs, ch.base());
  t.total = t.transport + t.latent_kl + t.base_kl;
  return t;
}

RateEvaluation rate_variational(const ProbMeasure& p_obs, const ProbMeasure& p,
                                const Channel& ch, const VariationalOptions& options) {
  require_sizes(p_obs, p, ch, "rate_variational");
  const std::size_t n = ch.sources();
  const std::size_t m = ch.observations();
  const auto& kernel = ch.kernel();

  RateEvaluation out;
  out.method = RateMethod::Variational;

  // Q can only charge rows with P_i > 0 that reach some observed column.
  std::vector<char> active(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (p[i] == 0.0) continue;
    for (std::size_t j = 0; j < m; ++j) {
      if (p_obs[j] > 0.0 && kernel(i, j) > 0.0) active[i] = 1;
    }
  }
  std::vector<double> reach(m, 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      if (active[i] && kernel(i, j) > 0.0) reach[j] += 1.0;
    }
    if (p_obs[j] > 0.0 && reach[j] == 0.0) {
      out.value = kInfinity;
      return out;
    }
  }

  // Feasible start: spread each observed column evenly over the rows it reaches.
  std::vector<double> q(n, 0.0);
  UnionFind uf(n + m);
  for (std::size_t j = 0; j < m; ++j) {
    if (p_obs[j] == 0.0) continue;
    for (std::size_t i = 0; i < n; ++i) {
      if (active[i] && kernel(i, j) > 0.0) {
        q[i] += p_obs[j] / reach[j];
        uf.unite(i, n + j);
      }
    }
  }
  // Every feasible Q carries the same mass on each connected component of the
  // bipartite support graph, so steps renormalize component by component.
  std::vector<std::size_t> comp(n, 0);
  std::vector<double> comp_mass(n + m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!active[i]) continue;
    comp[i] = uf.find(i);
    comp_mass[comp[i]] += q[i];
  }

  const double base_kl = kl_divergence(p_obs, ch.base());
  // Late steps decrease the objective by about gap^2, which must stay above
  // the noise of the inner transport values.
  SinkhornOptions sk;
  sk.tol = 1e-13;
  std::vector<double> warm;

  struct Eval {
    SinkhornReport sinkhorn;
    double value;
  };
  const auto evaluate = [&](const std::vector<double>& qv) -> std::optional<Eval> {
    if (!has_feasible_plan(qv, p_obs.weights(), ch.cost())) return std::nullopt;
    const ProbMeasure qm = ProbMeasure::normalized(qv);
    sk.warm_start = warm.empty() ? nullptr : &warm;
    auto rep = eot_distance(qm, p_obs, ch.cost(), sk);
    const double v = rep.value + kl_terms(qv, p.weights()) + base_kl;
    return Eval{std::move(rep), v};
  };

  auto current = evaluate(q);
  if (!current) throw InfeasibleError("rate_variational: starting point has no coupling");
  warm = current->sinkhorn.g;

  std::vector<double> grad(n), trial(n), comp_min(n + m), comp_top(n + m), comp_sum(n + m);
  double eta = 0.5;
  int it = 0;
  double gap = kInfinity;
  for (; it < options.max_iter; ++it) {
    const auto& f = current->sinkhorn.f;
    std::fill(comp_min.begin(), comp_min.end(), kInfinity);
    double inner = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!active[i]) continue;
      grad[i] = f[i] + std::log(q[i] / p[i]) + 1.0;
      inner += q[i] * grad[i];
      comp_min[comp[i]] = std::min(comp_min[comp[i]], grad[i]);
    }
    double lin = 0.0;
    for (std::size_t c = 0; c < n + m; ++c) {
      if (comp_mass[c] > 0.0) lin += comp_mass[c] * comp_min[c];
    }
    gap = inner - lin;
    if (gap <= options.tol) break;

    const double noise = 1e-12 * (1.0 + std::abs(current->value));
    // Newton step. On feasible directions the transport term has Hessian M^+
    // with M = diag(Q) - T diag(1/P') T^T, so dq = M u where
    // (diag(Q) + M) u = -diag(Q) grad.
    {
      const auto& plan = current->sinkhorn.plan.matrix;
      Eigen::MatrixXd mm = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                                                 static_cast<Eigen::Index>(n));
      for (std::size_t j = 0; j < m; ++j) {
        if (p_obs[j] == 0.0) continue;
        for (std::size_t a = 0; a < n; ++a) {
          if (!active[a] || plan(a, j) == 0.0) continue;
          for (std::size_t b = 0; b < n; ++b) {
            if (active[b]) mm(a, b) -= plan(a, j) * plan(b, j) / p_obs[j];
          }
        }
      }
      Eigen::VectorXd rhs(static_cast<Eigen::Index>(n));
      for (std::size_t i = 0; i < n; ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        if (active[i]) {
          double row = 0.0;
          for (std::size_t j = 0; j < m; ++j) row += plan(i, j);
          mm(k, k) += row;
          rhs(k) = -q[i] * grad[i];
        } else {
          mm(k, k) = 1.0;
          rhs(k) = 0.0;
        }
      }
      Eigen::MatrixXd sys = mm;
      for (std::size_t i = 0; i < n; ++i) {
        if (active[i]) sys(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) += q[i];
      }
      const Eigen::LDLT<Eigen::MatrixXd> ldlt(sys);
      Eigen::VectorXd dq = mm * ldlt.solve(rhs);
      double decrease = 0.0;
      double t = 1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (!active[i]) continue;
        const auto k = static_cast<Eigen::Index>(i);
        decrease -= grad[i] * dq(k);
        if (dq(k) < 0.0) t = std::min(t, -0.9 * q[i] / dq(k));
      }
      bool taken = false;
      if (ldlt.info() == Eigen::Success && decrease > 0.0 && std::isfinite(decrease)) {
        for (; t >= 1e-3 && !taken; t *= 0.5) {
          for (std::size_t i = 0; i < n; ++i) {
            trial[i] = active[i] ? q[i] + t * dq(static_cast<Eigen::Index>(i)) : 0.0;
          }
          auto next = evaluate(trial);
          if (next && next->value <= current->value - 1e-4 * t * decrease + noise) {
            q = trial;
            current = std::move(next);
            warm = current->sinkhorn.g;
            taken = true;
          }
        }
      }
      if (taken) continue;
    }

    bool accepted = false;
    while (eta >= 1e-12) {
      // log Q_new = (1 - eta) log Q + eta (log P - f), renormalized per component.
      std::fill(comp_top.begin(), comp_top.end(), -kInfinity);
      for (std::size_t i = 0; i < n; ++i) {
        if (!active[i]) continue;
        trial[i] = (1.0 - eta) * std::log(q[i]) + eta * (std::log(p[i]) - f[i]);
        comp_top[comp[i]] = std::max(comp_top[comp[i]], trial[i]);
      }
      std::fill(comp_sum.begin(), comp_sum.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        if (!active[i]) {
          trial[i] = 0.0;
          continue;
        }
        trial[i] = std::exp(trial[i] - comp_top[comp[i]]);
        comp_sum[comp[i]] += trial[i];
      }
      for (std::size_t i = 0; i < n; ++i) {
        if (active[i]) trial[i] *= comp_mass[comp[i]] / comp_sum[comp[i]];
      }
      auto next = evaluate(trial);
      // Changes below the rounding level of the value cannot rank the two points;
      // such steps are taken and the gap decides when to stop.
      if (next && next->value <= current->value + noise) {
        q = trial;
        current = std::move(next);
        warm = current->sinkhorn.g;
        eta = std::min(0.5, eta * 1.5);
        accepted = true;
        break;
      }
      eta *= 0.5;
    }
    if (!accepted) break;
  }

  out.value = std::max(0.0, current->value);
  out.iterations = it;
  out.gap = gap;
  out.converged = gap <= options.tol && current->sinkhorn.converged;
  out.witness_q = ProbMeasure::normalized(q);
  out.witness_plan = std::move(current->sinkhorn.plan);

  const auto closed = rate_closed_form(p_obs, p, ch);
  if (closed.witness_q) out.closed_form_terms = evaluate_rate_terms(p_obs, *closed.witness_q, p, ch);
  return out;
}

KlTvProjection kl_tv_projection(std::span<const double> p_hat, std::span<const double> y,
                                double delta) {
  if (p_hat.size() != y.size()) throw DimensionError("kl_tv_projection: size mismatch");
  if (!(delta >= 0.0)) throw DomainError("kl_tv_projection: delta must be nonnegative");
  const std::size_t n = y.size();
  KlTvProjection out;
  out.region.assign(n, 0);
  out.x.assign(n, 0.0);

  double tv = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    tv += std::abs(p_hat[j] - y[j]);
    if (y[j] == 0.0) {
      out.region[j] = 2;
      out.forced_mass += p_hat[j];
    }
  }
  tv *= 0.5;
  if (out.forced_mass > delta) {
    out.value = kInfinity;
    std::copy(p_hat.begin(), p_hat.end(), out.x.begin());
    return out;
  }
  if (tv <= delta) {
    out.inside = true;
    std::copy(y.begin(), y.end(), out.x.begin());
    return out;
  }

  // Breakpoints p_hat_j / y_j over {y > 0}, in increasing order.
  std::vector<std::size_t> order;
  order.reserve(n);
  for (std::size_t j = 0; j < n; ++j) if (y[j] > 0.0) order.push_back(j);
  const auto ratio = [&](std::size_t j) { return p_hat[j] / y[j]; };
  std::sort(order.begin(), order.end(),
            [&](std::size_t l, std::size_t r) { return ratio(l) < ratio(r); });

  // a solves sum_j (a y_j - p_hat_j)^+ = delta.
  {
    double sy = 0.0, sp = 0.0;
    for (std::size_t k = 0; k < order.size(); ++k) {
      sy += y[order[k]];
      sp += p_hat[order[k]];
      const double next = k + 1 < order.size() ? ratio(order[k + 1]) : kInfinity;
      if (next * sy - sp >= delta) {
        out.a = (delta + sp) / sy;
        break;
      }
    }
  }
  // b solves sum_j (p_hat_j - b y_j)^+ = delta - forced_mass.
  const double outflow = delta - out.forced_mass;
  if (outflow <= 0.0) {
    out.b = ratio(order.back());
  } else {
    double sy = 0.0, sp = 0.0;
    for (std::size_t k = order.size(); k-- > 0;) {
      sy += y[order[k]];
      sp += p_hat[order[k]];
      const double next = k > 0 ? ratio(order[k - 1]) : 0.0;
      if (sp - next * sy >= outflow) {
        out.b = (sp - outflow) / sy;
        break;
      }
    }
  }

  double value = 0.0;
  for (std::size_t j : order) {
    const double lo = out.a * y[j];
    const double hi = out.b * y[j];
    double x = p_hat[j];
    if (x < lo) {
      x = lo;
      out.region[j] = 1;
    } else if (x > hi) {
      x = hi;
      out.region[j] = -1;
    }
    out.x[j] = x;
    if (x > 0.0) value += x * std::log(x / y[j]);
  }
  out.value = std::max(0.0, value);
  return out;
}

SmoothedRateEvaluation smoothed_rate(const ProbMeasure& p_obs, const ProbMeasure& p,
                                     const Channel& ch, double delta,
                                     const SmoothedRateOptions& options) {
  require_sizes(p_obs, p, ch, "smoothed_rate");
  if (!(delta >= 0.0) || !std::isfinite(delta)) {
    throw DomainError("smoothed_rate: delta must be a nonnegative real");
  }
  const auto y = convolve(ch, p.weights());
  const std::size_t n = y.size();

  SmoothedRateEvaluation out;
  out.delta = delta;
  if (tv_distance(p_obs.weights(), y) <= delta) {
    out.witness_p2 = ProbMeasure::normalized(y);
    return out;
  }
  double forced = 0.0;
  for (std::size_t j = 0; j < n; ++j) if (y[j] == 0.0) forced += p_obs[j];
  if (delta == 0.0 || forced > delta) {
    out.value = std::max(0.0, kl_divergence(p_obs.weights(), y));
    out.witness_p2 = p_obs;
    return out;
  }

  // Work on J = {y > 0}. hat is p_obs restricted to J (mass 1 - forced).
  std::vector<std::size_t> J;
  for (std::size_t j = 0; j < n; ++j) if (y[j] > 0.0) J.push_back(j);
  const std::size_t k = J.size();
  std::vector<double> hat(k), yy(k);
  for (std::size_t t = 0; t < k; ++t) {
    hat[t] = p_obs[J[t]];
    yy[t] = y[J[t]];
  }
  const double budget_out = delta - forced;

  std::vector<double> grad(k), s(k), dir(k);
  std::vector<std::size_t> by_grad(k);
  const auto linear_oracle = [&]() {
    const auto jmin = static_cast<std::size_t>(
        std::min_element(grad.begin(), grad.end()) - grad.begin());
    std::iota(by_grad.begin(), by_grad.end(), 0);
    std::sort(by_grad.begin(), by_grad.end(),
              [&](std::size_t l, std::size_t r) { return grad[l] > grad[r]; });
    s = hat;
    double moved = 0.0;
    for (std::size_t t : by_grad) {
      if (moved >= budget_out || !(grad[t] > grad[jmin])) break;
      const double take = std::min(hat[t], budget_out - moved);
      s[t] -= take;
      moved += take;
    }
    s[jmin] += forced + moved;
  };
  // <grad, v> with 0 * (-inf) = 0.
  const auto dot = [&](const std::vector<double>& v) {
    double acc = 0.0;
    for (std::size_t t = 0; t < k; ++t) if (v[t] != 0.0) acc += grad[t] * v[t];
    return acc;
  };

  struct Atom {
    std::vector<double> v;
    double weight;
  };
  std::vector<Atom> atoms;
  std::vector<double> x = hat;
  {
    const auto top = static_cast<std::size_t>(std::max_element(yy.begin(), yy.end()) - yy.begin());
    x[top] += forced;
    atoms.push_back({x, 1.0});
  }

  const auto phi_prime = [&](double gamma) {
    double acc = 0.0;
    for (std::size_t t = 0; t < k; ++t) {
      if (dir[t] == 0.0) continue;
      const double v = x[t] + gamma * dir[t];
      acc += dir[t] * (v > 0.0 ? std::log(v / yy[t]) : -kInfinity);
    }
    return acc;
  };

  int it = 0;
  double gap = kInfinity;
  for (; it < options.max_iter; ++it) {
    for (std::size_t t = 0; t < k; ++t) {
      grad[t] = x[t] > 0.0 ? std::log(x[t] / yy[t]) + 1.0 : -kInfinity;
    }
    linear_oracle();
    gap = dot(x) - dot(s);
    if (gap <= options.tol) break;

    std::size_t away = 0;
    double away_val = -kInfinity;
    for (std::size_t a = 0; a < atoms.size(); ++a) {
      const double v = dot(atoms[a].v);
      if (v > away_val) {
        away_val = v;
        away = a;
      }
    }
    const double away_gap = away_val - dot(x);
    const bool fw_step = gap >= away_gap || atoms.size() == 1;
    double gamma_max;
    if (fw_step) {
      for (std::size_t t = 0; t < k; ++t) dir[t] = s[t] - x[t];
      gamma_max = 1.0;
    } else {
      for (std::size_t t = 0; t < k; ++t) dir[t] = x[t] - atoms[away].v[t];
      const double w = atoms[away].weight;
      gamma_max = w / (1.0 - w);
    }

    // phi is convex along dir; locate the zero of phi' by bisection.
    double gamma;
    if (phi_prime(gamma_max) <= 0.0) {
      gamma = gamma_max;
    } else {
      double lo = 0.0, hi = gamma_max;
      for (int b = 0; b < 100 && hi - lo > 1e-16 * gamma_max; ++b) {
        const double mid = 0.5 * (lo + hi);
        (phi_prime(mid) > 0.0 ? hi : lo) = mid;
      }
      gamma = 0.5 * (lo + hi);
    }
    if (gamma <= 0.0) break;

    for (std::size_t t = 0; t < k; ++t) x[t] = std::max(0.0, x[t] + gamma * dir[t]);
    if (fw_step) {
      for (auto& a : atoms) a.weight *= 1.0 - gamma;
      auto hit = std::find_if(atoms.begin(), atoms.end(), [&](const Atom& a) { return a.v == s; });
      if (hit == atoms.end()) {
        atoms.push_back({s, gamma});
      } else {
        hit->weight += gamma;
      }
      if (gamma >= 1.0) atoms.assign(1, Atom{s, 1.0});
    } else {
      for (auto& a : atoms) a.weight *= 1.0 + gamma;
      atoms[away].weight -= gamma;
      if (gamma >= gamma_max) atoms.erase(atoms.begin() + static_cast<std::ptrdiff_t>(away));
    }
    std::erase_if(atoms, [](const Atom& a) { return a.weight <= 0.0; });
  }

  std::vector<double> full(n, 0.0);
  for (std::size_t t = 0; t < k; ++t) full[J[t]] = x[t];
  out.value = std::max(0.0, kl_terms(x, yy));
  out.witness_p2 = ProbMeasure::normalized(std::move(full));
  out.iterations = it;
  out.gap = gap;
  out.converged = gap <= options.tol;
  return out;
}

}  // namespace noisyot
