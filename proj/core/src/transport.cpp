#include "noisyot/transport.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <string>

#include "noisyot/errors.hpp"

namespace noisyot {

namespace {

constexpr double kFlowSlack = 1e-12;

bool finite_cost(double d) { return !(std::isinf(d) && d > 0); }

// Dense Edmonds-Karp; the graphs here have at most a few hundred nodes.
double max_flow(std::vector<std::vector<double>>& cap, std::size_t s, std::size_t t) {
  const std::size_t n = cap.size();
  double total = 0.0;
  std::vector<std::size_t> parent(n);
  for (;;) {
    std::fill(parent.begin(), parent.end(), n);
    parent[s] = s;
    std::deque<std::size_t> queue{s};
    while (!queue.empty() && parent[t] == n) {
      const std::size_t u = queue.front();
      queue.pop_front();
      for (std::size_t v = 0; v < n; ++v) {
        if (parent[v] == n && cap[u][v] > 1e-300) {
          parent[v] = u;
          queue.push_back(v);
        }
      }
    }
    if (parent[t] == n) break;
    double push = kInfinity;
    for (std::size_t v = t; v != s; v = parent[v]) push = std::min(push, cap[parent[v]][v]);
    for (std::size_t v = t; v != s; v = parent[v]) {
      cap[parent[v]][v] -= push;
      cap[v][parent[v]] += push;
    }
    total += push;
  }
  return total;
}

}  // namespace

bool has_feasible_plan(std::span<const double> mu, std::span<const double> nu,
                       const Matrix& cost) {
  if (mu.size() != cost.rows() || nu.size() != cost.cols()) {
    throw DimensionError("has_feasible_plan: marginals do not match the cost matrix");
  }
  std::vector<std::size_t> rows, cols;
  for (std::size_t i = 0; i < mu.size(); ++i) if (mu[i] > 0.0) rows.push_back(i);
  for (std::size_t j = 0; j < nu.size(); ++j) if (nu[j] > 0.0) cols.push_back(j);
  const std::size_t nodes = rows.size() + cols.size() + 2;
  const std::size_t source = nodes - 2;
  const std::size_t sink = nodes - 1;
  std::vector<std::vector<double>> cap(nodes, std::vector<double>(nodes, 0.0));
  double total = 0.0;
  for (std::size_t a = 0; a < rows.size(); ++a) {
    cap[source][a] = mu[rows[a]];
    total += mu[rows[a]];
    for (std::size_t b = 0; b < cols.size(); ++b) {
      if (finite_cost(cost(rows[a], cols[b]))) cap[a][rows.size() + b] = kInfinity;
    }
  }
  for (std::size_t b = 0; b < cols.size(); ++b) cap[rows.size() + b][sink] = nu[cols[b]];
  return max_flow(cap, source, sink) >= total - kFlowSlack * static_cast<double>(nodes);
}

SinkhornReport eot_distance(const ProbMeasure& mu, const ProbMeasure& nu, const Matrix& cost,
                            const SinkhornOptions& options) {
  if (mu.size() != cost.rows() || nu.size() != cost.cols()) {
    throw DimensionError("eot_distance: marginals of size " + std::to_string(mu.size()) +
                         " and " + std::to_string(nu.size()) + " do not match a " +
                         std::to_string(cost.rows()) + "x" + std::to_string(cost.cols()) +
                         " cost");
  }
  for (double d : cost.data()) {
    if (std::isnan(d) || (std::isinf(d) && d < 0)) {
      throw DomainError("eot_distance: cost entries must be real or +inf");
    }
  }
  if (!has_feasible_plan(mu.weights(), nu.weights(), cost)) {
    throw InfeasibleError("eot_distance: no transport plan with finite cost");
  }
  if (options.warm_start && options.warm_start->size() != nu.size()) {
    throw DimensionError("eot_distance: warm start has the wrong size");
  }

  std::vector<std::size_t> rows, cols;
  for (std::size_t i = 0; i < mu.size(); ++i) if (mu[i] > 0.0) rows.push_back(i);
  for (std::size_t j = 0; j < nu.size(); ++j) if (nu[j] > 0.0) cols.push_back(j);
  const std::size_t m = rows.size();
  const std::size_t k = cols.size();

  // Working copies restricted to the supports; log_a/log_b hold log mu, log nu.
  std::vector<double> d(m * k), log_a(m), log_b(k), f(m, 0.0), g(k, 0.0), f_next(m);
  for (std::size_t a = 0; a < m; ++a) {
    log_a[a] = std::log(mu[rows[a]]);
    for (std::size_t b = 0; b < k; ++b) d[a * k + b] = cost(rows[a], cols[b]);
  }
  for (std::size_t b = 0; b < k; ++b) {
    log_b[b] = std::log(nu[cols[b]]);
    if (options.warm_start) g[b] = (*options.warm_start)[cols[b]];
  }

  std::vector<double> scratch(std::max(m, k));
  // f_a = -log sum_b nu_b exp(g_b - d_ab)
  const auto update_rows = [&](std::vector<double>& out) {
    for (std::size_t a = 0; a < m; ++a) {
      double top = -kInfinity;
      for (std::size_t b = 0; b < k; ++b) {
        scratch[b] = log_b[b] + g[b] - d[a * k + b];
        top = std::max(top, scratch[b]);
      }
      double s = 0.0;
      for (std::size_t b = 0; b < k; ++b) s += std::exp(scratch[b] - top);
      out[a] = -(top + std::log(s));
    }
  };
  const auto update_cols = [&]() {
    for (std::size_t b = 0; b < k; ++b) {
      double top = -kInfinity;
      for (std::size_t a = 0; a < m; ++a) {
        scratch[a] = log_a[a] + f[a] - d[a * k + b];
        top = std::max(top, scratch[a]);
      }
      double s = 0.0;
      for (std::size_t a = 0; a < m; ++a) s += std::exp(scratch[a] - top);
      g[b] = -(top + std::log(s));
    }
  };

  SinkhornReport report;
  update_rows(f);
  double err = kInfinity;
  int it = 0;
  while (it < options.max_iter) {
    ++it;
    update_cols();
    // With g freshly updated the columns are exact, and row a of the plan
    // sums to mu_a exp(f_a - f_next_a).
    update_rows(f_next);
    err = 0.0;
    for (std::size_t a = 0; a < m; ++a) {
      err += std::exp(log_a[a]) * std::abs(std::expm1(f[a] - f_next[a]));
    }
    if (options.checkpoint_every > 0 && it % options.checkpoint_every == 0) {
      report.checkpoints.push_back(err);
    }
    if (err <= options.tol) break;
    f.swap(f_next);
  }

  Matrix plan(mu.size(), nu.size(), 0.0);
  double value = 0.0;
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = 0; b < k; ++b) {
      const double dab = d[a * k + b];
      if (!finite_cost(dab)) continue;
      const double t = std::exp(log_a[a] + log_b[b] + f[a] + g[b] - dab);
      plan(rows[a], cols[b]) = t;
      value += t * (f[a] + g[b]);
    }
  }

  const auto rs = plan.row_sums();
  const auto cs = plan.col_sums();
  double row_err = 0.0, col_err = 0.0;
  for (std::size_t i = 0; i < rs.size(); ++i) row_err += std::abs(rs[i] - mu[i]);
  for (std::size_t j = 0; j < cs.size(); ++j) col_err += std::abs(cs[j] - nu[j]);

  report.value = value;
  report.plan = TransportPlan{std::move(plan), mu, nu};
  report.iterations = it;
  report.final_marginal_error = std::max(row_err, col_err);
  report.converged = err <= options.tol;
  report.f.assign(mu.size(), 0.0);
  report.g.assign(nu.size(), 0.0);
  for (std::size_t a = 0; a < m; ++a) report.f[rows[a]] = f[a];
  for (std::size_t b = 0; b < k; ++b) report.g[cols[b]] = g[b];
  return report;
}

ChainDecomposition kl_chain_decomposition(const Matrix& t_prime, const Channel& ch,
                                          const ProbMeasure& p) {
  if (t_prime.rows() != ch.sources() || t_prime.cols() != ch.observations() ||
      p.size() != ch.sources()) {
    throw DimensionError("kl_chain_decomposition: sizes do not match the channel");
  }
  for (double v : t_prime.data()) {
    if (!std::isfinite(v) || v < 0.0) {
      throw DomainError("kl_chain_decomposition: plan entries must be finite and nonnegative");
    }
  }
  if (std::abs(t_prime.sum() - 1.0) > 1e-9) {
    throw DomainError("kl_chain_decomposition: plan must have total mass one");
  }

  ChainDecomposition out;
  for (std::size_t i = 0; i < t_prime.rows(); ++i) {
    for (std::size_t j = 0; j < t_prime.cols(); ++j) {
      if (t_prime(i, j) > 0.0 && p[i] * ch.kernel()(i, j) == 0.0) {
        out.transport = out.mutual_information = out.latent_kl = out.observed_kl = kInfinity;
        out.sum = out.direct = kInfinity;
        out.violation = std::make_pair(i, j);
        return out;
      }
    }
  }

  const auto rows = t_prime.row_sums();
  const auto cols = t_prime.col_sums();
  const auto& d = ch.cost();
  for (std::size_t i = 0; i < t_prime.rows(); ++i) {
    for (std::size_t j = 0; j < t_prime.cols(); ++j) {
      const double t = t_prime(i, j);
      if (t == 0.0) continue;
      out.transport += t * d(i, j);
      out.mutual_information += t * std::log(t / (rows[i] * cols[j]));
      out.direct += t * std::log(t / (p[i] * ch.kernel()(i, j)));
    }
  }
  out.latent_kl = kl_divergence(rows, p.weights());
  out.observed_kl = kl_divergence(cols, ch.base().weights());
  out.sum = out.transport + out.mutual_information + out.latent_kl + out.observed_kl;
  return out;
}

}  // namespace noisyot
