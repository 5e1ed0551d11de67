#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace oracle {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Golden-section minimization of a unimodal function on [a, b].
double golden_min(const std::function<double(double)>& f, double a, double b) {
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - g * (b - a), x2 = a + g * (b - a);
  double f1 = f(x1), f2 = f(x2);
  for (int it = 0; it < 200 && b - a > 1e-15; ++it) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - g * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + g * (b - a);
      f2 = f(x2);
    }
  }
  return std::min({f1, f2, f(a), f(b)});
}

/// Grid scan on [lo, hi] followed by golden refinement around the best point.
double scan_min(const std::function<double(double)>& f, double lo, double hi, int grid) {
  if (hi <= lo) return f(lo);
  double best = kInf;
  int at = 0;
  for (int k = 0; k <= grid; ++k) {
    const double v = f(lo + (hi - lo) * k / grid);
    if (v < best) {
      best = v;
      at = k;
    }
  }
  const double a = lo + (hi - lo) * std::max(0, at - 1) / grid;
  const double b = lo + (hi - lo) * std::min(grid, at + 1) / grid;
  return std::min(best, golden_min(f, a, b));
}

long double log_u128(unsigned __int128 v) {
  const auto hi = static_cast<std::uint64_t>(v >> 64);
  const auto lo = static_cast<std::uint64_t>(v);
  return std::log(static_cast<long double>(hi) * 18446744073709551616.0L +
                  static_cast<long double>(lo));
}

/// Largest feasible t on the side of `inside` toward `outside` by bisection.
double boundary(const std::function<bool(double)>& feasible, double inside, double outside) {
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (inside + outside);
    (feasible(mid) ? inside : outside) = mid;
  }
  return inside;
}

}  // namespace

double kl(const std::vector<double>& p, const std::vector<double>& q) {
  long double s = 0.0L;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0) return kInf;
    s += static_cast<long double>(p[i]) * std::log(static_cast<long double>(p[i]) / q[i]);
  }
  return static_cast<double>(s);
}

double kl2(double s, double y) { return kl({s, 1.0 - s}, {y, 1.0 - y}); }

double eot_2x2(double mu0, double nu0, const double d[2][2], int grid) {
  const double mu[2] = {mu0, 1.0 - mu0};
  const double nu[2] = {nu0, 1.0 - nu0};
  const auto objective = [&](double t) {
    const double plan[2][2] = {{t, mu0 - t}, {nu0 - t, 1.0 - mu0 - nu0 + t}};
    long double v = 0.0L;
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) {
        const double x = std::max(0.0, plan[i][j]);
        if (x == 0.0) continue;
        v += x * (d[i][j] + std::log(static_cast<long double>(x) / (mu[i] * nu[j])));
      }
    }
    return static_cast<double>(v);
  };
  return scan_min(objective, std::max(0.0, mu0 + nu0 - 1.0), std::min(mu0, nu0), grid);
}

long double log_half_binomial_tail(unsigned n, unsigned kmin) {
  unsigned __int128 c = 1, total = 0;
  for (unsigned k = 0; k <= n; ++k) {
    if (k > 0) c = c * (n - k + 1) / k;
    if (k >= kmin) total += c;
  }
  if (total == 0) return -std::numeric_limits<long double>::infinity();
  return log_u128(total) - n * std::log(2.0L);
}

double smoothed_rate_binary(double p0, double y0, double delta, int grid) {
  const double lo = std::max(0.0, p0 - delta), hi = std::min(1.0, p0 + delta);
  return scan_min([&](double t) { return kl2(t, y0); }, lo, hi, grid);
}

double smoothed_rate_grid3(const std::vector<double>& p_hat, const std::vector<double>& y,
                           double delta, int steps) {
  const auto feasible = [&](const std::vector<double>& x) {
    double tv = 0.0;
    for (int j = 0; j < 3; ++j) {
      if (x[j] < 0.0) return false;
      tv += 0.5 * std::abs(x[j] - p_hat[j]);
    }
    return tv <= delta + 1e-12;
  };
  double best = kInf;
  std::vector<double> arg;
  for (int a = 0; a <= steps; ++a) {
    for (int b = 0; a + b <= steps; ++b) {
      const std::vector<double> x{double(a) / steps, double(b) / steps,
                                  double(steps - a - b) / steps};
      if (!feasible(x)) continue;
      const double v = kl(x, y);
      if (v < best) {
        best = v;
        arg = x;
      }
    }
  }
  if (!std::isfinite(best)) return best;
  // The simplex and the TV ball are polygons with edges along e_i - e_j, so
  // a pattern search over those six directions cannot stall short of the minimum.
  for (double h = 1.0 / steps; h > 1e-13; h *= 0.5) {
    bool moved = true;
    for (int sweep = 0; moved && sweep < 100; ++sweep) {
      moved = false;
      for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
          if (i == j) continue;
          // Doubling steps along the direction while they keep improving.
          for (double step = h;; step *= 2.0) {
            auto x = arg;
            x[i] += step;
            x[j] -= step;
            if (!feasible(x)) break;
            const double v = kl(x, y);
            if (!(v < best)) break;
            best = v;
            arg = x;
            moved = true;
          }
        }
      }
    }
  }
  return best;
}

double entropic_dro_binary(const double c[2], double p_hat0, double r) {
  const auto feasible = [&](double t) { return kl({p_hat0, 1.0 - p_hat0}, {t, 1.0 - t}) <= r; };
  const double lo = feasible(0.0) ? 0.0 : boundary(feasible, p_hat0, 0.0);
  const double hi = feasible(1.0) ? 1.0 : boundary(feasible, p_hat0, 1.0);
  const auto value = [&](double t) { return c[0] * t + c[1] * (1.0 - t); };
  return std::max(value(lo), value(hi));
}

double ot_dro_binary(const double c[2], const double k[2][2], double p_obs0, double r,
                     double delta, int grid) {
  const double lo_s = std::max(0.0, p_obs0 - delta), hi_s = std::min(1.0, p_obs0 + delta);
  // KL(s || y0) is convex in s with its minimum at s = y0.
  const auto h = [&](double t) {
    const double y0 = t * k[0][0] + (1.0 - t) * k[1][0];
    return kl2(std::clamp(y0, lo_s, hi_s), y0);
  };
  const auto feasible = [&](double t) { return h(t) <= r; };
  int first = -1, last = -1;
  for (int g = 0; g <= grid; ++g) {
    if (feasible(double(g) / grid)) {
      if (first < 0) first = g;
      last = g;
    }
  }
  if (first < 0) return -kInf;
  const double a = first == 0 ? 0.0 : boundary(feasible, double(first) / grid, double(first - 1) / grid);
  const double b = last == grid ? 1.0 : boundary(feasible, double(last) / grid, double(last + 1) / grid);
  const auto value = [&](double t) { return c[0] * t + c[1] * (1.0 - t); };
  return std::max(value(a), value(b));
}

}  // namespace oracle
