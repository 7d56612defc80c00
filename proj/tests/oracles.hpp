#pragma once

// Reference computations used by the tests. Nothing here calls into the
// library's numeric code, so the two routes can disagree.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

namespace oracle {

inline double phi(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }
inline double Phi(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

inline double norm_pdf(double x, double m, double s) { return phi((x - m) / s) / s; }
inline double norm_cdf(double x, double m, double s) { return Phi((x - m) / s); }
inline double lnorm_pdf(double x, double ml, double sl) {
  return x > 0.0 ? phi((std::log(x) - ml) / sl) / (x * sl) : 0.0;
}
inline double lnorm_cdf(double x, double ml, double sl) { return x > 0.0 ? Phi((std::log(x) - ml) / sl) : 0.0; }

/// Closed-form CRPS of N(m, s^2) at y.
inline double crps_normal(double m, double s, double y) {
  const double z = (y - m) / s;
  return s * (z * (2.0 * Phi(z) - 1.0) + 2.0 * phi(z) - 1.0 / std::sqrt(std::numbers::pi));
}

/// Exact CRPS of an equally weighted ECDF: E|X - y| - E|X - X'| / 2.
inline double crps_ecdf(std::vector<double> xs, double y) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double a = 0.0;
  for (double x : xs) a += std::abs(x - y);
  // Σ_i Σ_j |x_i - x_j| = 2 Σ_i (2i - n + 1) x_(i) for sorted x.
  double b = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) b += (2.0 * static_cast<double>(i) - n + 1.0) * xs[i];
  return a / n - b / (n * n);
}

/// Exact CRPS of a weighted ECDF by integrating the piecewise-constant
/// integrand between consecutive draws.
inline double crps_weighted_ecdf(std::vector<std::pair<double, double>> xw, double y) {
  std::sort(xw.begin(), xw.end());
  std::vector<double> pts;
  for (auto& p : xw) pts.push_back(p.first);
  pts.push_back(y);
  std::sort(pts.begin(), pts.end());
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const double a = pts[i], b = pts[i + 1];
    if (b <= a) continue;
    double f = 0.0;
    for (auto& p : xw) if (p.first <= a) f += p.second;
    const double step = y <= a ? 1.0 : 0.0;
    total += (f - step) * (f - step) * (b - a);
  }
  return total;
}

/// Composite Simpson rule with n (even) panels.
inline double simpson(const std::function<double(double)>& f, double a, double b, int n) {
  if (n % 2) ++n;
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

/// CRPS of any CDF by dense Simpson integration on both sides of y.
inline double crps_simpson(const std::function<double(double)>& cdf, double y, double a, double b, int n = 200000) {
  auto left = [&](double x) { const double f = cdf(x); return f * f; };
  auto right = [&](double x) { const double f = 1.0 - cdf(x); return f * f; };
  return simpson(left, std::min(a, y), y, n) + simpson(right, y, std::max(b, y), n);
}

/// Type-7 sample quantile.
inline double type7(std::vector<double> x, double p) {
  std::sort(x.begin(), x.end());
  const double h = (static_cast<double>(x.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, x.size() - 1);
  return x[lo] + (h - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

/// Direct-summation bin-fit divergence for a normal mixture with shared sd.
inline double kld_normal_mixture(const std::vector<double>& edges, const std::vector<double>& probs,
                                 const std::vector<double>& means, const std::vector<double>& weights, double sd) {
  double d = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    double mass = 0.0;
    for (std::size_t c = 0; c < means.size(); ++c) {
      mass += weights[c] * (norm_cdf(edges[i + 1], means[c], sd) - norm_cdf(edges[i], means[c], sd));
    }
    d += probs[i] * std::log(probs[i] / mass);
  }
  return d;
}

struct Grid2 {
  double x, y, value;
};

/// Exhaustive search on a rectangle, refined twice around the best cell.
inline Grid2 grid_min(const std::function<double(double, double)>& f, double x0, double x1, double y0, double y1,
                      int n = 81) {
  Grid2 best{x0, y0, f(x0, y0)};
  for (int round = 0; round < 3; ++round) {
    const double hx = (x1 - x0) / (n - 1), hy = (y1 - y0) / (n - 1);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const double x = x0 + i * hx, y = y0 + j * hy;
        const double v = f(x, y);
        if (v < best.value) best = {x, y, v};
      }
    }
    x0 = best.x - 2 * hx; x1 = best.x + 2 * hx;
    y0 = best.y - 2 * hy; y1 = best.y + 2 * hy;
  }
  return best;
}

}  // namespace oracle
