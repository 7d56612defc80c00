#pragma once

#include <concepts>
#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "mixfc/errors.hpp"
#include "mixfc/mixture.hpp"
#include "mixfc/quadrature.hpp"
#include "mixfc/representations.hpp"

namespace mixfc {

inline constexpr double kInfiniteScore = std::numeric_limits<double>::infinity();

/// Negative log predictive density; +inf when the density at x* is zero.
inline double log_score(const Mixture& m, double x_star) {
  const double d = m.pdf(x_star);
  return d > 0.0 ? -std::log(d) : kInfiniteScore;
}

/// Negative log of the probability of the bin holding x*.
inline double log_score(const BinForecast& f, double x_star) {
  const auto bin = f.bin_of(x_star);
  if (!bin || !(f.probs()[*bin] > 0.0)) return kInfiniteScore;
  return -std::log(f.probs()[*bin]);
}

inline constexpr double kCrpsTolerance = 1e-8;

/// ∫ (F(x) - 1{x* <= x})^2 dx over [a, b], split at x* and `breaks`.
/// F must already be ~0 left of a and ~1 right of b.
template <class Cdf>
double crps_integral(Cdf&& cdf, double x_star, double a, double b, std::vector<double> breaks = {}) {
  breaks.push_back(x_star);
  a = std::min(a, x_star);
  b = std::max(b, x_star);
  auto integrand = [&](double x) {
    const double step = x_star <= x ? 1.0 : 0.0;
    const double diff = cdf(x) - step;
    return diff * diff;
  };
  const auto r = integrate(integrand, a, b, breaks, kCrpsTolerance, 1e-12, 50000);
  if (!r.converged) {
    throw ConvergenceError("crps: quadrature did not converge (error estimate " + std::to_string(r.error) + ")");
  }
  return r.value;
}

namespace detail {

// Kinks and jumps of a mixture CDF inside [a, b], plus a few interior
// quantiles of every component so that narrow components are not missed.
inline std::vector<double> mixture_breaks(const Mixture& m, double a, double b) {
  std::vector<double> breaks;
  for (const auto& c : m.components()) {
    if (c.lower()) breaks.push_back(*c.lower());
    if (c.upper()) breaks.push_back(*c.upper());
    const auto [lo, hi] = c.support();
    if (std::isfinite(lo)) breaks.push_back(lo);
    if (std::isfinite(hi)) breaks.push_back(hi);
    if (c.discrete()) {
      if (c.family() == Family::Dirac) continue;
      const double first = std::ceil(std::max(a, lo));
      const double last = std::floor(std::min(b, hi));
      if (last - first <= 20000.0) {
        for (double k = first; k <= last; k += 1.0) breaks.push_back(k);
      }
      continue;
    }
    for (double p : {1e-6, 1e-3, 0.05, 0.25, 0.5, 0.75, 0.95, 0.999, 1.0 - 1e-6}) {
      breaks.push_back(c.quantile(p));
    }
  }
  return breaks;
}

}  // namespace detail

/// CRPS of a mixture forecast by adaptive quadrature over
/// [q(1e-9) - IQR, q(1 - 1e-9) + IQR].
inline double crps(const Mixture& m, double x_star) {
  if (!std::isfinite(x_star)) throw std::domain_error("crps: non-finite observation");
  const double lo = m.quantile(1e-9);
  const double hi = m.quantile(1.0 - 1e-9);
  const double pad = m.quantile(0.75) - m.quantile(0.25);
  const double a = lo - pad;
  const double b = hi + pad;
  return crps_integral([&m](double x) { return m.cdf(x); }, x_star, a, b,
                       detail::mixture_breaks(m, std::min(a, x_star), std::max(b, x_star)));
}

/// CRPS of a bin forecast under its step CDF.
inline double crps(const BinForecast& f, double x_star) {
  if (!std::isfinite(x_star)) throw std::domain_error("crps: non-finite observation");
  std::vector<double> breaks(f.edges().begin(), f.edges().end());
  return crps_integral([&f](double x) { return f.cdf(x); }, x_star, f.edges().front(), f.edges().back(),
                       std::move(breaks));
}

/// CRPS of a sample forecast with its ECDF standing in for F.
inline double crps(const SampleForecast& s, double x_star) {
  if (!std::isfinite(x_star)) throw std::domain_error("crps: non-finite observation");
  const auto sorted = s.sorted();
  std::vector<double> xs;
  std::vector<double> cum;
  xs.reserve(sorted.size());
  cum.reserve(sorted.size());
  double acc = 0.0;
  for (const auto& [x, w] : sorted) {
    acc += w;
    xs.push_back(x);
    cum.push_back(std::min(acc, 1.0));
  }
  auto ecdf = [&](double x) {
    auto it = std::upper_bound(xs.begin(), xs.end(), x);
    return it == xs.begin() ? 0.0 : cum[static_cast<std::size_t>(it - xs.begin()) - 1];
  };
  return crps_integral(ecdf, x_star, xs.front(), xs.back(), xs);
}

/// Interval score of the central (1 - alpha) interval (l, r).
inline double interval_score(double alpha, double l, double r, double x_star) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidParameter("interval_score: alpha must lie in (0, 1)");
  if (!(l <= r)) throw InvalidParameter("interval_score: lower bound exceeds upper bound");
  double score = r - l;
  if (x_star < l) score += (2.0 / alpha) * (l - x_star);
  if (x_star > r) score += (2.0 / alpha) * (x_star - r);
  return score;
}

struct Interval {
  double alpha;
  double lower;
  double upper;
  friend bool operator==(const Interval&, const Interval&) = default;
};

/// A predictive median plus K central intervals.
class IntervalSet {
 public:
  IntervalSet(double median, std::vector<Interval> intervals) : median_(median), intervals_(std::move(intervals)) {
    if (!std::isfinite(median_)) throw InvalidParameter("interval set: non-finite median");
    for (std::size_t i = 0; i < intervals_.size(); ++i) {
      const auto& iv = intervals_[i];
      if (!(iv.alpha > 0.0 && iv.alpha < 1.0)) throw InvalidParameter("interval set: alpha must lie in (0, 1)");
      if (!(iv.lower <= iv.upper)) throw InvalidParameter("interval set: lower exceeds upper");
      for (std::size_t j = 0; j < i; ++j) {
        if (intervals_[j].alpha == iv.alpha) throw InvalidParameter("interval set: duplicate alpha");
      }
    }
  }

  /// Pairs levels α/2 and 1 - α/2 of a quantile forecast; requires the
  /// median level 0.5 and a partner for every other level.
  static IntervalSet from_quantiles(const QuantileForecast& q) {
    const auto median = q.value_at(0.5);
    if (!median) throw InvalidParameter("interval set: quantile forecast lacks the 0.5 level");
    std::vector<Interval> intervals;
    for (std::size_t i = 0; i < q.size(); ++i) {
      const double level = q.levels()[i];
      if (std::abs(level - 0.5) <= 1e-9) continue;
      const auto partner = q.value_at(1.0 - level);
      if (!partner) {
        throw InvalidParameter("interval set: level " + std::to_string(level) + " has no symmetric partner");
      }
      if (level < 0.5) intervals.push_back({2.0 * level, q.values()[i], *partner});
    }
    return IntervalSet(*median, std::move(intervals));
  }

  double median() const noexcept { return median_; }
  std::span<const Interval> intervals() const noexcept { return intervals_; }
  std::size_t size() const noexcept { return intervals_.size(); }

 private:
  double median_;
  std::vector<Interval> intervals_;
};

/// Weighted interval score with w_0 = 1/2 and w_k = α_k / 2.
inline double wis(const IntervalSet& f, double x_star) {
  if (f.size() == 0) throw InvalidParameter("wis: interval set is empty");
  double total = 0.5 * std::abs(x_star - f.median());
  for (const auto& iv : f.intervals()) {
    total += 0.5 * iv.alpha * interval_score(iv.alpha, iv.lower, iv.upper, x_star);
  }
  return total / (static_cast<double>(f.size()) + 0.5);
}

/// Kolmogorov-Smirnov distance sup_x |F_n(x) - F(x)| between a sample's
/// ECDF and a CDF. At each distinct draw v the ECDF jumps from L to R; F is
/// compared as F(v) against R and F(v-) against L, so a CDF with its own
/// jump at v is measured by its left limit there.
template <class Cdf>
  requires std::invocable<Cdf&, double>
double ks_stat(const SampleForecast& s, Cdf&& cdf) {
  const auto sorted = s.sorted();
  double below = 0.0;
  double worst = 0.0;
  std::size_t i = 0;
  while (i < sorted.size()) {
    const double v = sorted[i].first;
    double above = below;
    while (i < sorted.size() && sorted[i].first == v) above += sorted[i++].second;
    above = std::min(above, 1.0);
    const double right = cdf(v);
    const double left = cdf(std::nextafter(v, -std::numeric_limits<double>::infinity()));
    worst = std::max({worst, std::abs(right - above), std::abs(left - below)});
    below = above;
  }
  return std::min(worst, 1.0);
}

inline double ks_stat(const SampleForecast& s, const Mixture& m) {
  return ks_stat(s, [&m](double x) { return m.cdf(x); });
}

}  // namespace mixfc
