#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "mixfc/errors.hpp"
#include "mixfc/mixture.hpp"
#include "mixfc/random.hpp"
#include "mixfc/representations.hpp"

namespace mixfc {

struct FitConfig {
  int components = 1;
  bool shared_sigma = true;
  double rel_tol = 1e-3;
  int max_outer_iter = 500;
  // Objective evaluations allowed per single-coordinate search.
  int coordinate_budget = 400;
};

/// Unconstrained coordinates of a C-component normal mixture with one
/// shared standard deviation:
///   means    μ_1, μ_c = μ_{c-1} + exp(α_{c-1})
///   sigma    exp(η)
///   weights  softmax(0, ν_2, ..., ν_C)
/// Any finite coordinate vector decodes to a valid mixture.
struct FitParams {
  double mu1 = 0.0;
  std::vector<double> alpha;
  double eta = 0.0;
  std::vector<double> nu;

  int components() const noexcept { return static_cast<int>(alpha.size()) + 1; }

  /// γ = (μ_1, α_1..α_{C-1}, η, ν_2..ν_C), length 2C.
  std::vector<double> to_vector() const {
    std::vector<double> g;
    g.reserve(2 * alpha.size() + 2);
    g.push_back(mu1);
    g.insert(g.end(), alpha.begin(), alpha.end());
    g.push_back(eta);
    g.insert(g.end(), nu.begin(), nu.end());
    return g;
  }

  static FitParams from_vector(std::span<const double> g) {
    if (g.size() < 2 || g.size() % 2 != 0) throw InvalidParameter("FitParams: coordinate vector must have length 2C");
    const std::size_t c = g.size() / 2;
    FitParams p;
    p.mu1 = g[0];
    p.alpha.assign(g.begin() + 1, g.begin() + static_cast<std::ptrdiff_t>(c));
    p.eta = g[c];
    p.nu.assign(g.begin() + static_cast<std::ptrdiff_t>(c) + 1, g.end());
    return p;
  }

  /// Inverse of the decoders; means must be strictly increasing.
  static FitParams encode(std::span<const double> means, double sigma, std::span<const double> weights) {
    if (means.empty() || means.size() != weights.size()) throw InvalidParameter("FitParams: shape mismatch");
    if (!(sigma > 0.0)) throw InvalidParameter("FitParams: sigma must be positive");
    FitParams p;
    p.mu1 = means[0];
    for (std::size_t c = 1; c < means.size(); ++c) {
      const double gap = means[c] - means[c - 1];
      if (!(gap > 0.0)) throw InvalidParameter("FitParams: means must be strictly increasing");
      p.alpha.push_back(std::log(gap));
    }
    p.eta = std::log(sigma);
    for (std::size_t c = 1; c < weights.size(); ++c) {
      if (!(weights[c] > 0.0) || !(weights[0] > 0.0)) throw InvalidParameter("FitParams: weights must be positive");
      p.nu.push_back(std::log(weights[c] / weights[0]));
    }
    return p;
  }

  std::vector<double> means() const {
    std::vector<double> m{mu1};
    for (double a : alpha) m.push_back(m.back() + std::exp(a));
    return m;
  }

  double sigma() const { return std::exp(eta); }

  std::vector<double> weights() const {
    std::vector<double> logits{0.0};
    logits.insert(logits.end(), nu.begin(), nu.end());
    const double top = *std::max_element(logits.begin(), logits.end());
    std::vector<double> w;
    w.reserve(logits.size());
    double total = 0.0;
    for (double v : logits) total += w.emplace_back(std::exp(v - top));
    for (double& x : w) x /= total;
    return w;
  }

  Mixture to_mixture() const {
    const auto m = means();
    const auto w = weights();
    const double s = sigma();
    std::vector<Component> parts;
    parts.reserve(m.size());
    for (std::size_t c = 0; c < m.size(); ++c) {
      parts.push_back(Component::norm(m[c], s, std::max(w[c], std::numeric_limits<double>::min())));
    }
    return Mixture::normalized(std::move(parts));
  }
};

struct FitReport {
  Mixture fitted;
  FitParams params;
  // Objective before the first and after every accepted outer step.
  std::vector<double> trace;
  bool converged = false;
  int iterations = 0;

  double objective() const { return trace.empty() ? std::numeric_limits<double>::quiet_NaN() : trace.back(); }
};

namespace detail {

// Φ(z) for z <= 0, 1 - Φ(z) for z > 0: whichever tail is small.
inline double normal_tail(double z) { return 0.5 * std::erfc(std::abs(z) * 0.70710678118654752440); }

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z * 0.70710678118654752440); }

// Mass of N(0,1) on [z1, z2] without cancellation in either tail.
inline double normal_mass(double z1, double z2) {
  if (z1 >= 0.0) return normal_tail(z1) - normal_tail(z2);
  if (z2 <= 0.0) return normal_tail(z2) - normal_tail(z1);
  return 1.0 - normal_tail(z1) - normal_tail(z2);
}

struct SharedSigmaMixture {
  std::vector<double> means;
  std::vector<double> weights;
  double sigma;

  explicit SharedSigmaMixture(const FitParams& p) : means(p.means()), weights(p.weights()), sigma(p.sigma()) {}

  double cdf(double x) const {
    double total = 0.0;
    for (std::size_t c = 0; c < means.size(); ++c) total += weights[c] * normal_cdf((x - means[c]) / sigma);
    return total;
  }
};

// Per-component columns of unweighted values (bin masses or CDF values),
// recomputed only when that component's mean or σ changes. Coordinate
// searches over weights, or over a single mean gap, then reuse most columns.
class ComponentCache {
 public:
  template <class Fill>
  const std::vector<double>& column(std::size_t c, double mean, double sigma, std::size_t rows, Fill&& fill) const {
    if (entries_.size() <= c) entries_.resize(c + 1);
    auto& e = entries_[c];
    if (!e.valid || e.mean != mean || e.sigma != sigma) {
      e.values.resize(rows);
      fill(mean, sigma, e.values);
      e.mean = mean;
      e.sigma = sigma;
      e.valid = true;
    }
    return e.values;
  }

 private:
  struct Entry {
    double mean = 0.0, sigma = 0.0;
    bool valid = false;
    std::vector<double> values;
  };
  mutable std::vector<Entry> entries_;
};

// Bin-fit objective Σ p_i log(p_i / P(M ∈ B_i)).
class BinObjective {
 public:
  explicit BinObjective(const BinForecast& f) : edges_(f.edges().begin(), f.edges().end()), probs_(f.probs().begin(), f.probs().end()) {
    z_.resize(edges_.size());
    tail_.resize(edges_.size());
    needed_.assign(edges_.size(), false);
    for (std::size_t i = 0; i < probs_.size(); ++i) {
      if (probs_[i] > 0.0) needed_[i] = needed_[i + 1] = true;
    }
  }

  double operator()(const FitParams& p) const {
    const SharedSigmaMixture m(p);
    std::vector<double> mass(probs_.size(), 0.0);
    auto fill = [this](double mean, double sigma, std::vector<double>& col) {
      // One tail evaluation per edge; bin masses follow as in normal_mass.
      for (std::size_t e = 0; e < edges_.size(); ++e) {
        z_[e] = (edges_[e] - mean) / sigma;
        tail_[e] = needed_[e] ? normal_tail(z_[e]) : 0.0;
      }
      for (std::size_t i = 0; i < probs_.size(); ++i) {
        if (!(probs_[i] > 0.0)) {
          col[i] = 0.0;
        } else if (z_[i] >= 0.0) {
          col[i] = tail_[i] - tail_[i + 1];
        } else if (z_[i + 1] <= 0.0) {
          col[i] = tail_[i + 1] - tail_[i];
        } else {
          col[i] = 1.0 - tail_[i] - tail_[i + 1];
        }
      }
    };
    for (std::size_t c = 0; c < m.means.size(); ++c) {
      const auto& col = cache_.column(c, m.means[c], m.sigma, probs_.size(), fill);
      for (std::size_t i = 0; i < probs_.size(); ++i) {
        if (probs_[i] > 0.0) mass[i] += m.weights[c] * col[i];
      }
    }
    double d = 0.0;
    for (std::size_t i = 0; i < probs_.size(); ++i) {
      if (!(probs_[i] > 0.0)) continue;
      if (!(mass[i] > 0.0)) return std::numeric_limits<double>::infinity();
      d += probs_[i] * std::log(probs_[i] / mass[i]);
    }
    return d;
  }

 private:
  std::vector<double> edges_;
  std::vector<double> probs_;
  std::vector<bool> needed_;
  mutable std::vector<double> z_;
  mutable std::vector<double> tail_;
  ComponentCache cache_;
};

// Quantile-fit objective Σ (α_i - F(q_i))^2.
class QuantileObjective {
 public:
  explicit QuantileObjective(const QuantileForecast& q)
      : levels_(q.levels().begin(), q.levels().end()), values_(q.values().begin(), q.values().end()) {}

  double operator()(const FitParams& p) const {
    const SharedSigmaMixture m(p);
    auto fill = [this](double mean, double sigma, std::vector<double>& col) {
      for (std::size_t i = 0; i < values_.size(); ++i) col[i] = normal_cdf((values_[i] - mean) / sigma);
    };
    std::vector<double> cdf(values_.size(), 0.0);
    for (std::size_t c = 0; c < m.means.size(); ++c) {
      const auto& col = cache_.column(c, m.means[c], m.sigma, values_.size(), fill);
      for (std::size_t i = 0; i < values_.size(); ++i) cdf[i] += m.weights[c] * col[i];
    }
    double ss = 0.0;
    for (std::size_t i = 0; i < levels_.size(); ++i) {
      const double r = levels_[i] - cdf[i];
      ss += r * r;
    }
    return ss;
  }

 private:
  std::vector<double> levels_;
  std::vector<double> values_;
  ComponentCache cache_;
};

struct LineResult {
  double x;
  double value;
};

// Golden-section search for a minimum of f on [a, b]; non-finite values
// count as +inf.
template <class F>
LineResult golden_section(F& f, double a, double b, double tol, int& budget) {
  constexpr double kInvPhi = 0.6180339887498948482;
  auto eval = [&](double x) {
    --budget;
    const double v = f(x);
    return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
  };
  double x1 = b - kInvPhi * (b - a);
  double x2 = a + kInvPhi * (b - a);
  double f1 = eval(x1);
  double f2 = eval(x2);
  while (b - a > tol && budget > 0) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - kInvPhi * (b - a);
      f1 = eval(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + kInvPhi * (b - a);
      f2 = eval(x2);
    }
  }
  return f1 <= f2 ? LineResult{x1, f1} : LineResult{x2, f2};
}

// Minimize the objective over coordinate `index` of γ with the others held
// fixed, starting from the incumbent value. The bracket is ±4σ for the
// location coordinate μ_1 and ±4 for log-scale coordinates; it is re-centred
// and doubled while the minimum sits on its boundary.
template <class Objective>
LineResult minimize_coordinate(const Objective& objective, std::vector<double> gamma, std::size_t index,
                               double incumbent_value, int budget) {
  const std::size_t c = gamma.size() / 2;
  const double start = gamma[index];
  double half = index == 0 ? 4.0 * std::exp(gamma[c]) : 4.0;
  auto f = [&](double x) {
    gamma[index] = x;
    return objective(FitParams::from_vector(gamma));
  };
  LineResult best{start, incumbent_value};
  double centre = start;
  for (int expansion = 0; expansion < 12 && budget > 0; ++expansion) {
    const double tol = 1e-8 * std::max(1.0, half / 4.0);
    const double a = centre - half;
    const double b = centre + half;
    const auto r = golden_section(f, a, b, tol, budget);
    if (r.value < best.value) best = r;
    const bool on_edge = (r.x - a) <= 4.0 * tol || (b - r.x) <= 4.0 * tol;
    if (!on_edge || !(r.value <= best.value)) break;
    centre = r.x;
    half *= 2.0;
  }
  return best;
}

// Block-coordinate scheme: every outer step minimizes each of the 2C
// coordinates separately from the incumbent, then keeps only the single
// update with the lowest objective (ties to the lowest index). Stops when
// the relative objective change drops below rel_tol or after
// max_outer_iter steps.
template <class Objective>
FitReport coordinate_descent(const Objective& objective, FitParams init, const FitConfig& cfg) {
  std::vector<double> gamma = init.to_vector();
  double current = objective(init);
  if (!std::isfinite(current)) {
    throw DegenerateInput("fit: objective is not finite at the initial parameters");
  }
  FitReport report{init.to_mixture(), init, {current}, false, 0};
  for (int m = 1; m <= cfg.max_outer_iter; ++m) {
    std::size_t best_index = 0;
    LineResult best{gamma[0], std::numeric_limits<double>::infinity()};
    for (std::size_t i = 0; i < gamma.size(); ++i) {
      const auto r = minimize_coordinate(objective, gamma, i, current, cfg.coordinate_budget);
      if (r.value < best.value) {
        best = r;
        best_index = i;
      }
    }
    const double previous = current;
    if (best.value < current) {
      gamma[best_index] = best.x;
      current = best.value;
    }
    report.trace.push_back(current);
    report.iterations = m;
    const double change = previous > 0.0 ? std::abs(previous - current) / previous : 0.0;
    if (change < cfg.rel_tol) {
      report.converged = true;
      break;
    }
  }
  report.params = FitParams::from_vector(gamma);
  report.fitted = report.params.to_mixture();
  return report;
}

// Means equally spaced from the 10th to the 90th percentile (the centre
// when C = 1), σ = sd / C, uniform weights.
inline FitParams spread_init(int components, double p10, double p50, double p90, double sd) {
  if (!(sd > 0.0) || !std::isfinite(sd)) sd = std::max(1.0, std::abs(p50)) * 1e-3;
  std::vector<double> means;
  if (components == 1) {
    means.push_back(p50);
  } else {
    double span = p90 - p10;
    if (!(span > 0.0)) span = sd;
    for (int c = 0; c < components; ++c) {
      means.push_back(p10 + span * static_cast<double>(c) / static_cast<double>(components - 1));
    }
  }
  const std::vector<double> weights(static_cast<std::size_t>(components), 1.0 / components);
  return FitParams::encode(means, sd / components, weights);
}

// Linear interpolation of the bin step masses: value at cumulative level p.
inline double bin_percentile(const BinForecast& f, double p) {
  double acc = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double next = acc + f.probs()[i];
    if (next >= p && f.probs()[i] > 0.0) {
      const double t = (p - acc) / f.probs()[i];
      return f.lower(i) + std::clamp(t, 0.0, 1.0) * (f.upper(i) - f.lower(i));
    }
    acc = next;
  }
  return f.edges().back();
}

inline double interpolate_quantile(const QuantileForecast& q, double p) {
  const auto lv = q.levels();
  const auto vv = q.values();
  if (p <= lv.front()) return vv.front();
  if (p >= lv.back()) return vv.back();
  for (std::size_t i = 1; i < lv.size(); ++i) {
    if (p <= lv[i]) {
      const double t = (p - lv[i - 1]) / (lv[i] - lv[i - 1]);
      return vv[i - 1] + t * (vv[i] - vv[i - 1]);
    }
  }
  return vv.back();
}

inline double probit(double p) {
  // Acklam-free: invert Φ by bisection, only called on a handful of levels.
  double lo = -40.0, hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (normal_cdf(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Insert one component at `location` with negligible weight; the decoded
// mixture differs from `previous` by O(exp(log_weight)).
inline FitParams insert_component(const FitParams& previous, double location, double log_weight) {
  auto means = previous.means();
  auto weights = previous.weights();
  const double sigma = previous.sigma();
  auto pos = static_cast<std::size_t>(std::upper_bound(means.begin(), means.end(), location) - means.begin());
  // Keep the ordering strict.
  const double nudge = 1e-3 * sigma;
  if (pos > 0 && location - means[pos - 1] < nudge) location = means[pos - 1] + nudge;
  if (pos < means.size() && means[pos] - location < nudge) {
    location = pos > 0 ? 0.5 * (means[pos - 1] + means[pos]) : means[pos] - nudge;
  }
  const double tiny = std::exp(log_weight);
  means.insert(means.begin() + static_cast<std::ptrdiff_t>(pos), location);
  for (double& w : weights) w *= (1.0 - tiny);
  weights.insert(weights.begin() + static_cast<std::ptrdiff_t>(pos), tiny);
  return FitParams::encode(means, sigma, weights);
}

}  // namespace detail

/// Σ_{p_i>0} p_i log(p_i / P(M ∈ B_i)); +inf when the mixture gives zero
/// mass to a bin the forecast does not.
inline double kld(const BinForecast& f, const Mixture& m) {
  double d = 0.0;
  double prev = m.cdf(f.edges().front());
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double cur = m.cdf(f.upper(i));
    const double mass = cur - prev;
    prev = cur;
    const double p = f.probs()[i];
    if (!(p > 0.0)) continue;
    if (!(mass > 0.0)) return std::numeric_limits<double>::infinity();
    d += p * std::log(p / mass);
  }
  return d;
}

/// Σ_i (α_i - F(q_i))^2, residuals on the probability scale.
inline double ss_quantiles(const QuantileForecast& q, const Mixture& m) {
  double ss = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    const double r = q.levels()[i] - m.cdf(q.values()[i]);
    ss += r * r;
  }
  return ss;
}

/// Default starting point for a bin fit.
inline FitParams initial_params(const BinForecast& f, int components) {
  double mean = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) mean += f.probs()[i] * 0.5 * (f.lower(i) + f.upper(i));
  double var = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double mid = 0.5 * (f.lower(i) + f.upper(i));
    var += f.probs()[i] * (mid - mean) * (mid - mean);
  }
  double sd = std::sqrt(var);
  if (!(sd > 0.0)) sd = 0.5 * (f.edges().back() - f.edges().front()) / static_cast<double>(f.size());
  return detail::spread_init(components, detail::bin_percentile(f, 0.1), mean, detail::bin_percentile(f, 0.9), sd);
}

/// Default starting point for a quantile fit; the scale comes from the
/// outermost level pair on the normal scale.
inline FitParams initial_params(const QuantileForecast& q, int components) {
  const double z_lo = detail::probit(q.levels().front());
  const double z_hi = detail::probit(q.levels().back());
  double sd = z_hi > z_lo ? (q.values().back() - q.values().front()) / (z_hi - z_lo) : 0.0;
  return detail::spread_init(components, detail::interpolate_quantile(q, 0.1), detail::interpolate_quantile(q, 0.5),
                             detail::interpolate_quantile(q, 0.9), sd);
}

/// Starting point for a (C+1)-component bin fit that reproduces a C-component
/// solution: a negligible-weight component is added at the bin with the
/// largest probability deficit.
inline FitParams nested_params(const BinForecast& f, const FitParams& previous) {
  const detail::SharedSigmaMixture m(previous);
  double worst = -std::numeric_limits<double>::infinity();
  double where = 0.5 * (f.lower(0) + f.upper(0));
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double deficit = f.probs()[i] - (m.cdf(f.upper(i)) - m.cdf(f.lower(i)));
    if (deficit > worst) {
      worst = deficit;
      where = 0.5 * (f.lower(i) + f.upper(i));
    }
  }
  return detail::insert_component(previous, where, -25.0);
}

/// Quantile counterpart of nested_params: the new component goes to the
/// quantile value with the largest absolute residual.
inline FitParams nested_params(const QuantileForecast& q, const FitParams& previous) {
  const detail::SharedSigmaMixture m(previous);
  double worst = -1.0;
  double where = q.values().front();
  for (std::size_t i = 0; i < q.size(); ++i) {
    const double r = std::abs(q.levels()[i] - m.cdf(q.values()[i]));
    if (r > worst) {
      worst = r;
      where = q.values()[i];
    }
  }
  return detail::insert_component(previous, where, -25.0);
}

/// Fit a shared-σ normal mixture to a bin forecast by minimizing the
/// KL-type divergence with the block-coordinate scheme.
inline FitReport fit_bins(const BinForecast& f, const FitConfig& cfg, std::optional<FitParams> init = std::nullopt) {
  if (cfg.components < 1) throw InvalidParameter("fit_bins: need at least one component");
  if (!(cfg.rel_tol > 0.0)) throw InvalidParameter("fit_bins: rel_tol must be positive");
  if (f.nonzero_bins() <= static_cast<std::size_t>(cfg.components)) {
    throw InvalidParameter("fit_bins: forecast has " + std::to_string(f.nonzero_bins()) +
                           " nonzero bins, need more than " + std::to_string(cfg.components));
  }
  FitParams start = init ? *init : initial_params(f, cfg.components);
  if (start.components() != cfg.components) throw InvalidParameter("fit_bins: initial parameters have wrong size");
  return detail::coordinate_descent(detail::BinObjective(f), std::move(start), cfg);
}

/// Fit a shared-σ normal mixture to a quantile forecast by least squares on
/// the probability scale.
inline FitReport fit_quantiles(const QuantileForecast& q, const FitConfig& cfg,
                               std::optional<FitParams> init = std::nullopt) {
  if (cfg.components < 1) throw InvalidParameter("fit_quantiles: need at least one component");
  if (!(cfg.rel_tol > 0.0)) throw InvalidParameter("fit_quantiles: rel_tol must be positive");
  if (q.size() < static_cast<std::size_t>(2 * cfg.components + 1)) {
    throw InvalidParameter("fit_quantiles: " + std::to_string(q.size()) + " quantiles cannot identify " +
                           std::to_string(cfg.components) + " components (need 2C + 1)");
  }
  FitParams start = init ? *init : initial_params(q, cfg.components);
  if (start.components() != cfg.components) {
    throw InvalidParameter("fit_quantiles: initial parameters have wrong size");
  }
  return detail::coordinate_descent(detail::QuantileObjective(q), std::move(start), cfg);
}

/// Fits C = 1..max_components in turn. From C = 2 on, each order is fit
/// twice, from the previous solution with one component inserted and from
/// the default spread start, and the lower objective is kept (ties go to the
/// nested start). The nested start makes the objective nonincreasing in C;
/// the spread start gets past fits where the inserted component never grows.
template <class Forecast>
std::vector<FitReport> fit_nested(const Forecast& f, int max_components, FitConfig cfg = {}) {
  auto fit = [&](std::optional<FitParams> init) {
    if constexpr (std::is_same_v<Forecast, BinForecast>) {
      return fit_bins(f, cfg, std::move(init));
    } else {
      return fit_quantiles(f, cfg, std::move(init));
    }
  };
  std::vector<FitReport> out;
  for (int c = 1; c <= max_components; ++c) {
    cfg.components = c;
    if (out.empty()) {
      out.push_back(fit(std::nullopt));
      continue;
    }
    auto nested = fit(nested_params(f, out.back().params));
    try {
      auto spread = fit(std::nullopt);
      if (spread.objective() < nested.objective()) nested = std::move(spread);
    } catch (const DegenerateInput&) {
      // spread start has no finite objective; keep the nested fit
    }
    out.push_back(std::move(nested));
  }
  return out;
}

/// n draws: a bin chosen with probability p_i, then uniform within it.
inline SampleForecast bin_sample(const BinForecast& f, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw InvalidParameter("bin_sample: n must be positive");
  Rng rng(seed);
  std::vector<double> cumulative;
  double acc = 0.0;
  for (double p : f.probs()) cumulative.push_back(acc += p);
  std::vector<double> draws;
  draws.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.open01() * acc;
    auto bin = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
    bin = std::min(bin, f.size() - 1);
    while (!(f.probs()[bin] > 0.0) && bin > 0) --bin;
    draws.push_back(rng.uniform(f.lower(bin), f.upper(bin)));
  }
  return SampleForecast(std::move(draws));
}

struct EmOptions {
  int restarts = 5;
  double tol = 1e-8;
  int max_iter = 1000;
  std::uint64_t seed = 0;
  // Optional extra starting point (e.g. a split of a smaller fit).
  std::optional<Mixture> init;
};

namespace detail {

struct EmState {
  std::vector<double> means, sds, weights;
};

inline double normal_pdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * std::numbers::pi));
}

// One EM run; returns the negative log-likelihood trace, or nullopt if a
// component collapsed. The E-step totals give the likelihood of the current
// parameters, so each trace entry costs no extra density evaluations.
inline std::optional<std::vector<double>> run_em(const SampleForecast& s, EmState& st, const EmOptions& opt,
                                                 double collapse_sd) {
  const std::size_t n = s.size();
  const std::size_t k = st.means.size();
  std::vector<double> resp(n * k);
  const double scale = static_cast<double>(n);
  std::vector<double> trace;
  for (int it = 0;; ++it) {
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double total = 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        total += resp[i * k + c] = st.weights[c] * normal_pdf(s.draws()[i], st.means[c], st.sds[c]);
      }
      if (!(total > 0.0)) return std::nullopt;
      ll += scale * s.weight(i) * std::log(total);
      for (std::size_t c = 0; c < k; ++c) resp[i * k + c] /= total;
    }
    trace.push_back(-ll);
    const std::size_t m = trace.size();
    if (m > 1 && std::abs(trace[m - 2] - trace[m - 1]) <= opt.tol * std::max(1.0, std::abs(trace[m - 2]))) break;
    if (it == opt.max_iter) break;
    for (std::size_t c = 0; c < k; ++c) {
      double nk = 0.0, sx = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double r = s.weight(i) * resp[i * k + c];
        nk += r;
        sx += r * s.draws()[i];
      }
      if (!(nk > 0.0)) return std::nullopt;
      const double mean = sx / nk;
      double sxx = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = s.draws()[i] - mean;
        sxx += s.weight(i) * resp[i * k + c] * d * d;
      }
      st.means[c] = mean;
      st.sds[c] = std::sqrt(sxx / nk);
      st.weights[c] = nk;
      if (!(st.sds[c] > collapse_sd)) return std::nullopt;
    }
    const double wsum = std::accumulate(st.weights.begin(), st.weights.end(), 0.0);
    for (double& w : st.weights) w /= wsum;
  }
  return trace;
}

}  // namespace detail

/// Start for a (C+1)-component EM run: the component with the largest
/// weight·sd is replaced by two halves at mean ± sd/2.
inline Mixture split_widest(const Mixture& m) {
  std::size_t widest = 0;
  double score = -1.0;
  for (std::size_t c = 0; c < m.size(); ++c) {
    if (m[c].family() != Family::Norm) throw InvalidParameter("split_widest: normal components only");
    const double v = m[c].weight() * *m[c].param2();
    if (v > score) {
      score = v;
      widest = c;
    }
  }
  std::vector<Component> parts;
  for (std::size_t c = 0; c < m.size(); ++c) {
    const auto& k = m[c];
    if (c != widest) {
      parts.push_back(k);
      continue;
    }
    const double sd = *k.param2();
    parts.push_back(Component::norm(k.param1() - 0.5 * sd, 0.75 * sd, 0.5 * k.weight()));
    parts.push_back(Component::norm(k.param1() + 0.5 * sd, 0.75 * sd, 0.5 * k.weight()));
  }
  return Mixture(std::move(parts));
}

/// Maximum-likelihood C-component normal mixture (free σ per component) by
/// EM, best of several restarts. The trace holds the negative
/// log-likelihood per iteration of the winning run.
inline FitReport fit_sample_em(const SampleForecast& s, int components, const EmOptions& opt = {}) {
  if (components < 1) throw InvalidParameter("fit_sample_em: need at least one component");
  if (s.size() <= static_cast<std::size_t>(10 * components)) {
    throw InvalidParameter("fit_sample_em: need more than 10 draws per component");
  }
  const auto sorted = s.sorted();
  const double range = sorted.back().first - sorted.front().first;
  const double sd = s.sd();
  if (!(range > 0.0) || !(sd > 0.0)) throw DegenerateInput("fit_sample_em: degenerate sample");
  const double collapse_sd = 1e-8 * range;
  const auto k = static_cast<std::size_t>(components);

  std::vector<detail::EmState> starts;
  {
    detail::EmState st;
    std::vector<double> levels;
    for (std::size_t c = 0; c < k; ++c) levels.push_back((static_cast<double>(c) + 0.5) / static_cast<double>(k));
    const auto q = quantiles_of(SampleForecast(std::vector<double>(s.draws().begin(), s.draws().end())), levels);
    st.means.assign(q.values().begin(), q.values().end());
    st.sds.assign(k, sd / static_cast<double>(k));
    st.weights.assign(k, 1.0 / static_cast<double>(k));
    starts.push_back(std::move(st));
  }
  if (opt.init && opt.init->size() == k) {
    detail::EmState st;
    for (const auto& c : opt.init->components()) {
      if (c.family() != Family::Norm) throw InvalidParameter("fit_sample_em: init must be a normal mixture");
      st.means.push_back(c.param1());
      st.sds.push_back(*c.param2());
      st.weights.push_back(c.weight());
    }
    starts.push_back(std::move(st));
  }
  Rng rng(opt.seed);
  for (int r = 1; r < opt.restarts; ++r) {
    detail::EmState st;
    for (std::size_t c = 0; c < k; ++c) {
      st.means.push_back(s.draws()[static_cast<std::size_t>(rng.bits() % s.size())]);
    }
    std::sort(st.means.begin(), st.means.end());
    st.sds.assign(k, sd);
    st.weights.assign(k, 1.0 / static_cast<double>(k));
    starts.push_back(std::move(st));
  }

  std::optional<FitReport> best;
  for (auto& st : starts) {
    auto trace = detail::run_em(s, st, opt, collapse_sd);
    if (!trace) continue;
    if (best && !(trace->back() < best->trace.back())) continue;
    std::vector<Component> parts;
    for (std::size_t c = 0; c < k; ++c) parts.push_back(Component::norm(st.means[c], st.sds[c], st.weights[c]));
    FitReport report{Mixture::normalized(std::move(parts)), {}, std::move(*trace), false, 0};
    report.iterations = static_cast<int>(report.trace.size()) - 1;
    report.converged = report.iterations < opt.max_iter;
    best = std::move(report);
  }
  if (!best) throw DegenerateInput("fit_sample_em: every restart collapsed");
  return std::move(*best);
}

}  // namespace mixfc
