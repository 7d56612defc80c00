#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mixfc/errors.hpp"
#include "mixfc/mixture.hpp"
#include "mixfc/representations.hpp"
#include "mixfc/scoring.hpp"

namespace mixfc {

namespace detail {

inline void check_simplex(std::span<const double> weights, std::size_t expected, const char* who) {
  if (weights.size() != expected) {
    throw InvalidParameter(std::string(who) + ": " + std::to_string(weights.size()) + " weights for " +
                           std::to_string(expected) + " models");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidParameter(std::string(who) + ": weights must be >= 0");
    total += w;
  }
  if (std::abs(total - 1.0) > kWeightTolerance) {
    throw InvalidParameter(std::string(who) + ": weights sum to " + std::to_string(total));
  }
}

/// Euclidean projection onto the probability simplex (sort-based).
inline std::vector<double> project_to_simplex(std::vector<double> v) {
  std::vector<double> u = v;
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cumulative += u[j];
    const double t = (cumulative - 1.0) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) theta = t;
  }
  for (double& x : v) x = std::max(0.0, x - theta);
  const double total = std::accumulate(v.begin(), v.end(), 0.0);
  for (double& x : v) x /= total;
  return v;
}

}  // namespace detail

/// Model-averaging ensemble Σ_m w_m p_m. Zero-weight models are dropped.
inline Mixture ma_ensemble(std::span<const Mixture> models, std::span<const double> weights) {
  if (models.empty()) throw InvalidParameter("ma_ensemble: no models");
  detail::check_simplex(weights, models.size(), "ma_ensemble");
  std::vector<std::pair<Mixture, double>> outer;
  double kept = 0.0;
  for (std::size_t i = 0; i < models.size(); ++i) {
    if (weights[i] > 0.0) {
      outer.emplace_back(models[i], weights[i]);
      kept += weights[i];
    }
  }
  return flatten(outer);
}

enum class QuantileAverage { Mean, Median };

/// Level-wise (weighted) mean or median of quantile forecasts sharing one
/// level grid. Weights are ignored by the median.
inline QuantileForecast quantile_average(std::span<const QuantileForecast> models, std::span<const double> weights,
                                         QuantileAverage method = QuantileAverage::Mean) {
  if (models.empty()) throw InvalidParameter("quantile_average: no models");
  if (method == QuantileAverage::Mean) detail::check_simplex(weights, models.size(), "quantile_average");
  const auto levels = models.front().levels();
  for (const auto& m : models) {
    if (m.size() != levels.size() || !std::equal(levels.begin(), levels.end(), m.levels().begin())) {
      throw InvalidParameter("quantile_average: models do not share a level grid");
    }
  }
  std::vector<double> values(levels.size());
  std::vector<double> column(models.size());
  for (std::size_t k = 0; k < levels.size(); ++k) {
    if (method == QuantileAverage::Mean) {
      double v = 0.0;
      for (std::size_t m = 0; m < models.size(); ++m) v += weights[m] * models[m].values()[k];
      values[k] = v;
    } else {
      for (std::size_t m = 0; m < models.size(); ++m) column[m] = models[m].values()[k];
      std::sort(column.begin(), column.end());
      const std::size_t n = column.size();
      values[k] = n % 2 == 1 ? column[n / 2] : 0.5 * (column[n / 2 - 1] + column[n / 2]);
    }
  }
  // Rounding in the weighted mean can invert equal neighbours by an ulp.
  for (std::size_t k = 1; k < values.size(); ++k) {
    if (values[k] < values[k - 1]) {
      if (values[k - 1] - values[k] > 1e-9 * std::max(1.0, std::abs(values[k]))) {
        throw InvalidParameter("quantile_average: averaged values are not monotone");
      }
      values[k] = values[k - 1];
    }
  }
  return QuantileForecast({levels.begin(), levels.end()}, std::move(values));
}

enum class PmpMode { Density, Cdf };

/// Posterior model probabilities under equal priors: each model's
/// likelihood at x* over the sum. Cdf mode normalizes F_t(x*) instead.
inline std::vector<double> pmp_weights(std::span<const Mixture> models, double x_star, PmpMode mode = PmpMode::Density) {
  if (models.empty()) throw InvalidParameter("pmp_weights: no models");
  std::vector<double> w(models.size());
  for (std::size_t i = 0; i < models.size(); ++i) {
    w[i] = mode == PmpMode::Density ? models[i].pdf(x_star) : models[i].cdf(x_star);
  }
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  if (!(total > 0.0)) throw DegenerateInput("pmp_weights: every model assigns zero likelihood to the observation");
  for (double& x : w) x /= total;
  return w;
}

struct WeightFit {
  std::vector<double> weights;
  double objective = 0.0;
  // Objective after every iteration of the run that produced `weights`.
  std::vector<double> trace;
  int iterations = 0;
  bool converged = false;
};

/// Cross term ∫ (F_a - 1{x*<=x}) (F_b - 1{x*<=x}) dx; equals crps(a, x*) when a == b.
inline double crps_cross(const Mixture& a, const Mixture& b, double x_star) {
  const double lo = std::min(a.quantile(1e-9) - (a.quantile(0.75) - a.quantile(0.25)),
                             b.quantile(1e-9) - (b.quantile(0.75) - b.quantile(0.25)));
  const double hi = std::max(a.quantile(1.0 - 1e-9) + (a.quantile(0.75) - a.quantile(0.25)),
                             b.quantile(1.0 - 1e-9) + (b.quantile(0.75) - b.quantile(0.25)));
  const double left = std::min(lo, x_star);
  const double right = std::max(hi, x_star);
  auto breaks = detail::mixture_breaks(a, left, right);
  auto more = detail::mixture_breaks(b, left, right);
  breaks.insert(breaks.end(), more.begin(), more.end());
  breaks.push_back(x_star);
  auto integrand = [&](double x) {
    const double step = x_star <= x ? 1.0 : 0.0;
    return (a.cdf(x) - step) * (b.cdf(x) - step);
  };
  const auto r = integrate(integrand, left, right, breaks, kCrpsTolerance, 1e-12, 50000);
  if (!r.converged) throw ConvergenceError("crps_cross: quadrature did not converge");
  return r.value;
}

/// Weights on the simplex minimizing the mean ensemble CRPS over rounds of
/// forecasts; forecasts[j][m] is model m's forecast for observation j.
///
/// The ensemble CRPS is the quadratic form w'Aw with
/// A_mk = mean_j ∫ (F_jm - H_j)(F_jk - H_j), so A is built once by quadrature
/// and minimized by projected gradient with restarts from the barycentre and
/// from every vertex.
inline WeightFit crps_min_weights(const std::vector<std::vector<Mixture>>& forecasts,
                                  std::span<const double> observations, int max_iter = 500) {
  if (forecasts.empty() || forecasts.size() != observations.size()) {
    throw InvalidParameter("crps_min_weights: need one forecast set per observation");
  }
  const std::size_t models = forecasts.front().size();
  if (models < 2) throw InvalidParameter("crps_min_weights: need at least two models");
  for (const auto& round : forecasts) {
    if (round.size() != models) throw InvalidParameter("crps_min_weights: ragged forecast sets");
  }
  std::vector<double> gram(models * models, 0.0);
  const double inv_j = 1.0 / static_cast<double>(observations.size());
  for (std::size_t j = 0; j < observations.size(); ++j) {
    for (std::size_t a = 0; a < models; ++a) {
      for (std::size_t b = a; b < models; ++b) {
        const double v = inv_j * (a == b ? crps(forecasts[j][a], observations[j])
                                         : crps_cross(forecasts[j][a], forecasts[j][b], observations[j]));
        gram[a * models + b] += v;
        if (a != b) gram[b * models + a] += v;
      }
    }
  }
  auto objective = [&](const std::vector<double>& w) {
    double total = 0.0;
    for (std::size_t a = 0; a < models; ++a) {
      for (std::size_t b = 0; b < models; ++b) total += w[a] * gram[a * models + b] * w[b];
    }
    return total;
  };
  double lipschitz = 0.0;
  for (std::size_t a = 0; a < models; ++a) {
    double row = 0.0;
    for (std::size_t b = 0; b < models; ++b) row += std::abs(gram[a * models + b]);
    lipschitz = std::max(lipschitz, 2.0 * row);
  }
  const double step = lipschitz > 0.0 ? 1.0 / lipschitz : 1.0;

  std::vector<std::vector<double>> starts;
  starts.emplace_back(models, 1.0 / static_cast<double>(models));
  for (std::size_t v = 0; v < models; ++v) {
    std::vector<double> vertex(models, 0.0);
    vertex[v] = 1.0;
    starts.push_back(std::move(vertex));
  }

  WeightFit best;
  best.objective = std::numeric_limits<double>::infinity();
  for (auto w : starts) {
    WeightFit run;
    double f = objective(w);
    run.trace.push_back(f);
    for (int it = 0; it < max_iter; ++it) {
      std::vector<double> next(models);
      for (std::size_t a = 0; a < models; ++a) {
        double grad = 0.0;
        for (std::size_t b = 0; b < models; ++b) grad += 2.0 * gram[a * models + b] * w[b];
        next[a] = w[a] - step * grad;
      }
      next = detail::project_to_simplex(std::move(next));
      double change = 0.0;
      for (std::size_t a = 0; a < models; ++a) change = std::max(change, std::abs(next[a] - w[a]));
      const double f_next = objective(next);
      run.iterations = it + 1;
      if (f_next > f) break;  // rounding floor reached
      w = std::move(next);
      f = f_next;
      run.trace.push_back(f);
      if (change < 1e-12) {
        run.converged = true;
        break;
      }
    }
    run.weights = w;
    run.objective = f;
    if (!run.converged && run.iterations < max_iter) run.converged = true;
    if (run.objective < best.objective) best = std::move(run);
  }
  return best;
}

/// Same models scored against every observation.
inline WeightFit crps_min_weights(std::span<const Mixture> models, std::span<const double> observations,
                                  int max_iter = 500) {
  std::vector<std::vector<Mixture>> rounds(observations.size(), std::vector<Mixture>(models.begin(), models.end()));
  return crps_min_weights(rounds, observations, max_iter);
}

/// Mixture-weight EM on the density matrix density[j][m] = p_m(x*_j),
/// starting from uniform weights. The trace records the log-likelihood
/// Σ_j log Σ_m w_m p_m(x*_j) before the first and after every update.
inline WeightFit em_weights_from_densities(const std::vector<std::vector<double>>& density, int max_iter = 1000,
                                           double tol = 1e-8) {
  if (density.empty()) throw InvalidParameter("em_weights: no observations");
  const std::size_t models = density.front().size();
  if (models == 0) throw InvalidParameter("em_weights: no models");
  for (std::size_t j = 0; j < density.size(); ++j) {
    if (density[j].size() != models) throw InvalidParameter("em_weights: ragged density matrix");
    const double row = std::accumulate(density[j].begin(), density[j].end(), 0.0);
    if (!(row > 0.0)) {
      throw DegenerateInput("em_weights: observation " + std::to_string(j) + " has zero density under every model");
    }
  }
  std::vector<double> w(models, 1.0 / static_cast<double>(models));
  auto loglik = [&](const std::vector<double>& weights) {
    double ll = 0.0;
    for (const auto& row : density) {
      double mix = 0.0;
      for (std::size_t m = 0; m < models; ++m) mix += weights[m] * row[m];
      ll += std::log(mix);
    }
    return ll;
  };
  WeightFit fit;
  double ll = loglik(w);
  fit.trace.push_back(ll);
  const double inv_j = 1.0 / static_cast<double>(density.size());
  for (int it = 0; it < max_iter; ++it) {
    std::vector<double> next(models, 0.0);
    for (const auto& row : density) {
      double mix = 0.0;
      for (std::size_t m = 0; m < models; ++m) mix += w[m] * row[m];
      for (std::size_t m = 0; m < models; ++m) next[m] += inv_j * w[m] * row[m] / mix;
    }
    w = std::move(next);
    const double ll_next = loglik(w);
    fit.trace.push_back(ll_next);
    fit.iterations = it + 1;
    const double scale = std::abs(ll) > 0.0 ? std::abs(ll) : 1.0;
    const double change = std::abs(ll_next - ll) / scale;
    ll = ll_next;
    if (change < tol) {
      fit.converged = true;
      break;
    }
  }
  fit.weights = std::move(w);
  fit.objective = ll;
  return fit;
}

inline WeightFit em_weights(const std::vector<std::vector<Mixture>>& forecasts, std::span<const double> observations,
                            int max_iter = 1000, double tol = 1e-8) {
  if (forecasts.size() != observations.size()) {
    throw InvalidParameter("em_weights: need one forecast set per observation");
  }
  std::vector<std::vector<double>> density(forecasts.size());
  for (std::size_t j = 0; j < forecasts.size(); ++j) {
    for (const auto& m : forecasts[j]) density[j].push_back(m.pdf(observations[j]));
  }
  return em_weights_from_densities(density, max_iter, tol);
}

inline WeightFit em_weights(std::span<const Mixture> models, std::span<const double> observations,
                            int max_iter = 1000, double tol = 1e-8) {
  std::vector<std::vector<Mixture>> rounds(observations.size(), std::vector<Mixture>(models.begin(), models.end()));
  return em_weights(rounds, observations, max_iter, tol);
}

}  // namespace mixfc
