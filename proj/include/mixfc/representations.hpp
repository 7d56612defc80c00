#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mixfc/errors.hpp"
#include "mixfc/mixture.hpp"

namespace mixfc {

/// Probabilities over contiguous half-open bins [b_{i-1}, b_i).
class BinForecast {
 public:
  static constexpr double kProbTolerance = 1e-6;

  BinForecast(std::vector<double> edges, std::vector<double> probs)
      : edges_(std::move(edges)), probs_(std::move(probs)) {
    if (edges_.size() < 2) throw InvalidParameter("bin forecast needs at least one bin");
    if (probs_.size() + 1 != edges_.size()) {
      throw InvalidParameter("bin forecast needs one probability per bin");
    }
    for (std::size_t i = 0; i < edges_.size(); ++i) {
      if (!std::isfinite(edges_[i])) throw InvalidParameter("bin edges must be finite");
      if (i > 0 && !(edges_[i] > edges_[i - 1])) {
        throw InvalidParameter("bin edges must be strictly increasing");
      }
    }
    double total = 0.0;
    for (double p : probs_) {
      if (!(p >= 0.0) || !std::isfinite(p)) throw InvalidParameter("bin probabilities must be >= 0");
      total += p;
    }
    if (std::abs(total - 1.0) > kProbTolerance) {
      throw InvalidParameter("bin probabilities sum to " + std::to_string(total) + ", expected 1");
    }
  }

  std::span<const double> edges() const noexcept { return edges_; }
  std::span<const double> probs() const noexcept { return probs_; }
  std::size_t size() const noexcept { return probs_.size(); }
  double lower(std::size_t i) const { return edges_[i]; }
  double upper(std::size_t i) const { return edges_[i + 1]; }

  /// Index of the bin containing x, if any.
  std::optional<std::size_t> bin_of(double x) const {
    if (!(x >= edges_.front()) || !(x < edges_.back())) return std::nullopt;
    auto it = std::upper_bound(edges_.begin(), edges_.end(), x);
    return static_cast<std::size_t>(it - edges_.begin()) - 1;
  }

  /// Step CDF: the summed probability of all bins up to and including the
  /// bin containing x.
  double cdf(double x) const {
    if (x < edges_.front()) return 0.0;
    if (x >= edges_.back()) return 1.0;
    const std::size_t n = *bin_of(x);
    double total = 0.0;
    for (std::size_t i = 0; i <= n; ++i) total += probs_[i];
    return std::min(total, 1.0);
  }

  std::size_t nonzero_bins() const {
    return static_cast<std::size_t>(std::count_if(probs_.begin(), probs_.end(), [](double p) { return p > 0.0; }));
  }

  friend bool operator==(const BinForecast&, const BinForecast&) = default;

 private:
  std::vector<double> edges_;
  std::vector<double> probs_;
};

inline double bin_cdf(const BinForecast& f, double x) { return f.cdf(x); }

/// Values q_i at strictly increasing levels α_i with P(Y <= q_i) = α_i.
class QuantileForecast {
 public:
  QuantileForecast(std::vector<double> levels, std::vector<double> values)
      : levels_(std::move(levels)), values_(std::move(values)) {
    if (levels_.empty()) throw InvalidParameter("quantile forecast needs at least one level");
    if (levels_.size() != values_.size()) throw InvalidParameter("levels and values differ in length");
    for (std::size_t i = 0; i < levels_.size(); ++i) {
      if (!(levels_[i] > 0.0 && levels_[i] < 1.0)) throw InvalidParameter("quantile levels must lie in (0, 1)");
      if (!std::isfinite(values_[i])) throw InvalidParameter("quantile values must be finite");
      if (i > 0 && !(levels_[i] > levels_[i - 1])) {
        throw InvalidParameter("quantile levels must be strictly increasing");
      }
      if (i > 0 && values_[i] < values_[i - 1]) {
        throw InvalidParameter("quantile values must be nondecreasing (level " +
                               std::to_string(levels_[i]) + ")");
      }
    }
  }

  std::span<const double> levels() const noexcept { return levels_; }
  std::span<const double> values() const noexcept { return values_; }
  std::size_t size() const noexcept { return levels_.size(); }

  /// Value reported at `level`, matched to within 1e-9.
  std::optional<double> value_at(double level) const {
    for (std::size_t i = 0; i < levels_.size(); ++i) {
      if (std::abs(levels_[i] - level) <= 1e-9) return values_[i];
    }
    return std::nullopt;
  }

  friend bool operator==(const QuantileForecast&, const QuantileForecast&) = default;

 private:
  std::vector<double> levels_;
  std::vector<double> values_;
};

/// Draws X_1..X_n, optionally weighted (weights positive, summing to 1).
class SampleForecast {
 public:
  explicit SampleForecast(std::vector<double> draws, std::vector<double> weights = {})
      : draws_(std::move(draws)), weights_(std::move(weights)) {
    if (draws_.empty()) throw InvalidParameter("sample forecast needs at least one draw");
    for (double x : draws_) {
      if (!std::isfinite(x)) throw InvalidParameter("sample draws must be finite");
    }
    if (!weights_.empty()) {
      if (weights_.size() != draws_.size()) throw InvalidParameter("one weight per draw required");
      double total = 0.0;
      for (double w : weights_) {
        if (!(w > 0.0)) throw InvalidParameter("sample weights must be positive");
        total += w;
      }
      if (std::abs(total - 1.0) > kWeightTolerance) throw InvalidParameter("sample weights must sum to 1");
    }
  }

  std::span<const double> draws() const noexcept { return draws_; }
  std::size_t size() const noexcept { return draws_.size(); }
  bool weighted() const noexcept { return !weights_.empty(); }
  double weight(std::size_t i) const {
    return weights_.empty() ? 1.0 / static_cast<double>(draws_.size()) : weights_[i];
  }

  double mean() const {
    double m = 0.0;
    for (std::size_t i = 0; i < draws_.size(); ++i) m += weight(i) * draws_[i];
    return m;
  }

  /// Standard deviation with the n - 1 denominator (reliability-weighted
  /// equivalent for weighted samples).
  double sd() const {
    if (draws_.size() < 2) return 0.0;
    const double m = mean();
    double ss = 0.0;
    double w2 = 0.0;
    for (std::size_t i = 0; i < draws_.size(); ++i) {
      ss += weight(i) * (draws_[i] - m) * (draws_[i] - m);
      w2 += weight(i) * weight(i);
    }
    return std::sqrt(ss / (1.0 - w2));
  }

  /// Draws sorted ascending together with their weights.
  std::vector<std::pair<double, double>> sorted() const {
    std::vector<std::pair<double, double>> out;
    out.reserve(draws_.size());
    for (std::size_t i = 0; i < draws_.size(); ++i) out.emplace_back(draws_[i], weight(i));
    std::sort(out.begin(), out.end());
    return out;
  }

  double ecdf(double x) const {
    double total = 0.0;
    for (std::size_t i = 0; i < draws_.size(); ++i) {
      if (draws_[i] <= x) total += weight(i);
    }
    return std::min(total, 1.0);
  }

 private:
  std::vector<double> draws_;
  std::vector<double> weights_;
};

inline double ecdf(const SampleForecast& s, double x) { return s.ecdf(x); }

/// Bin probabilities p_i = F(b_i) - F(b_{i-1}), rescaled to sum to one.
/// Throws if the mixture leaves more than 1e-6 of its mass outside the edges.
inline BinForecast discretize(const Mixture& m, std::vector<double> edges) {
  if (edges.size() < 2) throw InvalidParameter("discretize: need at least two edges");
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (!(edges[i] > edges[i - 1])) throw InvalidParameter("discretize: edges must be strictly increasing");
  }
  // Mass on [b_0, b_K): left limit of the CDF at both ends.
  auto left_cdf = [&](double x) { return m.cdf(std::nextafter(x, -std::numeric_limits<double>::infinity())); };
  std::vector<double> probs(edges.size() - 1);
  double prev = left_cdf(edges.front());
  for (std::size_t i = 1; i < edges.size(); ++i) {
    const double cur = left_cdf(edges[i]);
    probs[i - 1] = std::max(0.0, cur - prev);
    prev = cur;
  }
  const double total = std::accumulate(probs.begin(), probs.end(), 0.0);
  if (total < 1.0 - 1e-6) {
    throw DegenerateInput("discretize: mixture places " + std::to_string(1.0 - total) +
                          " of its mass outside the bin range; truncate it first");
  }
  for (double& p : probs) p /= total;
  // Push the rounding residual into the largest bin so the sum is exactly one.
  const auto largest = static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
  for (int pass = 0; pass < 4; ++pass) {
    const double residual = 1.0 - std::accumulate(probs.begin(), probs.end(), 0.0);
    if (residual == 0.0) break;
    probs[largest] += residual;
  }
  return BinForecast(std::move(edges), std::move(probs));
}

/// Silverman's rule of thumb: 0.9 min(sd, IQR / 1.34) n^(-1/5).
inline double silverman_bandwidth(const SampleForecast& s) {
  if (s.size() < 2) throw DegenerateInput("automatic bandwidth needs at least two draws");
  const double sd = s.sd();
  if (!(sd > 0.0)) throw DegenerateInput("automatic bandwidth: zero sample variance");
  std::vector<double> x(s.draws().begin(), s.draws().end());
  std::sort(x.begin(), x.end());
  auto type7 = [&](double p) {
    const double h = (static_cast<double>(x.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, x.size() - 1);
    return x[lo] + (h - static_cast<double>(lo)) * (x[hi] - x[lo]);
  };
  const double iqr = type7(0.75) - type7(0.25);
  const double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
  return 0.9 * spread * std::pow(static_cast<double>(s.size()), -0.2);
}

/// Gaussian kernel density estimate at x.
inline double kernel_density(const SampleForecast& s, double x, std::optional<double> bandwidth = std::nullopt) {
  const double h = bandwidth ? *bandwidth : silverman_bandwidth(s);
  if (!(h > 0.0)) throw InvalidParameter("kernel bandwidth must be positive");
  const double norm = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  double total = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double z = (x - s.draws()[i]) / h;
    total += s.weight(i) * norm * std::exp(-0.5 * z * z);
  }
  return total / h;
}

/// Single normal with the sample mean and (n - 1) standard deviation.
inline Mixture gaussian_approx(const SampleForecast& s) {
  if (s.size() < 2) throw DegenerateInput("gaussian approximation needs at least two draws");
  const double sd = s.sd();
  if (!(sd > 0.0)) throw DegenerateInput("gaussian approximation: degenerate sample (zero variance)");
  return Mixture(Component::norm(s.mean(), sd));
}

namespace detail {
inline void check_levels(std::span<const double> levels) {
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (!(levels[i] > 0.0 && levels[i] < 1.0)) throw InvalidParameter("levels must lie in (0, 1)");
    if (i > 0 && !(levels[i] > levels[i - 1])) throw InvalidParameter("levels must be strictly increasing");
  }
}
}  // namespace detail

inline QuantileForecast quantiles_of(const Mixture& m, std::span<const double> levels) {
  detail::check_levels(levels);
  std::vector<double> values;
  values.reserve(levels.size());
  for (double p : levels) {
    double q = m.quantile(p);
    if (!values.empty()) q = std::max(q, values.back());
    values.push_back(q);
  }
  return QuantileForecast({levels.begin(), levels.end()}, std::move(values));
}

/// Sample quantiles. Unweighted samples use linear interpolation between
/// order statistics (Hyndman-Fan type 7); weighted samples use the
/// generalized inverse of the weighted ECDF.
inline QuantileForecast quantiles_of(const SampleForecast& s, std::span<const double> levels) {
  detail::check_levels(levels);
  const auto sorted = s.sorted();
  std::vector<double> values;
  values.reserve(levels.size());
  for (double p : levels) {
    if (!s.weighted()) {
      const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
      const auto lo = static_cast<std::size_t>(std::floor(h));
      const auto hi = std::min(lo + 1, sorted.size() - 1);
      values.push_back(sorted[lo].first + (h - static_cast<double>(lo)) * (sorted[hi].first - sorted[lo].first));
    } else {
      double acc = 0.0;
      double v = sorted.back().first;
      for (const auto& [x, w] : sorted) {
        acc += w;
        if (acc >= p) {
          v = x;
          break;
        }
      }
      values.push_back(v);
    }
  }
  return QuantileForecast({levels.begin(), levels.end()}, std::move(values));
}

}  // namespace mixfc
