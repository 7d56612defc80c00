#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "mixfc/component.hpp"
#include "mixfc/errors.hpp"
#include "mixfc/random.hpp"

namespace mixfc {

/// Tolerance on Σ w_c = 1 accepted without rescaling.
inline constexpr double kWeightTolerance = 1e-9;

/// Finite mixture p(x) = Σ_c w_c p_c(x) over an ordered component list.
/// Immutable once built.
class Mixture {
 public:
  explicit Mixture(std::vector<Component> components) : components_(std::move(components)) {
    if (components_.empty()) throw InvalidParameter("mixture needs at least one component");
    const double total = weight_sum();
    if (std::abs(total - 1.0) > kWeightTolerance) {
      throw InvalidParameter("mixture weights sum to " + std::to_string(total) + ", expected 1");
    }
  }

  explicit Mixture(Component single) : Mixture(std::vector<Component>{std::move(single)}) {}

  /// Rescales weights to sum to one before validating.
  static Mixture normalized(std::vector<Component> components) {
    if (components.empty()) throw InvalidParameter("mixture needs at least one component");
    double total = 0.0;
    for (const auto& c : components) total += c.weight();
    if (std::abs(total - 1.0) > kWeightTolerance) {
      for (auto& c : components) c = c.with_weight(c.weight() / total);
    }
    return Mixture(std::move(components));
  }

  std::span<const Component> components() const noexcept { return components_; }
  std::size_t size() const noexcept { return components_.size(); }
  const Component& operator[](std::size_t i) const { return components_[i]; }

  bool continuous() const noexcept {
    return std::none_of(components_.begin(), components_.end(),
                        [](const Component& c) { return c.discrete(); });
  }

  double pdf(double x) const {
    if (!std::isfinite(x)) throw std::domain_error("pdf: non-finite argument");
    double total = 0.0;
    for (const auto& c : components_) total += c.weight() * c.pdf(x);
    return total;
  }

  double cdf(double x) const {
    double total = 0.0;
    for (const auto& c : components_) total += c.weight() * c.cdf(x);
    return std::clamp(total, 0.0, 1.0);
  }

  /// inf{x : cdf(x) >= p}. Bisection on the CDF inside the bracket formed by
  /// the smallest and largest component quantiles at p.
  double quantile(double p) const {
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("quantile: level must lie in (0, 1)");
    if (components_.size() == 1) return components_.front().quantile(p);
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& c : components_) {
      const double q = c.quantile(p);
      lo = std::min(lo, q);
      hi = std::max(hi, q);
    }
    if (!std::isfinite(lo) || !std::isfinite(hi)) throw DegenerateInput("quantile: cannot bracket");
    if (cdf(lo) >= p) return lo;
    for (int iter = 0; iter < 400; ++iter) {
      const double mid = lo + 0.5 * (hi - lo);
      if (mid <= lo || mid >= hi) break;
      if (cdf(mid) >= p) {
        hi = mid;
      } else {
        lo = mid;
      }
      if (hi - lo <= 1e-10 * std::max(1.0, std::abs(hi)) && cdf(hi) - p <= 1e-12) break;
    }
    return snap_to_atom(hi, p);
  }

  /// n draws: component chosen with probability w_c, then an inverse-CDF
  /// draw from it. Deterministic for a fixed seed.
  std::vector<double> sample(std::size_t n, std::uint64_t seed) const {
    Rng rng(seed);
    return sample(n, rng);
  }

  std::vector<double> sample(std::size_t n, Rng& rng) const {
    std::vector<double> cumulative;
    cumulative.reserve(components_.size());
    double acc = 0.0;
    for (const auto& c : components_) cumulative.push_back(acc += c.weight());
    std::vector<double> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double u = rng.open01() * acc;
      auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
      if (it == cumulative.end()) --it;
      const auto& c = components_[static_cast<std::size_t>(it - cumulative.begin())];
      out.push_back(c.draw(rng.open01()));
    }
    return out;
  }

  /// Same components, each truncated to (lower, upper].
  Mixture truncated_to(std::optional<double> lower, std::optional<double> upper) const {
    std::vector<Component> out;
    out.reserve(components_.size());
    for (const auto& c : components_) out.push_back(c.truncated_to(lower, upper));
    return Mixture(std::move(out));
  }

  friend bool operator==(const Mixture& a, const Mixture& b) { return a.components_ == b.components_; }

 private:
  double weight_sum() const {
    double total = 0.0;
    for (const auto& c : components_) {
      total += c.weight();
    }
    return total;
  }

  // Bisection lands within rounding of a jump; move onto the atom itself.
  double snap_to_atom(double x, double p) const {
    for (const auto& c : components_) {
      if (!c.discrete()) continue;
      const double atom = c.family() == Family::Dirac ? c.param1() : std::round(x);
      if (std::abs(atom - x) <= 1e-8 * std::max(1.0, std::abs(x)) && cdf(atom) >= p) return atom;
    }
    return x;
  }

  std::vector<Component> components_;
};

/// Collapse an ensemble of mixtures into one mixture whose component weights
/// are the products of outer and inner weights.
inline Mixture flatten(std::span<const std::pair<Mixture, double>> outer) {
  if (outer.empty()) throw InvalidParameter("flatten: empty ensemble");
  double total = 0.0;
  for (const auto& [m, w] : outer) {
    if (!(w > 0.0)) throw InvalidParameter("flatten: outer weights must be positive");
    total += w;
  }
  if (std::abs(total - 1.0) > kWeightTolerance) {
    throw InvalidParameter("flatten: outer weights sum to " + std::to_string(total));
  }
  std::vector<Component> parts;
  for (const auto& [m, w] : outer) {
    for (const auto& c : m.components()) parts.push_back(c.with_weight(w * c.weight()));
  }
  return Mixture(std::move(parts));
}

}  // namespace mixfc
