#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <variant>

#include <boost/math/distributions/beta.hpp>
#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/cauchy.hpp>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/exponential.hpp>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/gamma.hpp>
#include <boost/math/distributions/geometric.hpp>
#include <boost/math/distributions/hypergeometric.hpp>
#include <boost/math/distributions/logistic.hpp>
#include <boost/math/distributions/lognormal.hpp>
#include <boost/math/distributions/negative_binomial.hpp>
#include <boost/math/distributions/non_central_chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/poisson.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/distributions/uniform.hpp>
#include <boost/math/distributions/weibull.hpp>

#include "mixfc/errors.hpp"
#include "mixfc/family.hpp"

namespace mixfc {

namespace detail {

namespace bm = boost::math;

using Policy = bm::policies::policy<bm::policies::overflow_error<bm::policies::ignore_error>,
                                    bm::policies::discrete_quantile<bm::policies::integer_round_up>,
                                    bm::policies::promote_double<false>>;

struct DiracKernel {
  double location;
};

// location + scale * T(df)
struct LocationScaleT {
  bm::students_t_distribution<double, Policy> t;
  double location;
  double scale;
};

struct NoncentralChisq {
  bm::non_central_chi_squared_distribution<double, Policy> d;
};

// Hypergeometric with R's (m white, n black, k drawn) parameterization.
struct HyperKernel {
  bm::hypergeometric_distribution<double, Policy> d;
  double lo;
  double hi;
};

using Kernel =
    std::variant<bm::beta_distribution<double, Policy>, bm::cauchy_distribution<double, Policy>,
                 bm::lognormal_distribution<double, Policy>, bm::logistic_distribution<double, Policy>,
                 bm::uniform_distribution<double, Policy>, LocationScaleT,
                 bm::weibull_distribution<double, Policy>, bm::fisher_f_distribution<double, Policy>,
                 bm::normal_distribution<double, Policy>, bm::chi_squared_distribution<double, Policy>,
                 NoncentralChisq, bm::gamma_distribution<double, Policy>,
                 bm::exponential_distribution<double, Policy>, bm::binomial_distribution<double, Policy>,
                 DiracKernel, bm::poisson_distribution<double, Policy>, HyperKernel,
                 bm::negative_binomial_distribution<double, Policy>,
                 bm::geometric_distribution<double, Policy>>;

// Uniform evaluation surface over the kernel variant. Discrete callers pass
// integers; support clipping happens in Component.
template <class D>
std::pair<double, double> support_of(const D& d) {
  auto s = bm::support(d);
  return {s.first, s.second};
}
inline std::pair<double, double> support_of(const DiracKernel& d) { return {d.location, d.location}; }
inline std::pair<double, double> support_of(const LocationScaleT&) {
  return {-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
}
inline std::pair<double, double> support_of(const NoncentralChisq&) {
  return {0.0, std::numeric_limits<double>::infinity()};
}
inline std::pair<double, double> support_of(const HyperKernel& h) { return {h.lo, h.hi}; }

template <class D>
double cdf_of(const D& d, double x) { return bm::cdf(d, x); }
inline double cdf_of(const DiracKernel& d, double x) { return x >= d.location ? 1.0 : 0.0; }
inline double cdf_of(const LocationScaleT& d, double x) {
  return bm::cdf(d.t, (x - d.location) / d.scale);
}
inline double cdf_of(const NoncentralChisq& d, double x) { return bm::cdf(d.d, x); }
inline double cdf_of(const HyperKernel& d, double x) {
  return bm::cdf(d.d, static_cast<unsigned>(x));
}

template <class D>
double sf_of(const D& d, double x) { return bm::cdf(bm::complement(d, x)); }
inline double sf_of(const DiracKernel& d, double x) { return x >= d.location ? 0.0 : 1.0; }
inline double sf_of(const LocationScaleT& d, double x) {
  return bm::cdf(bm::complement(d.t, (x - d.location) / d.scale));
}
inline double sf_of(const NoncentralChisq& d, double x) { return bm::cdf(bm::complement(d.d, x)); }
inline double sf_of(const HyperKernel& d, double x) {
  return bm::cdf(bm::complement(d.d, static_cast<unsigned>(x)));
}

template <class D>
double pdf_of(const D& d, double x) { return bm::pdf(d, x); }
inline double pdf_of(const DiracKernel& d, double x) { return x == d.location ? 1.0 : 0.0; }
inline double pdf_of(const LocationScaleT& d, double x) {
  return bm::pdf(d.t, (x - d.location) / d.scale) / d.scale;
}
inline double pdf_of(const NoncentralChisq& d, double x) { return bm::pdf(d.d, x); }
inline double pdf_of(const HyperKernel& d, double x) {
  return bm::pdf(d.d, static_cast<unsigned>(x));
}

template <class D>
double quantile_of(const D& d, double p) { return bm::quantile(d, p); }
inline double quantile_of(const DiracKernel& d, double) { return d.location; }
inline double quantile_of(const LocationScaleT& d, double p) {
  return d.location + d.scale * bm::quantile(d.t, p);
}
inline double quantile_of(const NoncentralChisq& d, double p) { return bm::quantile(d.d, p); }
inline double quantile_of(const HyperKernel& d, double p) {
  return static_cast<double>(bm::quantile(d.d, p));
}

template <class D>
double upper_quantile_of(const D& d, double q) { return bm::quantile(bm::complement(d, q)); }
inline double upper_quantile_of(const DiracKernel& d, double) { return d.location; }
inline double upper_quantile_of(const LocationScaleT& d, double q) {
  return d.location + d.scale * bm::quantile(bm::complement(d.t, q));
}
inline double upper_quantile_of(const NoncentralChisq& d, double q) {
  return bm::quantile(bm::complement(d.d, q));
}
inline double upper_quantile_of(const HyperKernel& d, double q) {
  return static_cast<double>(bm::quantile(bm::complement(d.d, q)));
}

inline bool is_integer(double x) { return std::isfinite(x) && std::floor(x) == x; }

}  // namespace detail

/// One parametric component of a mixture: family, up to three parameters,
/// optional truncation to (lower, upper], and the mixture weight.
///
/// Parameters are validated on construction. The truncation normalizer is
/// computed once; evaluation never re-validates.
class Component {
 public:
  Component(Family family, double param1, std::optional<double> param2 = std::nullopt,
            std::optional<double> param3 = std::nullopt, double weight = 1.0,
            std::optional<double> lower = std::nullopt, std::optional<double> upper = std::nullopt)
      : family_(family),
        param1_(param1),
        param2_(param2),
        param3_(param3),
        weight_(weight),
        lower_(lower),
        upper_(upper),
        kernel_(make_kernel()) {
    if (!(std::isfinite(weight_) && weight_ > 0.0 && weight_ <= 1.0 + 1e-12)) {
      throw InvalidParameter("component weight must lie in (0, 1], got " + std::to_string(weight_));
    }
    init_truncation();
  }

  static Component norm(double mean, double sd, double weight = 1.0) {
    return Component(Family::Norm, mean, sd, std::nullopt, weight);
  }

  Family family() const noexcept { return family_; }
  double param1() const noexcept { return param1_; }
  std::optional<double> param2() const noexcept { return param2_; }
  std::optional<double> param3() const noexcept { return param3_; }
  double weight() const noexcept { return weight_; }
  std::optional<double> lower() const noexcept { return lower_; }
  std::optional<double> upper() const noexcept { return upper_; }
  bool truncated() const noexcept { return lower_.has_value() || upper_.has_value(); }
  bool discrete() const noexcept { return is_discrete(family_); }

  Component with_weight(double w) const {
    return Component(family_, param1_, param2_, param3_, w, lower_, upper_);
  }
  Component truncated_to(std::optional<double> lower, std::optional<double> upper) const {
    return Component(family_, param1_, param2_, param3_, weight_, lower, upper);
  }

  /// Effective support after truncation, as a closed range.
  std::pair<double, double> support() const noexcept { return {support_lo_, support_hi_}; }

  /// Density for continuous families, probability mass for discrete ones.
  double pdf(double x) const {
    if (!std::isfinite(x)) throw std::domain_error("pdf: non-finite argument");
    if (x < support_lo_ || x > support_hi_) return 0.0;
    if (lower_ && !(x > *lower_)) return 0.0;
    if (discrete() && family_ != Family::Dirac && !detail::is_integer(x)) return 0.0;
    const double d = std::visit([x](const auto& k) { return detail::pdf_of(k, x); }, kernel_);
    return d / mass_;
  }

  double cdf(double x) const {
    if (std::isnan(x)) throw std::domain_error("cdf: NaN argument");
    if (x < support_lo_) return 0.0;
    if (x >= support_hi_) return 1.0;
    if (lower_ && x <= *lower_) return 0.0;
    if (upper_ && x >= *upper_) return 1.0;
    if (!truncated()) return cdf_raw(x);
    return std::clamp(mass_between(x) / mass_, 0.0, 1.0);
  }

  /// Generalized inverse inf{x : cdf(x) >= p}, p in (0, 1).
  double quantile(double p) const {
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("quantile: level must lie in (0, 1)");
    double x;
    if (!truncated()) {
      x = base_quantile_lower(p);
    } else if (lower_cdf_ + p * mass_ <= 0.5) {
      x = base_quantile_lower(lower_cdf_ + p * mass_);
    } else {
      x = base_quantile_upper(lower_sf_ - p * mass_);
    }
    x = std::clamp(x, support_lo_, support_hi_);
    if (discrete()) x = settle_discrete(x, p);
    return x;
  }

  /// Draw by inverse transform from a uniform deviate in (0, 1).
  double draw(double u) const { return quantile(u); }

  friend bool operator==(const Component& a, const Component& b) {
    return a.family_ == b.family_ && a.param1_ == b.param1_ && a.param2_ == b.param2_ &&
           a.param3_ == b.param3_ && a.weight_ == b.weight_ && a.lower_ == b.lower_ &&
           a.upper_ == b.upper_;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw InvalidParameter(std::string(to_string(family_)) + ": " + what);
  }

  void require_finite(double v, std::string_view name) const {
    if (!std::isfinite(v)) fail(std::string(name) + " must be finite");
  }
  void require_positive(double v, std::string_view name) const {
    require_finite(v, name);
    if (!(v > 0.0)) fail(std::string(name) + " must be > 0");
  }
  void require_nonnegative_integer(double v, std::string_view name) const {
    if (!(detail::is_integer(v) && v >= 0.0)) fail(std::string(name) + " must be a nonnegative integer");
  }
  void require_probability(double v, std::string_view name, bool allow_zero) const {
    require_finite(v, name);
    if (v > 1.0 || v < 0.0 || (!allow_zero && v == 0.0)) fail(std::string(name) + " out of range");
  }

  detail::Kernel make_kernel() const {
    namespace bm = boost::math;
    using detail::Policy;
    const auto& info = family_info(family_);
    const int given = 1 + (param2_ ? 1 : 0) + (param3_ ? 1 : 0);
    if (param3_ && !param2_) fail("param3 given without param2");
    if (given < info.required) fail("expects " + std::to_string(info.required) + " parameters");
    if (given > info.maximum) fail("accepts at most " + std::to_string(info.maximum) + " parameters");
    const double a = param1_;
    const double b = param2_.value_or(0.0);
    const double c = param3_.value_or(0.0);
    switch (family_) {
      case Family::Beta:
        require_positive(a, "shape1");
        require_positive(b, "shape2");
        return bm::beta_distribution<double, Policy>(a, b);
      case Family::Cauchy:
        require_finite(a, "location");
        require_positive(b, "scale");
        return bm::cauchy_distribution<double, Policy>(a, b);
      case Family::Lnorm:
        require_finite(a, "meanlog");
        require_positive(b, "sdlog");
        return bm::lognormal_distribution<double, Policy>(a, b);
      case Family::Logis:
        require_finite(a, "location");
        require_positive(b, "scale");
        return bm::logistic_distribution<double, Policy>(a, b);
      case Family::Unif:
        require_finite(a, "min");
        require_finite(b, "max");
        if (!(a < b)) fail("min must be < max");
        return bm::uniform_distribution<double, Policy>(a, b);
      case Family::Lst:
        require_finite(a, "location");
        require_positive(b, "scale");
        require_positive(c, "df");
        return detail::LocationScaleT{bm::students_t_distribution<double, Policy>(c), a, b};
      case Family::Weibull:
        require_positive(a, "shape");
        require_positive(b, "scale");
        return bm::weibull_distribution<double, Policy>(a, b);
      case Family::Fd:
        require_positive(a, "df1");
        require_positive(b, "df2");
        return bm::fisher_f_distribution<double, Policy>(a, b);
      case Family::Norm:
        require_finite(a, "mean");
        require_positive(b, "sd");
        return bm::normal_distribution<double, Policy>(a, b);
      case Family::Chisq:
        require_positive(a, "df");
        if (param2_) {
          require_finite(b, "ncp");
          if (b < 0.0) fail("ncp must be >= 0");
          if (b > 0.0) return detail::NoncentralChisq{bm::non_central_chi_squared_distribution<double, Policy>(a, b)};
        }
        return bm::chi_squared_distribution<double, Policy>(a);
      case Family::Gammad:
        require_positive(a, "scale");
        require_positive(b, "shape");
        return bm::gamma_distribution<double, Policy>(b, a);
      case Family::Exp:
        require_positive(a, "rate");
        return bm::exponential_distribution<double, Policy>(a);
      case Family::Binom:
        require_nonnegative_integer(a, "size");
        require_probability(b, "prob", true);
        return bm::binomial_distribution<double, Policy>(a, b);
      case Family::Dirac:
        require_finite(a, "location");
        return detail::DiracKernel{a};
      case Family::Pois:
        require_positive(a, "lambda");
        return bm::poisson_distribution<double, Policy>(a);
      case Family::Hyper: {
        require_nonnegative_integer(a, "m");
        require_nonnegative_integer(b, "n");
        require_nonnegative_integer(c, "k");
        if (c > a + b) fail("k must not exceed m + n");
        const auto m = static_cast<unsigned>(a), n = static_cast<unsigned>(b), k = static_cast<unsigned>(c);
        const double lo = (k > n) ? static_cast<double>(k - n) : 0.0;
        const double hi = static_cast<double>(std::min(m, k));
        return detail::HyperKernel{bm::hypergeometric_distribution<double, Policy>(m, k, m + n), lo, hi};
      }
      case Family::Nbinom:
        require_positive(a, "n");
        require_probability(b, "p", false);
        return bm::negative_binomial_distribution<double, Policy>(a, b);
      case Family::Geom:
        require_probability(a, "prob", false);
        return bm::geometric_distribution<double, Policy>(a);
    }
    fail("unknown family");
  }

  void init_truncation() {
    const auto [lo, hi] = std::visit([](const auto& k) { return detail::support_of(k); }, kernel_);
    support_lo_ = lo;
    support_hi_ = hi;
    if (lower_ && std::isnan(*lower_)) throw InvalidParameter("lower truncation limit is NaN");
    if (upper_ && std::isnan(*upper_)) throw InvalidParameter("upper truncation limit is NaN");
    if (lower_ && upper_ && !(*lower_ < *upper_)) {
      throw InvalidParameter("truncation requires lower < upper");
    }
    if (!truncated()) return;
    lower_cdf_ = lower_ ? cdf_raw(*lower_) : 0.0;
    lower_sf_ = lower_ ? sf_raw(*lower_) : 1.0;
    mass_ = mass_between(upper_ ? *upper_ : std::numeric_limits<double>::infinity());
    if (!(mass_ > 0.0)) throw InvalidParameter("truncation interval carries no probability mass");
    // Narrow the search/support range to the truncation window.
    if (lower_) support_lo_ = std::max(support_lo_, *lower_);
    if (upper_) support_hi_ = std::min(support_hi_, *upper_);
  }

  double base_cdf(double x) const {
    return std::visit([x](const auto& k) { return detail::cdf_of(k, x); }, kernel_);
  }

  // Untruncated CDF / survival with discrete floor and support clipping.
  double cdf_raw(double x) const {
    if (x == std::numeric_limits<double>::infinity()) return 1.0;
    const auto [lo, hi] = std::visit([](const auto& k) { return detail::support_of(k); }, kernel_);
    if (x < lo) return 0.0;
    if (x >= hi) return 1.0;
    if (discrete() && family_ != Family::Dirac) x = std::floor(x);
    return base_cdf(x);
  }
  double sf_raw(double x) const {
    if (x == std::numeric_limits<double>::infinity()) return 0.0;
    const auto [lo, hi] = std::visit([](const auto& k) { return detail::support_of(k); }, kernel_);
    if (x < lo) return 1.0;
    if (x >= hi) return 0.0;
    if (discrete() && family_ != Family::Dirac) x = std::floor(x);
    return std::visit([x](const auto& k) { return detail::sf_of(k, x); }, kernel_);
  }

  // Untruncated mass on (lower, x], computed on whichever tail is accurate.
  double mass_between(double x) const {
    if (lower_cdf_ > 0.5) return lower_sf_ - sf_raw(x);
    return cdf_raw(x) - lower_cdf_;
  }

  double base_quantile_lower(double p) const {
    if (p <= 0.0) return support_lo_;
    if (p >= 1.0) return support_hi_;
    return std::visit([p](const auto& k) { return detail::quantile_of(k, p); }, kernel_);
  }
  double base_quantile_upper(double q) const {
    if (q <= 0.0) return support_hi_;
    if (q >= 1.0) return support_lo_;
    return std::visit([q](const auto& k) { return detail::upper_quantile_of(k, q); }, kernel_);
  }

  // Move a discrete quantile candidate to the exact generalized inverse.
  double settle_discrete(double x, double p) const {
    if (family_ == Family::Dirac) return x;
    x = std::ceil(x);
    while (x > support_lo_ && cdf(x - 1.0) >= p) x -= 1.0;
    while (x < support_hi_ && cdf(x) < p) x += 1.0;
    return x;
  }

  Family family_;
  double param1_;
  std::optional<double> param2_;
  std::optional<double> param3_;
  double weight_;
  std::optional<double> lower_;
  std::optional<double> upper_;
  detail::Kernel kernel_;
  double support_lo_ = 0.0;
  double support_hi_ = 0.0;
  double lower_cdf_ = 0.0;
  double lower_sf_ = 1.0;
  double mass_ = 1.0;
};

}  // namespace mixfc
