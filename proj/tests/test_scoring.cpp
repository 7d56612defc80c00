#include <gtest/gtest.h>

#include <random>

#include "mixfc/mixfc.hpp"
#include "oracles.hpp"

using namespace mixfc;

namespace {

Mixture mdist1() {
  return Mixture({Component(Family::Lnorm, 2, 1, std::nullopt, 0.3), Component(Family::Norm, 2.1, 1, std::nullopt, 0.7)});
}
Mixture mdist2() {
  return Mixture({Component(Family::Norm, 1.5, 1, std::nullopt, 0.4), Component(Family::Norm, 4, 2, std::nullopt, 0.6)});
}

std::vector<double> hub_levels() {
  std::vector<double> l{0.01, 0.025};
  for (int i = 1; i <= 19; ++i) l.push_back(std::round(50.0 * i) / 1000.0);
  l.push_back(0.975);
  l.push_back(0.99);
  return l;
}

}  // namespace

TEST(LogScore, WorkedExample) {
  EXPECT_NEAR(log_score(mdist1(), 3), 1.547238, 1e-6);
  EXPECT_NEAR(log_score(mdist2(), 3), 1.848796, 1e-6);
  EXPECT_NEAR(log_score(Mixture(Component(Family::Unif, 0, 1)), 0.3), 0.0, 1e-15);
}

TEST(LogScore, ZeroDensityIsInfiniteSentinel) {
  EXPECT_EQ(log_score(Mixture(Component(Family::Unif, 0, 1)), 2.0), kInfiniteScore);
  const BinForecast b({0, 1, 2}, {1.0, 0.0});
  EXPECT_EQ(log_score(b, 1.5), kInfiniteScore);
  EXPECT_EQ(log_score(b, 5.0), kInfiniteScore);
  EXPECT_DOUBLE_EQ(log_score(BinForecast({0, 1, 2}, {0.25, 0.75}), 1.2), -std::log(0.75));
}

TEST(Crps, WorkedExample) {
  EXPECT_NEAR(crps(mdist1(), 3), 0.6348212, 1e-4);
  EXPECT_NEAR(crps(mdist2(), 3), 0.5306083, 1e-4);
  // Both displayed digits agree with an independent dense Simpson integral.
  const auto m1 = mdist1();
  EXPECT_NEAR(oracle::crps_simpson([&](double x) { return m1.cdf(x); }, 3, -10, 200, 400000), 0.6348212, 1e-6);
}

TEST(Crps, StandardNormalClosedForm) {
  EXPECT_NEAR(oracle::crps_normal(0, 1, 0), 0.2336950, 1e-7);
  EXPECT_NEAR(crps(Mixture(Component::norm(0, 1)), 0), 0.2336950, 1e-6);
}

TEST(Crps, MatchesClosedFormNormal) {
  std::mt19937_64 gen(21);
  std::uniform_real_distribution<double> mu(-50, 50), sd(0.05, 20), off(-4, 4);
  for (int i = 0; i < 50; ++i) {
    const double m = mu(gen), s = sd(gen), y = m + s * off(gen);
    EXPECT_NEAR(crps(Mixture(Component::norm(m, s)), y), oracle::crps_normal(m, s, y), 1e-6) << m << " " << s << " " << y;
  }
}

TEST(Crps, EcdfMatchesExactSum) {
  std::mt19937_64 gen(22);
  std::normal_distribution<double> nd(0, 3);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> x(5 + rep * 7);
    for (auto& v : x) v = nd(gen);
    const double y = nd(gen);
    EXPECT_NEAR(crps(SampleForecast(x), y), oracle::crps_ecdf(x, y), 1e-8);
  }
  // Observation outside the sample range, and ties.
  EXPECT_NEAR(crps(SampleForecast({1, 1, 2}), 10), oracle::crps_ecdf({1, 1, 2}, 10), 1e-10);
  EXPECT_NEAR(crps(SampleForecast({1, 1, 2}), -3), oracle::crps_ecdf({1, 1, 2}, -3), 1e-10);
}

TEST(Crps, WeightedEcdfMatchesPiecewiseIntegral) {
  const std::vector<double> x{0.5, 2.0, -1.0, 4.0};
  const std::vector<double> w{0.1, 0.4, 0.3, 0.2};
  std::vector<std::pair<double, double>> xw;
  for (int i = 0; i < 4; ++i) xw.emplace_back(x[i], w[i]);
  for (double y : {-2.0, 0.0, 1.7, 5.0}) {
    EXPECT_NEAR(crps(SampleForecast(x, w), y), oracle::crps_weighted_ecdf(xw, y), 1e-10);
  }
}

TEST(Crps, BinForecastStepCdf) {
  const BinForecast f({0, 1, 2, 3}, {0.2, 0.5, 0.3});
  // Integrand is piecewise constant: [0,1): 0.2², [1,1.5): 0.7², [1.5,2): 0.3², [2,3): 0.
  EXPECT_NEAR(crps(f, 1.5), 0.04 + 0.5 * 0.49 + 0.5 * 0.09, 1e-10);
}

TEST(Crps, DiscreteAndTruncatedMatchOracle) {
  const Mixture p(Component(Family::Pois, 3.0));
  EXPECT_NEAR(crps(p, 2.0), oracle::crps_simpson([&](double x) { return p.cdf(x); }, 2.0, -1, 30, 600000), 1e-6);
  const Mixture t(Component(Family::Lnorm, 1.0, 0.4, std::nullopt, 1.0, 0.0, 8.0));
  EXPECT_NEAR(crps(t, 2.5), oracle::crps_simpson([&](double x) { return t.cdf(x); }, 2.5, 0, 8, 200000), 1e-7);
}

TEST(IntervalScore, Examples) {
  EXPECT_DOUBLE_EQ(interval_score(0.2, 1, 3, 2), 2.0);
  EXPECT_DOUBLE_EQ(interval_score(0.2, 1, 3, 4), 12.0);
  EXPECT_DOUBLE_EQ(interval_score(0.5, 0, 0, 0), 0.0);
  EXPECT_THROW(interval_score(0.2, 3, 1, 2), InvalidParameter);
  EXPECT_THROW(interval_score(1.0, 1, 3, 2), InvalidParameter);
}

TEST(IntervalScore, AtLeastWidthWithEqualityIffCovered) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(-5, 5), a(0.01, 0.99);
  for (int i = 0; i < 500; ++i) {
    double l = u(gen), r = u(gen);
    if (l > r) std::swap(l, r);
    const double x = u(gen), al = a(gen);
    const double s = interval_score(al, l, r, x);
    EXPECT_GE(s, r - l);
    EXPECT_EQ(s == r - l, l <= x && x <= r);
  }
}

TEST(Wis, Examples) {
  const IntervalSet f(2, {{0.2, 1, 3}});
  EXPECT_NEAR(wis(f, 2), 0.2 / 1.5, 1e-12);
  EXPECT_NEAR(wis(f, 2), 0.13333, 1e-5);
  EXPECT_NEAR(wis(f, 4), 1.46667, 1e-5);
  EXPECT_THROW(wis(IntervalSet(0, {}), 0), InvalidParameter);
}

TEST(Wis, ApproximatesCrpsForStandardNormal) {
  const auto levels = hub_levels();
  ASSERT_EQ(levels.size(), 23u);
  const auto set = IntervalSet::from_quantiles(quantiles_of(Mixture(Component::norm(0, 1)), levels));
  EXPECT_EQ(set.size(), 11u);
  EXPECT_NEAR(wis(set, 0), 0.2336950, 0.1 * 0.2336950);
}

TEST(Wis, InvariantUnderIntervalReordering) {
  std::vector<Interval> iv{{0.2, 1, 3}, {0.5, 1.5, 2.5}, {0.9, 1.9, 2.1}};
  const double a = wis(IntervalSet(2, iv), 2.7);
  std::reverse(iv.begin(), iv.end());
  EXPECT_DOUBLE_EQ(wis(IntervalSet(2, iv), 2.7), a);
  std::swap(iv[0], iv[1]);
  EXPECT_NEAR(wis(IntervalSet(2, iv), 2.7), a, 1e-15);
}

TEST(IntervalSet, FromQuantilesNeedsMedianAndPartners) {
  EXPECT_THROW(IntervalSet::from_quantiles(QuantileForecast({0.1, 0.9}, {1, 2})), InvalidParameter);
  EXPECT_THROW(IntervalSet::from_quantiles(QuantileForecast({0.1, 0.5, 0.8}, {1, 2, 3})), InvalidParameter);
  const auto s = IntervalSet::from_quantiles(QuantileForecast({0.1, 0.5, 0.9}, {1, 2, 3}));
  ASSERT_EQ(s.size(), 1u);
  EXPECT_DOUBLE_EQ(s.intervals()[0].alpha, 0.2);
  EXPECT_THROW(IntervalSet(0, {{0.2, 1, 2}, {0.2, 0, 3}}), InvalidParameter);
}

TEST(Ks, Examples) {
  const Mixture n(Component::norm(0, 1));
  for (int size : {1, 4, 25}) {
    std::vector<double> x;
    for (int i = 1; i <= size; ++i) x.push_back(n.quantile((i - 0.5) / size));
    EXPECT_NEAR(ks_stat(SampleForecast(x), n), 0.5 / size, 1e-9);
  }
  // Step at 0 against the draw [0]: both sides of the jump coincide.
  EXPECT_EQ(ks_stat(SampleForecast({0}), [](double x) { return x >= 0 ? 1.0 : 0.0; }), 0.0);
  const SampleForecast s({3, 1, 2, 2, 7});
  EXPECT_EQ(ks_stat(s, [&](double x) { return s.ecdf(x); }), 0.0);
}

TEST(Ks, MatchesDirectEnumeration) {
  std::mt19937_64 gen(8);
  std::normal_distribution<double> nd(0.3, 1.2);
  std::vector<double> x(60);
  for (auto& v : x) v = nd(gen);
  const Mixture n(Component::norm(0, 1));
  auto y = x;
  std::sort(y.begin(), y.end());
  double d = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double f = oracle::norm_cdf(y[i], 0, 1);
    d = std::max({d, std::abs(f - (i + 1.0) / 60), std::abs(f - i / 60.0)});
  }
  EXPECT_NEAR(ks_stat(SampleForecast(x), n), d, 1e-14);
}

TEST(ScoringProperty, OrderingOnWorkedExample) {
  EXPECT_LT(log_score(mdist1(), 3), log_score(mdist2(), 3));
  EXPECT_LT(crps(mdist2(), 3), crps(mdist1(), 3));
}

TEST(ScoringProperty, TranslationEquivariance) {
  const double c = 3.75;
  const Mixture m({Component::norm(0.5, 1, 0.4), Component(Family::Logis, 2, 0.7, std::nullopt, 0.6)});
  const Mixture s({Component::norm(0.5 + c, 1, 0.4), Component(Family::Logis, 2 + c, 0.7, std::nullopt, 0.6)});
  for (double x : {-1.0, 0.9, 2.4}) {
    EXPECT_NEAR(log_score(m, x), log_score(s, x + c), 1e-9);
    EXPECT_NEAR(crps(m, x), crps(s, x + c), 1e-9);
    const auto lv = hub_levels();
    EXPECT_NEAR(wis(IntervalSet::from_quantiles(quantiles_of(m, lv)), x),
                wis(IntervalSet::from_quantiles(quantiles_of(s, lv)), x + c), 1e-9);
  }
}

TEST(Crps, PointMass) {
  const Mixture d(Component(Family::Dirac, 2.0));
  EXPECT_NEAR(crps(d, 2.0), 0.0, 1e-12);
  EXPECT_NEAR(crps(d, 3.5), 1.5, 1e-10);
  EXPECT_NEAR(crps(d, -1.0), 3.0, 1e-10);
}
