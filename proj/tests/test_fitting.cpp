#include <gtest/gtest.h>

#include <random>

#include "mixfc/mixfc.hpp"
#include "oracles.hpp"

using namespace mixfc;

namespace {

std::vector<double> equal_edges(double a, double b, int k) {
  std::vector<double> e;
  for (int i = 0; i <= k; ++i) e.push_back(a + (b - a) * i / k);
  return e;
}

std::vector<double> hub_levels() {
  std::vector<double> l{0.01, 0.025};
  for (int i = 1; i <= 19; ++i) l.push_back(std::round(50.0 * i) / 1000.0);
  l.push_back(0.975);
  l.push_back(0.99);
  return l;
}

}  // namespace

TEST(FitParams, RoundTripAndConstraints) {
  const std::vector<double> means{-1.0, 0.5, 4.0};
  const std::vector<double> weights{0.2, 0.3, 0.5};
  const auto p = FitParams::encode(means, 1.7, weights);
  EXPECT_EQ(p.to_vector().size(), 6u);
  const auto q = FitParams::from_vector(p.to_vector());
  for (int c = 0; c < 3; ++c) {
    EXPECT_NEAR(q.means()[c], means[c], 1e-12);
    EXPECT_NEAR(q.weights()[c], weights[c], 1e-12);
  }
  EXPECT_NEAR(q.sigma(), 1.7, 1e-12);

  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u(-30, 30);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<double> g(2 * (1 + rep % 5));
    for (auto& x : g) x = u(gen);
    const auto d = FitParams::from_vector(g);
    const auto m = d.means();
    const auto w = d.weights();
    for (std::size_t c = 1; c < m.size(); ++c) EXPECT_GE(m[c], m[c - 1]);
    double s = 0.0;
    for (double x : w) {
      EXPECT_GE(x, 0.0);
      s += x;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
    EXPECT_GT(d.sigma(), 0.0);
    EXPECT_EQ(FitParams::from_vector(d.to_vector()).to_vector(), d.to_vector());
  }
  EXPECT_THROW(FitParams::encode(std::vector<double>{1, 1}, 1, std::vector<double>{0.5, 0.5}), InvalidParameter);
  EXPECT_THROW(FitParams::from_vector(std::vector<double>{1, 2, 3}), InvalidParameter);
}

TEST(Kld, IdentityTwoBinExpansionAndSentinel) {
  const Mixture t(Component(Family::Norm, 4, 1.5, std::nullopt, 1.0, 0.0, 10.0));
  const auto f = discretize(t, equal_edges(0, 10, 40));
  EXPECT_NEAR(kld(f, t), 0.0, 1e-10);

  const BinForecast half({0, 1, 2}, {0.5, 0.5});
  const double eps = 0.01;
  const Mixture tilt({Component(Family::Unif, 0, 1, std::nullopt, 0.5 + eps), Component(Family::Unif, 1, 2, std::nullopt, 0.5 - eps)});
  const double direct = 0.5 * std::log(0.5 / (0.5 + eps)) + 0.5 * std::log(0.5 / (0.5 - eps));
  EXPECT_NEAR(kld(half, tilt), direct, 1e-15);
  EXPECT_NEAR(kld(half, tilt), 2.000e-4, 5e-6);

  EXPECT_EQ(kld(half, Mixture(Component(Family::Unif, 0, 1))), std::numeric_limits<double>::infinity());
}

TEST(Kld, NonnegativeAndMatchesDirectSummation) {
  std::mt19937_64 gen(2);
  std::uniform_real_distribution<double> u(0, 1);
  const auto edges = equal_edges(-5, 5, 25);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> p(25);
    double s = 0;
    for (auto& x : p) s += x = u(gen) < 0.2 ? 0.0 : u(gen);
    for (auto& x : p) x /= s;
    const BinForecast f(edges, p);
    const double m1 = -2 + 4 * u(gen), m2 = m1 + 0.1 + 3 * u(gen), sd = 0.5 + 2 * u(gen), w = 0.1 + 0.8 * u(gen);
    const Mixture m({Component::norm(m1, sd, w), Component::norm(m2, sd, 1 - w)});
    const double d = kld(f, m);
    EXPECT_GE(d, 0.0);
    EXPECT_NEAR(d, oracle::kld_normal_mixture(edges, p, {m1, m2}, {w, 1 - w}, sd), 1e-9);
  }
}

TEST(FitBins, BimodalSelfConsistency) {
  const Mixture truth({Component::norm(3, 0.8, 0.5), Component::norm(7, 0.8, 0.5)});
  const auto f = discretize(truth.truncated_to(0.0, 10.0), equal_edges(0, 10, 50));
  FitConfig cfg;
  cfg.components = 2;
  const auto r = fit_bins(f, cfg);
  const auto m = r.params.means();
  const auto w = r.params.weights();
  EXPECT_NEAR(m[0], 3, 0.05);
  EXPECT_NEAR(m[1], 7, 0.05);
  EXPECT_NEAR(r.params.sigma(), 0.8, 0.05);
  EXPECT_NEAR(w[0], 0.5, 0.02);
  EXPECT_NEAR(w[1], 0.5, 0.02);
  EXPECT_TRUE(r.converged);
}

TEST(FitBins, SingleNormalMatchesGridOracle) {
  const Mixture truth(Component(Family::Norm, 5, 1, std::nullopt, 1.0, 0.0, 10.0));
  const auto edges = equal_edges(0, 10, 40);
  const auto f = discretize(truth, edges);
  FitConfig cfg;
  const auto r = fit_bins(f, cfg);
  const std::vector<double> p(f.probs().begin(), f.probs().end());
  const auto best = oracle::grid_min(
      [&](double mu, double sd) { return oracle::kld_normal_mixture(edges, p, {mu}, {1.0}, sd); }, 4, 6, 0.5, 1.5);
  EXPECT_NEAR(r.params.mu1, 5, 0.02);
  EXPECT_NEAR(r.params.sigma(), 1, 0.02);
  EXPECT_NEAR(r.params.mu1, best.x, 0.02);
  EXPECT_NEAR(r.params.sigma(), best.y, 0.02);
  EXPECT_LE(r.objective(), best.value + 1e-6);
}

TEST(FitBins, NestedInitDominates) {
  const Mixture truth({Component(Family::Norm, 4, 1, std::nullopt, 0.6, 0.0, 10.0),
                       Component(Family::Gammad, 0.6, 10, std::nullopt, 0.4, 0.0, 10.0)});
  const auto f = discretize(truth, equal_edges(0, 10, 40));
  FitConfig c1;
  const auto r1 = fit_bins(f, c1);
  FitConfig c3;
  c3.components = 3;
  const auto init = nested_params(f, nested_params(f, r1.params));
  EXPECT_NEAR(detail::BinObjective(f)(init), r1.objective(), 1e-9);
  const auto r3 = fit_bins(f, c3, init);
  EXPECT_LE(r3.objective(), r1.objective() + 1e-9);

  const auto chain = fit_nested(f, 5);
  for (std::size_t c = 1; c < chain.size(); ++c) EXPECT_LE(chain[c].objective(), chain[c - 1].objective() + 1e-9);
}

TEST(FitBins, TraceNonincreasingAndDeterministic) {
  const Mixture truth({Component(Family::Lnorm, 1, 0.4, std::nullopt, 0.7, 0.0, 8.2),
                       Component(Family::Norm, 6, 0.5, std::nullopt, 0.3, 0.0, 8.2)});
  const auto f = discretize(truth, equal_edges(0, 8.2, 41));
  FitConfig cfg;
  cfg.components = 3;
  const auto a = fit_bins(f, cfg);
  const auto b = fit_bins(f, cfg);
  for (std::size_t i = 1; i < a.trace.size(); ++i) EXPECT_LE(a.trace[i], a.trace[i - 1]);
  EXPECT_EQ(a.trace, b.trace);
  EXPECT_EQ(a.params.to_vector(), b.params.to_vector());
  EXPECT_EQ(a.fitted, b.fitted);
  EXPECT_EQ(static_cast<int>(a.trace.size()), a.iterations + 1);
}

TEST(FitBins, PreconditionsAndBadInit) {
  const BinForecast two({0, 1, 2, 3}, {0.5, 0.5, 0.0});
  FitConfig cfg;
  cfg.components = 2;
  EXPECT_THROW(fit_bins(two, cfg), InvalidParameter);
  cfg.components = 1;
  EXPECT_NO_THROW(fit_bins(two, cfg));
  // A start 1000 sd away gives every bin zero mass.
  const auto far = FitParams::encode(std::vector<double>{1e4}, 1.0, std::vector<double>{1.0});
  EXPECT_THROW(fit_bins(two, cfg, far), DegenerateInput);
  cfg.rel_tol = 0;
  EXPECT_THROW(fit_bins(two, cfg), InvalidParameter);
}

TEST(FitBins, IterationCapReportsNotConverged) {
  const Mixture truth({Component(Family::Norm, 2, 0.5, std::nullopt, 0.5, 0.0, 10.0),
                       Component(Family::Norm, 7, 1.5, std::nullopt, 0.5, 0.0, 10.0)});
  const auto f = discretize(truth, equal_edges(0, 10, 50));
  FitConfig cfg;
  cfg.components = 2;
  cfg.max_outer_iter = 2;
  cfg.rel_tol = 1e-12;
  const auto r = fit_bins(f, cfg);
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.iterations, 2);
}

TEST(SsQuantiles, Examples) {
  const Mixture m({Component::norm(0, 1, 0.4), Component(Family::Gammad, 1, 3, std::nullopt, 0.6)});
  const auto lv = hub_levels();
  EXPECT_NEAR(ss_quantiles(quantiles_of(m, lv), m), 0.0, 1e-12);

  const Mixture n(Component::norm(0, 1));
  const double v = n.quantile(0.4);
  EXPECT_NEAR(ss_quantiles(QuantileForecast({0.5}, {v}), n), 0.01, 1e-12);

  const QuantileForecast far(lv, std::vector<double>(lv.size(), 100.0));
  EXPECT_LE(ss_quantiles(far, n), static_cast<double>(lv.size()));
}

TEST(FitQuantiles, RecoversNormal) {
  const auto lv = hub_levels();
  const auto q = quantiles_of(Mixture(Component::norm(10, 2)), lv);
  FitConfig cfg;
  const auto r = fit_quantiles(q, cfg);
  EXPECT_LT(r.objective(), 1e-8);
  EXPECT_NEAR(r.params.mu1, 10, 0.01);
  EXPECT_NEAR(r.params.sigma(), 2, 0.01);
  for (std::size_t i = 1; i < r.trace.size(); ++i) EXPECT_LE(r.trace[i], r.trace[i - 1]);
}

TEST(FitQuantiles, BimodalNeedsTwoComponents) {
  const auto lv = hub_levels();
  const auto q = quantiles_of(Mixture({Component::norm(0, 1, 0.5), Component::norm(8, 1, 0.5)}), lv);
  FitConfig c1, c2;
  c2.components = 2;
  const auto r1 = fit_quantiles(q, c1), r2 = fit_quantiles(q, c2);
  EXPECT_LT(r2.objective(), r1.objective());
  EXPECT_GT(r1.objective(), 1e-3);
}

TEST(FitQuantiles, IdentifiabilityFloor) {
  const QuantileForecast q({0.1, 0.3, 0.5, 0.7, 0.9}, {1, 2, 3, 4, 5});
  FitConfig cfg;
  cfg.components = 2;
  EXPECT_NO_THROW(fit_quantiles(q, cfg));
  cfg.components = 3;
  EXPECT_THROW(fit_quantiles(q, cfg), InvalidParameter);
}

TEST(FitQuantiles, LognormalTableBestSingleNormal) {
  const Mixture m(Component(Family::Lnorm, 1.0, 0.4, std::nullopt, 1.0, 0.0, 8.0));
  const std::vector<double> lv{0.01, 0.025, 0.05, 0.95, 0.975, 0.99};
  const auto q = quantiles_of(m, lv);
  FitConfig cfg;
  cfg.rel_tol = 1e-10;
  const auto r = fit_quantiles(q, cfg);
  auto ss = [&](double mu, double sd) {
    double s = 0;
    for (std::size_t i = 0; i < lv.size(); ++i) {
      const double e = lv[i] - oracle::norm_cdf(q.values()[i], mu, sd);
      s += e * e;
    }
    return s;
  };
  const auto best = oracle::grid_min(ss, 1, 5, 0.5, 3);
  EXPECT_NEAR(r.objective(), best.value, 1e-7);
  EXPECT_NEAR(r.params.mu1, best.x, 0.01);
  EXPECT_GT(r.objective(), 0.0);
}

TEST(FitSampleEm, BimodalRecovery) {
  const Mixture truth({Component::norm(0, 1, 0.5), Component::norm(6, 1, 0.5)});
  const SampleForecast s(truth.sample(700, 17));
  const auto r = fit_sample_em(s, 2);
  const auto& c = r.fitted.components();
  std::vector<std::pair<double, double>> mw{{c[0].param1(), c[0].weight()}, {c[1].param1(), c[1].weight()}};
  std::sort(mw.begin(), mw.end());
  EXPECT_NEAR(mw[0].first, 0, 0.2);
  EXPECT_NEAR(mw[1].first, 6, 0.2);
  EXPECT_NEAR(mw[0].second, 0.5, 0.1);
  for (std::size_t i = 1; i < r.trace.size(); ++i) EXPECT_LE(r.trace[i], r.trace[i - 1] + 1e-9 * std::abs(r.trace[i - 1]));
}

TEST(FitSampleEm, SingleComponentIsClosedFormMle) {
  std::mt19937_64 gen(9);
  std::gamma_distribution<double> g(2.0, 1.5);
  std::vector<double> x(300);
  for (auto& v : x) v = g(gen);
  const auto r = fit_sample_em(SampleForecast(x), 1);
  double mean = 0;
  for (double v : x) mean += v;
  mean /= 300;
  double var = 0;
  for (double v : x) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / 300);
  EXPECT_NEAR(r.fitted[0].param1(), mean, 1e-9);
  EXPECT_NEAR(*r.fitted[0].param2(), sd, 1e-9);
}

TEST(FitSampleEm, Preconditions) {
  std::vector<double> x(20);
  for (int i = 0; i < 20; ++i) x[i] = i;
  EXPECT_THROW(fit_sample_em(SampleForecast(x), 2), InvalidParameter);
  EXPECT_NO_THROW(fit_sample_em(SampleForecast(x), 1));
  EXPECT_THROW(fit_sample_em(SampleForecast(std::vector<double>(50, 3.0)), 1), DegenerateInput);
}

TEST(FitSampleEm, BinResampledDataImprovesWithComponents) {
  const Mixture truth({Component(Family::Lnorm, 1, 0.4, std::nullopt, 0.6, 0.0, 8.2),
                       Component(Family::Norm, 6, 0.6, std::nullopt, 0.4, 0.0, 8.2)});
  const auto f = discretize(truth, equal_edges(0, 8.2, 41));
  const auto s = bin_sample(f, 700, 3);
  std::vector<double> ks, nll;
  std::optional<Mixture> prev;
  for (int c = 1; c <= 5; ++c) {
    EmOptions opt;
    if (prev) opt.init = split_widest(*prev);
    const auto r = fit_sample_em(s, c, opt);
    ks.push_back(ks_stat(s, r.fitted));
    nll.push_back(r.trace.back());
    prev = r.fitted;
  }
  // One normal cannot fit a bimodal sample; two can, to within sampling noise.
  EXPECT_LT(ks[1], 0.5 * ks[0]);
  EXPECT_LT(ks[1], 1.36 / std::sqrt(700.0));
  for (std::size_t c = 1; c < nll.size(); ++c) EXPECT_LE(nll[c], nll[c - 1] + 1e-6 * std::abs(nll[c - 1])) << c;
}

TEST(SplitWidest, HalvesTheWidestComponent) {
  const Mixture m({Component::norm(0, 1, 0.3), Component::norm(5, 2, 0.7)});
  const auto s = split_widest(m);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s[0], m[0]);
  EXPECT_DOUBLE_EQ(s[1].param1(), 4.0);
  EXPECT_DOUBLE_EQ(s[2].param1(), 6.0);
  EXPECT_DOUBLE_EQ(s[1].weight(), 0.35);
  EXPECT_THROW(split_widest(Mixture(Component(Family::Logis, 0, 1))), InvalidParameter);
}

TEST(BinSample, Examples) {
  const auto one = bin_sample(BinForecast({0, 1}, {1.0}), 5, 1);
  for (double x : one.draws()) {
    EXPECT_GE(x, 0.0);
    EXPECT_LT(x, 1.0);
  }
  const auto left = bin_sample(BinForecast({0, 1, 2}, {1.0, 0.0}), 1000, 2);
  for (double x : left.draws()) EXPECT_LT(x, 1.0);

  const BinForecast f({0, 1, 2, 3, 4}, {0.1, 0.2, 0.3, 0.4});
  const std::size_t n = 100000;
  const auto s = bin_sample(f, n, 3);
  std::vector<double> counts(4, 0);
  for (double x : s.draws()) counts[*f.bin_of(x)] += 1;
  for (int i = 0; i < 4; ++i) {
    const double p = f.probs()[i];
    EXPECT_NEAR(counts[i] / n, p, 3 * std::sqrt(p * (1 - p) / n));
  }
  const auto a = bin_sample(f, 50, 9), b = bin_sample(f, 50, 9);
  EXPECT_TRUE(std::equal(a.draws().begin(), a.draws().end(), b.draws().begin()));
}
