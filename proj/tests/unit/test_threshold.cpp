#include "vidret/threshold.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "../oracles.hpp"
#include "vidret/random.hpp"

using namespace vidret;
using namespace vidret::threshold;

namespace {

ScoreSeries mixture_sample(std::uint64_t seed, oracle::Gaussian a, oracle::Gaussian b, int n = 5000) {
    Rng rng(seed);
    return {oracle::sample_mixture(rng, a, b, n), "synthetic"};
}

ScoreSeries normal_sample(std::uint64_t seed, double mean, double sigma, int n = 5000) {
    Rng rng(seed);
    ScoreSeries s;
    for (int i = 0; i < n; ++i) s.values.push_back(rng.normal(mean, sigma));
    return s;
}

MixtureModel model(double w1, double m1, double s1, double w2, double m2, double s2) {
    MixtureModel m;
    m.components[0] = {w1, m1, s1};
    m.components[1] = {w2, m2, s2};
    return m;
}

double trapezoid(const DensityCurve& c) {
    double s = 0.0;
    for (std::size_t i = 1; i < c.xs.size(); ++i) s += 0.5 * (c.ys[i] + c.ys[i - 1]) * (c.xs[i] - c.xs[i - 1]);
    return s;
}

std::size_t argmax_near(const DensityCurve& c, double lo, double hi) {
    std::size_t best = 0;
    double best_y = -1.0;
    for (std::size_t i = 0; i < c.xs.size(); ++i) {
        if (c.xs[i] >= lo && c.xs[i] <= hi && c.ys[i] > best_y) {
            best_y = c.ys[i];
            best = i;
        }
    }
    return best;
}

} // namespace

TEST(KdeDensity, SingleKernelPeakValue) {
    const auto curve = kde_density({{0.5}, ""}, {.bandwidth = 0.1});
    ASSERT_EQ(curve.xs.size(), 512u);
    const std::size_t peak = argmax_near(curve, -1.0, 2.0);
    EXPECT_NEAR(curve.xs[peak], 0.5, 1e-3);
    EXPECT_NEAR(curve.ys[peak], 1.0 / (0.1 * std::sqrt(2.0 * M_PI)), 1e-3);
    EXPECT_NEAR(curve.xs.front(), 0.2, 1e-12);
    EXPECT_NEAR(curve.xs.back(), 0.8, 1e-12);
}

TEST(KdeDensity, BimodalPeaksNearGeneratingMeans) {
    const auto s = mixture_sample(11, {0.5, 0.1, 0.05}, {0.5, 0.9, 0.05});
    const auto curve = kde_density(s);
    EXPECT_NEAR(curve.xs[argmax_near(curve, -1.0, 0.5)], 0.1, 0.03);
    EXPECT_NEAR(curve.xs[argmax_near(curve, 0.5, 2.0)], 0.9, 0.03);
    EXPECT_NEAR(trapezoid(curve), 1.0, 0.05);
    for (std::size_t i = 1; i < curve.xs.size(); ++i) EXPECT_GT(curve.xs[i], curve.xs[i - 1]);
    for (double y : curve.ys) EXPECT_GE(y, 0.0);
}

TEST(KdeDensity, SilvermanBandwidthMatchesFormula) {
    const auto s = normal_sample(3, 0.0, 1.0, 200);
    std::vector<double> v = s.values;
    std::sort(v.begin(), v.end());
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= v.size();
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / (v.size() - 1));
    auto q = [&](double p) {
        const double pos = p * (v.size() - 1);
        const auto i = static_cast<std::size_t>(pos);
        return v[i] + (pos - i) * (v[i + 1] - v[i]);
    };
    const double expected = 0.9 * std::min(sd, (q(0.75) - q(0.25)) / 1.34) * std::pow(200.0, -0.2);
    EXPECT_NEAR(kde_density(s).bandwidth, expected, 1e-12);
}

TEST(KdeDensity, ZeroSpreadIsDegenerate) {
    try {
        kde_density({{0.2, 0.2, 0.2}, ""});
        FAIL() << "expected DegenerateInput";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DegenerateInput);
    }
}

TEST(KdeDensity, RejectsBadConfig) {
    EXPECT_THROW(kde_density({{0.1, 0.2}, ""}, {.bandwidth = -1.0}), Error);
    EXPECT_THROW(kde_density({{0.1, 0.2}, ""}, {.bandwidth = 0.1, .grid_points = 8}), Error);
    EXPECT_THROW(kde_density({{}, ""}), Error);
    EXPECT_THROW(kde_density({{0.1, NAN}, ""}, {.bandwidth = 0.1}), Error);
}

TEST(FindModes, BimodalSample) {
    const auto m = find_modes(kde_density(mixture_sample(11, {0.5, 0.1, 0.05}, {0.5, 0.9, 0.05})));
    ASSERT_TRUE(m.found);
    EXPECT_NEAR(m.m1, 0.1, 0.03);
    EXPECT_NEAR(m.m2, 0.9, 0.03);
    EXPECT_GT(m.valley, 0.1);
    EXPECT_LT(m.valley, 0.9);
    EXPECT_LT(m.m1, m.valley);
    EXPECT_LT(m.valley, m.m2);
}

TEST(FindModes, UnimodalSamplesReportNotFound) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        EXPECT_FALSE(find_modes(kde_density(normal_sample(seed, 0.5, 0.1))).found) << "seed " << seed;
    }
}

TEST(FindModes, SymmetricCurveValleyOnMirrorAxis) {
    DensityCurve c;
    const int n = 101;
    for (int i = 0; i < n; ++i) {
        const double x = i / 100.0;
        c.xs.push_back(x);
        c.ys.push_back(std::exp(-std::pow((x - 0.25) / 0.08, 2)) + std::exp(-std::pow((x - 0.75) / 0.08, 2)));
    }
    const auto m = find_modes(c);
    ASSERT_TRUE(m.found);
    EXPECT_DOUBLE_EQ(m.m1, 0.25);
    EXPECT_DOUBLE_EQ(m.m2, 0.75);
    EXPECT_DOUBLE_EQ(m.valley, 0.5);
}

TEST(FindModes, MonotoneCurveHasNoModes) {
    DensityCurve c;
    for (int i = 0; i < 20; ++i) {
        c.xs.push_back(i);
        c.ys.push_back(20 - i);
    }
    EXPECT_FALSE(find_modes(c).found);
}

TEST(EmFit, RecoversGeneratingMeans) {
    const auto s = mixture_sample(5, {0.5, 0.0, 1.0}, {0.5, 10.0, 1.0});
    const auto fit = em_fit(s, model(0.5, 0.0, 1.0, 0.5, 10.0, 1.0));
    EXPECT_NEAR(fit.model.components[0].mean, 0.0, 0.1);
    EXPECT_NEAR(fit.model.components[1].mean, 10.0, 0.1);
    EXPECT_NEAR(fit.model.components[0].weight + fit.model.components[1].weight, 1.0, 1e-9);
    for (std::size_t i = 1; i < fit.log_likelihood_trace.size(); ++i) {
        EXPECT_GE(fit.log_likelihood_trace[i], fit.log_likelihood_trace[i - 1] - 1e-9);
    }
}

TEST(EmFit, IdenticalInitDoesNotProduceNaN) {
    const auto s = mixture_sample(6, {0.5, 0.2, 0.05}, {0.5, 0.8, 0.05});
    const auto fit = em_fit(s, model(0.5, 0.5, 0.3, 0.5, 0.5, 0.3));
    for (const auto& c : fit.model.components) {
        EXPECT_TRUE(std::isfinite(c.mean));
        EXPECT_TRUE(std::isfinite(c.sigma));
        EXPECT_GE(c.sigma, std::sqrt(1e-8));
        EXPECT_GT(c.weight, 0.0);
        EXPECT_LT(c.weight, 1.0);
    }
    for (double ll : fit.log_likelihood_trace) EXPECT_TRUE(std::isfinite(ll));
}

TEST(EmFit, CollapsedComponentRespectsVarianceFloor) {
    ScoreSeries s{{1.0, 1.0, 1.0, 1.0, 5.0, 6.0, 7.0, 5.5}, ""};
    const auto fit = em_fit(s, model(0.5, 1.0, 0.5, 0.5, 6.0, 1.0));
    EXPECT_NEAR(fit.model.components[0].sigma, 1e-4, 1e-12);
    EXPECT_TRUE(std::isfinite(fit.log_likelihood_trace.back()));
}

TEST(EmFit, IterationCap) {
    const auto s = mixture_sample(7, {0.5, 0.0, 1.0}, {0.5, 3.0, 1.0});
    const auto fit = em_fit(s, model(0.5, -1.0, 2.0, 0.5, 4.0, 2.0), {.max_iterations = 1});
    EXPECT_EQ(fit.iterations, 1);
    EXPECT_EQ(fit.log_likelihood_trace.size(), 2u);
}

TEST(EmFit, TooFewScores) {
    try {
        em_fit({{0.1, 0.2, 0.9}, ""}, model(0.5, 0.1, 0.1, 0.5, 0.9, 0.1));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DegenerateInput);
    }
}

TEST(GaussianIntersections, SymmetricCase) {
    const auto roots = gaussian_intersections(model(0.5, 0.0, 0.1, 0.5, 1.0, 0.1));
    ASSERT_EQ(roots.size(), 1u);
    EXPECT_NEAR(roots[0], 0.5, 1e-12);
}

TEST(GaussianIntersections, EqualVarianceClosedForm) {
    const auto roots = gaussian_intersections(model(0.7, 0.0, 0.1, 0.3, 1.0, 0.1));
    ASSERT_EQ(roots.size(), 1u);
    const double expected = 0.5 + 0.01 * std::log(0.7 / 0.3) / 1.0;
    EXPECT_NEAR(roots[0], expected, 1e-12);
    EXPECT_NEAR(roots[0], 0.508473, 1e-6);
}

TEST(GaussianIntersections, UnequalVarianceMatchesScan) {
    const auto m = model(0.5, 0.0, 0.05, 0.5, 1.0, 0.2);
    const auto roots = gaussian_intersections(m);
    const auto scan = oracle::intersection_scan({0.5, 0.0, 0.05}, {0.5, 1.0, 0.2});
    ASSERT_EQ(roots.size(), scan.size());
    for (std::size_t i = 0; i < roots.size(); ++i) EXPECT_NEAR(roots[i], scan[i], 1e-5);
}

TEST(GaussianIntersections, RandomModelsMatchScanAndResidual) {
    Rng rng(2024);
    for (int trial = 0; trial < 100; ++trial) {
        const double w = rng.uniform(0.05, 0.95);
        oracle::Gaussian a{w, rng.uniform(-1.0, 1.0), rng.uniform(0.02, 0.6)};
        oracle::Gaussian b{1.0 - w, rng.uniform(-1.0, 1.0), rng.uniform(0.02, 0.6)};
        const auto m = model(a.weight, a.mean, a.sigma, b.weight, b.mean, b.sigma);
        const auto roots = gaussian_intersections(m);
        const auto scan = oracle::intersection_scan(a, b);
        ASSERT_EQ(roots.size(), scan.size()) << "trial " << trial;
        for (std::size_t i = 0; i < roots.size(); ++i) {
            EXPECT_NEAR(roots[i], scan[i], 1e-5);
            const double pa = oracle::pdf(a, roots[i]);
            const double pb = oracle::pdf(b, roots[i]);
            EXPECT_LE(std::abs(pa - pb), 1e-9 * std::max(pa, pb) + 1e-300) << "trial " << trial;
        }
    }
}

TEST(GaussianIntersections, NoRootInsideInterval) {
    // A narrow, dominant component swallows the other's mean: the densities
    // cross only outside [mu1, mu2].
    const auto m = model(0.99, 0.0, 1.0, 0.01, 0.5, 1.0);
    EXPECT_TRUE(gaussian_intersections(m).empty());
}

TEST(ExpectedError, SymmetricAtMidpoint) {
    const auto m = model(0.5, 0.0, 0.1, 0.5, 1.0, 0.1);
    // Phi(-5) = 2.866515718791939e-7
    EXPECT_NEAR(expected_error(m, 0.5), 2.0 * 0.5 * 2.866515718791939e-7, 1e-18);
}

TEST(ExpectedError, Limits) {
    const auto m = model(0.3, 0.0, 0.1, 0.7, 1.0, 0.2);
    EXPECT_NEAR(expected_error(m, -1e6), 0.3, 1e-15);
    EXPECT_NEAR(expected_error(m, 1e6), 0.7, 1e-15);
    EXPECT_NEAR(expected_error(m, 0.0), 0.3 * 0.5 + 0.7 * oracle::cdf(-1.0 / 0.2), 1e-15);
    // Component order in the model does not matter.
    const auto swapped = model(0.7, 1.0, 0.2, 0.3, 0.0, 0.1);
    EXPECT_DOUBLE_EQ(expected_error(swapped, 0.4), expected_error(m, 0.4));
}

TEST(SolveThreshold, UnequalMixtureMatchesBayesOracle) {
    const oracle::Gaussian a{0.7, 0.1, 0.05}, b{0.3, 0.9, 0.08};
    const auto r = solve_threshold(mixture_sample(42, a, b));
    EXPECT_FALSE(r.fallback_used);
    EXPECT_NEAR(r.threshold, oracle::bayes_threshold_scan(a, b), 0.02);
    EXPECT_LE(r.mixture.components[0].mean, r.threshold);
    EXPECT_GE(r.mixture.components[1].mean, r.threshold);
    EXPECT_LE(r.iterations, 500);
}

TEST(SolveThreshold, SymmetricMixture) {
    const auto r = solve_threshold(mixture_sample(43, {0.5, 0.2, 0.05}, {0.5, 0.8, 0.05}));
    EXPECT_NEAR(r.threshold, 0.5, 0.02);
}

TEST(SolveThreshold, UnimodalFallback) {
    const auto s = normal_sample(44, 0.5, 0.1);
    const auto r = solve_threshold(s);
    EXPECT_TRUE(r.fallback_used);
    EXPECT_TRUE(std::isfinite(r.threshold));
    const auto [lo, hi] = std::minmax_element(s.values.begin(), s.values.end());
    EXPECT_GE(r.threshold, *lo);
    EXPECT_LE(r.threshold, *hi);
}

TEST(SolveThreshold, ShiftScaleEquivariance) {
    const auto base = mixture_sample(45, {0.6, 0.15, 0.05}, {0.4, 0.7, 0.07});
    const double t0 = solve_threshold(base).threshold;
    for (auto [a, c] : {std::pair{2.0, 0.0}, {0.5, 3.0}, {10.0, -4.0}, {1.0, 100.0}}) {
        ScoreSeries s = base;
        for (auto& v : s.values) v = a * v + c;
        EXPECT_NEAR(solve_threshold(s).threshold, a * t0 + c, 1e-3) << "a=" << a << " c=" << c;
    }
}

TEST(SolveThreshold, Deterministic) {
    const auto s = mixture_sample(46, {0.5, 0.1, 0.05}, {0.5, 0.6, 0.1});
    const auto a = solve_threshold(s);
    const auto b = solve_threshold(s);
    EXPECT_EQ(std::bit_cast<std::uint64_t>(a.threshold), std::bit_cast<std::uint64_t>(b.threshold));
    EXPECT_EQ(a.iterations, b.iterations);
    EXPECT_EQ(std::bit_cast<std::uint64_t>(a.log_likelihood), std::bit_cast<std::uint64_t>(b.log_likelihood));
}

TEST(SolveThreshold, TooFewScores) {
    EXPECT_THROW(solve_threshold({{0.1, 0.9, 0.5}, ""}), Error);
}

TEST(ScoreFile, ParsesBothRecordForms) {
    const auto f = parse_scores("# header\n0.1\n0.2\n\n10,0.9\n 11 , 0.8 \n", "mem");
    ASSERT_EQ(f.series.values.size(), 4u);
    EXPECT_DOUBLE_EQ(f.series.values[2], 0.9);
    EXPECT_EQ(f.frames[0], 0u);
    EXPECT_EQ(f.frames[1], 1u);
    EXPECT_EQ(f.frames[2], 10u);
    EXPECT_EQ(f.frames[3], 11u);
}

TEST(ScoreFile, BadLineNamesLine) {
    try {
        parse_scores("0.1\nabc\n", "mem");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::FormatError);
        EXPECT_NE(std::string(e.what()).find("mem:2"), std::string::npos);
    }
}
