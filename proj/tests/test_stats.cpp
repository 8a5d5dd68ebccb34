#include <z2ent/stats.hpp>

#include <gtest/gtest.h>

using namespace z2ent;

namespace {

// Kolmogorov-Smirnov distance between a sample and a CDF
template <class F>
double ks(std::vector<double> v, F cdf) {
    std::sort(v.begin(), v.end());
    double d = 0, n = double(v.size());
    for(std::size_t k = 0; k < v.size(); ++k) d = std::max({d, std::abs(cdf(v[k]) - double(k) / n), std::abs(cdf(v[k]) - double(k + 1) / n)});
    return d;
}

double ks_two(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    return ks(a, [&](double x) { return double(std::upper_bound(b.begin(), b.end(), x) - b.begin()) / double(b.size()); });
}

// bulk of each sampled matrix, pooled as separate sectors
std::map<int, std::vector<double>> sample_sectors(bool unitary, int count, int n, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::map<int, std::vector<double>> m;
    for(int k = 0; k < count; ++k) {
        auto ev = unitary ? sample_gue(n, rng) : sample_goe(n, rng);
        m[k] = std::vector<double>(ev.begin() + n / 4, ev.end() - n / 4);
    }
    return m;
}

} // namespace

TEST(Unfold, EquallySpacedStaysEquallySpaced) {
    std::vector<double> lv;
    for(int k = 0; k < 50; ++k) lv.push_back(3.0 + 0.37 * k);
    auto u = unfold(lv);
    for(double s : spacings(u.unfolded)) EXPECT_NEAR(s, 1.0, 1e-9);
    EXPECT_THROW(unfold({1, 2, 3}), std::invalid_argument);
}

TEST(Unfold, ExponentialDensityHasUnitBulkSpacing) {
    std::vector<double> lv;
    // counting function growing like exp(xi / 2) over three e-folds
    for(int k = 1; k <= 400; ++k) lv.push_back(2 * std::log(20.0 + k) + 0.01 * std::sin(double(k)));
    auto u = unfold(lv, 3);
    EXPECT_TRUE(u.monotone);
    auto s = spacings(u.unfolded);
    double mean = std::accumulate(s.begin() + 40, s.end() - 40, 0.0) / double(s.size() - 80);
    EXPECT_NEAR(mean, 1.0, 0.05);
    for(std::size_t k = 1; k < u.unfolded.size(); ++k) EXPECT_GE(u.unfolded[k], u.unfolded[k - 1]);
}

TEST(Unfold, PoissonLevelsGiveExponentialSpacings) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> U(0, 1);
    std::vector<double> lv(3000);
    for(auto& x : lv) x = U(rng);
    auto s = spacings(unfold(lv).unfolded);
    EXPECT_LT(ks(s, [](double x) { return 1 - std::exp(-x); }), 0.03);
}

TEST(RmtReference, ClosedFormProperties) {
    EXPECT_DOUBLE_EQ(rmt_reference(Ensemble::GUE, Observable::Ratio, 0.0), 0.0);
    EXPECT_DOUBLE_EQ(rmt_reference(Ensemble::Poisson, Observable::Ratio, 0.0), 2.0);
    EXPECT_THROW(rmt_reference(Ensemble::GOE, Observable::Spacing, -0.1), std::invalid_argument);
    for(auto e : {Ensemble::Poisson, Ensemble::GOE, Ensemble::GUE}) {
        double z = 0, h = 1e-3;
        for(int k = 0; k < 30000; ++k) z += h * rmt_reference(e, Observable::Spacing, (k + 0.5) * h);
        EXPECT_NEAR(z, 1.0, 1e-6);
        // the ratio densities integrate to one on [0,1]
        double zr = 0;
        for(int k = 0; k < 10000; ++k) zr += 1e-4 * rmt_reference(e, Observable::Ratio, (k + 0.5) * 1e-4);
        EXPECT_NEAR(zr, 1.0, 1e-6);
    }
    EXPECT_NEAR(rmt_mean_ratio(Ensemble::Poisson), 2 * std::log(2.0) - 1, 1e-9);
    EXPECT_NEAR(rmt_mean_ratio(Ensemble::GOE), 4 - 2 * std::sqrt(3.0), 1e-9);
    EXPECT_NEAR(rmt_mean_ratio(Ensemble::GUE), 2 * std::sqrt(3.0) / std::numbers::pi - 0.5, 1e-9);
}

TEST(GapRatio, ElementaryAndAffineInvariant) {
    EXPECT_EQ(gap_ratios({0, 1, 2}), std::vector<double>{1.0});
    std::vector<double> lv{0.1, 0.5, 0.6, 1.4, 2.0, 2.05, 3.3};
    auto r = gap_ratios(lv);
    std::vector<double> w;
    for(double x : lv) w.push_back(2.5 * x - 7);
    auto rw = gap_ratios(w);
    for(std::size_t k = 0; k < r.size(); ++k) {
        EXPECT_NEAR(r[k], rw[k], 1e-12);
        EXPECT_GE(r[k], 0.0);
        EXPECT_LE(r[k], 1.0);
    }
    auto st = gap_ratio_stats(std::map<int, std::vector<double>>{{0, {1.0, 2.0}}, {1, lv}});
    EXPECT_EQ(st.skipped_sectors, 1);
    EXPECT_EQ(st.pooled.size(), r.size());
}

TEST(GapRatio, RandomMatrixEnsembles) {
    // large-N values: GOE 0.5307, GUE 0.5996
    auto gue = gap_ratio_stats(sample_sectors(true, 60, 200, 1));
    EXPECT_NEAR(gue.mean, 0.5996, 0.01);
    auto goe = gap_ratio_stats(sample_sectors(false, 60, 200, 2));
    EXPECT_NEAR(goe.mean, 0.5307, 0.01);
    // histogram tracks the surmise
    double dev = 0;
    for(std::size_t b = 0; b < gue.hist.density.size(); ++b) {
        double x = 0.5 * (gue.hist.edges[b] + gue.hist.edges[b + 1]);
        dev = std::max(dev, std::abs(gue.hist.density[b] - rmt_reference(Ensemble::GUE, Observable::Ratio, x)));
    }
    EXPECT_LT(dev, 0.15);
}

TEST(GapRatio, UnfoldedSpacingsInvariantUnderWarps) {
    auto base = sample_sectors(true, 30, 200, 9);
    std::map<int, std::vector<double>> warp_exp, warp_cubic;
    for(auto& [k, lv] : base)
        for(double x : lv) {
            warp_exp[k].push_back(std::exp(x / 40));
            warp_cubic[k].push_back(x + x * x * x / 3000);
        }
    auto s0 = unfolded_spacings(base), s1 = unfolded_spacings(warp_exp), s2 = unfolded_spacings(warp_cubic);
    EXPECT_LT(ks_two(s0, s1), 0.03);
    EXPECT_LT(ks_two(s0, s2), 0.03);
    EXPECT_LT(ks(s0, [](double s) {
                  double z = 0, h = s / 400;
                  for(int k = 0; k < 400; ++k) z += h * rmt_reference(Ensemble::GUE, Observable::Spacing, (k + 0.5) * h);
                  return z;
              }),
              0.05);
}

TEST(Bhattacharyya, Properties) {
    std::vector<double> p{0.5, 0.3, 0.2}, q{0.1, 0.6, 0.2, 0.1};
    EXPECT_NEAR(bhattacharyya(p, p), 0.0, 1e-15);
    EXPECT_NEAR(bhattacharyya(p, {0.2, 0.5, 0.3}), 0.0, 1e-15);
    EXPECT_NEAR(bhattacharyya(p, q), bhattacharyya(q, p), 1e-15);
    EXPECT_GT(bhattacharyya(p, q), 0.0);
    EXPECT_THROW(bhattacharyya({0.5, 0.4}, p), std::invalid_argument);
    // pairing against a flat distribution over many states
    std::vector<double> flat(1000, 1e-3);
    EXPECT_NEAR(bhattacharyya({1.0}, flat), -std::log(std::sqrt(1e-3)), 1e-12);
}

TEST(ScalingFit, ExactSelfSimilarDataRecovered) {
    const double alpha = 0.8, beta = 0.1, t0 = 1.8;
    auto g = [](double x) { return std::pow(x, -2.0) * std::exp(-x / 900.0); };
    std::vector<SchmidtSnapshot> data;
    std::vector<double> tests{8, 12, 16, 24, 30, 40, 50};
    auto times = tests;
    times.push_back(6);
    for(double t : times) {
        SchmidtSnapshot s;
        s.t = t;
        double tau = t - t0;
        for(int n = 1; n <= 3000; ++n) s.probs.push_back(std::pow(tau, -alpha) * g(std::pow(tau, beta) * n));
        data.push_back(s);
    }
    auto f = scaling_fit(data, 6, tests, 130, 1300);
    EXPECT_LT(f.chi2_min, 1e-8);
    EXPECT_NEAR(f.alpha, alpha, 1e-9);
    EXPECT_NEAR(f.beta, beta, 1e-9);
    EXPECT_NEAR(f.t0, t0, 1e-9);
    EXPECT_NEAR(f.alpha_fit.mean, alpha, f.grids.alpha.step);
    EXPECT_NEAR(f.beta_fit.mean, beta, f.grids.beta.step);
    EXPECT_NEAR(f.t0_fit.mean, t0, f.grids.t0.step);
    EXPECT_FALSE(f.window_clipped);
    EXPECT_FALSE(f.extrapolated);
    double za = std::accumulate(f.w_alpha.begin(), f.w_alpha.end(), 0.0);
    EXPECT_NEAR(za, 1.0, 1e-12);
}

TEST(ScalingFit, WindowClippedAndBadInput) {
    std::vector<SchmidtSnapshot> data;
    for(double t : {6.0, 8.0, 12.0}) {
        SchmidtSnapshot s;
        s.t = t;
        for(int n = 1; n <= 200; ++n) s.probs.push_back(std::pow(double(n), -1.5) / (t - 1));
        data.push_back(s);
    }
    auto f = scaling_fit(data, 6, {8, 12}, 20, 500);
    EXPECT_TRUE(f.window_clipped);
    EXPECT_THROW(scaling_fit(data, 6, {9}, 20, 100), std::invalid_argument);
    ScalingGrids bad;
    bad.alpha = {0.0, 0.02, 0.02};
    EXPECT_THROW(scaling_fit(data, 6, {8}, 20, 100, bad), std::invalid_argument);
    EXPECT_THROW(scaling_fit(data, 6, {8}, 300, 400), std::invalid_argument);
}
