#include <gtest/gtest.h>
#include <z2ent/quench.hpp>

using namespace z2ent;

namespace {

QuenchSettings settings(std::vector<double> times) {
    QuenchSettings s;
    s.times = std::move(times);
    s.seed = 9;
    return s;
}

} // namespace

TEST(Quench, SingleTimePointGivesInitialDiagnostics) {
    auto cs = make_cut_system(LatticeGeometry::cut(2, 2, 2));
    auto s = settings({0.0});
    auto r = run_quench_dynamics(cs, s);
    ASSERT_EQ(r.points.size(), 1u);
    EXPECT_EQ(r.points[0].t, 0.0);
    EXPECT_GT(r.points[0].entropy, 0.0);
    EXPECT_TRUE(std::isfinite(r.beta));
}

TEST(Quench, ElectricProductStartsUnentangled) {
    auto cs = make_cut_system(LatticeGeometry::cut(2, 2, 2));
    auto s = settings({0.0, 0.5, 1.0});
    s.eps_initial = std::numeric_limits<double>::infinity();
    auto r = run_quench_dynamics(cs, s);
    EXPECT_NEAR(r.points[0].entropy, 0.0, 1e-12);
    EXPECT_EQ(r.points[0].schmidt_rank, 1);
    EXPECT_GT(r.points[2].entropy, r.points[0].entropy);
}

TEST(Quench, EnergyIsConserved) {
    // H(eps) = eps H_E + H_M with unit-coefficient parts
    auto cs = make_cut_system(LatticeGeometry::cut(2, 2, 2));
    auto s = settings({0.0, 1.0, 3.0, 7.0});
    s.eps_final = 0.7;
    s.eps_initial = std::numeric_limits<double>::infinity();
    auto r = run_quench_dynamics(cs, s);
    for(auto& p : r.points) EXPECT_NEAR(0.7 * p.electric + p.magnetic, r.initial_energy, 1e-9);
    EXPECT_GT(std::abs(r.points.back().electric - r.points.front().electric), 1e-6);
}

TEST(Quench, SameSeedSameTrajectory) {
    auto cs = make_cut_system(LatticeGeometry::cut(2, 2, 2));
    auto s = settings({0.0, 0.5, 1.5});
    auto a = run_quench_dynamics(cs, s), b = run_quench_dynamics(cs, s);
    ASSERT_EQ(a.points.size(), b.points.size());
    for(std::size_t k = 0; k < a.points.size(); ++k) {
        EXPECT_EQ(a.points[k].entropy, b.points[k].entropy);
        EXPECT_EQ(a.points[k].es.xi(), b.points[k].es.xi());
    }
    s.seed = 10;
    auto c = run_quench_dynamics(cs, s);
    EXPECT_NE(c.initial_index, a.initial_index);
}

TEST(Quench, MomentumBlockPathMatchesDensePath) {
    // the same eigenstate index drawn through the block route is a true eigenstate of the full problem
    auto cs = make_cut_system(LatticeGeometry::cut(2, 2, 3));
    auto s = settings({0.0});
    s.dense_limit = 16;
    QuenchResult r;
    auto psi = quench_initial_state(cs, s, r);
    SparseHamiltonian h0(cs.hamiltonian({s.eps_initial, false}));
    double e = expectation(h0, psi.amplitudes);
    VecC hv = h0 * psi.amplitudes;
    EXPECT_LT((hv - e * psi.amplitudes).norm(), 1e-9);
    EXPECT_GT(r.block_dim, 0u);
    EXPECT_LT(r.block_dim, cs.dim());
}

TEST(Quench, BhattacharyyaAgainstThermalIsSmallAtLateTimes) {
    auto cs = make_cut_system(LatticeGeometry::cut(2, 2, 2));
    auto s = settings({0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0});
    s.eps_initial = std::numeric_limits<double>::infinity();
    auto r = run_quench_dynamics(cs, s);
    EXPECT_GE(r.points.front().bhattacharyya, r.points.back().bhattacharyya);
    for(auto& p : r.points) EXPECT_GE(p.bhattacharyya, -1e-12);
}

TEST(Quench, RejectsBadInput) {
    auto cs = make_cut_system(LatticeGeometry::cut(2, 2, 2));
    EXPECT_THROW(run_quench_dynamics(cs, settings({})), std::invalid_argument);
    auto s = settings({0.0});
    s.eps_final = std::numeric_limits<double>::infinity();
    EXPECT_THROW(run_quench_dynamics(cs, s), std::invalid_argument);
}

TEST(Saturation, OnsetOfNoisyPlateau) {
    std::vector<double> t, v;
    for(int k = 0; k < 60; ++k) {
        t.push_back(0.5 * k);
        double plateau = 1.0 + 0.01 * ((k % 2) ? 1 : -1);
        v.push_back(k < 10 ? 0.1 * k : plateau);
    }
    EXPECT_DOUBLE_EQ(saturation_onset(t, v), 5.0);
    // a monotone approach is caught where it enters the plateau band
    std::vector<double> w;
    for(double x : t) w.push_back(1 - std::exp(-x));
    double ts = saturation_onset(t, w);
    EXPECT_GT(ts, 5.0);
    EXPECT_LT(ts, 30.0);
    EXPECT_THROW(saturation_onset({1.0}, {}), std::invalid_argument);
}

TEST(Quench, RecordScalarsAreFiniteWhereDefined) {
    auto cs = make_cut_system(LatticeGeometry::cut(2, 2, 2));
    auto s = settings({0.0, 0.5, 2.0, 6.0});
    s.eps_initial = std::numeric_limits<double>::infinity();
    auto r = run_quench_dynamics(cs, s);
    for(auto& p : r.points) {
        EXPECT_TRUE(std::isfinite(p.entropy));
        EXPECT_TRUE(std::isfinite(p.electric));
        EXPECT_TRUE(std::isfinite(p.magnetic));
        EXPECT_TRUE(std::isfinite(p.bhattacharyya));
        EXPECT_GE(p.schmidt_rank, 1);
        for(double x : p.es.xi()) EXPECT_FALSE(std::isnan(x));
    }
    s.thermal_reference = false;
    auto q = run_quench_dynamics(cs, s);
    EXPECT_TRUE(std::isnan(q.points.back().bhattacharyya));
}
