#include <z2ent/physical.hpp>
#include <z2ent/spectra.hpp>

#include "oracle.hpp"

#include <gtest/gtest.h>

#include <algorithm>

using namespace z2ent;

namespace {

Eigen::VectorXd sorted(Eigen::VectorXd v) {
    std::sort(v.begin(), v.end());
    return v;
}

double max_diff(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if(a.size() != b.size()) return 1e300;
    return (sorted(a) - sorted(b)).cwiseAbs().maxCoeff();
}

Eigen::VectorXd dual_physical_spectrum(const DualModel& d, double eps) {
    auto h = dual_hamiltonian(d, {eps, false});
    auto sp = physical_space(d, WindingSector{false});
    return full_spectrum(sp.reduce(h));
}

} // namespace

TEST(BuildOriginal, TermCountAndGaugeInvariance) {
    auto m = build_original(LatticeGeometry::torus(2, 2), {0.0, false});
    EXPECT_EQ(m.nq, 8);
    EXPECT_EQ(m.h.size(), 4u);
    for(auto& t : m.h) EXPECT_DOUBLE_EQ(t.coeff, -1.0);
    for(auto geo : {LatticeGeometry::torus(3, 2), LatticeGeometry::torus(3, 3), LatticeGeometry::cylinder(4, 3)}) {
        auto o = build_original(geo, {0.7, false});
        for(auto& t : o.h)
            for(auto& g : o.gauss) ASSERT_TRUE(commutes(t.op, g));
    }
    EXPECT_THROW(build_original(LatticeGeometry::cut(2, 2, 2), {0.1, false}), std::invalid_argument);
}

TEST(BuildOriginal, GroundEnergyTwoByTwoFromProjectedOracle) {
    // frozen from the dense projector oracle
    const double e0 = -8.543116820279;
    auto dense = oracle::projected_spectrum_dense(2, 2, 1.0);
    auto xb = oracle::physical_spectrum(2, 2, 1.0);
    EXPECT_NEAR(dense.minCoeff(), e0, 1e-10);
    EXPECT_LT(max_diff(dense, xb), 1e-10);
    auto m = build_original(LatticeGeometry::torus(2, 2), {1.0, false});
    std::vector<ReducedSpace::Constraint> cons;
    for(auto& g : m.gauss) cons.push_back({g.x, 1});
    ReducedSpace sp(m.nq, cons);
    EXPECT_LT(max_diff(full_spectrum(sp.reduce(m.h)), dense), 1e-10);
}

TEST(DualTorus, RegisterSizeAndMagneticSpectrum) {
    auto d = build_dual(LatticeGeometry::torus(2, 2));
    EXPECT_EQ(d.nq, 5);
    for(auto [nx, ny] : {std::pair{2, 2}, {3, 2}, {2, 3}}) {
        auto dd = build_dual(LatticeGeometry::torus(nx, ny));
        auto w = full_spectrum(dual_hamiltonian(dd, {0.0, false}));
        // plaquette configurations with an even number of flips, times four winding sectors
        const int N = nx * ny;
        std::vector<double> expect;
        for(int k = 0; k <= N; k += 2) {
            long c = 1;
            for(int j = 0; j < k; ++j) c = c * (N - j) / (j + 1);
            for(long r = 0; r < 4 * c; ++r) expect.push_back(-N + 2.0 * k);
        }
        ASSERT_EQ(std::size_t(w.size()), expect.size());
        auto ws = sorted(w);
        for(std::size_t i = 0; i < expect.size(); ++i) ASSERT_NEAR(ws[Eigen::Index(i)], expect[i], 1e-10);
    }
}

TEST(DualTorus, OracleEquivalence) {
    for(auto [nx, ny, eps] : {std::tuple{2, 2, 0.5}, {2, 2, 1.0}, {3, 2, 0.3}, {2, 3, 0.8}, {3, 3, 0.4}}) {
        auto w = full_spectrum(build_dual_torus(LatticeGeometry::torus(nx, ny), {eps, false}));
        auto o = oracle::physical_spectrum(nx, ny, eps);
        EXPECT_LT(max_diff(w, o), 1e-10) << nx << "x" << ny;
    }
    auto w = full_spectrum(build_dual_torus(LatticeGeometry::torus(3, 2), {0.3, false}));
    EXPECT_NEAR(sorted(w)[0], -6.484479690943, 1e-10);
}

TEST(DualTorus, RibbonOperatorsCommuteWithH) {
    for(auto geo : {LatticeGeometry::torus(2, 2), LatticeGeometry::torus(3, 4)}) {
        auto d = build_dual(geo);
        auto h = dual_hamiltonian(d, {0.3, false});
        EXPECT_TRUE(h.commutes_with(PauliString::X(d.nq, *d.reg.vx_qubit)));
        EXPECT_TRUE(h.commutes_with(PauliString::X(d.nq, *d.reg.vy_qubit)));
        EXPECT_TRUE(h.commutes_with(*d.vx_loop));
        for(auto& t : h) {
            EXPECT_TRUE(t.op.hermitian());
            EXPECT_EQ(t.op.phase, 0);
        }
    }
}

TEST(DualTorus, WindingSectorsConcatenateToFullSpectrum) {
    auto d = build_dual(LatticeGeometry::cut(2, 2, 2));
    auto h = dual_hamiltonian(d, {0.37, false});
    auto full = full_spectrum(physical_space(d, {false}).reduce(h));
    std::vector<double> cat;
    for(int vx : {1, -1})
        for(int vy : {1, -1}) {
            auto w = full_spectrum(physical_space(d, {true, vx, vy}).reduce(h));
            cat.insert(cat.end(), w.begin(), w.end());
        }
    EXPECT_LT(max_diff(full, Eigen::Map<Eigen::VectorXd>(cat.data(), Eigen::Index(cat.size()))), 1e-10);
}

TEST(DualCylinder, BoundaryGaussCommuteAndOracle) {
    for(auto [nx, ny, eps] : {std::tuple{3, 2, 0.2}, {4, 2, 0.6}, {2, 2, 0.4}, {3, 3, 0.1}}) {
        auto cyl = build_dual_cylinder(LatticeGeometry::cylinder(nx, ny), {eps, false});
        EXPECT_EQ(cyl.model.nq, (nx + 1) * ny);
        for(auto& t : cyl.h)
            for(auto& g : cyl.boundary_gauss) ASSERT_TRUE(commutes(t.op, g));
        if(nx * ny <= 8) {
            auto w = full_spectrum(cyl.h);
            auto o = oracle::physical_spectrum(nx, ny, eps, true);
            EXPECT_LT(max_diff(w, o), 1e-10) << nx << "x" << ny;
        } else {
            auto gs = ground_state(cyl.h);
            EXPECT_NEAR(gs.energy, -6.664858782826, 1e-9); // frozen from the open-boundary oracle
        }
    }
}

TEST(DualCylinder, MagneticGroundStateIsStabilizer) {
    auto cyl = build_dual_cylinder(LatticeGeometry::cylinder(3, 3), {0.0, false});
    SparseHamiltonian H(cyl.h);
    auto gs = ground_state(H);
    EXPECT_NEAR(gs.energy, -double(cyl.model.plaq_image.size()), 1e-9);
    std::vector<cplx> v(gs.state.amplitudes.data(), gs.state.amplitudes.data() + gs.state.amplitudes.size());
    for(auto& [p, w] : cyl.model.plaq_image) {
        auto wv = z2ent::apply(w, v);
        cplx e = 0;
        for(std::size_t i = 0; i < v.size(); ++i) e += std::conj(v[i]) * wv[i];
        EXPECT_NEAR(e.real(), 1.0, 1e-9);
    }
}

TEST(DualCutTorus, DecompositionSupports) {
    for(auto geo : {LatticeGeometry::cut(2, 2, 2), LatticeGeometry::cut(3, 3, 3), LatticeGeometry::cut(3, 5, 3)}) {
        auto c = build_dual_cut_torus(geo, {0.2, false});
        Mask A = c.reg.mask(Side::A), B = c.reg.mask(Side::B);
        EXPECT_FALSE(c.reg.vx_qubit.has_value());
        for(auto& t : c.h_a) EXPECT_EQ(t.op.support() & B, 0u);
        for(auto& t : c.h_b) EXPECT_EQ(t.op.support() & A, 0u);
        for(auto& t : c.h_ab) {
            EXPECT_NE(t.op.support() & A, 0u);
            EXPECT_NE(t.op.support() & B, 0u);
        }
        // A is a contiguous prefix; every register qubit appears once
        EXPECT_EQ(A, c.model.a_mask());
        std::set<int> seen;
        for(auto& [p, q] : c.reg.mu_qubits) seen.insert(q);
        for(auto& [l, q] : c.reg.sigma_qubits) seen.insert(q);
        seen.insert(*c.reg.vy_qubit);
        EXPECT_EQ(int(seen.size()), c.reg.size());
        // the eliminated plaquette is the product of all others and straddles the cut
        bool found = false;
        for(auto& t : c.h_ab) found |= t.op.z == [&] {
            Mask m = 0;
            for(auto& [p, q] : c.reg.mu_qubits) m |= Mask(1) << q;
            return m;
        }();
        EXPECT_TRUE(found);
    }
    EXPECT_THROW(build_dual_cut_torus(LatticeGeometry{1, 2, 2, Kind::CutTorus}, {0.1, false}), std::invalid_argument);
}

TEST(DualCutTorus, OracleEquivalence) {
    for(auto [na, nb, ny, eps] : {std::tuple{2, 2, 2, 0.1}, {2, 2, 2, 0.9}, {3, 2, 2, 0.4}, {2, 3, 2, 0.25}}) {
        auto d = build_dual(LatticeGeometry::cut(na, nb, ny));
        auto w = dual_physical_spectrum(d, eps);
        auto o = oracle::physical_spectrum(na + nb, ny, eps);
        EXPECT_LT(max_diff(w, o), 1e-10) << na << "+" << nb << "x" << ny;
    }
    auto d = build_dual(LatticeGeometry::cut(2, 2, 2));
    EXPECT_NEAR(sorted(dual_physical_spectrum(d, 0.1))[0], -8.060695702265, 1e-10);
}

TEST(DualCutTorus, SplitHamiltonianMatchesTotal) {
    auto c = build_dual_cut_torus(LatticeGeometry::cut(2, 3, 2), {0.3, false});
    auto direct = dual_hamiltonian(c.model, {0.3, false});
    auto sum = c.total();
    EXPECT_EQ(direct.size(), sum.size());
    auto sp = physical_space(c.model, {false});
    EXPECT_LT(max_diff(full_spectrum(sp.reduce(direct)), full_spectrum(sp.reduce(sum))), 1e-12);
}

TEST(CanonicalMap, NoViolations) {
    for(auto geo : {LatticeGeometry::torus(2, 2), LatticeGeometry::torus(3, 4), LatticeGeometry::cut(2, 2, 2),
                    LatticeGeometry::cut(3, 4, 3), LatticeGeometry::cylinder(4, 3)}) {
        auto rep = verify_canonical_map(build_dual(geo));
        EXPECT_TRUE(rep.ok()) << geo.str() << ": " << (rep.violations.empty() ? "" : rep.violations[0]);
        EXPECT_GT(rep.pairs_checked, 0);
    }
}

TEST(CanonicalMap, CorruptedTableIsReported) {
    auto d = build_dual(LatticeGeometry::torus(2, 2));
    auto& img = d.link_image.at({0, 0, Dir::X});
    img = img * PauliString::Z(d.nq, 0);
    auto rep = verify_canonical_map(d);
    EXPECT_FALSE(rep.ok());
}

TEST(SectorProjectors, CountCommutationCompleteness) {
    auto c = build_dual_cut_torus(LatticeGeometry::cut(2, 2, 3), {0.2, false});
    auto sec = sector_projectors(c.model);
    EXPECT_EQ(sec.size(), 128u);
    auto& ops = sec[0].second;
    for(auto& a : ops) {
        for(auto& b : ops) EXPECT_TRUE(commutes(a, b));
        for(auto& t : c.h_a) EXPECT_TRUE(commutes(a, t.op));
    }
    std::set<std::string> labels;
    for(auto& [lab, o] : sec) labels.insert(lab.str());
    EXPECT_EQ(labels.size(), 128u);
    EXPECT_EQ(sec[0].first.str(), "uuuuuu+");

    // restrict to the A register and check sum of projectors = identity on a random vector
    const int na = c.model.n_a;
    auto restrict_a = [&](const PauliString& p) { return PauliString(na, p.x, p.z, p.phase); };
    std::mt19937_64 rng(5);
    std::normal_distribution<double> N;
    std::vector<cplx> v(std::size_t(1) << na), acc(v.size(), 0.0);
    for(auto& a : v) a = {N(rng), N(rng)};
    for(auto& [lab, os] : sec) {
        auto w = v;
        for(auto& o : os) {
            auto ow = z2ent::apply(restrict_a(o), w);
            for(std::size_t i = 0; i < w.size(); ++i) w[i] = 0.5 * (w[i] + ow[i]);
        }
        for(std::size_t i = 0; i < w.size(); ++i) acc[i] += w[i];
    }
    double err = 0;
    for(std::size_t i = 0; i < v.size(); ++i) err = std::max(err, std::abs(acc[i] - v[i]));
    EXPECT_LT(err, 1e-12);
    EXPECT_THROW(sector_projectors(build_dual(LatticeGeometry::torus(2, 2))), std::invalid_argument);
}
