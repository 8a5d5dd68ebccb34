#pragma once
#include "physical.hpp"
#include "spectra.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace z2ent {

// Cut torus restricted to its physical subspace in one winding sector. Reduced basis index
// f = a + 2^{nA} b with a the free A bits and b the free B bits. The B qubits of the dual
// register also depend on a: their configuration is h(b ^ shift(a)) ^ coset(a), so the trace
// over B pairs rows with equal coset after shifting b.
struct CutSystem {
    DualModel                        model;
    ReducedSpace                     space;
    std::vector<PauliString>         sector_ops; // left fluxes, right fluxes, string operator
    std::vector<int>                 sector_of_a;
    std::vector<SymmetrySectorLabel> labels; // indexed by sector id
    std::vector<std::size_t>         b_shift;
    std::vector<int>                 block_of_a; // equal block <=> equal coset
    std::vector<int>                 block_sector;

    int         n_a() const { return space.nfree_a(); }
    int         n_b() const { return space.nfree_b(); }
    std::size_t dim_a() const { return std::size_t(1) << n_a(); }
    std::size_t dim_b() const { return std::size_t(1) << n_b(); }
    std::size_t dim() const { return space.dim(); }

    OperatorSum hamiltonian(const Coupling& c) const { return space.reduce(dual_hamiltonian(model, c)); }
    // electric and magnetic parts, each with unit coefficient
    OperatorSum electric() const { return hamiltonian({0.0, true}); }
    OperatorSum magnetic() const {
        OperatorSum h(model.nq);
        for(auto& [p, w] : model.plaq_image) h.add(-1.0, w);
        return space.reduce(h);
    }
    // terms of the A-restricted Hamiltonian in the reduced A register
    OperatorSum a_hamiltonian(const Coupling& c, bool boundary_flux = true) const {
        OperatorSum h(n_a());
        double mag = c.electric_limit ? 0.0 : -1.0;
        double el = c.electric_limit ? -1.0 : -c.epsilon;
        for(auto& t : a_supported_terms(model, boundary_flux)) {
            double coeff = t.kind == "magnetic" ? mag : el;
            if(coeff == 0.0) continue;
            h.add(coeff, restrict_to_a(space.reduce(t.op)));
        }
        h.prune();
        return h;
    }
    PauliString restrict_to_a(const PauliString& reduced) const {
        Mask am = (Mask(1) << n_a()) - 1;
        if((reduced.x | reduced.z) & ~am) throw std::invalid_argument("operator is not supported on A");
        return PauliString(n_a(), reduced.x, reduced.z, reduced.phase);
    }
};

inline CutSystem make_cut_system(const LatticeGeometry& geo, const WindingSector& w = {}) {
    if(geo.kind != Kind::CutTorus) throw std::invalid_argument("make_cut_system: needs a cut torus");
    CutSystem cs;
    cs.model = build_dual(geo);
    cs.space = physical_space(cs.model, w);
    Mask am = cs.model.a_mask();
    for(auto& f : cs.model.flux_left) cs.sector_ops.push_back(f);
    for(auto& f : cs.model.flux_right) cs.sector_ops.push_back(f);
    cs.sector_ops.push_back(*cs.model.vtilde_x);
    std::vector<std::pair<int, Mask>> par;
    for(auto& op : cs.sector_ops) {
        if(op.support() & ~am) throw std::logic_error("sector operator leaves A");
        auto [s, zr] = cs.space.reduce_parity(op.x);
        if(op.phase == 2) s = -s;
        if(zr >> cs.space.nfree_a()) throw std::logic_error("sector operator depends on B bits");
        par.push_back({s, zr});
    }
    std::map<std::uint64_t, int> ids;
    const int ny = geo.ny;
    cs.sector_of_a.resize(cs.dim_a());
    for(std::size_t a = 0; a < cs.dim_a(); ++a) {
        std::uint64_t code = 0;
        for(std::size_t k = 0; k < par.size(); ++k) {
            int ev = par[k].first * (parity(a & par[k].second) ? -1 : 1);
            if(ev < 0) code |= std::uint64_t(1) << k;
        }
        auto it = ids.find(code);
        if(it == ids.end()) {
            SymmetrySectorLabel lab;
            for(int b = 0; b < ny; ++b) lab.left_flux.push_back((code >> b) & 1 ? -1 : 1);
            for(int b = 0; b < ny; ++b) lab.right_flux.push_back((code >> (ny + b)) & 1 ? -1 : 1);
            lab.vtilde_x = (code >> (2 * ny)) & 1 ? -1 : 1;
            it = ids.emplace(code, int(cs.labels.size())).first;
            cs.labels.push_back(lab);
        }
        cs.sector_of_a[a] = it->second;
    }
    // B-side response to each free A bit
    const int na = cs.space.nfree_a(), nb = cs.space.nfree_b();
    std::vector<std::size_t> sh(std::size_t(na), 0);
    std::vector<Mask> co(std::size_t(na), 0);
    for(int j = 0; j < na; ++j) {
        Mask v = cs.space.column(j) & ~am;
        std::size_t sj = cs.space.compress(v) >> na;
        Mask r = v;
        for(int k = 0; k < nb; ++k)
            if((sj >> k) & 1) r ^= cs.space.column(na + k) & ~am;
        sh[std::size_t(j)] = sj;
        co[std::size_t(j)] = r;
    }
    cs.b_shift.assign(cs.dim_a(), 0);
    cs.block_of_a.assign(cs.dim_a(), 0);
    std::map<std::pair<int, Mask>, int> blocks;
    for(std::size_t a = 0; a < cs.dim_a(); ++a) {
        std::size_t shift = 0;
        Mask r = 0;
        for(int j = 0; j < na; ++j)
            if((a >> j) & 1) {
                shift ^= sh[std::size_t(j)];
                r ^= co[std::size_t(j)];
            }
        cs.b_shift[a] = shift;
        auto key = std::make_pair(cs.sector_of_a[a], r);
        auto it = blocks.find(key);
        if(it == blocks.end()) {
            it = blocks.emplace(key, int(cs.block_sector.size())).first;
            cs.block_sector.push_back(cs.sector_of_a[a]);
        }
        cs.block_of_a[a] = it->second;
    }
    return cs;
}

struct SchmidtBlock {
    int                      sector;
    std::vector<std::size_t> rows; // A indices
    MatC                     psi;  // rows x dim_b, B index already shifted
};

inline std::vector<SchmidtBlock> schmidt_blocks(const StateVector& psi, const CutSystem& cs) {
    if(psi.dim() != cs.dim()) throw std::invalid_argument("schmidt_blocks: dimension mismatch");
    const std::size_t da = cs.dim_a(), db = cs.dim_b();
    std::vector<SchmidtBlock> out(cs.block_sector.size());
    for(std::size_t k = 0; k < out.size(); ++k) out[k].sector = cs.block_sector[k];
    for(std::size_t a = 0; a < da; ++a) out[std::size_t(cs.block_of_a[a])].rows.push_back(a);
    for(auto& blk : out) {
        blk.psi.resize(Eigen::Index(blk.rows.size()), Eigen::Index(db));
        for(std::size_t i = 0; i < blk.rows.size(); ++i) {
            std::size_t a = blk.rows[i], s = cs.b_shift[a];
            for(std::size_t u = 0; u < db; ++u) blk.psi(Eigen::Index(i), Eigen::Index(u)) = psi.amplitudes[Eigen::Index(a + da * (u ^ s))];
        }
    }
    return out;
}

struct RhoBlock {
    int                        sector;
    SymmetrySectorLabel        label;
    std::vector<std::size_t>   rows; // A indices
    MatC                       rho;
};

// Partial trace over B in blocks; the full matrix is never formed.
inline std::vector<RhoBlock> reduce_to_a_blocks(const StateVector& psi, const CutSystem& cs) {
    std::vector<RhoBlock> out;
    for(auto& sb : schmidt_blocks(psi, cs)) {
        RhoBlock b;
        b.sector = sb.sector;
        b.label = cs.labels[std::size_t(sb.sector)];
        b.rows = sb.rows;
        b.rho = sb.psi * sb.psi.adjoint();
        out.push_back(std::move(b));
    }
    return out;
}

inline DensityMatrix reduce_to_a(const StateVector& psi, const CutSystem& cs) {
    const Eigen::Index da = Eigen::Index(cs.dim_a());
    DensityMatrix r;
    r.matrix = MatC::Zero(da, da);
    for(auto& b : reduce_to_a_blocks(psi, cs))
        for(std::size_t i = 0; i < b.rows.size(); ++i)
            for(std::size_t j = 0; j < b.rows.size(); ++j)
                r.matrix(Eigen::Index(b.rows[i]), Eigen::Index(b.rows[j])) = b.rho(Eigen::Index(i), Eigen::Index(j));
    r.basis = "A";
    return r;
}

// B side as a direct sum over blocks: rows of different blocks address disjoint B configurations.
inline DensityMatrix reduce_to_b(const StateVector& psi, const CutSystem& cs) {
    auto sbs = schmidt_blocks(psi, cs);
    const Eigen::Index db = Eigen::Index(cs.dim_b());
    DensityMatrix r;
    r.matrix = MatC::Zero(db * Eigen::Index(sbs.size()), db * Eigen::Index(sbs.size()));
    for(std::size_t k = 0; k < sbs.size(); ++k)
        r.matrix.block(Eigen::Index(k) * db, Eigen::Index(k) * db, db, db) = (sbs[k].psi.adjoint() * sbs[k].psi).transpose();
    r.basis = "B";
    return r;
}

// Trace over the high qubits of a plain register: A = the lowest n_a qubits.
inline DensityMatrix partial_trace_low(const StateVector& psi, int n_a) {
    if(n_a < 0 || n_a > psi.register_size) throw std::invalid_argument("partial_trace_low: partition missing");
    const Eigen::Index da = Eigen::Index(1) << n_a;
    const Eigen::Index db = Eigen::Index(psi.dim()) / da;
    Eigen::Map<const MatC> M(psi.amplitudes.data(), da, db);
    DensityMatrix r;
    r.matrix = M * M.adjoint();
    r.basis = "low" + std::to_string(n_a);
    return r;
}

struct EsLevel {
    double              xi;
    int                 sector;
    SymmetrySectorLabel label;
};

struct EntanglementSpectrum {
    std::vector<EsLevel> levels; // nondecreasing xi
    double               cutoff = 1e-14;
    int                  schmidt_rank = 0;
    double               dropped_weight = 0;

    std::vector<double> xi() const {
        std::vector<double> v;
        for(auto& l : levels) v.push_back(l.xi);
        return v;
    }
    std::vector<double> probabilities() const {
        std::vector<double> v;
        for(auto& l : levels) v.push_back(std::exp(-l.xi));
        return v;
    }
    std::map<int, std::vector<double>> by_sector() const {
        std::map<int, std::vector<double>> m;
        for(auto& l : levels) m[l.sector].push_back(l.xi);
        return m;
    }
    int populated_sectors() const { return int(by_sector().size()); }
};

namespace detail {
inline void finish_spectrum(EntanglementSpectrum& es) {
    std::stable_sort(es.levels.begin(), es.levels.end(), [](const EsLevel& a, const EsLevel& b) { return a.xi < b.xi; });
    es.schmidt_rank = int(es.levels.size());
}
} // namespace detail

inline EntanglementSpectrum entanglement_spectrum(const std::vector<RhoBlock>& blocks, double cutoff = 1e-14) {
    EntanglementSpectrum es;
    es.cutoff = cutoff;
    for(auto& b : blocks) {
        Eigen::SelfAdjointEigenSolver<MatC> sol(b.rho, Eigen::EigenvaluesOnly);
        for(double lam : sol.eigenvalues()) {
            if(lam > cutoff) es.levels.push_back({-std::log(lam), b.sector, b.label});
            else if(lam > 0) es.dropped_weight += lam;
        }
    }
    detail::finish_spectrum(es);
    return es;
}

// Dense path: full rho on the reduced A register, checked for block structure first.
inline EntanglementSpectrum entanglement_spectrum(const DensityMatrix& rho, const CutSystem& cs, double cutoff = 1e-14) {
    if(std::size_t(rho.dim()) != cs.dim_a()) throw std::invalid_argument("entanglement_spectrum: dimension mismatch");
    double off = 0;
    for(Eigen::Index i = 0; i < rho.dim(); ++i)
        for(Eigen::Index j = 0; j < rho.dim(); ++j)
            if(cs.block_of_a[std::size_t(i)] != cs.block_of_a[std::size_t(j)]) off = std::max(off, std::abs(rho.matrix(i, j)));
    if(off > 1e-9) throw std::runtime_error("entanglement_spectrum: sector projectors do not commute with rho");
    std::vector<std::vector<std::size_t>> rows(cs.block_sector.size());
    for(std::size_t a = 0; a < cs.dim_a(); ++a) rows[std::size_t(cs.block_of_a[a])].push_back(a);
    std::vector<RhoBlock> blocks;
    for(std::size_t s = 0; s < rows.size(); ++s) {
        int sec = cs.block_sector[s];
        RhoBlock b{sec, cs.labels[std::size_t(sec)], rows[s], MatC(Eigen::Index(rows[s].size()), Eigen::Index(rows[s].size()))};
        for(std::size_t i = 0; i < rows[s].size(); ++i)
            for(std::size_t j = 0; j < rows[s].size(); ++j)
                b.rho(Eigen::Index(i), Eigen::Index(j)) = rho.matrix(Eigen::Index(rows[s][i]), Eigen::Index(rows[s][j]));
        blocks.push_back(std::move(b));
    }
    return entanglement_spectrum(blocks, cutoff);
}

inline MatC pauli_matrix(const PauliString& p) {
    const Eigen::Index d = Eigen::Index(1) << p.n;
    MatC m = MatC::Zero(d, d);
    for(Eigen::Index i = 0; i < d; ++i) m(Eigen::Index(Mask(i) ^ p.x), i) = matrix_element(p, Mask(i));
    return m;
}

// Generic path with projectors given as commuting +-1 strings on the register of rho.
inline EntanglementSpectrum entanglement_spectrum(const DensityMatrix& rho,
                                                  const std::vector<std::pair<SymmetrySectorLabel, std::vector<PauliString>>>& sectors,
                                                  double cutoff = 1e-14) {
    EntanglementSpectrum es;
    es.cutoff = cutoff;
    const Eigen::Index d = rho.dim();
    int sid = 0;
    for(auto& [lab, ops] : sectors) {
        MatC P = MatC::Identity(d, d);
        for(auto& o : ops) {
            if((Eigen::Index(1) << o.n) != d) throw std::invalid_argument("entanglement_spectrum: projector register mismatch");
            P = P * (0.5 * (MatC::Identity(d, d) + pauli_matrix(o)));
        }
        if((P * rho.matrix - rho.matrix * P).cwiseAbs().maxCoeff() > 1e-9)
            throw std::runtime_error("entanglement_spectrum: sector projectors do not commute with rho");
        MatC blk = P * rho.matrix * P;
        Eigen::SelfAdjointEigenSolver<MatC> sol(blk, Eigen::EigenvaluesOnly);
        for(double lam : sol.eigenvalues()) {
            if(lam > cutoff) es.levels.push_back({-std::log(lam), sid, lab});
            else if(lam > 0) es.dropped_weight += lam;
        }
        ++sid;
    }
    detail::finish_spectrum(es);
    return es;
}

inline double von_neumann_entropy(const Eigen::VectorXd& eigenvalues, double cutoff = 1e-14) {
    double s = 0;
    for(double l : eigenvalues)
        if(l > cutoff) s -= l * std::log(l);
    return s;
}
inline double von_neumann_entropy(const DensityMatrix& rho, double cutoff = 1e-14) {
    Eigen::SelfAdjointEigenSolver<MatC> sol(rho.matrix, Eigen::EigenvaluesOnly);
    return von_neumann_entropy(sol.eigenvalues(), cutoff);
}
inline double von_neumann_entropy(const EntanglementSpectrum& es) {
    double s = 0;
    for(auto& l : es.levels) s += l.xi * std::exp(-l.xi);
    return s;
}

struct EntanglementGap {
    double gap = 0;
    int    index = 0;      // number of levels below the gap
    bool   flagged = false; // band count ambiguous, fallback used
};

// Gap above the low-lying band. The band holds one level per populated sector (i = 1); higher
// bands are located among the largest gaps in the lowest quarter of the spectrum.
inline EntanglementGap entanglement_gap(const EntanglementSpectrum& es, int i = 1, int band_size = 0) {
    auto xi = es.xi();
    EntanglementGap g;
    const int n = int(xi.size());
    auto fallback = [&](int which) {
        int q = std::max(2, n / 4);
        std::vector<std::pair<double, int>> gaps;
        for(int k = 1; k < std::min(q + 1, n); ++k) gaps.push_back({xi[std::size_t(k)] - xi[std::size_t(k - 1)], k});
        std::sort(gaps.begin(), gaps.end(), std::greater<>());
        if(int(gaps.size()) < which) return EntanglementGap{0.0, 0, true};
        std::vector<int> pos;
        for(int k = 0; k < which; ++k) pos.push_back(gaps[std::size_t(k)].second);
        std::sort(pos.begin(), pos.end());
        int p = pos[std::size_t(which - 1)];
        return EntanglementGap{xi[std::size_t(p)] - xi[std::size_t(p - 1)], p, true};
    };
    if(i == 1) {
        int m = band_size > 0 ? band_size : es.populated_sectors();
        if(m <= 0 || m >= n) return fallback(1);
        g.index = m;
        g.gap = xi[std::size_t(m)] - xi[std::size_t(m - 1)];
        return g;
    }
    return fallback(i);
}

struct GapScan {
    std::string         lattice;
    std::vector<double> epsilons;
    std::vector<double> gaps;
    std::vector<double> entropies;
    double              epsilon_c = 0;
    double              error = 0;
};

struct CriticalFit {
    double epsilon_c = 0;
    double error = 0;
    double loo_spread = 0;
    double lattice_spread = 0;
    std::vector<double> per_lattice;
    std::vector<double> per_lattice_loo;
};

namespace detail {
// x-intercept of the least-squares line
inline double intercept(const std::vector<double>& x, const std::vector<double>& y) {
    double n = double(x.size());
    double mx = std::accumulate(x.begin(), x.end(), 0.0) / n, my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0, sxx = 0;
    for(std::size_t k = 0; k < x.size(); ++k) {
        sxy += (x[k] - mx) * (y[k] - my);
        sxx += (x[k] - mx) * (x[k] - mx);
    }
    double slope = sxy / sxx;
    if(slope == 0) throw std::runtime_error("critical_coupling: flat gap data");
    return mx - my / slope;
}
} // namespace detail

// Linear intercept of the gap on the closing window: the last `window` points with a nonzero
// gap before it first vanishes (gap <= zero_tol). Leave-one-out refits give the per-lattice error.
inline std::pair<double, double> critical_coupling_single(const GapScan& s, int window = 4, double zero_tol = 1e-3) {
    if(s.epsilons.size() != s.gaps.size()) throw std::invalid_argument("critical_coupling: length mismatch");
    std::vector<std::size_t> order(s.epsilons.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return s.epsilons[a] < s.epsilons[b]; });
    std::vector<double> x, y;
    for(auto k : order) {
        if(s.gaps[k] <= zero_tol) break;
        x.push_back(s.epsilons[k]);
        y.push_back(s.gaps[k]);
    }
    if(int(x.size()) > window) {
        x.erase(x.begin(), x.end() - window);
        y.erase(y.begin(), y.end() - window);
    }
    if(x.size() < 3) throw std::invalid_argument("critical_coupling: fewer than 3 points in the closing window");
    double ec = detail::intercept(x, y);
    double dev = 0;
    for(std::size_t k = 0; k < x.size(); ++k) {
        auto xx = x, yy = y;
        xx.erase(xx.begin() + long(k));
        yy.erase(yy.begin() + long(k));
        dev = std::max(dev, std::abs(detail::intercept(xx, yy) - ec));
    }
    return {ec, dev};
}

inline CriticalFit critical_coupling(const std::vector<GapScan>& scans, int window = 4, double zero_tol = 1e-3) {
    if(scans.empty()) throw std::invalid_argument("critical_coupling: no scans");
    CriticalFit f;
    for(auto& s : scans) {
        auto [ec, dev] = critical_coupling_single(s, window, zero_tol);
        f.per_lattice.push_back(ec);
        f.per_lattice_loo.push_back(dev);
        f.loo_spread = std::max(f.loo_spread, dev);
    }
    f.epsilon_c = std::accumulate(f.per_lattice.begin(), f.per_lattice.end(), 0.0) / double(f.per_lattice.size());
    for(double e : f.per_lattice) f.lattice_spread = std::max(f.lattice_spread, std::abs(e - f.epsilon_c));
    f.error = std::max(f.loo_spread, f.lattice_spread);
    return f;
}

struct PerturbativeEH {
    std::vector<double> entanglement; // sorted levels of the boundary entanglement Hamiltonian
    std::vector<double> effective;    // sorted spectrum of the boundary effective Hamiltonian
};

// Commuting boundary chain: the first-order entanglement Hamiltonian is const - (eps/2) sum f and
// the effective Hamiltonian is -eps sum f over the boundary flux eigenvalues f = +-1.
// boundaries = 1: single cut, all 2^ny flux patterns, constant ny log 2.
// boundaries = 2: cut torus, each boundary carries an even number of reversed fluxes and the
// string operator doubles every level; constant log of the number of levels.
inline PerturbativeEH perturbative_eh_spectrum(int ny, double eps, int boundaries = 1) {
    if(ny < 1 || (boundaries != 1 && boundaries != 2)) throw std::invalid_argument("perturbative_eh_spectrum: bad arguments");
    PerturbativeEH out;
    std::vector<int> sums;
    for(int c = 0; c < (1 << ny); ++c) {
        int s = ny - 2 * std::popcount(unsigned(c));
        if(boundaries == 1) sums.push_back(s);
        else if(std::popcount(unsigned(c)) % 2 == 0) sums.push_back(s);
    }
    std::vector<int> tot;
    if(boundaries == 1) tot = sums;
    else
        for(int a : sums)
            for(int b : sums)
                for(int v = 0; v < 2; ++v) tot.push_back(a + b);
    double c0 = std::log(double(tot.size()));
    for(int s : tot) {
        out.entanglement.push_back(c0 - 0.5 * eps * s);
        out.effective.push_back(-eps * s);
    }
    std::sort(out.entanglement.begin(), out.entanglement.end());
    std::sort(out.effective.begin(), out.effective.end());
    return out;
}

} // namespace z2ent
