#pragma once
#include "entanglement.hpp"

#include <lapacke.h>

#include <deque>
#include <numbers>
#include <optional>

namespace z2ent {

// U|f> = sign[f] |perm[f]> on the reduced basis.
struct BasisSymmetry {
    std::vector<std::size_t> perm;
    std::vector<cplx>        sign;

    VecC apply(const VecC& v) const {
        VecC out = VecC::Zero(v.size());
        for(std::size_t f = 0; f < perm.size(); ++f) out[Eigen::Index(perm[f])] += sign[f] * v[Eigen::Index(f)];
        return out;
    }
    StateVector apply(const StateVector& s) const { return {apply(s.amplitudes), s.register_size}; }
};

namespace detail {

// Inverts c = e0 ^ sum_j f_j col_j over GF(2) for an injective map.
class AffineInverse {
  public:
    AffineInverse(Mask e0, const std::vector<Mask>& cols) : e0_(e0) {
        for(std::size_t j = 0; j < cols.size(); ++j) {
            Mask v = cols[j], comb = Mask(1) << j;
            for(auto& r : rows_)
                if(v & r.pivot) {
                    v ^= r.vec;
                    comb ^= r.comb;
                }
            if(!v) throw std::invalid_argument("affine map is not injective");
            rows_.push_back({v, v & (~v + 1), comb});
        }
    }
    std::optional<Mask> solve(Mask c) const {
        Mask v = c ^ e0_, f = 0;
        for(auto& r : rows_)
            if(v & r.pivot) {
                v ^= r.vec;
                f ^= r.comb;
            }
        if(v) return std::nullopt;
        return f;
    }

  private:
    struct Row {
        Mask vec, pivot, comb;
    };
    Mask             e0_;
    std::vector<Row> rows_;
};

inline cplx column_entry(const SparseHamiltonian& H, std::size_t row, std::size_t col) {
    cplx v = 0;
    H.for_each_in_column(col, [&](std::size_t i, cplx h) {
        if(i == row) v += h;
    });
    return v;
}

} // namespace detail

// Lattice translation by (dx, dy) on the full torus of a cut system. The permutation follows from the
// electric configuration of each basis state; signs are fixed, up to a global phase, by requiring
// U H = H U along the connected graph of H.
inline BasisSymmetry lattice_translation(const CutSystem& cs, int dx, int dy) {
    const auto& m = cs.model;
    const int nx = m.geo.nx(), ny = m.geo.ny;
    std::map<Link, int> index;
    for(auto& l : m.links) index.emplace(l, int(index.size()));
    if(index.size() > 64) throw std::invalid_argument("lattice_translation: too many links");
    const auto& sp = cs.space;
    Mask e0 = 0;
    std::vector<Mask> cols(std::size_t(sp.nfree()), 0);
    for(auto& [l, img] : m.link_image) {
        if(img.z) throw std::logic_error("lattice_translation: electric image is not X-type");
        int li = index.at(l);
        auto [s, xr] = sp.reduce_parity(img.x);
        if((s < 0) != (img.phase == 2)) e0 |= Mask(1) << li;
        for(int j = 0; j < sp.nfree(); ++j)
            if((xr >> j) & 1) cols[std::size_t(j)] |= Mask(1) << li;
    }
    std::vector<int> target(index.size());
    for(auto& [l, li] : index) {
        Link t{((l.x + dx) % nx + nx) % nx, ((l.y + dy) % ny + ny) % ny, l.d};
        target[std::size_t(li)] = index.at(t);
    }
    detail::AffineInverse inv(e0, cols);
    const std::size_t dim = cs.dim();
    BasisSymmetry u;
    u.perm.resize(dim);
    for(std::size_t f = 0; f < dim; ++f) {
        Mask e = e0;
        for(int j = 0; j < sp.nfree(); ++j)
            if((f >> j) & 1) e ^= cols[std::size_t(j)];
        Mask et = 0;
        for(std::size_t li = 0; li < target.size(); ++li)
            if((e >> li) & 1) et |= Mask(1) << target[li];
        auto g = inv.solve(et);
        if(!g) throw std::runtime_error("lattice_translation: translated configuration leaves the sector");
        u.perm[f] = std::size_t(*g);
    }
    // signs: s_g = s_f H(pi g, pi f) / H(g, f)
    SparseHamiltonian H(cs.hamiltonian({1.0, false}));
    u.sign.assign(dim, cplx(0));
    u.sign[0] = 1;
    std::deque<std::size_t> queue{0};
    std::size_t visited = 1;
    while(!queue.empty()) {
        std::size_t f = queue.front();
        queue.pop_front();
        H.for_each_in_column(f, [&](std::size_t g, cplx h) {
            cplx hp = detail::column_entry(H, u.perm[g], u.perm[f]);
            if(std::abs(std::abs(hp) - std::abs(h)) > 1e-12) throw std::runtime_error("lattice_translation: not a symmetry");
            if(g == f) return;
            cplx s = u.sign[f] * hp / h;
            if(u.sign[g] == cplx(0)) {
                u.sign[g] = s;
                ++visited;
                queue.push_back(g);
            } else if(std::abs(u.sign[g] - s) > 1e-12)
                throw std::runtime_error("lattice_translation: inconsistent signs");
        });
    }
    if(visited != dim) throw std::runtime_error("lattice_translation: Hamiltonian graph is not connected");
    return u;
}

// Joint eigenbasis of the x and y translations, one dense block per momentum.
class MomentumBlocks {
  public:
    struct Block {
        int                      kx = 0, ky = 0;
        std::vector<std::size_t> reps;
        std::vector<double>      norm; // |P_k |r>|
    };

    explicit MomentumBlocks(const CutSystem& cs) : cs_(cs), nx_(cs.model.geo.nx()), ny_(cs.model.geo.ny) {
        tx_ = lattice_translation(cs, 1, 0);
        ty_ = lattice_translation(cs, 0, 1);
        // fix the global phases so that T^N = 1
        normalize_period(tx_, nx_);
        normalize_period(ty_, ny_);
        auto [fa, sa] = step(step({0, 1}, ty_), tx_);
        auto [fb, sb] = step(step({0, 1}, tx_), ty_);
        if(fa != fb || std::abs(sa - sb) > 1e-12) throw std::runtime_error("MomentumBlocks: translations do not commute");
        const std::size_t dim = cs.dim();
        rep_.assign(dim, dim);
        elem_.assign(dim, {0, 0});
        phase_.assign(dim, 0);
        for(std::size_t r = 0; r < dim; ++r) {
            if(rep_[r] != dim) continue;
            reps_.push_back(r);
            for_orbit(r, [&](int a, int b, std::size_t f, cplx s) {
                if(rep_[f] == dim) {
                    rep_[f] = r;
                    elem_[f] = {a, b};
                    phase_[f] = s;
                }
            });
        }
    }

    const BasisSymmetry& tx() const { return tx_; }
    const BasisSymmetry& ty() const { return ty_; }
    int                  group_order() const { return nx_ * ny_; }

    cplx character(int kx, int ky, int a, int b) const {
        double th = 2 * std::numbers::pi * (double(kx * a) / nx_ + double(ky * b) / ny_);
        return {std::cos(th), std::sin(th)};
    }

    Block block(int kx, int ky) const {
        Block bl{kx, ky, {}, {}};
        const double G = group_order();
        for(std::size_t r : reps_) {
            cplx n2 = 0;
            for_orbit(r, [&](int a, int b, std::size_t f, cplx s) {
                if(f == r) n2 += std::conj(character(kx, ky, a, b)) * s;
            });
            if(n2.real() / G > 1e-10) {
                bl.reps.push_back(r);
                bl.norm.push_back(std::sqrt(n2.real() / G));
            }
        }
        return bl;
    }

    MatC block_matrix(const SparseHamiltonian& H, const Block& bl) const {
        const Eigen::Index n = Eigen::Index(bl.reps.size());
        std::vector<Eigen::Index> pos(cs_.dim(), -1);
        for(Eigen::Index i = 0; i < n; ++i) pos[bl.reps[std::size_t(i)]] = i;
        MatC B = MatC::Zero(n, n);
        for(Eigen::Index c = 0; c < n; ++c) {
            std::size_t r = bl.reps[std::size_t(c)];
            H.for_each_in_column(r, [&](std::size_t f, cplx h) {
                Eigen::Index i = pos[rep_[f]];
                if(i < 0) return;
                auto [a, b] = elem_[f];
                B(i, c) += h * character(bl.kx, bl.ky, a, b) * bl.norm[std::size_t(i)] / (phase_[f] * bl.norm[std::size_t(c)]);
            });
        }
        return B;
    }

    StateVector expand(const Block& bl, const VecC& coeffs) const {
        StateVector s;
        s.register_size = cs_.space.nfree();
        s.amplitudes = VecC::Zero(Eigen::Index(cs_.dim()));
        const double G = group_order();
        for(std::size_t i = 0; i < bl.reps.size(); ++i) {
            cplx c = coeffs[Eigen::Index(i)] / (bl.norm[i] * G);
            for_orbit(bl.reps[i], [&](int a, int b, std::size_t f, cplx sg) {
                s.amplitudes[Eigen::Index(f)] += c * std::conj(character(bl.kx, bl.ky, a, b)) * sg;
            });
        }
        s.amplitudes.normalize();
        return s;
    }

  private:
    static std::pair<std::size_t, cplx> step(std::pair<std::size_t, cplx> st, const BasisSymmetry& u) {
        return {u.perm[st.first], st.second * u.sign[st.first]};
    }
    void normalize_period(BasisSymmetry& u, int n) const {
        std::pair<std::size_t, cplx> st{0, 1};
        for(int k = 0; k < n; ++k) st = step(st, u);
        if(st.first != 0) throw std::runtime_error("MomentumBlocks: translation does not have the lattice period");
        cplx fix = std::polar(1.0, -std::arg(st.second) / n);
        for(auto& s : u.sign) s *= fix;
    }
    // U_x^a U_y^b |r> = s |f>
    template<typename F>
    void for_orbit(std::size_t r, F&& fn) const {
        std::pair<std::size_t, cplx> col{r, 1};
        for(int b = 0; b < ny_; ++b) {
            auto st = col;
            for(int a = 0; a < nx_; ++a) {
                fn(a, b, st.first, st.second);
                st = step(st, tx_);
            }
            col = step(col, ty_);
        }
    }

    const CutSystem&                 cs_;
    int                              nx_, ny_;
    BasisSymmetry                    tx_, ty_;
    std::vector<std::size_t>         reps_, rep_;
    std::vector<std::pair<int, int>> elem_;
    std::vector<cplx>                phase_;
};

// Selected eigenpair of a dense Hermitian matrix (LAPACK zheevr, only the requested vector is formed).
inline std::pair<double, VecC> hermitian_eigenpair(MatC a, std::size_t index) {
    const lapack_int n = lapack_int(a.rows());
    if(index >= std::size_t(n)) throw std::out_of_range("hermitian_eigenpair: index out of range");
    lapack_int il = lapack_int(index) + 1, m = 0;
    std::vector<double> w(static_cast<std::size_t>(n));
    VecC z(n);
    std::vector<lapack_int> isuppz(2);
    lapack_int info = LAPACKE_zheevr(LAPACK_COL_MAJOR, 'V', 'I', 'U', n, reinterpret_cast<lapack_complex_double*>(a.data()), n, 0.0, 0.0, il,
                                     il, 0.0, &m, w.data(), reinterpret_cast<lapack_complex_double*>(z.data()), n, isuppz.data());
    if(info != 0 || m != 1) throw NonConvergence("zheevr failed with info " + std::to_string(info), double(info));
    return {w[0], z};
}

struct SymmetricEigenpair {
    Eigenpair ep;
    int       kx = 0, ky = 0;
    std::size_t block_dim = 0;
};

// Random mid-spectrum eigenstate inside a seeded momentum block. With `generic` the block avoids the
// reflection-symmetric momenta (0 and pi), whose eigenstates keep point-group symmetries in rho_A.
inline SymmetricEigenpair eigenstate_near_symmetric(const CutSystem& cs, const SparseHamiltonian& H, const MomentumBlocks& mb, std::uint64_t seed,
                                                    double window = 0.5, bool generic = true) {
    std::mt19937_64 rng(seed);
    const int nx = cs.model.geo.nx(), ny = cs.model.geo.ny;
    std::vector<std::pair<int, int>> ks;
    auto special = [](int k, int n) { return k == 0 || 2 * k == n; };
    for(int kx = 0; kx < nx; ++kx)
        for(int ky = 0; ky < ny; ++ky)
            if(!generic || (!special(kx, nx) && !special(ky, ny))) ks.push_back({kx, ky});
    if(ks.empty()) throw std::invalid_argument("eigenstate_near_symmetric: lattice has no generic momentum");
    auto [kx, ky] = ks[std::uniform_int_distribution<std::size_t>(0, ks.size() - 1)(rng)];
    auto bl = mb.block(kx, ky);
    if(bl.reps.empty()) throw std::runtime_error("empty momentum block");
    std::size_t k = random_middle_index(bl.reps.size(), rng(), window);
    auto [e, v] = hermitian_eigenpair(mb.block_matrix(H, bl), k);
    SymmetricEigenpair out;
    out.kx = kx;
    out.ky = ky;
    out.block_dim = bl.reps.size();
    out.ep.energy = e;
    out.ep.index = k;
    out.ep.state = mb.expand(bl, v);
    VecC hv(out.ep.state.amplitudes.size());
    H.apply(out.ep.state.amplitudes.data(), hv.data());
    out.ep.residual = (hv - e * out.ep.state.amplitudes).norm();
    return out;
}

} // namespace z2ent
