#pragma once
#include "pauli.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <thread>
#include <vector>

namespace z2ent {

using VecD  = Eigen::VectorXd;
using VecC  = Eigen::VectorXcd;
using MatD  = Eigen::MatrixXd;
using MatC  = Eigen::MatrixXcd;

struct StateVector {
    VecC amplitudes;
    int  register_size = 0;

    std::size_t dim() const { return std::size_t(amplitudes.size()); }
    double      norm() const { return amplitudes.norm(); }
};

struct DensityMatrix {
    MatC        matrix;
    std::string basis; // which register subset the rows refer to

    Eigen::Index dim() const { return matrix.rows(); }

    // empty when all invariants hold
    std::vector<std::string> violations(double herm_tol = 1e-12, double trace_tol = 1e-10, double pos_tol = 1e-10) const {
        std::vector<std::string> v;
        if(matrix.rows() != matrix.cols()) {
            v.push_back("not square");
            return v;
        }
        double h = (matrix - matrix.adjoint()).cwiseAbs().maxCoeff();
        if(h > herm_tol) v.push_back("not Hermitian: " + std::to_string(h));
        double tr = matrix.trace().real();
        if(std::abs(tr - 1.0) > trace_tol) v.push_back("trace " + std::to_string(tr));
        Eigen::SelfAdjointEigenSolver<MatC> es(matrix, Eigen::EigenvaluesOnly);
        if(es.eigenvalues().minCoeff() < -pos_tol) v.push_back("negative eigenvalue " + std::to_string(es.eigenvalues().minCoeff()));
        return v;
    }
};

struct NonConvergence : std::runtime_error {
    double residual;
    NonConvergence(const std::string& what, double r) : std::runtime_error(what), residual(r) {}
};

struct BudgetExceeded : std::runtime_error {
    double required, available;
    BudgetExceeded(const std::string& what, double req, double av) : std::runtime_error(what), required(req), available(av) {}
};

inline void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t, std::size_t)>& fn) {
    if(threads <= 1 || n < 4096) {
        fn(0, n);
        return;
    }
    std::vector<std::thread> pool;
    std::size_t chunk = (n + std::size_t(threads) - 1) / std::size_t(threads);
    for(int t = 0; t < threads; ++t) {
        std::size_t b = std::size_t(t) * chunk, e = std::min(n, b + chunk);
        if(b >= e) break;
        pool.emplace_back(fn, b, e);
    }
    for(auto& th : pool) th.join();
}

// Streams H|v> over the Pauli terms: one diagonal array plus one flip pattern per distinct X mask.
class SparseHamiltonian {
  public:
    SparseHamiltonian() = default;
    explicit SparseHamiltonian(const OperatorSum& h, int threads = 1) : n_(h.num_qubits()), threads_(threads) {
        if(n_ > 40) throw std::invalid_argument("register too large for a state vector");
        dim_ = std::size_t(1) << n_;
        diag_.assign(dim_, 0.0);
        std::map<Mask, std::size_t> gidx;
        for(auto& t : h) {
            cplx f = t.coeff * ipow(t.op.phase + popcount(t.op.x & t.op.z));
            if(std::abs(f.imag()) > 0) real_ = false;
            if(t.op.x == 0) {
                diag_terms_.push_back({f, t.op.z});
                continue;
            }
            auto it = gidx.find(t.op.x);
            if(it == gidx.end()) {
                gidx[t.op.x] = groups_.size();
                groups_.push_back({t.op.x, {}});
                it = gidx.find(t.op.x);
            }
            groups_[it->second].terms.push_back({f, t.op.z});
        }
        if(!real_) diagc_.assign(dim_, cplx(0));
        parallel_for(dim_, threads_, [&](std::size_t b, std::size_t e) {
            for(std::size_t i = b; i < e; ++i) {
                cplx s = 0;
                for(auto& [f, z] : diag_terms_) s += parity(i & z) ? -f : f;
                if(real_) diag_[i] = s.real();
                else diagc_[i] = s;
            }
        });
    }

    int         num_qubits() const { return n_; }
    std::size_t dim() const { return dim_; }
    bool        is_real() const { return real_; }
    void        set_threads(int t) { threads_ = t; }

    template<typename S>
    void apply(const S* in, S* out) const {
        if constexpr(std::is_same_v<S, double>)
            if(!real_) throw std::invalid_argument("complex Hamiltonian applied to a real vector");
        parallel_for(dim_, threads_, [&](std::size_t b, std::size_t e) {
            for(std::size_t i = b; i < e; ++i) {
                S acc;
                if constexpr(std::is_same_v<S, double>) acc = diag_[i] * in[i];
                else acc = (real_ ? cplx(diag_[i]) : diagc_[i]) * in[i];
                for(auto& g : groups_) {
                    std::size_t j = i ^ g.x;
                    if constexpr(std::is_same_v<S, double>) {
                        double f = 0;
                        for(auto& [a, z] : g.terms) f += parity(j & z) ? -a.real() : a.real();
                        acc += f * in[j];
                    } else {
                        cplx f = 0;
                        for(auto& [a, z] : g.terms) f += parity(j & z) ? -a : a;
                        acc += f * in[j];
                    }
                }
                out[i] = acc;
            }
        });
    }
    // nonzero entries H(i, j) of column j, diagonal first
    template<typename F>
    void for_each_in_column(std::size_t j, F&& fn) const {
        fn(j, real_ ? cplx(diag_[j]) : diagc_[j]);
        for(auto& g : groups_) {
            cplx f = 0;
            for(auto& [a, z] : g.terms) f += parity(j & z) ? -a : a;
            if(f != cplx(0)) fn(j ^ g.x, f);
        }
    }

    template<typename V>
    V operator*(const V& v) const {
        V out(v.size());
        apply(v.data(), out.data());
        return out;
    }

    MatC dense() const {
        if(n_ > 14) throw std::invalid_argument("dense matrix beyond 2^14");
        MatC m = MatC::Zero(Eigen::Index(dim_), Eigen::Index(dim_));
        VecC e = VecC::Zero(Eigen::Index(dim_));
        VecC col = VecC::Zero(Eigen::Index(dim_));
        for(std::size_t j = 0; j < dim_; ++j) {
            e.setZero();
            e[Eigen::Index(j)] = 1;
            apply(e.data(), col.data());
            m.col(Eigen::Index(j)) = col;
        }
        return m;
    }
    MatD dense_real() const {
        if(!real_) throw std::invalid_argument("Hamiltonian is not real");
        if(n_ > 14) throw std::invalid_argument("dense matrix beyond 2^14");
        MatD m = MatD::Zero(Eigen::Index(dim_), Eigen::Index(dim_));
        for(std::size_t i = 0; i < dim_; ++i) {
            m(Eigen::Index(i), Eigen::Index(i)) += diag_[i];
            for(auto& g : groups_) {
                std::size_t j = i ^ g.x;
                double f = 0;
                for(auto& [a, z] : g.terms) f += parity(j & z) ? -a.real() : a.real();
                m(Eigen::Index(i), Eigen::Index(j)) += f;
            }
        }
        return m;
    }

  private:
    struct Group {
        Mask                              x;
        std::vector<std::pair<cplx, Mask>> terms;
    };
    int                                n_ = 0;
    int                                threads_ = 1;
    std::size_t                        dim_ = 0;
    bool                               real_ = true;
    std::vector<double>                diag_;
    std::vector<cplx>                  diagc_;
    std::vector<std::pair<cplx, Mask>> diag_terms_;
    std::vector<Group>                 groups_;
};

struct LanczosOptions {
    double        tol = 1e-9;
    int           krylov = 120;
    int           max_restarts = 60;
    std::uint64_t seed = 7;
    double        store_limit_bytes = 1.5e9; // above this the basis is regenerated in a second pass
};

struct GroundState {
    double      energy = 0;
    StateVector state;
    double      residual = 0;
    int         matvecs = 0;
};

namespace detail {

template<typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

template<typename S>
GroundState lanczos_ground(const SparseHamiltonian& H, const LanczosOptions& o, const Vec<S>* start) {
    const Eigen::Index n = Eigen::Index(H.dim());
    Vec<S> v(n);
    if(start) v = *start;
    else {
        std::mt19937_64 rng(o.seed);
        std::normal_distribution<double> N;
        for(Eigen::Index i = 0; i < n; ++i) {
            if constexpr(std::is_same_v<S, double>) v[i] = N(rng);
            else v[i] = cplx(N(rng), N(rng));
        }
    }
    v.normalize();
    GroundState gs;
    const int  m = int(std::min<Eigen::Index>(o.krylov, n));
    const bool store = double(n) * m * sizeof(S) <= o.store_limit_bytes;
    Vec<S> w(n), x(n), hx(n);
    double theta = 0, res = std::numeric_limits<double>::infinity();
    for(int restart = 0; restart <= o.max_restarts; ++restart) {
        std::vector<double> al, be;
        Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic> V;
        if(store) V.resize(n, m);
        Vec<S> vprev = Vec<S>::Zero(n), vc = v;
        Eigen::VectorXd ritz;
        int steps = 0;
        for(int j = 0; j < m; ++j) {
            if(store) V.col(j) = vc;
            H.apply(vc.data(), w.data());
            ++gs.matvecs;
            double a = std::real(vc.dot(w));
            al.push_back(a);
            w -= a * vc;
            if(j > 0) w -= be.back() * vprev;
            if(store) {
                for(int pass = 0; pass < 2; ++pass)
                    for(int k = 0; k <= j; ++k) w -= V.col(k) * V.col(k).dot(w);
            }
            double b = w.norm();
            steps = j + 1;
            bool last = (j == m - 1) || b < 1e-13;
            if(!last && (j % 5 != 4)) {
                be.push_back(b);
                vprev = vc;
                vc = w / b;
                continue;
            }
            Eigen::SelfAdjointEigenSolver<MatD> es;
            Eigen::VectorXd d = Eigen::Map<Eigen::VectorXd>(al.data(), steps);
            Eigen::VectorXd e = Eigen::Map<Eigen::VectorXd>(be.data(), steps - 1);
            es.computeFromTridiagonal(d, e);
            ritz = es.eigenvectors().col(0);
            theta = es.eigenvalues()[0];
            if(last || b * std::abs(ritz[steps - 1]) < 0.05 * o.tol) break;
            be.push_back(b);
            vprev = vc;
            vc = w / b;
        }
        // Ritz vector
        if(store) x = V.leftCols(steps) * ritz.head(steps).template cast<S>();
        else {
            x.setZero();
            Vec<S> p = Vec<S>::Zero(n), c = v;
            for(int j = 0; j < steps; ++j) {
                x += ritz[j] * c;
                if(j == steps - 1) break;
                H.apply(c.data(), w.data());
                ++gs.matvecs;
                w -= al[std::size_t(j)] * c;
                if(j > 0) w -= be[std::size_t(j - 1)] * p;
                p = c;
                c = w / be[std::size_t(j)];
            }
        }
        x.normalize();
        H.apply(x.data(), hx.data());
        ++gs.matvecs;
        theta = std::real(x.dot(hx));
        res = (hx - theta * x).norm();
        if(res < o.tol) break;
        v = x;
    }
    gs.energy = theta;
    gs.residual = res;
    gs.state.register_size = H.num_qubits();
    if constexpr(std::is_same_v<S, double>) gs.state.amplitudes = x.template cast<cplx>();
    else gs.state.amplitudes = x;
    if(!(res < o.tol)) throw NonConvergence("ground_state: Lanczos did not reach tolerance", res);
    return gs;
}

} // namespace detail

inline GroundState ground_state(const SparseHamiltonian& H, const LanczosOptions& o = {}) {
    if(H.is_real()) return detail::lanczos_ground<double>(H, o, nullptr);
    return detail::lanczos_ground<cplx>(H, o, nullptr);
}
inline GroundState ground_state(const OperatorSum& h, const LanczosOptions& o = {}) { return ground_state(SparseHamiltonian(h), o); }

struct DenseEigen {
    Eigen::VectorXd values;
    MatC            vectors; // empty when only values were requested
};

inline DenseEigen dense_eigen(const SparseHamiltonian& H, bool vectors = true) {
    DenseEigen out;
    if(H.is_real()) {
        Eigen::SelfAdjointEigenSolver<MatD> es(H.dense_real(), vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
        out.values = es.eigenvalues();
        if(vectors) out.vectors = es.eigenvectors().cast<cplx>();
    } else {
        Eigen::SelfAdjointEigenSolver<MatC> es(H.dense(), vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
        out.values = es.eigenvalues();
        if(vectors) out.vectors = es.eigenvectors();
    }
    return out;
}

inline Eigen::VectorXd full_spectrum(const OperatorSum& h) { return dense_eigen(SparseHamiltonian(h), false).values; }

struct EigenSelector {
    enum class Mode { Index, Random } mode = Mode::Index;
    std::size_t   index = 0;
    std::uint64_t seed = 0;
    double        window = 0.5; // middle fraction used by the random mode

    static EigenSelector at(std::size_t k) { return {Mode::Index, k, 0, 0.5}; }
    static EigenSelector random(std::uint64_t s) { return {Mode::Random, 0, s, 0.5}; }
};

// Index drawn uniformly from the middle `window` fraction of [0, dim).
inline std::size_t random_middle_index(std::size_t dim, std::uint64_t seed, double window = 0.5) {
    std::size_t lo = std::size_t(std::floor(double(dim) * (0.5 - window / 2)));
    std::size_t hi = std::size_t(std::ceil(double(dim) * (0.5 + window / 2)));
    hi = std::min(std::max(hi, lo + 1), dim);
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> U(lo, hi - 1);
    return U(rng);
}

struct Eigenpair {
    double      energy = 0;
    std::size_t index = 0;
    StateVector state;
    double      residual = 0;
};

inline Eigenpair eigenstate_near(const SparseHamiltonian& H, const EigenSelector& sel) {
    DenseEigen de = dense_eigen(H, true);
    std::size_t dim = std::size_t(de.values.size());
    std::size_t k = sel.mode == EigenSelector::Mode::Index ? sel.index : random_middle_index(dim, sel.seed, sel.window);
    if(k >= dim) throw std::out_of_range("eigenstate_near: index out of range");
    Eigenpair ep;
    ep.energy = de.values[Eigen::Index(k)];
    ep.index = k;
    ep.state.register_size = H.num_qubits();
    ep.state.amplitudes = de.vectors.col(Eigen::Index(k));
    // fix the global phase so the largest amplitude is real positive
    Eigen::Index imax;
    ep.state.amplitudes.cwiseAbs().maxCoeff(&imax);
    ep.state.amplitudes *= std::conj(ep.state.amplitudes[imax]) / std::abs(ep.state.amplitudes[imax]);
    VecC hv(ep.state.amplitudes.size());
    H.apply(ep.state.amplitudes.data(), hv.data());
    ep.residual = (hv - ep.energy * ep.state.amplitudes).norm();
    return ep;
}

struct EvolveOptions {
    int    krylov = 30;
    double tol = 1e-12; // local error estimate per step
    double max_step = 1e9;
};

// |psi(t)> = exp(-iHt)|psi(0)> on a nondecreasing time grid, Krylov-Lanczos with adaptive substeps.
// Streaming form: `visit(k, state)` is called at each grid point, nothing is stored.
inline void evolve_each(const SparseHamiltonian& H, const StateVector& psi0, const std::vector<double>& t_grid,
                        const std::function<void(std::size_t, const StateVector&)>& visit, const EvolveOptions& o = {}) {
    if(psi0.dim() != H.dim()) throw std::invalid_argument("evolve: dimension mismatch");
    for(std::size_t k = 1; k < t_grid.size(); ++k)
        if(t_grid[k] < t_grid[k - 1]) throw std::invalid_argument("evolve: time grid must be nondecreasing");
    const Eigen::Index n = Eigen::Index(H.dim());
    const int m = int(std::min<Eigen::Index>(o.krylov, n));
    VecC psi = psi0.amplitudes;
    std::size_t index = 0;
    double t = t_grid.empty() ? 0.0 : std::min(0.0, t_grid.front());
    double dt_guess = 0.1;
    MatC V(n, m + 1);
    VecC w(n);
    for(double target : t_grid) {
        while(target - t > 1e-15) {
            double nrm = psi.norm();
            V.col(0) = psi / nrm;
            std::vector<double> al, be;
            int steps = 0;
            bool exhausted = false;
            for(int j = 0; j < m; ++j) {
                H.apply(V.col(j).data(), w.data());
                double a = V.col(j).dot(w).real();
                al.push_back(a);
                w -= a * V.col(j);
                if(j > 0) w -= be.back() * V.col(j - 1);
                for(int k = 0; k <= j; ++k) w -= V.col(k) * V.col(k).dot(w);
                double b = w.norm();
                be.push_back(b);
                steps = j + 1;
                if(b < 1e-12) {
                    exhausted = true;
                    break;
                }
                V.col(j + 1) = w / b;
            }
            Eigen::VectorXd d = Eigen::Map<Eigen::VectorXd>(al.data(), steps);
            Eigen::VectorXd e = Eigen::Map<Eigen::VectorXd>(be.data(), steps - 1);
            Eigen::SelfAdjointEigenSolver<MatD> es;
            if(steps > 1) es.computeFromTridiagonal(d, e);
            auto coeffs = [&](double dt) {
                VecC y(steps);
                if(steps == 1) {
                    y[0] = std::exp(cplx(0, -d[0] * dt));
                    return y;
                }
                const MatD& S = es.eigenvectors();
                VecC ph(steps);
                for(int k = 0; k < steps; ++k) ph[k] = std::exp(cplx(0, -es.eigenvalues()[k] * dt)) * S(0, k);
                y = S.cast<cplx>() * ph;
                return y;
            };
            double dt = std::min({target - t, o.max_step, exhausted ? target - t : dt_guess * 2});
            VecC y;
            for(int tries = 0; tries < 60; ++tries) {
                y = coeffs(dt);
                double err = exhausted ? 0.0 : be.back() * std::abs(y[steps - 1]);
                if(err <= o.tol) break;
                dt *= 0.5;
            }
            psi = nrm * (V.leftCols(steps) * y);
            t += dt;
            if(!exhausted) dt_guess = dt;
        }
        StateVector s;
        s.amplitudes = psi;
        s.register_size = psi0.register_size;
        visit(index++, s);
    }
}

inline std::vector<StateVector> evolve(const SparseHamiltonian& H, const StateVector& psi0, const std::vector<double>& t_grid,
                                       const EvolveOptions& o = {}) {
    std::vector<StateVector> out;
    evolve_each(H, psi0, t_grid, [&](std::size_t, const StateVector& s) { out.push_back(s); }, o);
    return out;
}

inline double expectation(const SparseHamiltonian& H, const VecC& psi) {
    VecC hv(psi.size());
    H.apply(psi.data(), hv.data());
    return psi.dot(hv).real() / psi.squaredNorm();
}

// Canonical ensemble from a full spectrum; energies are shifted by the ground energy internally.
class ThermalSpectrum {
  public:
    explicit ThermalSpectrum(Eigen::VectorXd energies) : e_(std::move(energies)) {
        if(e_.size() == 0) throw std::invalid_argument("empty spectrum");
        e0_ = e_.minCoeff();
    }
    Eigen::VectorXd weights(double beta) const {
        Eigen::VectorXd p = (-beta * (e_.array() - e0_)).exp();
        return p / p.sum();
    }
    double energy(double beta) const { return weights(beta).dot(e_); }
    double entropy(double beta) const {
        Eigen::VectorXd p = weights(beta);
        double s = 0;
        for(double x : p)
            if(x > 0) s -= x * std::log(x);
        return s;
    }
    double ground() const { return e0_; }
    double mean() const { return e_.mean(); }
    const Eigen::VectorXd& energies() const { return e_; }

  private:
    Eigen::VectorXd e_;
    double          e0_;
};

inline DensityMatrix thermal_density_matrix(const SparseHamiltonian& H, double beta) {
    if(beta < 0) throw std::invalid_argument("negative beta");
    if(H.num_qubits() > 13) throw std::invalid_argument("thermal_density_matrix: dimension beyond dense budget");
    DenseEigen de = dense_eigen(H, true);
    ThermalSpectrum ts(de.values);
    Eigen::VectorXd p = ts.weights(beta);
    DensityMatrix rho;
    rho.matrix = de.vectors * p.cast<cplx>().asDiagonal() * de.vectors.adjoint();
    rho.matrix = 0.5 * (rho.matrix + rho.matrix.adjoint()).eval();
    rho.basis = "full";
    return rho;
}

struct BetaMatch {
    double beta = 0;
    bool   capped = false; // target at the ground-state edge, beta reported as beta_max
    double residual = 0;
};

enum class BetaTarget { Energy, Entropy };

inline BetaMatch match_beta(const ThermalSpectrum& ts, BetaTarget kind, double target, double beta_max = 1e3) {
    auto f = [&](double b) { return kind == BetaTarget::Energy ? ts.energy(b) : ts.entropy(b); };
    double hi_val = f(0.0), lo_val = f(beta_max);
    double scale = std::max(1.0, std::abs(target));
    if(target > hi_val + 1e-12 * scale) throw std::invalid_argument("match_beta: target requires negative beta");
    if(target <= lo_val + 1e-9 * scale) return {beta_max, true, std::abs(lo_val - target)};
    if(std::abs(target - hi_val) <= 1e-12 * scale) return {0.0, false, 0.0};
    double a = 0, b = beta_max;
    // both observables decrease with beta
    for(int it = 0; it < 300; ++it) {
        double mid = 0.5 * (a + b);
        double v = f(mid);
        if(v > target) a = mid;
        else b = mid;
        if(std::abs(v - target) < 1e-10 * scale && b - a < 1e-12) break;
    }
    double beta = 0.5 * (a + b);
    return {beta, false, std::abs(f(beta) - target) / scale};
}

} // namespace z2ent
