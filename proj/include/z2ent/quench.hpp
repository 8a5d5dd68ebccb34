#pragma once
#include "stats.hpp"
#include "symmetry.hpp"

#include <limits>

namespace z2ent {

enum class InitialState { RandomEigenstate, ElectricProduct };
enum class BetaMode { Entropy, Energy };

struct QuenchSettings {
    double        eps_initial = 0.1; // infinity selects the electric limit
    double        eps_final = 1.0;
    InitialState  initial = InitialState::RandomEigenstate;
    std::uint64_t seed = 1;
    double        window = 0.5;     // middle fraction of the spectrum for random eigenstates
    std::vector<double> times;      // physical times, nondecreasing
    BetaMode      beta_mode = BetaMode::Entropy;
    double        saturation_from = -1; // eps*t after which entropies are averaged for beta; <0 uses the last quarter
    bool          thermal_reference = true;
    double        cutoff = 1e-14;
    int           threads = 1;
    int           krylov = 30;
    std::size_t   dense_limit = 4096; // above this dimension eigenstates come from momentum blocks
    bool          generic_momentum = true;
};

struct QuenchPoint {
    double               t = 0;
    double               eps_t = 0;
    double               entropy = 0;
    double               electric = 0;
    double               magnetic = 0;
    double               bhattacharyya = std::numeric_limits<double>::quiet_NaN();
    double               mean_r = std::numeric_limits<double>::quiet_NaN();
    int                  ratio_count = 0;
    int                  degenerate_sectors = 0;
    int                  schmidt_rank = 0;
    EntanglementSpectrum es;
};

struct QuenchResult {
    std::size_t              initial_index = 0; // eigenvalue index (within the momentum block if any) or basis configuration
    int                      kx = 0, ky = 0;    // momentum block of the initial eigenstate
    std::size_t              block_dim = 0;
    double                   initial_energy = 0; // under the final Hamiltonian
    std::vector<QuenchPoint> points;
    double                   beta = std::numeric_limits<double>::quiet_NaN();
    bool                     beta_capped = false;
    std::vector<double>      thermal_probs; // descending
    double                   thermal_entropy = std::numeric_limits<double>::quiet_NaN();
};

inline Coupling coupling_for(double eps) { return std::isinf(eps) ? Coupling{1.0, true} : Coupling{eps, false}; }

// bytes for the state vectors, Krylov basis and dense work of a quench
inline double quench_memory_estimate(const CutSystem& cs, const QuenchSettings& s) {
    double d = double(cs.dim());
    double bytes = d * 16.0 * (double(s.krylov) + 4) + d * 8.0 * 4; // Krylov basis, work vectors, diagonals
    bytes += d * 16.0 * double(s.times.size() > 0 ? 1 : 0);
    if(s.initial == InitialState::RandomEigenstate && !std::isinf(s.eps_initial)) {
        if(cs.dim() <= s.dense_limit) bytes += 3.0 * d * d * 8.0;
        else {
            double b = d / double(cs.model.geo.nx() * cs.model.geo.ny);
            bytes += 1.2 * b * b * 16.0 + d * 64.0; // one block plus orbit tables
        }
    }
    double da = double(cs.dim_a());
    bytes += 4.0 * da * da * 16.0;
    return bytes;
}

inline StateVector quench_initial_state(const CutSystem& cs, const QuenchSettings& s, QuenchResult& r) {
    StateVector psi;
    psi.register_size = cs.space.nfree();
    const bool electric = s.initial == InitialState::ElectricProduct || std::isinf(s.eps_initial);
    if(electric) {
        // the electric Hamiltonian is diagonal here; any configuration is an eigenstate and a product across the cut
        std::mt19937_64 rng(s.seed);
        std::uniform_int_distribution<std::size_t> U(0, cs.dim() - 1);
        r.initial_index = U(rng);
        psi.amplitudes = VecC::Zero(Eigen::Index(cs.dim()));
        psi.amplitudes[Eigen::Index(r.initial_index)] = 1.0;
        return psi;
    }
    SparseHamiltonian h0(cs.hamiltonian(coupling_for(s.eps_initial)), s.threads);
    if(cs.dim() > s.dense_limit) {
        MomentumBlocks mb(cs);
        auto sp = eigenstate_near_symmetric(cs, h0, mb, s.seed, s.window, s.generic_momentum);
        r.initial_index = sp.ep.index;
        r.kx = sp.kx;
        r.ky = sp.ky;
        r.block_dim = sp.block_dim;
        return sp.ep.state;
    }
    EigenSelector sel = EigenSelector::random(s.seed);
    sel.window = s.window;
    auto ep = eigenstate_near(h0, sel);
    r.initial_index = ep.index;
    r.block_dim = cs.dim();
    return ep.state;
}

// Thermal reduced density matrix exp(-beta H_A)/Z, block structure of the cut kept.
struct ThermalReference {
    Eigen::VectorXd energies; // of H_A, ascending
    ThermalSpectrum spectrum;
    explicit ThermalReference(const CutSystem& cs, const Coupling& c)
        : energies(full_spectrum(cs.a_hamiltonian(c))), spectrum(energies) {}
    std::vector<double> probs(double beta) const {
        Eigen::VectorXd w = spectrum.weights(beta);
        std::vector<double> p(w.data(), w.data() + w.size());
        std::sort(p.rbegin(), p.rend());
        return p;
    }
};

inline QuenchResult run_quench_dynamics(const CutSystem& cs, const QuenchSettings& s) {
    if(s.times.empty()) throw std::invalid_argument("quench: empty time grid");
    if(std::isinf(s.eps_final) || s.eps_final <= 0) throw std::invalid_argument("quench: final coupling must be finite and positive");
    QuenchResult r;
    StateVector psi0 = quench_initial_state(cs, s, r);
    SparseHamiltonian H(cs.hamiltonian(coupling_for(s.eps_final)), s.threads);
    SparseHamiltonian He(cs.electric(), s.threads), Hm(cs.magnetic(), s.threads);
    r.initial_energy = expectation(H, psi0.amplitudes);

    EvolveOptions eo;
    eo.krylov = s.krylov;
    double energy_a0 = 0;
    SparseHamiltonian ha(cs.a_hamiltonian(coupling_for(s.eps_final)));
    evolve_each(
        H, psi0, s.times,
        [&](std::size_t k, const StateVector& st) {
            QuenchPoint p;
            p.t = s.times[k];
            p.eps_t = s.eps_final * p.t;
            auto blocks = reduce_to_a_blocks(st, cs);
            p.es = entanglement_spectrum(blocks, s.cutoff);
            p.entropy = von_neumann_entropy(p.es);
            p.schmidt_rank = p.es.schmidt_rank;
            p.electric = expectation(He, st.amplitudes);
            p.magnetic = expectation(Hm, st.amplitudes);
            auto rs = gap_ratio_stats(p.es);
            p.mean_r = rs.mean;
            p.ratio_count = int(rs.pooled.size());
            p.degenerate_sectors = rs.degenerate_sectors;
            r.points.push_back(std::move(p));
        },
        eo);
    {
        // energy of H_A in the initial state
        MatC hm = ha.is_real() ? MatC(ha.dense_real().cast<cplx>()) : ha.dense();
        energy_a0 = (reduce_to_a(psi0, cs).matrix * hm).trace().real();
    }

    if(s.thermal_reference) {
        ThermalReference tr(cs, coupling_for(s.eps_final));
        BetaMatch bm;
        if(s.beta_mode == BetaMode::Entropy) {
            double from = s.saturation_from;
            std::vector<double> late;
            if(from < 0) {
                std::size_t start = r.points.size() - std::max<std::size_t>(1, r.points.size() / 4);
                for(std::size_t k = start; k < r.points.size(); ++k) late.push_back(r.points[k].entropy);
            } else
                for(auto& p : r.points)
                    if(p.eps_t >= from) late.push_back(p.entropy);
            if(late.empty()) throw std::invalid_argument("quench: no points in the saturation window");
            double target = std::accumulate(late.begin(), late.end(), 0.0) / double(late.size());
            bm = match_beta(tr.spectrum, BetaTarget::Entropy, target);
        } else {
            bm = match_beta(tr.spectrum, BetaTarget::Energy, energy_a0);
        }
        r.beta = bm.beta;
        r.beta_capped = bm.capped;
        r.thermal_probs = tr.probs(bm.beta);
        r.thermal_entropy = tr.spectrum.entropy(bm.beta);
        for(auto& p : r.points) p.bhattacharyya = bhattacharyya(p.es.probabilities(), r.thermal_probs, 1e-6);
    }
    return r;
}

// First eps*t after which a series stays within `frac` of its late-time mean.
inline double saturation_time(const std::vector<double>& eps_t, const std::vector<double>& v, double frac = 0.05, double late_from = -1) {
    if(eps_t.size() != v.size() || v.empty()) throw std::invalid_argument("saturation_time: size mismatch");
    double from = late_from < 0 ? eps_t[eps_t.size() - std::max<std::size_t>(1, eps_t.size() / 4)] : late_from;
    double sum = 0;
    int n = 0;
    for(std::size_t k = 0; k < v.size(); ++k)
        if(eps_t[k] >= from) {
            sum += v[k];
            ++n;
        }
    if(n == 0) throw std::invalid_argument("saturation_time: empty late window");
    double m = sum / n;
    std::size_t first = v.size() - 1;
    for(std::size_t k = v.size(); k-- > 0;) {
        if(std::abs(v[k] - m) > frac * std::abs(m)) break;
        first = k;
    }
    return eps_t[first];
}

// First eps*t at which a series reaches its late plateau: v >= mean - nsigma * sd over the last
// `late_fraction` of the grid. Robust to the point-to-point scatter of noisy series such as <r>.
inline double saturation_onset(const std::vector<double>& eps_t, const std::vector<double>& v, double nsigma = 2.0, double late_fraction = 1.0 / 3) {
    if(eps_t.size() != v.size() || v.empty()) throw std::invalid_argument("saturation_onset: size mismatch");
    std::size_t n = std::max<std::size_t>(1, std::size_t(late_fraction * double(v.size())));
    double m = 0, q = 0;
    for(std::size_t k = v.size() - n; k < v.size(); ++k) m += v[k];
    m /= double(n);
    for(std::size_t k = v.size() - n; k < v.size(); ++k) q += (v[k] - m) * (v[k] - m);
    double sd = n > 1 ? std::sqrt(q / double(n - 1)) : 0.0;
    double floor = m - std::max(nsigma * sd, 1e-12 * std::abs(m));
    for(std::size_t k = 0; k < v.size(); ++k)
        if(v[k] >= floor) return eps_t[k];
    return eps_t.back();
}

inline std::vector<SchmidtSnapshot> schmidt_snapshots(const QuenchResult& r) {
    std::vector<SchmidtSnapshot> out;
    for(auto& p : r.points) {
        SchmidtSnapshot s;
        s.t = p.eps_t;
        s.probs = p.es.probabilities();
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace z2ent
