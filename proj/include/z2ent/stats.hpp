#pragma once
#include "entanglement.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

namespace z2ent {

struct UnfoldedSpectrum {
    std::vector<double> raw;
    std::vector<double> unfolded;
    int                 fit_degree = 3;
    bool                monotone = true; // fitted counting function nondecreasing on the levels
};

// Polynomial fit of the cumulative counting function N(xi) = n, evaluated at the levels.
inline UnfoldedSpectrum unfold(std::vector<double> levels, int degree = 3) {
    if(degree < 1) throw std::invalid_argument("unfold: degree must be positive");
    if(int(levels.size()) < degree + 5) throw std::invalid_argument("unfold: too few levels");
    std::sort(levels.begin(), levels.end());
    const Eigen::Index n = Eigen::Index(levels.size());
    // centered and scaled abscissa keeps the Vandermonde system well conditioned
    double lo = levels.front(), hi = levels.back();
    double c = 0.5 * (lo + hi), s = hi > lo ? 0.5 * (hi - lo) : 1.0;
    MatD V(n, degree + 1);
    Eigen::VectorXd y(n);
    for(Eigen::Index i = 0; i < n; ++i) {
        double x = (levels[std::size_t(i)] - c) / s, p = 1;
        for(int k = 0; k <= degree; ++k, p *= x) V(i, k) = p;
        y[i] = double(i);
    }
    Eigen::VectorXd coef = V.colPivHouseholderQr().solve(y);
    UnfoldedSpectrum u;
    u.raw = levels;
    u.fit_degree = degree;
    Eigen::VectorXd f = V * coef;
    u.unfolded.assign(f.data(), f.data() + f.size());
    for(std::size_t k = 1; k < u.unfolded.size(); ++k)
        if(u.unfolded[k] < u.unfolded[k - 1]) u.monotone = false;
    return u;
}

inline std::vector<double> spacings(const std::vector<double>& sorted_levels) {
    std::vector<double> s;
    for(std::size_t k = 1; k < sorted_levels.size(); ++k) s.push_back(sorted_levels[k] - sorted_levels[k - 1]);
    return s;
}

enum class Ensemble { Poisson, GOE, GUE };
enum class Observable { Spacing, Ratio };

inline double rmt_reference(Ensemble e, Observable o, double x) {
    if(x < 0) throw std::invalid_argument("rmt_reference: negative argument");
    const double pi = std::numbers::pi;
    if(o == Observable::Spacing) {
        switch(e) {
        case Ensemble::Poisson: return std::exp(-x);
        case Ensemble::GOE: return pi / 2 * x * std::exp(-pi / 4 * x * x);
        case Ensemble::GUE: return 32 / (pi * pi) * x * x * std::exp(-4 / pi * x * x);
        }
    }
    const double q = 1 + x + x * x;
    switch(e) {
    case Ensemble::Poisson: return 2 / ((1 + x) * (1 + x));
    case Ensemble::GOE: return 27.0 / 4 * (x + x * x) / std::pow(q, 2.5);
    case Ensemble::GUE: return 81.0 / 2 * std::sqrt(3.0) / pi * std::pow(x + x * x, 2) / std::pow(q, 4);
    }
    return 0;
}

// Mean of the ratio density restricted to [0,1], by Simpson quadrature.
inline double rmt_mean_ratio(Ensemble e, int panels = 2000) {
    double h = 1.0 / panels, s = 0, z = 0;
    for(int k = 0; k <= panels; ++k) {
        double x = k * h, w = (k == 0 || k == panels) ? 1 : (k % 2 ? 4 : 2);
        double p = rmt_reference(e, Observable::Ratio, x);
        s += w * x * p;
        z += w * p;
    }
    return s / z;
}

struct Histogram {
    std::vector<double> edges;
    std::vector<double> density;
};

inline Histogram histogram(const std::vector<double>& v, double lo, double hi, int bins) {
    Histogram h;
    for(int k = 0; k <= bins; ++k) h.edges.push_back(lo + (hi - lo) * k / bins);
    h.density.assign(std::size_t(bins), 0.0);
    double w = (hi - lo) / bins;
    std::size_t used = 0;
    for(double x : v) {
        if(x < lo || x > hi) continue;
        int b = std::min(bins - 1, int((x - lo) / w));
        h.density[std::size_t(b)] += 1;
        ++used;
    }
    if(used)
        for(auto& d : h.density) d /= double(used) * w;
    return h;
}

struct RatioStats {
    std::map<int, std::vector<double>> ratios; // per sector
    std::vector<double>                pooled;
    double                             mean = 0;
    Histogram                          hist;
    int                                skipped_sectors = 0;    // fewer than three levels
    int                                degenerate_sectors = 0; // systematic exact degeneracies, see gap_ratio_stats
};

inline std::vector<double> gap_ratios(const std::vector<double>& sorted_levels) {
    std::vector<double> r;
    auto d = spacings(sorted_levels);
    for(std::size_t k = 1; k < d.size(); ++k) {
        double a = d[k], b = d[k - 1];
        double mx = std::max(a, b);
        r.push_back(mx > 0 ? std::min(a, b) / mx : 1.0);
    }
    return r;
}

struct RatioOptions {
    int    bins = 20;
    // a sector where more than `degenerate_fraction` of the spacings are below `degenerate_tol` carries an
    // unresolved symmetry; its ratios are not level statistics and it is left out
    double degenerate_tol = 1e-9;
    double degenerate_fraction = 0.25;
};

// Ratios within each sector, then pooled.
inline RatioStats gap_ratio_stats(const std::map<int, std::vector<double>>& sectors, const RatioOptions& o = {}) {
    RatioStats st;
    for(auto& [sec, lv] : sectors) {
        if(lv.size() < 3) {
            ++st.skipped_sectors;
            continue;
        }
        auto s = lv;
        std::sort(s.begin(), s.end());
        auto d = spacings(s);
        auto tiny = std::count_if(d.begin(), d.end(), [&](double x) { return x < o.degenerate_tol; });
        if(double(tiny) > o.degenerate_fraction * double(d.size())) {
            ++st.degenerate_sectors;
            continue;
        }
        auto r = gap_ratios(s);
        st.pooled.insert(st.pooled.end(), r.begin(), r.end());
        st.ratios[sec] = std::move(r);
    }
    if(!st.pooled.empty()) st.mean = std::accumulate(st.pooled.begin(), st.pooled.end(), 0.0) / double(st.pooled.size());
    st.hist = histogram(st.pooled, 0.0, 1.0, o.bins);
    return st;
}

inline RatioStats gap_ratio_stats(const EntanglementSpectrum& es, const RatioOptions& o = {}) { return gap_ratio_stats(es.by_sector(), o); }

// Unfolded spacings per sector, pooled. Sectors too short for the fit are skipped.
inline std::vector<double> unfolded_spacings(const std::map<int, std::vector<double>>& sectors, int degree = 3, int* skipped = nullptr) {
    std::vector<double> out;
    int sk = 0;
    for(auto& [sec, lv] : sectors) {
        if(int(lv.size()) < degree + 5) {
            ++sk;
            continue;
        }
        auto u = unfold(lv, degree);
        auto s = spacings(u.unfolded);
        out.insert(out.end(), s.begin(), s.end());
    }
    if(skipped) *skipped = sk;
    return out;
}

// -log sum sqrt(p q) over probabilities sorted in descending order and padded with zeros.
inline double bhattacharyya(std::vector<double> p, std::vector<double> q, double tol = 1e-8) {
    auto check = [&](const std::vector<double>& v) {
        double s = 0;
        for(double x : v) {
            if(x < 0) throw std::invalid_argument("bhattacharyya: negative probability");
            s += x;
        }
        if(std::abs(s - 1) > tol) throw std::invalid_argument("bhattacharyya: input not normalized");
    };
    check(p);
    check(q);
    std::sort(p.begin(), p.end(), std::greater<>());
    std::sort(q.begin(), q.end(), std::greater<>());
    std::size_t n = std::max(p.size(), q.size());
    p.resize(n, 0.0);
    q.resize(n, 0.0);
    double bc = 0;
    for(std::size_t k = 0; k < n; ++k) bc += std::sqrt(p[k] * q[k]);
    if(bc <= 0) return std::numeric_limits<double>::infinity();
    return std::max(0.0, -std::log(std::min(1.0, bc)));
}

// ---- self-similar scaling ----

struct SchmidtSnapshot {
    double              t = 0;     // in units of 1/epsilon, i.e. epsilon * t
    std::vector<double> probs;     // descending
};

struct GridAxis {
    double lo = 0, hi = 0, step = 1;
    std::size_t size() const { return std::size_t(std::floor((hi - lo) / step + 1e-9)) + 1; }
    double      at(std::size_t k) const { return lo + step * double(k); }
};

struct ScalingGrids {
    GridAxis alpha{0.0, 1.6, 0.02};
    GridAxis beta{-0.4, 0.4, 0.02};
    GridAxis t0{0.0, 4.0, 0.1};
};

struct GaussianEstimate {
    double mean = 0;
    double sigma = 0;
    bool   at_edge = false;
};

struct ScalingFit {
    double              alpha = 0, beta = 0, t0 = 0; // grid minimum
    GaussianEstimate    alpha_fit, beta_fit, t0_fit; // from the marginals
    double              chi2_min = 0;
    std::vector<double> chi2;                        // index (ia * nb + ib) * nt + it
    std::vector<double> w_alpha, w_beta, w_t0;
    ScalingGrids        grids;
    bool                window_clipped = false; // reference window cut at the Schmidt rank
    bool                extrapolated = false;   // best cell needed levels beyond a test spectrum
    std::size_t         cell(std::size_t ia, std::size_t ib, std::size_t it) const {
        return (ia * grids.beta.size() + ib) * grids.t0.size() + it;
    }
};

namespace detail {

// log P at continuous index x in [1, n], linear in (log n, log P) between integer levels
inline double interp_log(const std::vector<double>& logp, double x, bool& outside) {
    const double n = double(logp.size());
    if(x < 1.0 || x > n) {
        outside = true;
        x = std::clamp(x, 1.0, n);
    }
    std::size_t k = std::size_t(x); // level k sits at logp[k - 1]
    if(k >= logp.size()) return logp.back();
    double l0 = std::log(double(k)), l1 = std::log(double(k + 1));
    return logp[k - 1] + (logp[k] - logp[k - 1]) * (std::log(x) - l0) / (l1 - l0);
}

inline GaussianEstimate gaussian_peak(const GridAxis& ax, const std::vector<double>& w) {
    GaussianEstimate g;
    std::size_t kmax = std::size_t(std::max_element(w.begin(), w.end()) - w.begin());
    g.mean = ax.at(kmax);
    g.sigma = 0.5 * ax.step;
    g.at_edge = kmax == 0 || kmax + 1 == w.size();
    // quadratic fit of log W over the points above W_max e^{-2}
    std::vector<double> xs, ys;
    double lmax = std::log(w[kmax]);
    for(std::size_t k = kmax; k < w.size() && w[k] > 0 && std::log(w[k]) > lmax - 2; ++k) {
        xs.push_back(ax.at(k));
        ys.push_back(std::log(w[k]));
    }
    for(std::size_t k = kmax; k-- > 0 && w[k] > 0 && std::log(w[k]) > lmax - 2;) {
        xs.push_back(ax.at(k));
        ys.push_back(std::log(w[k]));
    }
    if(xs.size() < 3) return g;
    MatD A(Eigen::Index(xs.size()), 3);
    Eigen::VectorXd y(Eigen::Index(xs.size()));
    for(std::size_t k = 0; k < xs.size(); ++k) {
        double u = xs[k] - g.mean;
        A(Eigen::Index(k), 0) = 1;
        A(Eigen::Index(k), 1) = u;
        A(Eigen::Index(k), 2) = u * u;
        y[Eigen::Index(k)] = ys[k];
    }
    Eigen::VectorXd c = A.colPivHouseholderQr().solve(y);
    if(c[2] >= 0) return g;
    g.sigma = std::sqrt(-1.0 / (2 * c[2]));
    g.mean += -c[1] / (2 * c[2]);
    return g;
}

} // namespace detail

// chi^2(alpha, beta, t0) of the collapse f_t(nh) = alpha log tau + log P(nh tau^-beta, t), tau = t - t0, relative to
// the reference time over the index window [n_lo, n_hi] of the reference spectrum, weights dn/n.
inline ScalingFit scaling_fit(const std::vector<SchmidtSnapshot>& spectra, double t_ref, const std::vector<double>& t_tests, std::size_t n_lo,
                              std::size_t n_hi, const ScalingGrids& grids = {}) {
    auto find = [&](double t) -> const SchmidtSnapshot& {
        for(auto& s : spectra)
            if(std::abs(s.t - t) < 1e-9 * std::max(1.0, std::abs(t))) return s;
        throw std::invalid_argument("scaling_fit: no spectrum at requested time");
    };
    if(grids.alpha.size() < 3 || grids.beta.size() < 3 || grids.t0.size() < 3) throw std::invalid_argument("scaling_fit: degenerate grid");
    if(t_tests.empty() || n_lo < 1 || n_hi <= n_lo) throw std::invalid_argument("scaling_fit: empty test set or window");
    if(grids.t0.hi >= std::min(t_ref, *std::min_element(t_tests.begin(), t_tests.end())))
        throw std::invalid_argument("scaling_fit: onset grid reaches the fitted times");
    ScalingFit out;
    out.grids = grids;
    auto logs = [](const SchmidtSnapshot& s) {
        std::vector<double> l;
        for(double p : s.probs) {
            if(p <= 0) break;
            l.push_back(std::log(p));
        }
        return l;
    };
    auto ref = logs(find(t_ref));
    if(n_hi > ref.size()) {
        n_hi = ref.size();
        out.window_clipped = true;
        if(n_hi <= n_lo) throw std::invalid_argument("scaling_fit: window beyond the Schmidt rank");
    }
    std::vector<std::vector<double>> tests;
    for(double t : t_tests) tests.push_back(logs(find(t)));

    const std::size_t na = grids.alpha.size(), nb = grids.beta.size(), nt = grids.t0.size();
    out.chi2.assign(na * nb * nt, 0.0);
    std::vector<char> outside_bt(nb * nt, 0);
    for(std::size_t ib = 0; ib < nb; ++ib)
        for(std::size_t it = 0; it < nt; ++it) {
            const double beta = grids.beta.at(ib), t0 = grids.t0.at(it);
            const double lr = std::log(t_ref - t0);
            bool outside = false;
            // numerator and denominator are quadratics in alpha: sum over tests of (A + alpha B)^2 w, (C + alpha D)^2 w
            double den0 = 0, den1 = 0, den2 = 0;
            std::vector<std::array<double, 3>> num(tests.size(), {0, 0, 0});
            for(std::size_t n = n_lo; n <= n_hi; ++n) {
                const double w = 1.0 / double(n);
                const double lpr = ref[n - 1];
                den0 += w * lpr * lpr;
                den1 += w * 2 * lpr * lr;
                den2 += w * lr * lr;
                const double nh = std::exp(beta * lr) * double(n);
                for(std::size_t k = 0; k < tests.size(); ++k) {
                    const double lt = std::log(t_tests[k] - t0);
                    const double x = nh * std::exp(-beta * lt);
                    const double a = detail::interp_log(tests[k], x, outside) - lpr, b = lt - lr;
                    num[k][0] += w * a * a;
                    num[k][1] += w * 2 * a * b;
                    num[k][2] += w * b * b;
                }
            }
            outside_bt[ib * nt + it] = outside;
            for(std::size_t ia = 0; ia < na; ++ia) {
                const double al = grids.alpha.at(ia);
                const double den = den0 + al * den1 + al * al * den2;
                double c = 0;
                for(auto& q : num) c += (q[0] + al * q[1] + al * al * q[2]) / den;
                out.chi2[out.cell(ia, ib, it)] = c / double(tests.size());
            }
        }
    std::size_t best = std::size_t(std::min_element(out.chi2.begin(), out.chi2.end()) - out.chi2.begin());
    out.chi2_min = out.chi2[best];
    out.alpha = grids.alpha.at(best / (nb * nt));
    out.beta = grids.beta.at((best / nt) % nb);
    out.t0 = grids.t0.at(best % nt);
    out.extrapolated = outside_bt[best % (nb * nt)];
    const double scale = std::max(out.chi2_min, std::numeric_limits<double>::min());
    out.w_alpha.assign(na, 0.0);
    out.w_beta.assign(nb, 0.0);
    out.w_t0.assign(nt, 0.0);
    double z = 0;
    for(std::size_t ia = 0; ia < na; ++ia)
        for(std::size_t ib = 0; ib < nb; ++ib)
            for(std::size_t it = 0; it < nt; ++it) {
                double w = std::exp(-out.chi2[out.cell(ia, ib, it)] / scale);
                out.w_alpha[ia] += w;
                out.w_beta[ib] += w;
                out.w_t0[it] += w;
                z += w;
            }
    for(auto* v : {&out.w_alpha, &out.w_beta, &out.w_t0})
        for(auto& x : *v) x /= z;
    out.alpha_fit = detail::gaussian_peak(grids.alpha, out.w_alpha);
    out.beta_fit = detail::gaussian_peak(grids.beta, out.w_beta);
    out.t0_fit = detail::gaussian_peak(grids.t0, out.w_t0);
    return out;
}

// ---- random matrix samplers for checks ----

inline std::vector<double> sample_goe(int n, std::mt19937_64& rng) {
    std::normal_distribution<double> N;
    MatD a(n, n);
    for(int i = 0; i < n; ++i)
        for(int j = 0; j < n; ++j) a(i, j) = N(rng);
    MatD h = (a + a.transpose()) / 2;
    Eigen::SelfAdjointEigenSolver<MatD> es(h, Eigen::EigenvaluesOnly);
    return {es.eigenvalues().data(), es.eigenvalues().data() + n};
}

inline std::vector<double> sample_gue(int n, std::mt19937_64& rng) {
    std::normal_distribution<double> N;
    MatC a(n, n);
    for(int i = 0; i < n; ++i)
        for(int j = 0; j < n; ++j) a(i, j) = cplx(N(rng), N(rng));
    MatC h = (a + a.adjoint()) / 2;
    Eigen::SelfAdjointEigenSolver<MatC> es(h, Eigen::EigenvaluesOnly);
    return {es.eigenvalues().data(), es.eigenvalues().data() + n};
}

} // namespace z2ent
