#pragma once
#include "config.hpp"
#include "verify.hpp"

#include <atomic>
#include <cstdio>
#include <ctime>
#include <exception>
#include <filesystem>
#include <sstream>
#include <thread>

#ifndef Z2ENT_VERSION
#define Z2ENT_VERSION "0.1.0"
#endif

namespace z2ent {

namespace exit_code {
constexpr int ok = 0, usage = 1, numeric = 2, budget = 3;
}

inline std::string fmt(double x) {
    if(std::isnan(x)) return "nan";
    if(std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char b[32];
    std::snprintf(b, sizeof b, "%.17g", x);
    return b;
}

inline json num(double x) { return std::isfinite(x) ? json(x) : json(fmt(x)); }

// Runs fn(0..n-1) on a pool and returns the results in index order. The exception of the
// lowest failing index is rethrown, so failures are as deterministic as the outputs.
template<typename R>
std::vector<R> ordered_map(std::size_t n, int threads, const std::function<R(std::size_t)>& fn) {
    std::vector<std::optional<R>>   out(n);
    std::vector<std::exception_ptr> err(n);
    std::atomic<std::size_t>        next{0};
    auto work = [&] {
        for(std::size_t k; (k = next++) < n;) {
            try {
                out[k] = fn(k);
            } catch(...) { err[k] = std::current_exception(); }
        }
    };
    std::size_t nt = std::min<std::size_t>(std::size_t(std::max(1, threads)), n);
    if(nt <= 1) work();
    else {
        std::vector<std::thread> pool;
        for(std::size_t k = 0; k < nt; ++k) pool.emplace_back(work);
        for(auto& t : pool) t.join();
    }
    for(auto& e : err)
        if(e) std::rethrow_exception(e);
    std::vector<R> r;
    r.reserve(n);
    for(auto& o : out) r.push_back(std::move(*o));
    return r;
}

class RunOutput {
public:
    RunOutput(const RunConfig& c, std::string pipeline) : cfg_(c), pipeline_(std::move(pipeline)), hash_(config_hash(c)), dir_(c.output) {
        std::filesystem::create_directories(dir_);
    }
    const std::filesystem::path& dir() const { return dir_; }
    const std::string&           hash() const { return hash_; }

    // CSV with a provenance comment line followed by the column header
    std::ofstream csv(const std::string& name, const std::string& header) const {
        std::ofstream f(dir_ / name);
        if(!f) throw std::runtime_error("cannot write " + (dir_ / name).string());
        f << "# z2ent " << Z2ENT_VERSION << " pipeline=" << pipeline_ << " config_hash=" << hash_ << " seed=" << cfg_.seed << "\n";
        f << header << "\n";
        return f;
    }

    void plot(const std::string& name, const std::string& script) const {
        if(!cfg_.plots) return;
        std::ofstream f(dir_ / name);
        f << "# gnuplot script, run inside " << dir_.string() << "\n" << "set datafile separator ','\n" << script;
    }

    void metadata(const json& results, int code, const std::string& message = "") const {
        json m;
        m["pipeline"] = pipeline_;
        m["version"] = Z2ENT_VERSION;
        m["config_hash"] = hash_;
        m["seed"] = cfg_.seed;
        m["config"] = to_json(cfg_);
        m["results"] = results;
        m["exit_code"] = code;
        if(!message.empty()) m["message"] = message;
        std::time_t now = std::time(nullptr);
        char ts[32];
        std::strftime(ts, sizeof ts, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
        m["timestamp"] = ts;
        std::ofstream f(dir_ / "metadata.json");
        f << m.dump(2) << "\n";
    }

private:
    const RunConfig&      cfg_;
    std::string           pipeline_;
    std::string           hash_;
    std::filesystem::path dir_;
};

inline void preflight(double bytes, const RunConfig& c, const std::string& what) {
    double gb = bytes / 1e9;
    if(gb > c.budget_gb) {
        std::ostringstream s;
        s.precision(3);
        s << what << " needs about " << gb << " GB, budget is " << c.budget_gb << " GB";
        throw BudgetExceeded(s.str(), gb, c.budget_gb);
    }
}

inline double ground_memory_estimate(std::size_t dim, const LanczosOptions& o = {}) {
    double d = double(dim);
    return std::min(d * 16.0 * double(o.krylov), o.store_limit_bytes) + d * 16.0 * 6;
}

// Cut tori of the geometry list; other kinds are only meaningful for verify and are skipped.
inline std::vector<LatticeGeometry> cut_geometries(const RunConfig& c) {
    if(c.geometries.empty()) throw ConfigError("geometry list is empty");
    std::vector<LatticeGeometry> out;
    for(auto& g : c.geometries)
        if(g.kind == Kind::CutTorus) out.push_back(g);
    if(out.empty()) throw ConfigError("this pipeline needs at least one cut_torus geometry");
    return out;
}

// ---------------------------------------------------------------- verify

inline int run_verify(const RunConfig& c) {
    if(c.geometries.empty()) throw ConfigError("geometry list is empty");
    if(c.epsilons.empty() || std::isinf(c.epsilons.front())) throw ConfigError("verify needs a finite epsilon");
    RunOutput out(c, "verify");
    auto reps = ordered_map<VerifyReport>(c.geometries.size(), c.threads,
                                          [&](std::size_t k) { return verify_geometry(c.geometries[k], c.epsilons.front(), c.corrupt_dual_table); });
    auto f = out.csv("verify.csv", "geometry,pairs_checked,violations,spectrum_checked,spectrum_size,spectrum_diff,note");
    json res = json::array();
    bool ok = true;
    for(auto& r : reps) {
        ok = ok && r.ok();
        f << r.geometry << "," << r.pairs_checked << "," << r.violations.size() << "," << r.spectrum_checked << "," << r.spectrum_size << ","
          << fmt(r.spectrum_diff) << "," << r.spectrum_skip << "\n";
        res.push_back({{"geometry", r.geometry},
                       {"pairs_checked", r.pairs_checked},
                       {"violations", r.violations},
                       {"spectrum_checked", r.spectrum_checked},
                       {"spectrum_diff", num(r.spectrum_diff)},
                       {"note", r.spectrum_skip},
                       {"ok", r.ok()}});
    }
    int code = ok ? exit_code::ok : exit_code::numeric;
    out.metadata({{"geometries", res}, {"all_ok", ok}}, code, ok ? "" : "verification failed");
    return code;
}

// ---------------------------------------------------------------- ground-state ES and gap scan

struct GroundPoint {
    std::string          geometry;
    double               eps = 0;
    double               energy = 0, residual = 0;
    EntanglementSpectrum es;
    double               entropy = 0;
    EntanglementGap      gap;
};

inline std::vector<GroundPoint> ground_sweep(const RunConfig& c) {
    auto geos = cut_geometries(c);
    if(c.epsilons.empty()) throw ConfigError("epsilon list is empty");
    for(double e : c.epsilons)
        if(std::isinf(e)) throw ConfigError("ground-state pipelines need finite epsilon");
    std::vector<CutSystem> systems;
    for(auto& g : geos) {
        systems.push_back(make_cut_system(g));
        preflight(ground_memory_estimate(systems.back().dim()) * std::min<double>(c.threads, double(c.epsilons.size())), c,
                  "ground state of " + g.str());
    }
    const std::size_t ne = c.epsilons.size();
    return ordered_map<GroundPoint>(systems.size() * ne, c.threads, [&](std::size_t k) {
        auto& cs = systems[k / ne];
        GroundPoint p;
        p.geometry = cs.model.geo.str();
        p.eps = c.epsilons[k % ne];
        auto gs = ground_state(cs.hamiltonian({p.eps, false}));
        p.energy = gs.energy;
        p.residual = gs.residual;
        p.es = entanglement_spectrum(reduce_to_a_blocks(gs.state, cs), c.cutoff);
        p.entropy = von_neumann_entropy(p.es);
        p.gap = entanglement_gap(p.es, 1, c.band_size);
        return p;
    });
}

inline void write_ground(const RunOutput& out, const std::vector<GroundPoint>& pts) {
    auto f = out.csv("ground_es.csv", "geometry,epsilon,energy,residual,entropy,schmidt_rank,populated_sectors,gap,gap_index,gap_flagged");
    auto g = out.csv("es_levels.csv", "geometry,epsilon,n,xi,sector,label");
    for(auto& p : pts) {
        f << p.geometry << "," << fmt(p.eps) << "," << fmt(p.energy) << "," << fmt(p.residual) << "," << fmt(p.entropy) << "," << p.es.schmidt_rank
          << "," << p.es.populated_sectors() << "," << fmt(p.gap.gap) << "," << p.gap.index << "," << p.gap.flagged << "\n";
        for(std::size_t n = 0; n < p.es.levels.size(); ++n) {
            auto& l = p.es.levels[n];
            g << p.geometry << "," << fmt(p.eps) << "," << n << "," << fmt(l.xi) << "," << l.sector << "," << l.label.str() << "\n";
        }
    }
}

inline int run_ground_es(const RunConfig& c) {
    RunOutput out(c, "ground-es");
    auto pts = ground_sweep(c);
    write_ground(out, pts);
    json res = json::array();
    for(auto& p : pts)
        res.push_back({{"geometry", p.geometry}, {"epsilon", p.eps}, {"energy", p.energy}, {"entropy", p.entropy}, {"gap", p.gap.gap}});
    out.plot("ground_es.gp", "set xlabel 'n'\nset ylabel 'xi'\nplot 'es_levels.csv' every ::2 using 3:4 with points title 'entanglement levels'\n");
    out.metadata({{"points", res}}, exit_code::ok);
    return exit_code::ok;
}

inline int run_scan(const RunConfig& c) {
    RunOutput out(c, "scan");
    auto pts = ground_sweep(c);
    write_ground(out, pts);
    std::vector<GapScan> scans;
    for(auto& p : pts) {
        if(scans.empty() || scans.back().lattice != p.geometry) scans.push_back(GapScan{p.geometry, {}, {}, {}, 0, 0});
        scans.back().epsilons.push_back(p.eps);
        scans.back().gaps.push_back(p.gap.gap);
        scans.back().entropies.push_back(p.entropy);
    }
    json res;
    auto f = out.csv("critical.csv", "geometry,epsilon_c,loo_error");
    try {
        auto cf = critical_coupling(scans, c.gap_window, c.gap_zero_tol);
        for(std::size_t k = 0; k < scans.size(); ++k) f << scans[k].lattice << "," << fmt(cf.per_lattice[k]) << "," << fmt(cf.per_lattice_loo[k]) << "\n";
        f << "combined," << fmt(cf.epsilon_c) << "," << fmt(cf.error) << "\n";
        res = {{"epsilon_c", cf.epsilon_c}, {"error", cf.error}, {"loo_spread", cf.loo_spread}, {"lattice_spread", cf.lattice_spread}};
    } catch(const std::exception& e) {
        // a scan that never closes the gap is a valid result, not a failure
        res = {{"epsilon_c", nullptr}, {"note", e.what()}};
    }
    out.plot("scan.gp", "set xlabel 'epsilon'\nset ylabel 'entanglement gap'\nplot 'ground_es.csv' every ::2 using 2:8 with linespoints title 'gap'\n");
    out.metadata({{"critical", res}}, exit_code::ok);
    return exit_code::ok;
}

// ---------------------------------------------------------------- entanglement Hamiltonian fit

struct EhPoint {
    std::string       geometry;
    double            eps = 0;
    VariationalAnsatz ansatz;
    FitResult         fit;
    Eigen::VectorXd   rho_eigs;
    double            es_error = 0;
};

inline int run_eh_fit(const RunConfig& c) {
    auto geos = cut_geometries(c);
    if(c.epsilons.empty()) throw ConfigError("epsilon list is empty");
    RunOutput out(c, "eh-fit");
    std::vector<CutSystem> systems;
    for(auto& g : geos) {
        systems.push_back(make_cut_system(g));
        double da = double(systems.back().dim_a());
        preflight(ground_memory_estimate(systems.back().dim()) + 8.0 * da * da * 16.0, c, "variational fit on " + g.str());
    }
    const std::size_t ne = c.epsilons.size();
    auto pts = ordered_map<EhPoint>(systems.size() * ne, c.threads, [&](std::size_t k) {
        auto& cs = systems[k / ne];
        EhPoint p;
        p.geometry = cs.model.geo.str();
        p.eps = c.epsilons[k % ne];
        if(std::isinf(p.eps)) throw ConfigError("eh-fit needs finite epsilon");
        auto rho = reduce_to_a(ground_state(cs.hamiltonian({p.eps, false})).state, cs);
        p.ansatz = make_ansatz(cs, c.ansatz);
        p.fit = fit(rho, p.ansatz, c.fit);
        p.rho_eigs = Eigen::SelfAdjointEigenSolver<MatC>(rho.matrix, Eigen::EigenvaluesOnly).eigenvalues();
        p.es_error = es_relative_error(p.rho_eigs, p.fit.sigma_eigenvalues, 0.5, c.cutoff);
        return p;
    });
    auto f = out.csv("eh_fit.csv", "geometry,epsilon,entropy_exact,entropy_variational,relative_entropy,es_error_lower_half,evaluations,grad_norm,converged");
    auto fp = out.csv("eh_params.csv", "geometry,epsilon,operator,label,kind,column,row,beta");
    auto ft = out.csv("eh_trajectory.csv", "geometry,epsilon,evaluation,relative_entropy");
    auto fs = out.csv("eh_spectra.csv", "geometry,epsilon,n,xi_exact,xi_variational");
    json res = json::array();
    bool all = true;
    for(auto& p : pts) {
        auto& r = p.fit;
        all = all && r.converged;
        f << p.geometry << "," << fmt(p.eps) << "," << fmt(r.entropy_exact) << "," << fmt(r.entropy_variational) << "," << fmt(r.relative_entropy) << ","
          << fmt(p.es_error) << "," << r.evaluations << "," << fmt(r.grad_norm) << "," << r.converged << "\n";
        for(std::size_t k = 0; k < p.ansatz.operators.size(); ++k) {
            auto& o = p.ansatz.operators[k];
            fp << p.geometry << "," << fmt(p.eps) << "," << k << "," << o.label << "," << o.kind << "," << o.column << "," << o.row << "," << fmt(r.betas[k])
               << "\n";
        }
        for(auto& [ev, v] : r.trajectory) ft << p.geometry << "," << fmt(p.eps) << "," << ev << "," << fmt(v) << "\n";
        std::vector<double> xr, xs;
        for(double l : p.rho_eigs) xr.push_back(l > c.cutoff ? -std::log(l) : std::numeric_limits<double>::infinity());
        for(double l : r.sigma_eigenvalues) xs.push_back(-std::log(std::max(l, 1e-300)));
        std::sort(xr.begin(), xr.end());
        std::sort(xs.begin(), xs.end());
        for(std::size_t n = 0; n < xr.size(); ++n) fs << p.geometry << "," << fmt(p.eps) << "," << n << "," << fmt(xr[n]) << "," << fmt(xs[n]) << "\n";
        res.push_back({{"geometry", p.geometry},
                       {"epsilon", p.eps},
                       {"relative_entropy", r.relative_entropy},
                       {"converged", r.converged},
                       {"params", r.params}});
    }
    out.plot("eh_fit.gp", "set xlabel 'n'\nset ylabel 'xi'\nplot 'eh_spectra.csv' every ::2 using 3:4 title 'exact', '' every ::2 using 3:5 title 'variational'\n");
    int code = all ? exit_code::ok : exit_code::numeric;
    out.metadata({{"points", res}}, code, all ? "" : "variational fit did not converge");
    return code;
}

// ---------------------------------------------------------------- scaling fit

inline json scaling_json(const ScalingFit& s) {
    auto g = [](const GaussianEstimate& e) { return json{{"mean", e.mean}, {"sigma", e.sigma}, {"at_edge", e.at_edge}}; };
    return {{"alpha", s.alpha},
            {"beta", s.beta},
            {"t0", s.t0},
            {"chi2_min", s.chi2_min},
            {"alpha_fit", g(s.alpha_fit)},
            {"beta_fit", g(s.beta_fit)},
            {"t0_fit", g(s.t0_fit)},
            {"window_clipped", s.window_clipped},
            {"extrapolated", s.extrapolated}};
}

inline void write_scaling(const RunOutput& out, const ScalingFit& s) {
    auto m = out.csv("scaling_marginals.csv", "parameter,value,weight");
    auto axis = [&](const char* name, const GridAxis& a, const std::vector<double>& w) {
        for(std::size_t k = 0; k < a.size(); ++k) m << name << "," << fmt(a.at(k)) << "," << fmt(w[k]) << "\n";
    };
    axis("alpha", s.grids.alpha, s.w_alpha);
    axis("beta", s.grids.beta, s.w_beta);
    axis("t0", s.grids.t0, s.w_t0);
    auto c = out.csv("scaling_chi2.csv", "alpha,beta,t0,chi2");
    for(std::size_t ia = 0; ia < s.grids.alpha.size(); ++ia)
        for(std::size_t ib = 0; ib < s.grids.beta.size(); ++ib)
            for(std::size_t it = 0; it < s.grids.t0.size(); ++it)
                c << fmt(s.grids.alpha.at(ia)) << "," << fmt(s.grids.beta.at(ib)) << "," << fmt(s.grids.t0.at(it)) << "," << fmt(s.chi2[s.cell(ia, ib, it)]) << "\n";
    auto f = out.csv("scaling.csv", "alpha,beta,t0,chi2_min,alpha_mean,alpha_sigma,beta_mean,beta_sigma,t0_mean,t0_sigma,window_clipped,extrapolated");
    f << fmt(s.alpha) << "," << fmt(s.beta) << "," << fmt(s.t0) << "," << fmt(s.chi2_min) << "," << fmt(s.alpha_fit.mean) << "," << fmt(s.alpha_fit.sigma) << ","
      << fmt(s.beta_fit.mean) << "," << fmt(s.beta_fit.sigma) << "," << fmt(s.t0_fit.mean) << "," << fmt(s.t0_fit.sigma) << "," << s.window_clipped << ","
      << s.extrapolated << "\n";
    out.plot("scaling.gp", "set multiplot layout 1,3\nplot 'scaling_marginals.csv' every ::2 using ($1 eq 'alpha' ? $2 : 1/0):3 with lines title 'alpha'\n"
                           "plot '' every ::2 using ($1 eq 'beta' ? $2 : 1/0):3 with lines title 'beta'\n"
                           "plot '' every ::2 using ($1 eq 't0' ? $2 : 1/0):3 with lines title 't0'\nunset multiplot\n");
}

// Reads a spectra archive written by the quench pipeline. Only the first geometry in the file is used.
inline std::vector<SchmidtSnapshot> read_spectra_archive(const std::string& path, std::string* geometry = nullptr) {
    std::ifstream in(path);
    if(!in) throw ConfigError("cannot open spectra archive " + path);
    std::string line, geo;
    bool header = false;
    std::vector<SchmidtSnapshot> out;
    while(std::getline(in, line)) {
        if(line.empty() || line[0] == '#') continue;
        if(!header) {
            if(line.rfind("geometry,t,eps_t,n,xi", 0) != 0) throw ConfigError("spectra archive: unexpected header in " + path);
            header = true;
            continue;
        }
        std::stringstream ss(line);
        std::string g, t, et, n, xi;
        std::getline(ss, g, ',');
        std::getline(ss, t, ',');
        std::getline(ss, et, ',');
        std::getline(ss, n, ',');
        std::getline(ss, xi, ',');
        if(geo.empty()) geo = g;
        if(g != geo) continue;
        double e = std::stod(et);
        if(out.empty() || out.back().t != e) out.push_back({e, {}});
        out.back().probs.push_back(std::exp(-std::stod(xi)));
    }
    if(out.empty()) throw ConfigError("spectra archive " + path + " holds no levels");
    if(geometry) *geometry = geo;
    return out;
}

inline ScalingFit fit_snapshots(const RunConfig& c, const std::vector<SchmidtSnapshot>& snaps) {
    if(c.scaling.t_tests.empty()) throw ConfigError("analysis.scaling.t_tests is empty");
    return scaling_fit(snaps, c.scaling.t_ref, c.scaling.t_tests, c.scaling.n_lo, c.scaling.n_hi, c.scaling.grids);
}

inline int run_scaling(const RunConfig& c) {
    if(c.scaling.archive.empty()) throw ConfigError("no spectra archive given (analysis.scaling.archive or --archive)");
    std::string geo;
    auto snaps = read_spectra_archive(c.scaling.archive, &geo);
    RunOutput out(c, "scaling-fit");
    ScalingFit s;
    try {
        s = fit_snapshots(c, snaps);
    } catch(const std::invalid_argument& e) { throw ConfigError(e.what()); }
    write_scaling(out, s);
    out.metadata({{"geometry", geo}, {"snapshots", snaps.size()}, {"scaling", scaling_json(s)}}, exit_code::ok);
    return exit_code::ok;
}

// ---------------------------------------------------------------- quench

inline int run_quench(const RunConfig& c) {
    auto geos = cut_geometries(c);
    RunOutput out(c, "quench");
    QuenchSettings q = c.quench;
    q.seed = c.seed;
    q.threads = c.threads;
    q.cutoff = c.cutoff;
    std::vector<CutSystem> systems;
    for(auto& g : geos) {
        systems.push_back(make_cut_system(g));
        preflight(quench_memory_estimate(systems.back(), q), c, "quench on " + g.str());
    }
    auto ts = out.csv("timeseries.csv",
                      "geometry,t,eps_t,entropy,electric,magnetic,bhattacharyya,mean_r,ratio_count,degenerate_sectors,schmidt_rank,spectrum_offset");
    auto sp = out.csv("spectra.csv", "geometry,t,eps_t,n,xi,sector,label");
    auto th = out.csv("thermal.csv", "geometry,n,probability");
    json res = json::array();
    std::size_t offset = 0;
    std::optional<ScalingFit> scaling;
    for(auto& cs : systems) {
        auto r = run_quench_dynamics(cs, q); // sweep points are sequential here; threads go to the matrix-vector products
        std::string g = cs.model.geo.str();
        std::vector<double> et, S, mr, rank;
        for(auto& p : r.points) {
            ts << g << "," << fmt(p.t) << "," << fmt(p.eps_t) << "," << fmt(p.entropy) << "," << fmt(p.electric) << "," << fmt(p.magnetic) << ","
               << fmt(p.bhattacharyya) << "," << fmt(p.mean_r) << "," << p.ratio_count << "," << p.degenerate_sectors << "," << p.schmidt_rank << ","
               << offset << "\n";
            for(std::size_t n = 0; n < p.es.levels.size(); ++n) {
                auto& l = p.es.levels[n];
                sp << g << "," << fmt(p.t) << "," << fmt(p.eps_t) << "," << n << "," << fmt(l.xi) << "," << l.sector << "," << l.label.str() << "\n";
            }
            offset += p.es.levels.size();
            et.push_back(p.eps_t);
            S.push_back(p.entropy);
            mr.push_back(std::isnan(p.mean_r) ? 0.0 : p.mean_r);
            rank.push_back(p.schmidt_rank);
        }
        for(std::size_t n = 0; n < r.thermal_probs.size(); ++n) th << g << "," << n << "," << fmt(r.thermal_probs[n]) << "\n";
        json sat = nullptr;
        if(r.points.size() >= 3)
            sat = {{"entropy", saturation_onset(et, S)}, {"mean_r", saturation_onset(et, mr)}, {"schmidt_rank", saturation_onset(et, rank, 0.0)}};
        res.push_back({{"geometry", g},
                       {"initial_index", r.initial_index},
                       {"momentum", {r.kx, r.ky}},
                       {"block_dim", r.block_dim},
                       {"initial_energy", r.initial_energy},
                       {"beta", num(r.beta)},
                       {"beta_capped", r.beta_capped},
                       {"thermal_entropy", num(r.thermal_entropy)},
                       {"saturation_eps_t", sat}});
        if(!c.scaling.t_tests.empty() && !scaling) {
            try {
                scaling = fit_snapshots(c, schmidt_snapshots(r));
            } catch(const std::invalid_argument& e) { throw ConfigError(std::string("scaling fit: ") + e.what()); }
        }
    }
    json results{{"runs", res}};
    if(scaling) {
        write_scaling(out, *scaling);
        results["scaling"] = scaling_json(*scaling);
    }
    out.plot("quench.gp", "set xlabel 'epsilon t'\nset multiplot layout 2,1\nplot 'timeseries.csv' every ::2 using 3:4 with lines title 'S_A'\n"
                          "plot '' every ::2 using 3:8 with lines title '<r>'\nunset multiplot\n");
    out.metadata(results, exit_code::ok);
    return exit_code::ok;
}

} // namespace z2ent
