#pragma once
#include "eh_variational.hpp"
#include "quench.hpp"

#include <json.hpp>

#include <fstream>
#include <set>

namespace z2ent {

using json = nlohmann::json;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ScalingSettings {
    double              t_ref = 6.0; // eps * t
    std::vector<double> t_tests;     // eps * t
    std::size_t         n_lo = 130, n_hi = 1300;
    ScalingGrids        grids;
    std::string         archive; // spectra archive for the scaling-fit subcommand
};

inline QuenchSettings default_quench() {
    QuenchSettings q;
    for(int k = 0; k <= 20; ++k) q.times.push_back(0.5 * k);
    return q;
}

struct RunConfig {
    std::vector<LatticeGeometry> geometries{LatticeGeometry::torus(2, 2), LatticeGeometry::cut(2, 2, 2)};
    std::vector<double>          epsilons{0.1};
    QuenchSettings               quench = default_quench();
    double                       cutoff = 1e-14;
    int                          unfold_degree = 3;
    int                          ratio_bins = 20;
    int                          gap_window = 4;
    double                       gap_zero_tol = 1e-3;
    int                          band_size = 0; // 0: number of populated sectors
    AnsatzOptions                ansatz;
    FitOptions                   fit;
    ScalingSettings              scaling;
    std::string                  output = "out";
    std::uint64_t                seed = 1;
    int                          threads = 1;
    double                       budget_gb = 4.0;
    bool                         plots = true;
    bool                         corrupt_dual_table = false; // fault injection for the verify pipeline
};

namespace detail {

inline void allow_keys(const json& j, const std::set<std::string>& keys, const std::string& where) {
    if(!j.is_object()) throw ConfigError(where + ": expected an object");
    for(auto& [k, v] : j.items())
        if(!keys.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
}

inline double parse_coupling(const json& v, const std::string& where) {
    if(v.is_string()) {
        auto s = v.get<std::string>();
        if(s == "inf" || s == "infinity") return std::numeric_limits<double>::infinity();
        throw ConfigError(where + ": expected a number or \"inf\"");
    }
    double x = v.get<double>();
    if(!(x >= 0)) throw ConfigError(where + ": coupling must be non-negative");
    return x;
}

inline json coupling_json(double e) { return std::isinf(e) ? json("inf") : json(e); }

inline std::vector<double> parse_grid(const json& v, const std::string& where) {
    if(v.is_array()) return v.get<std::vector<double>>();
    allow_keys(v, {"start", "stop", "step"}, where);
    double a = v.at("start").get<double>(), b = v.at("stop").get<double>(), h = v.at("step").get<double>();
    if(!(h > 0) || b < a) throw ConfigError(where + ": need step > 0 and stop >= start");
    std::vector<double> out;
    for(long k = 0;; ++k) {
        double t = a + double(k) * h;
        if(t > b + 1e-9 * h) break;
        out.push_back(t);
    }
    return out;
}

inline GridAxis parse_axis(const json& v, const std::string& where) {
    auto a = v.get<std::vector<double>>();
    if(a.size() != 3) throw ConfigError(where + ": expected [lo, hi, step]");
    return {a[0], a[1], a[2]};
}

inline LatticeGeometry parse_geometry(const json& g) {
    allow_keys(g, {"kind", "nx_a", "nx_b", "ny"}, "geometry");
    std::string kind = g.value("kind", "cut_torus");
    LatticeGeometry geo;
    geo.nx_a = g.at("nx_a").get<int>();
    geo.ny = g.at("ny").get<int>();
    geo.nx_b = g.value("nx_b", 0);
    if(kind == "cut_torus") geo.kind = Kind::CutTorus;
    else if(kind == "torus") geo.kind = Kind::PeriodicTorus;
    else if(kind == "cylinder") geo.kind = Kind::OpenCylinder;
    else throw ConfigError("geometry: unknown kind '" + kind + "'");
    try {
        geo.validate();
    } catch(const std::invalid_argument& e) { throw ConfigError(std::string("geometry: ") + e.what()); }
    return geo;
}

inline std::string kind_key(Kind k) {
    switch(k) {
        case Kind::CutTorus: return "cut_torus";
        case Kind::PeriodicTorus: return "torus";
        default: return "cylinder";
    }
}

} // namespace detail

inline RunConfig parse_config(const json& j) {
    RunConfig c;
    try {
        detail::allow_keys(j, {"geometry", "epsilon", "quench", "analysis", "output", "seed", "threads", "budget_gb", "plots", "fault_injection"},
                           "config");
        if(j.contains("geometry")) {
            c.geometries.clear();
            for(auto& g : j.at("geometry")) c.geometries.push_back(detail::parse_geometry(g));
        }
        if(j.contains("epsilon")) {
            auto& e = j.at("epsilon");
            c.epsilons.clear();
            if(e.is_array())
                for(auto& x : e) c.epsilons.push_back(detail::parse_coupling(x, "epsilon"));
            else if(e.is_object()) c.epsilons = detail::parse_grid(e, "epsilon");
            else c.epsilons.push_back(detail::parse_coupling(e, "epsilon"));
        }
        if(j.contains("quench")) {
            auto& q = j.at("quench");
            detail::allow_keys(q, {"eps_initial", "eps_final", "initial_state", "window", "times", "krylov", "generic_momentum", "dense_limit"},
                               "quench");
            if(q.contains("eps_initial")) c.quench.eps_initial = detail::parse_coupling(q.at("eps_initial"), "quench.eps_initial");
            if(q.contains("eps_final")) c.quench.eps_final = detail::parse_coupling(q.at("eps_final"), "quench.eps_final");
            if(q.contains("initial_state")) {
                auto m = q.at("initial_state").get<std::string>();
                if(m == "random_eigenstate") c.quench.initial = InitialState::RandomEigenstate;
                else if(m == "electric_product") c.quench.initial = InitialState::ElectricProduct;
                else throw ConfigError("quench.initial_state: expected random_eigenstate or electric_product");
            }
            c.quench.window = q.value("window", c.quench.window);
            if(q.contains("times")) c.quench.times = detail::parse_grid(q.at("times"), "quench.times");
            c.quench.krylov = q.value("krylov", c.quench.krylov);
            c.quench.generic_momentum = q.value("generic_momentum", c.quench.generic_momentum);
            c.quench.dense_limit = q.value("dense_limit", c.quench.dense_limit);
        }
        if(j.contains("analysis")) {
            auto& a = j.at("analysis");
            detail::allow_keys(a, {"cutoff", "unfold_degree", "ratio_bins", "beta_mode", "saturation_from", "gap_window", "gap_zero_tol", "band_size",
                                   "ansatz", "fit", "scaling", "thermal_reference"},
                               "analysis");
            c.cutoff = a.value("cutoff", c.cutoff);
            c.unfold_degree = a.value("unfold_degree", c.unfold_degree);
            c.ratio_bins = a.value("ratio_bins", c.ratio_bins);
            if(a.contains("beta_mode")) {
                auto m = a.at("beta_mode").get<std::string>();
                if(m == "entropy") c.quench.beta_mode = BetaMode::Entropy;
                else if(m == "energy") c.quench.beta_mode = BetaMode::Energy;
                else throw ConfigError("analysis.beta_mode: expected entropy or energy");
            }
            c.quench.saturation_from = a.value("saturation_from", c.quench.saturation_from);
            c.quench.thermal_reference = a.value("thermal_reference", c.quench.thermal_reference);
            c.gap_window = a.value("gap_window", c.gap_window);
            c.gap_zero_tol = a.value("gap_zero_tol", c.gap_zero_tol);
            c.band_size = a.value("band_size", c.band_size);
            if(a.contains("ansatz")) {
                auto& s = a.at("ansatz");
                detail::allow_keys(s, {"boundary_links", "tie_rows", "beta0"}, "analysis.ansatz");
                c.ansatz.boundary_links = s.value("boundary_links", c.ansatz.boundary_links);
                c.ansatz.tie_rows = s.value("tie_rows", c.ansatz.tie_rows);
                c.ansatz.beta0 = s.value("beta0", c.ansatz.beta0);
            }
            if(a.contains("fit")) {
                auto& s = a.at("fit");
                detail::allow_keys(s, {"grad_tol", "max_evaluations"}, "analysis.fit");
                c.fit.grad_tol = s.value("grad_tol", c.fit.grad_tol);
                c.fit.max_evaluations = s.value("max_evaluations", c.fit.max_evaluations);
            }
            if(a.contains("scaling")) {
                auto& s = a.at("scaling");
                detail::allow_keys(s, {"t_ref", "t_tests", "n_lo", "n_hi", "alpha", "beta", "t0", "archive"}, "analysis.scaling");
                c.scaling.t_ref = s.value("t_ref", c.scaling.t_ref);
                if(s.contains("t_tests")) c.scaling.t_tests = detail::parse_grid(s.at("t_tests"), "analysis.scaling.t_tests");
                c.scaling.n_lo = s.value("n_lo", c.scaling.n_lo);
                c.scaling.n_hi = s.value("n_hi", c.scaling.n_hi);
                if(s.contains("alpha")) c.scaling.grids.alpha = detail::parse_axis(s.at("alpha"), "analysis.scaling.alpha");
                if(s.contains("beta")) c.scaling.grids.beta = detail::parse_axis(s.at("beta"), "analysis.scaling.beta");
                if(s.contains("t0")) c.scaling.grids.t0 = detail::parse_axis(s.at("t0"), "analysis.scaling.t0");
                c.scaling.archive = s.value("archive", c.scaling.archive);
            }
        }
        c.output = j.value("output", c.output);
        c.seed = j.value("seed", c.seed);
        c.threads = j.value("threads", c.threads);
        c.budget_gb = j.value("budget_gb", c.budget_gb);
        c.plots = j.value("plots", c.plots);
        if(j.contains("fault_injection")) {
            auto& f = j.at("fault_injection");
            detail::allow_keys(f, {"corrupt_dual_table"}, "fault_injection");
            c.corrupt_dual_table = f.value("corrupt_dual_table", false);
        }
    } catch(const json::exception& e) { throw ConfigError(std::string("config: ") + e.what()); }
    if(c.threads < 1) throw ConfigError("threads must be >= 1");
    if(!(c.budget_gb > 0)) throw ConfigError("budget_gb must be positive");
    if(c.ratio_bins < 1 || c.unfold_degree < 1) throw ConfigError("analysis: bins and unfolding degree must be positive");
    return c;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if(!in) throw ConfigError("cannot open config file " + path);
    json j;
    try {
        j = json::parse(in, nullptr, true, true);
    } catch(const json::parse_error& e) { throw ConfigError(std::string("config parse error: ") + e.what()); }
    return parse_config(j);
}

// Fully populated form of a configuration; stable key order, used for echoing and hashing.
inline json to_json(const RunConfig& c) {
    json j;
    j["geometry"] = json::array();
    for(auto& g : c.geometries) j["geometry"].push_back({{"kind", detail::kind_key(g.kind)}, {"nx_a", g.nx_a}, {"nx_b", g.nx_b}, {"ny", g.ny}});
    j["epsilon"] = json::array();
    for(double e : c.epsilons) j["epsilon"].push_back(detail::coupling_json(e));
    auto& q = c.quench;
    j["quench"] = {{"eps_initial", detail::coupling_json(q.eps_initial)},
                   {"eps_final", detail::coupling_json(q.eps_final)},
                   {"initial_state", q.initial == InitialState::RandomEigenstate ? "random_eigenstate" : "electric_product"},
                   {"window", q.window},
                   {"times", q.times},
                   {"krylov", q.krylov},
                   {"generic_momentum", q.generic_momentum},
                   {"dense_limit", q.dense_limit}};
    auto axis = [](const GridAxis& a) { return json::array({a.lo, a.hi, a.step}); };
    j["analysis"] = {{"cutoff", c.cutoff},
                     {"unfold_degree", c.unfold_degree},
                     {"ratio_bins", c.ratio_bins},
                     {"beta_mode", q.beta_mode == BetaMode::Entropy ? "entropy" : "energy"},
                     {"saturation_from", q.saturation_from},
                     {"thermal_reference", q.thermal_reference},
                     {"gap_window", c.gap_window},
                     {"gap_zero_tol", c.gap_zero_tol},
                     {"band_size", c.band_size},
                     {"ansatz", {{"boundary_links", c.ansatz.boundary_links}, {"tie_rows", c.ansatz.tie_rows}, {"beta0", c.ansatz.beta0}}},
                     {"fit", {{"grad_tol", c.fit.grad_tol}, {"max_evaluations", c.fit.max_evaluations}}},
                     {"scaling",
                      {{"t_ref", c.scaling.t_ref},
                       {"t_tests", c.scaling.t_tests},
                       {"n_lo", c.scaling.n_lo},
                       {"n_hi", c.scaling.n_hi},
                       {"alpha", axis(c.scaling.grids.alpha)},
                       {"beta", axis(c.scaling.grids.beta)},
                       {"t0", axis(c.scaling.grids.t0)},
                       {"archive", c.scaling.archive}}}};
    j["output"] = c.output;
    j["seed"] = c.seed;
    j["threads"] = c.threads;
    j["budget_gb"] = c.budget_gb;
    j["plots"] = c.plots;
    j["fault_injection"] = {{"corrupt_dual_table", c.corrupt_dual_table}};
    return j;
}

// FNV-1a over the normalized configuration; output directory and thread count do not affect results
inline std::string config_hash(const RunConfig& c) {
    json j = to_json(c);
    j.erase("output");
    j.erase("threads");
    std::string s = j.dump();
    std::uint64_t h = 1469598103934665603ull;
    for(unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

} // namespace z2ent
