#pragma once
#include "physical.hpp"
#include "spectra.hpp"

namespace z2ent {

// Spectrum of the original link model inside the Gauss-invariant subspace (all winding sectors).
inline Eigen::VectorXd gauss_projected_spectrum(const LatticeGeometry& geo, const Coupling& c) {
    auto m = build_original(geo, c);
    std::vector<ReducedSpace::Constraint> cons;
    for(auto& g : m.gauss) cons.push_back({g.x, 1});
    ReducedSpace sp(m.nq, cons);
    return full_spectrum(sp.reduce(m.h));
}

inline Eigen::VectorXd dual_physical_spectrum(const DualModel& d, const Coupling& c) {
    return full_spectrum(physical_space(d, WindingSector{false}).reduce(dual_hamiltonian(d, c)));
}

struct VerifyReport {
    std::string              geometry;
    long                     pairs_checked = 0;
    std::vector<std::string> violations;
    bool                     spectrum_checked = false;
    std::string              spectrum_skip; // reason when not checked
    double                   spectrum_diff = 0;
    std::size_t              spectrum_size = 0;

    bool ok(double tol = 1e-10) const { return violations.empty() && (!spectrum_checked || spectrum_diff < tol); }
};

// Test fixture: swaps the electric images of two links, which breaks the duality.
inline void corrupt_dual_table(DualModel& d) {
    if(d.links.size() < 2) return;
    auto a = d.links.front();
    for(auto& l : d.links)
        if(!(d.link_image.at(l) == d.link_image.at(a))) {
            std::swap(d.link_image.at(a), d.link_image.at(l));
            return;
        }
}

inline VerifyReport verify_geometry(const LatticeGeometry& geo, double eps, bool corrupt = false, int max_free_bits = 12) {
    VerifyReport r;
    r.geometry = to_string(geo.kind) + " " + geo.str();
    DualModel d = build_dual(geo);
    if(corrupt) corrupt_dual_table(d);
    auto cm = verify_canonical_map(d);
    r.pairs_checked = cm.pairs_checked;
    r.violations = cm.violations;
    if(geo.kind == Kind::OpenCylinder) {
        r.spectrum_skip = "open cylinder: boundary Gauss sectors are not eliminated";
        return r;
    }
    LatticeGeometry og = geo.kind == Kind::CutTorus ? LatticeGeometry::torus(geo.nx(), geo.ny) : geo;
    const int links = 2 * og.nx() * og.ny;
    const int orig_free = links - (og.nx() * og.ny - 1);
    const int dual_free = physical_space(d, WindingSector{false}).nfree();
    if(std::max(orig_free, dual_free) > max_free_bits) {
        r.spectrum_skip = "beyond the dense oracle budget (" + std::to_string(std::max(orig_free, dual_free)) + " free qubits)";
        return r;
    }
    Coupling c{eps, false};
    auto a = dual_physical_spectrum(d, c);
    auto b = gauss_projected_spectrum(og, c);
    r.spectrum_checked = true;
    r.spectrum_size = std::size_t(a.size());
    if(a.size() != b.size()) r.spectrum_diff = std::numeric_limits<double>::infinity();
    else {
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        r.spectrum_diff = (a - b).cwiseAbs().maxCoeff();
    }
    return r;
}

} // namespace z2ent
