#pragma once
#include "pauli.hpp"

#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

namespace z2ent {

enum class Kind { PeriodicTorus, OpenCylinder, CutTorus };

inline std::string to_string(Kind k) {
    switch(k) {
        case Kind::PeriodicTorus: return "PeriodicTorus";
        case Kind::OpenCylinder: return "OpenCylinder";
        default: return "CutTorus";
    }
}

struct LatticeGeometry {
    int  nx_a = 2;
    int  nx_b = 0;
    int  ny   = 2;
    Kind kind = Kind::PeriodicTorus;

    int nx() const { return nx_a + nx_b; }

    void validate() const {
        if(nx_a < 1 || ny < 1 || nx_b < 0) throw std::invalid_argument("lattice extents must be positive");
        if(kind == Kind::CutTorus && (nx_a < 2 || nx_b < 2 || ny < 2))
            throw std::invalid_argument("cut torus requires nx_a >= 2, nx_b >= 2, ny >= 2");
        if(kind != Kind::CutTorus && nx_b != 0) throw std::invalid_argument("nx_b must be 0 for uncut geometries");
        if(kind == Kind::OpenCylinder && nx_a < 2) throw std::invalid_argument("cylinder needs nx >= 2");
    }
    std::string str() const {
        std::ostringstream s;
        if(kind == Kind::CutTorus) s << "(" << nx_a << "+" << nx_b << ")x" << ny;
        else s << nx_a << "x" << ny;
        return s.str();
    }

    static LatticeGeometry torus(int nx, int ny) { return {nx, 0, ny, Kind::PeriodicTorus}; }
    static LatticeGeometry cylinder(int nx, int ny) { return {nx, 0, ny, Kind::OpenCylinder}; }
    static LatticeGeometry cut(int na, int nb, int ny) { return {na, nb, ny, Kind::CutTorus}; }
};

enum class Dir { X = 0, Y = 1 };

struct Link {
    int x, y;
    Dir d;
    bool operator<(const Link& o) const { return std::tie(x, y, d) < std::tie(o.x, o.y, o.d); }
    bool operator==(const Link& o) const { return x == o.x && y == o.y && d == o.d; }
};

using Site = std::pair<int, int>;
using Plaquette = std::pair<int, int>;

enum class Side { A, B };

struct DualRegister {
    LatticeGeometry              geometry;
    std::map<Plaquette, int>     mu_qubits;
    std::map<Link, int>          sigma_qubits;
    std::optional<int>           vx_qubit;
    std::optional<int>           vy_qubit;
    std::vector<Side>            partition;

    int  size() const { return int(partition.size()); }
    int  size_a() const {
        int k = 0;
        for(auto s : partition) k += s == Side::A;
        return k;
    }
    Mask mask(Side s) const {
        Mask m = 0;
        for(int q = 0; q < size(); ++q)
            if(partition[q] == s) m |= Mask(1) << q;
        return m;
    }
};

struct SymmetrySectorLabel {
    std::vector<int> left_flux;
    std::vector<int> right_flux;
    int              vtilde_x = 1;

    // "u" for +1, "d" for -1, trailing sign for the string operator
    std::string str() const {
        std::string s;
        for(int f : left_flux) s += f > 0 ? 'u' : 'd';
        for(int f : right_flux) s += f > 0 ? 'u' : 'd';
        s += vtilde_x > 0 ? '+' : '-';
        return s;
    }
    bool operator<(const SymmetrySectorLabel& o) const { return str() < o.str(); }
    bool operator==(const SymmetrySectorLabel& o) const {
        return left_flux == o.left_flux && right_flux == o.right_flux && vtilde_x == o.vtilde_x;
    }
};

struct Coupling {
    double epsilon        = 0.0;
    bool   electric_limit = false; // drop magnetic terms, electric coefficient 1
};

// Dual variables and the images of original gauge-invariant operators.
struct DualModel {
    LatticeGeometry                  geo;
    DualRegister                     reg;
    int                              nq = 0;
    int                              n_a = 0; // A qubits occupy [0, n_a)
    std::map<Link, PauliString>      link_image;  // image of sigma^x on each link
    std::map<Plaquette, PauliString> plaq_image;  // image of each plaquette operator W
    std::vector<Link>                links;       // links of the original lattice
    std::vector<Plaquette>           plaqs;       // plaquettes of the original lattice
    std::vector<Link>                retained;
    std::optional<Plaquette>         pstar;
    std::vector<std::pair<Site, PauliString>> gauss_image;
    std::vector<PauliString>         flux_left, flux_right;
    std::optional<PauliString>       vtilde_x;     // open electric string between the boundaries (A part)
    std::optional<PauliString>       vx_loop;      // winding electric loop, row n_y = 1

    Mask a_mask() const { return n_a >= 64 ? ~Mask(0) : (Mask(1) << n_a) - 1; }

    // residual Gauss images that are not identity after the duality
    std::vector<PauliString> residual_gauss() const {
        std::vector<PauliString> out;
        for(auto& [s, g] : gauss_image)
            if(!g.is_identity()) out.push_back(g);
        return out;
    }
};

namespace detail {

inline bool link_exists(const LatticeGeometry& g, const Link& l) {
    if(g.kind == Kind::OpenCylinder) {
        if(l.d == Dir::X) return l.x >= 0 && l.x <= g.nx() - 2 && l.y >= 0 && l.y < g.ny;
        return l.x >= 0 && l.x < g.nx() && l.y >= 0 && l.y < g.ny;
    }
    return l.x >= 0 && l.x < g.nx() && l.y >= 0 && l.y < g.ny;
}

inline int wrapx(const LatticeGeometry& g, int x) { return g.kind == Kind::OpenCylinder ? x : ((x % g.nx()) + g.nx()) % g.nx(); }
inline int wrapy(const LatticeGeometry& g, int y) { return ((y % g.ny) + g.ny) % g.ny; }

inline std::vector<Link> plaquette_links(const LatticeGeometry& g, Plaquette p) {
    auto [a, b] = p;
    return {{a, b, Dir::X}, {wrapx(g, a + 1), b, Dir::Y}, {a, wrapy(g, b + 1), Dir::X}, {a, b, Dir::Y}};
}

inline std::vector<Link> site_links(const LatticeGeometry& g, Site s) {
    auto [a, b] = s;
    std::vector<Link> out;
    out.push_back({a, b, Dir::X});
    out.push_back({wrapx(g, a - 1), b, Dir::X});
    out.push_back({a, b, Dir::Y});
    out.push_back({a, wrapy(g, b - 1), Dir::Y});
    std::vector<Link> kept;
    for(auto& l : out)
        if(link_exists(g, l)) kept.push_back(l);
    return kept;
}

inline std::vector<Link> all_links(const LatticeGeometry& g) {
    std::vector<Link> out;
    for(int b = 0; b < g.ny; ++b)
        for(int a = 0; a < g.nx(); ++a)
            for(Dir d : {Dir::X, Dir::Y}) {
                Link l{a, b, d};
                if(link_exists(g, l)) out.push_back(l);
            }
    return out;
}

inline std::vector<Plaquette> all_plaquettes(const LatticeGeometry& g) {
    std::vector<Plaquette> out;
    int xmax = g.kind == Kind::OpenCylinder ? g.nx() - 1 : g.nx();
    for(int b = 0; b < g.ny; ++b)
        for(int a = 0; a < xmax; ++a) out.push_back({a, b});
    return out;
}

} // namespace detail

// Original link register: one qubit per link, indexed in all_links order.
struct OriginalModel {
    LatticeGeometry          geo;
    int                      nq = 0;
    std::map<Link, int>      index;
    OperatorSum              h;
    std::vector<PauliString> gauss;
    std::vector<Site>        gauss_sites;

    PauliString sigma_x(const Link& l) const { return PauliString::X(nq, index.at(l)); }
    PauliString sigma_z(const Link& l) const { return PauliString::Z(nq, index.at(l)); }
    PauliString plaquette(Plaquette p) const {
        Mask z = 0;
        for(auto& l : detail::plaquette_links(geo, p)) z |= Mask(1) << index.at(l);
        return {nq, 0, z, 0};
    }
};

// Gauge-variant Hamiltonian with the Gauss operators. For the cylinder the open electric boundary
// adds the boundary flux link energies as three-link composites.
inline OriginalModel build_original(const LatticeGeometry& geo, const Coupling& c) {
    geo.validate();
    if(geo.kind == Kind::CutTorus) throw std::invalid_argument("build_original: unsupported geometry kind");
    OriginalModel m;
    m.geo = geo;
    auto links = detail::all_links(geo);
    // cylinder keeps x-links before y-links; torus interleaves
    if(geo.kind == Kind::OpenCylinder)
        std::stable_sort(links.begin(), links.end(), [](const Link& a, const Link& b) { return int(a.d) < int(b.d); });
    for(auto& l : links) m.index[l] = m.nq++;
    if(m.nq > 64) throw std::invalid_argument("original register exceeds 64 links");
    m.h = OperatorSum(m.nq);
    double mag = c.electric_limit ? 0.0 : -1.0;
    double el  = c.electric_limit ? -1.0 : -c.epsilon;
    if(mag != 0.0)
        for(auto p : detail::all_plaquettes(geo)) m.h.add(mag, m.plaquette(p));
    if(el != 0.0) {
        for(auto& l : links) m.h.add(el, m.sigma_x(l));
        if(geo.kind == Kind::OpenCylinder) {
            int R = geo.nx() - 1;
            for(int b = 0; b < geo.ny; ++b) {
                int bm = detail::wrapy(geo, b - 1);
                m.h.add(el, m.sigma_x({0, b, Dir::X}) * m.sigma_x({0, b, Dir::Y}) * m.sigma_x({0, bm, Dir::Y}));
                m.h.add(el, m.sigma_x({R - 1, b, Dir::X}) * m.sigma_x({R, b, Dir::Y}) * m.sigma_x({R, bm, Dir::Y}));
            }
        }
    }
    for(int b = 0; b < geo.ny; ++b)
        for(int a = 0; a < geo.nx(); ++a) {
            if(geo.kind == Kind::OpenCylinder && (a == 0 || a == geo.nx() - 1)) continue;
            PauliString g = PauliString::identity(m.nq);
            for(auto& l : detail::site_links(geo, {a, b})) g = g * m.sigma_x(l);
            m.gauss.push_back(g);
            m.gauss_sites.push_back({a, b});
        }
    return m;
}

// Builds the dual register and the images of sigma^x on every link and of every plaquette.
// sigma^x on a non-retained link maps to the product of mu^x on its adjacent (non-eliminated)
// plaquettes; row-0 x-links pick up V_y; on the torus the V_x seam runs along column 0 y-links.
inline DualModel build_dual(const LatticeGeometry& geo) {
    geo.validate();
    DualModel d;
    d.geo   = geo;
    d.links = detail::all_links(geo);
    d.plaqs = detail::all_plaquettes(geo);
    const int NX = geo.nx(), NY = geo.ny;
    if(geo.kind != Kind::OpenCylinder) d.pstar = Plaquette{NX - 1, 0};
    if(geo.kind == Kind::CutTorus) {
        for(int b = 1; b < NY; ++b) d.retained.push_back({0, b, Dir::Y});
        for(int b = 0; b < NY; ++b) d.retained.push_back({geo.nx_a - 1, b, Dir::Y});
    } else if(geo.kind == Kind::OpenCylinder) {
        for(int b = 1; b < NY; ++b) d.retained.push_back({0, b, Dir::Y});
        for(int b = 0; b < NY; ++b) d.retained.push_back({NX - 1, b, Dir::Y});
    }

    auto& R = d.reg;
    R.geometry = geo;
    int q = 0;
    auto push = [&](Side s) {
        R.partition.push_back(s);
        return q++;
    };
    if(geo.kind == Kind::CutTorus) {
        for(auto p : d.plaqs)
            if(p.first <= geo.nx_a - 2) R.mu_qubits[p] = push(Side::A);
        for(auto& l : d.retained) R.sigma_qubits[l] = push(Side::A);
        R.vy_qubit = push(Side::A);
        d.n_a = q;
        for(auto p : d.plaqs)
            if(p.first > geo.nx_a - 2 && p != *d.pstar) R.mu_qubits[p] = push(Side::B);
    } else {
        for(auto p : d.plaqs)
            if(!d.pstar || p != *d.pstar) R.mu_qubits[p] = push(Side::A);
        for(auto& l : d.retained) R.sigma_qubits[l] = push(Side::A);
        R.vy_qubit = push(Side::A);
        if(geo.kind == Kind::PeriodicTorus) R.vx_qubit = push(Side::A);
        d.n_a = q;
    }
    d.nq = q;
    if(d.nq > 64) throw std::invalid_argument("dual register exceeds 64 qubits");

    auto Xq = [&](int qb) { return PauliString::X(d.nq, qb); };
    auto Zq = [&](int qb) { return PauliString::Z(d.nq, qb); };
    auto is_retained = [&](const Link& l) { return R.sigma_qubits.count(l) > 0; };
    auto mu_of = [&](Plaquette p) -> std::optional<int> {
        auto it = R.mu_qubits.find(p);
        if(it == R.mu_qubits.end()) return std::nullopt;
        return it->second;
    };

    for(auto& l : d.links) {
        PauliString img = PauliString::identity(d.nq);
        if(is_retained(l)) {
            d.link_image[l] = Xq(R.sigma_qubits.at(l));
            continue;
        }
        std::vector<Plaquette> adj;
        if(l.d == Dir::X) adj = {{l.x, l.y}, {l.x, detail::wrapy(geo, l.y - 1)}};
        else adj = {{l.x, l.y}, {detail::wrapx(geo, l.x - 1), l.y}};
        for(auto p : adj)
            if(auto m = mu_of(p)) img = img * Xq(*m);
        if(l.d == Dir::X && l.y == 0) img = img * Xq(*R.vy_qubit);
        if(geo.kind == Kind::PeriodicTorus) {
            bool seam = (l.d == Dir::Y && l.x == 0 && l.y != 0) || (l.d == Dir::Y && l.x == NX - 1 && l.y == 0) ||
                        (l.d == Dir::X && l.x == NX - 1 && (l.y == 0 || l.y == 1 % NY));
            if(seam) img = img * Xq(*R.vx_qubit);
        }
        d.link_image[l] = img;
    }

    for(auto p : d.plaqs) {
        if(d.pstar && p == *d.pstar) continue;
        PauliString w = Zq(R.mu_qubits.at(p));
        for(auto& l : detail::plaquette_links(geo, p))
            if(is_retained(l)) w = w * Zq(R.sigma_qubits.at(l));
        d.plaq_image[p] = w;
    }
    if(d.pstar) {
        PauliString w = PauliString::identity(d.nq);
        for(auto& [p, m] : R.mu_qubits) w = w * Zq(m);
        d.plaq_image[*d.pstar] = w;
    }

    for(int b = 0; b < NY; ++b)
        for(int a = 0; a < NX; ++a) {
            if(geo.kind == Kind::OpenCylinder && (a == 0 || a == NX - 1)) continue;
            PauliString g = PauliString::identity(d.nq);
            for(auto& l : detail::site_links(geo, {a, b})) g = g * d.link_image.at(l);
            d.gauss_image.push_back({{a, b}, g});
        }

    if(geo.kind != Kind::PeriodicTorus) {
        int right = geo.kind == Kind::OpenCylinder ? NX - 1 : geo.nx_a - 1;
        for(int b = 0; b < NY; ++b) {
            int bm = detail::wrapy(geo, b - 1);
            auto& L = d.link_image;
            d.flux_left.push_back(L.at({0, b, Dir::X}) * L.at({0, b, Dir::Y}) * L.at({0, bm, Dir::Y}));
            d.flux_right.push_back(L.at({right - 1, b, Dir::X}) * L.at({right, b, Dir::Y}) * L.at({right, bm, Dir::Y}));
        }
        if(NY >= 2) {
            PauliString s = PauliString::identity(d.nq);
            for(int a = 0; a <= right; ++a) s = s * d.link_image.at({a, 1, Dir::Y});
            d.vtilde_x = s;
        }
    }
    if(geo.kind != Kind::OpenCylinder && NY >= 2) {
        PauliString s = PauliString::identity(d.nq);
        for(int a = 0; a < NX; ++a) s = s * d.link_image.at({a, 1, Dir::Y});
        d.vx_loop = s;
    }
    return d;
}

inline OperatorSum dual_hamiltonian(const DualModel& d, const Coupling& c) {
    OperatorSum h(d.nq);
    double mag = c.electric_limit ? 0.0 : -1.0;
    double el  = c.electric_limit ? -1.0 : -c.epsilon;
    if(mag != 0.0)
        for(auto& [p, w] : d.plaq_image) h.add(mag, w);
    if(el != 0.0) {
        for(auto& [l, img] : d.link_image) h.add(el, img);
        if(d.geo.kind == Kind::OpenCylinder) {
            for(auto& f : d.flux_left) h.add(el, f);
            for(auto& f : d.flux_right) h.add(el, f);
        }
    }
    h.prune();
    return h;
}

inline OperatorSum build_dual_torus(const LatticeGeometry& geo, const Coupling& c) {
    if(geo.kind != Kind::PeriodicTorus) throw std::invalid_argument("build_dual_torus: geometry is not a torus");
    return dual_hamiltonian(build_dual(geo), c);
}

struct CylinderDual {
    OperatorSum              h;
    std::vector<PauliString> boundary_gauss; // left then right flux composites
    DualModel                model;
};

inline CylinderDual build_dual_cylinder(const LatticeGeometry& geo, const Coupling& c) {
    if(geo.kind != Kind::OpenCylinder) throw std::invalid_argument("build_dual_cylinder: geometry is not a cylinder");
    CylinderDual out;
    out.model = build_dual(geo);
    out.h     = dual_hamiltonian(out.model, c);
    out.boundary_gauss = out.model.flux_left;
    out.boundary_gauss.insert(out.boundary_gauss.end(), out.model.flux_right.begin(), out.model.flux_right.end());
    return out;
}

struct CutTorusDual {
    OperatorSum  h_a, h_b, h_ab;
    DualRegister reg;
    DualModel    model;
    OperatorSum  total() const { return h_a + h_b + h_ab; }
};

inline CutTorusDual build_dual_cut_torus(const LatticeGeometry& geo, const Coupling& c) {
    if(geo.kind != Kind::CutTorus) throw std::invalid_argument("build_dual_cut_torus: geometry is not a cut torus");
    CutTorusDual out;
    out.model = build_dual(geo);
    out.reg   = out.model.reg;
    const int nq = out.model.nq;
    out.h_a = OperatorSum(nq);
    out.h_b = OperatorSum(nq);
    out.h_ab = OperatorSum(nq);
    Mask A = out.reg.mask(Side::A), B = out.reg.mask(Side::B);
    for(auto& t : dual_hamiltonian(out.model, c)) {
        Mask s = t.op.support();
        if((s & B) == 0) out.h_a.add(t.coeff, t.op);
        else if((s & A) == 0) out.h_b.add(t.coeff, t.op);
        else out.h_ab.add(t.coeff, t.op);
    }
    return out;
}

// Terms fully supported on A, labelled for the variational ansatz.
struct LabelledTerm {
    std::string kind;   // "magnetic", "electric_x", "electric_y", "flux_left", "flux_right"
    int         column; // lattice column of the term
    int         row;
    PauliString op;
};

inline std::vector<LabelledTerm> a_supported_terms(const DualModel& d, bool include_boundary_flux) {
    std::vector<LabelledTerm> out;
    Mask Bm = ~d.a_mask();
    for(auto& [p, w] : d.plaq_image)
        if((w.support() & Bm) == 0) out.push_back({"magnetic", p.first, p.second, w});
    for(auto& [l, img] : d.link_image)
        if(!img.is_identity() && (img.support() & Bm) == 0)
            out.push_back({l.d == Dir::X ? "electric_x" : "electric_y", l.x, l.y, img});
    if(include_boundary_flux) {
        for(int b = 0; b < int(d.flux_left.size()); ++b) out.push_back({"flux_left", -1, b, d.flux_left[b]});
        for(int b = 0; b < int(d.flux_right.size()); ++b) out.push_back({"flux_right", d.geo.nx_a, b, d.flux_right[b]});
    }
    return out;
}

struct CanonicalReport {
    long                     pairs_checked = 0;
    std::vector<std::string> violations;
    bool                     ok() const { return violations.empty(); }
};

// Compares commutation of all pairs among {sigma^x on links, plaquettes, sigma^z on retained links}
// with the commutation of their images.
inline CanonicalReport verify_canonical_map(const DualModel& d) {
    LatticeGeometry og = d.geo;
    if(og.kind == Kind::CutTorus) og = LatticeGeometry::torus(d.geo.nx(), d.geo.ny);
    OriginalModel orig = build_original(og, Coupling{0.0, false});
    struct Item {
        std::string name;
        PauliString o, img;
    };
    std::vector<Item> items;
    auto lname = [](const Link& l) {
        std::ostringstream s;
        s << "(" << l.x << "," << l.y << "," << (l.d == Dir::X ? "x" : "y") << ")";
        return s.str();
    };
    for(auto& l : d.links) items.push_back({"sx" + lname(l), orig.sigma_x(l), d.link_image.at(l)});
    for(auto p : d.plaqs) {
        std::ostringstream s;
        s << "W(" << p.first << "," << p.second << ")";
        items.push_back({s.str(), orig.plaquette(p), d.plaq_image.at(p)});
    }
    for(auto& [l, qb] : d.reg.sigma_qubits) items.push_back({"sz" + lname(l), orig.sigma_z(l), PauliString::Z(d.nq, qb)});
    CanonicalReport rep;
    for(std::size_t i = 0; i < items.size(); ++i)
        for(std::size_t j = i; j < items.size(); ++j) {
            ++rep.pairs_checked;
            bool co = commutes(items[i].o, items[j].o);
            bool cd = commutes(items[i].img, items[j].img);
            if(co != cd) rep.violations.push_back(items[i].name + " vs " + items[j].name);
        }
    return rep;
}

// All flux sectors of the boundary operators together with the string operator.
inline std::vector<std::pair<SymmetrySectorLabel, std::vector<PauliString>>> sector_projectors(const DualModel& d) {
    if(d.geo.kind == Kind::PeriodicTorus) throw std::invalid_argument("sector_projectors: geometry without boundaries");
    if(!d.vtilde_x) throw std::invalid_argument("sector_projectors: string operator needs ny >= 2");
    const int ny = d.geo.ny;
    const int nbits = 2 * ny + 1;
    std::vector<std::pair<SymmetrySectorLabel, std::vector<PauliString>>> out;
    for(int code = 0; code < (1 << nbits); ++code) {
        SymmetrySectorLabel lab;
        std::vector<PauliString> ops;
        auto signed_op = [](PauliString p, int s) {
            if(s < 0) p.phase = (p.phase + 2) & 3;
            return p;
        };
        for(int b = 0; b < ny; ++b) {
            int s = (code >> b) & 1 ? -1 : 1;
            lab.left_flux.push_back(s);
            ops.push_back(signed_op(d.flux_left[b], s));
        }
        for(int b = 0; b < ny; ++b) {
            int s = (code >> (ny + b)) & 1 ? -1 : 1;
            lab.right_flux.push_back(s);
            ops.push_back(signed_op(d.flux_right[b], s));
        }
        lab.vtilde_x = (code >> (2 * ny)) & 1 ? -1 : 1;
        ops.push_back(signed_op(*d.vtilde_x, lab.vtilde_x));
        out.push_back({lab, ops});
    }
    return out;
}

} // namespace z2ent
