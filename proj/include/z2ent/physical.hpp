#pragma once
#include "lattice.hpp"
#include "reduced.hpp"

namespace z2ent {

struct WindingSector {
    bool fix = true;
    int  vx = 1;
    int  vy = 1;
};

// Gauss-invariant subspace of a dual model, optionally restricted to one winding sector.
inline ReducedSpace physical_space(const DualModel& d, const WindingSector& w = {}) {
    std::vector<ReducedSpace::Constraint> cons;
    for(auto& g : d.residual_gauss()) cons.push_back({g.x, g.phase == 2 ? -1 : 1});
    if(w.fix) {
        if(d.reg.vy_qubit) cons.push_back({Mask(1) << *d.reg.vy_qubit, w.vy});
        if(d.reg.vx_qubit) cons.push_back({Mask(1) << *d.reg.vx_qubit, w.vx});
        else if(d.vx_loop) cons.push_back({d.vx_loop->x, d.vx_loop->phase == 2 ? -w.vx : w.vx});
    }
    return ReducedSpace(d.nq, cons, d.n_a);
}

} // namespace z2ent
