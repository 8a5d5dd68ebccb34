#pragma once
#include "pauli.hpp"

#include <array>
#include <stdexcept>
#include <vector>

namespace z2ent {

// Common +-1 eigenspace of commuting X-type strings. In the Hadamard frame the constraints are
// parities of the bitstring, so the subspace is an affine GF(2) subspace c = c0 ^ L f. Pivots
// are taken on the highest bits, so a prefix of the register (the A side) keeps as many free
// bits as possible and its configuration depends only on its own free bits.
class ReducedSpace {
  public:
    struct Constraint {
        Mask mask;
        int  sign = 1;
    };

    ReducedSpace() = default;
    ReducedSpace(int nq, const std::vector<Constraint>& cons, int prefix = 0) : nq_(nq), prefix_(prefix) {
        std::vector<std::pair<Mask, int>> rows;
        for(auto& c : cons) rows.push_back({c.mask, c.sign < 0 ? 1 : 0});
        std::vector<std::pair<Mask, int>> piv; // (row, rhs), pivot = highest bit
        Mask pivots = 0;
        for(int col = nq - 1; col >= 0; --col) {
            Mask bit = Mask(1) << col;
            std::size_t k = 0;
            for(; k < rows.size(); ++k)
                if(rows[k].first & bit) break;
            if(k == rows.size()) continue;
            auto r = rows[k];
            rows.erase(rows.begin() + long(k));
            for(auto& o : rows)
                if(o.first & bit) {
                    o.first ^= r.first;
                    o.second ^= r.second;
                }
            for(auto& o : piv)
                if(o.first & bit) {
                    o.first ^= r.first;
                    o.second ^= r.second;
                }
            piv.push_back(r);
            pivots |= bit;
        }
        for(auto& r : rows)
            if(r.first == 0 && r.second) throw std::invalid_argument("inconsistent constraints");
        pivot_mask_ = pivots;
        for(int q = 0; q < nq; ++q)
            if(!((pivots >> q) & 1)) free_bits_.push_back(q);
        nfree_a_ = 0;
        for(int q : free_bits_) nfree_a_ += q < prefix_;
        c0_ = 0;
        for(auto& [r, rhs] : piv) {
            int p = 63 - std::countl_zero(r);
            if(rhs) c0_ |= Mask(1) << p;
        }
        for(int q : free_bits_) {
            Mask col = Mask(1) << q;
            for(auto& [r, rhs] : piv)
                if(r & (Mask(1) << q)) col |= Mask(1) << (63 - std::countl_zero(r));
            L_.push_back(col);
        }
        build_tables();
    }

    int         num_qubits() const { return nq_; }
    int         nfree() const { return int(free_bits_.size()); }
    int         nfree_a() const { return nfree_a_; }
    int         nfree_b() const { return nfree() - nfree_a_; }
    std::size_t dim() const { return std::size_t(1) << nfree(); }
    const std::vector<int>& free_bits() const { return free_bits_; }
    // configuration change caused by flipping free bit j
    Mask column(int j) const { return L_[std::size_t(j)]; }
    Mask offset() const { return c0_; }

    Mask embed(std::size_t f) const {
        Mask c = c0_;
        for(std::size_t k = 0; k < tables_.size(); ++k) c ^= tables_[k][(f >> (8 * k)) & 0xff];
        return c;
    }

    bool contains(Mask c) const {
        // a config lies in the subspace iff re-embedding its free bits reproduces it
        return embed(compress(c)) == c;
    }
    std::size_t compress(Mask c) const {
        std::size_t f = 0;
        for(std::size_t j = 0; j < free_bits_.size(); ++j)
            if((c >> free_bits_[j]) & 1) f |= std::size_t(1) << j;
        return f;
    }

    // Parity of an X-type mask as affine function of the free bits: (-1)^(c0.x) (-1)^(f.xr).
    std::pair<int, Mask> reduce_parity(Mask x) const {
        int s = parity(c0_ & x) ? -1 : 1;
        Mask xr = 0;
        for(std::size_t j = 0; j < L_.size(); ++j)
            if(parity(L_[j] & x)) xr |= Mask(1) << j;
        return {s, xr};
    }

    // Image of a string in the frame, restricted to the subspace.
    PauliString reduce(const PauliString& p) const {
        if(p.x & p.z) throw std::invalid_argument("reduce: strings with Y factors are not supported");
        // the flip part must preserve every constraint, i.e. lie in the span of L
        if((embed(compress(p.z)) ^ c0_) != p.z) throw std::invalid_argument("reduce: term does not commute with constraints");
        auto [s, zr] = reduce_parity(p.x);
        Mask xr = compress(p.z);
        int  ph = p.phase + (s < 0 ? 2 : 0) - popcount(xr & zr);
        return PauliString(nfree(), xr, zr, ((ph % 4) + 4) % 4);
    }

    OperatorSum reduce(const OperatorSum& h) const {
        OperatorSum r(nfree());
        for(auto& t : h) r.add(t.coeff, reduce(t.op));
        r.prune();
        return r;
    }

  private:
    void build_tables() {
        int nb = (nfree() + 7) / 8;
        tables_.assign(std::size_t(nb), {});
        for(int k = 0; k < nb; ++k)
            for(int v = 0; v < 256; ++v) {
                Mask c = 0;
                for(int j = 0; j < 8; ++j) {
                    int idx = 8 * k + j;
                    if(idx < nfree() && ((v >> j) & 1)) c ^= L_[std::size_t(idx)];
                }
                tables_[std::size_t(k)][std::size_t(v)] = c;
            }
    }

    int                            nq_ = 0;
    int                            prefix_ = 0;
    int                            nfree_a_ = 0;
    Mask                           pivot_mask_ = 0;
    Mask                           c0_ = 0;
    std::vector<int>               free_bits_;
    std::vector<Mask>              L_;
    std::vector<std::array<Mask, 256>> tables_;
};

} // namespace z2ent
