#pragma once
#include <algorithm>
#include <bit>
#include <complex>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace z2ent {

using cplx = std::complex<double>;
using Mask = std::uint64_t;

inline int popcount(Mask m) { return std::popcount(m); }
inline int parity(Mask m) { return std::popcount(m) & 1; }

// i^k for k mod 4
inline cplx ipow(int k) {
    switch(k & 3) {
        case 0: return {1, 0};
        case 1: return {0, 1};
        case 2: return {-1, 0};
        default: return {0, -1};
    }
}

// Letter convention: a qubit with both bits set is Y; the operator is i^phase * (tensor of letters).
struct PauliString {
    Mask x = 0;
    Mask z = 0;
    int  phase = 0; // exponent of i, mod 4
    int  n = 0;     // register size

    PauliString() = default;
    PauliString(int nq, Mask xm, Mask zm, int ph = 0) : x(xm), z(zm), phase(ph & 3), n(nq) {
        if(nq < 0 || nq > 64) throw std::invalid_argument("register size must be in [0,64]");
        Mask lim = nq == 64 ? ~Mask(0) : ((Mask(1) << nq) - 1);
        if((xm | zm) & ~lim) throw std::invalid_argument("mask exceeds register");
    }

    static PauliString identity(int nq) { return {nq, 0, 0, 0}; }
    static PauliString X(int nq, int q) { return {nq, Mask(1) << q, 0, 0}; }
    static PauliString Z(int nq, int q) { return {nq, 0, Mask(1) << q, 0}; }
    static PauliString Y(int nq, int q) { return {nq, Mask(1) << q, Mask(1) << q, 0}; }

    bool is_identity() const { return x == 0 && z == 0; }
    bool hermitian() const { return (phase & 1) == 0; }
    Mask support() const { return x | z; }
    int  weight() const { return popcount(x | z); }

    bool operator==(const PauliString& o) const { return x == o.x && z == o.z && phase == o.phase && n == o.n; }
    bool same_masks(const PauliString& o) const { return x == o.x && z == o.z; }

    // e.g. "+XIZY" with qubit 0 leftmost
    std::string str() const {
        static const char* ph[] = {"+", "+i", "-", "-i"};
        std::string s = ph[phase & 3];
        for(int q = 0; q < n; ++q) {
            bool bx = (x >> q) & 1, bz = (z >> q) & 1;
            s += bx ? (bz ? 'Y' : 'X') : (bz ? 'Z' : 'I');
        }
        return s;
    }
};

inline void check_same_register(const PauliString& a, const PauliString& b) {
    if(a.n != b.n) throw std::invalid_argument("register-size mismatch");
}

inline PauliString multiply(const PauliString& a, const PauliString& b) {
    check_same_register(a, b);
    Mask x3 = a.x ^ b.x, z3 = a.z ^ b.z;
    int  e  = a.phase + b.phase + popcount(a.x & a.z) + popcount(b.x & b.z) + 2 * popcount(a.z & b.x) - popcount(x3 & z3);
    PauliString r;
    r.x = x3;
    r.z = z3;
    r.phase = ((e % 4) + 4) % 4;
    r.n = a.n;
    return r;
}

inline PauliString operator*(const PauliString& a, const PauliString& b) { return multiply(a, b); }

inline bool commutes(const PauliString& a, const PauliString& b) {
    check_same_register(a, b);
    return ((popcount(a.x & b.z) + popcount(a.z & b.x)) & 1) == 0;
}

// amplitude factor picked up by basis state |i> -> |i ^ x>
inline cplx matrix_element(const PauliString& p, Mask i) {
    int k = p.phase + popcount(p.x & p.z) + 2 * parity(i & p.z);
    return ipow(k);
}

template<typename Vec>
void apply_add(const PauliString& p, cplx coeff, const Vec& in, Vec& out) {
    const std::size_t dim = in.size();
    const cplx        base = coeff * ipow(p.phase + popcount(p.x & p.z));
    for(std::size_t i = 0; i < dim; ++i) {
        if(in[i] == cplx(0)) continue;
        cplx f = parity(i & p.z) ? -base : base;
        out[i ^ p.x] += f * in[i];
    }
}

inline std::vector<cplx> apply(const PauliString& p, const std::vector<cplx>& state) {
    if(state.size() != (std::size_t(1) << p.n)) throw std::invalid_argument("dimension mismatch");
    std::vector<cplx> out(state.size(), cplx(0));
    apply_add(p, cplx(1), state, out);
    return out;
}

struct Term {
    double      coeff;
    PauliString op;
};

// Real-coefficient sum of Hermitian strings, kept merged and sign-normalized (phase 0).
class OperatorSum {
  public:
    explicit OperatorSum(int nq = 0) : n_(nq) {}

    int  num_qubits() const { return n_; }
    bool empty() const { return terms_.empty(); }
    std::size_t size() const { return terms_.size(); }
    const std::vector<Term>& terms() const { return terms_; }
    auto begin() const { return terms_.begin(); }
    auto end() const { return terms_.end(); }

    void add(double c, PauliString p) {
        if(p.n != n_) throw std::invalid_argument("register-size mismatch");
        if(!p.hermitian()) throw std::invalid_argument("non-Hermitian string with real coefficient");
        if(p.phase == 2) c = -c;
        p.phase = 0;
        auto key = std::make_pair(p.x, p.z);
        auto it  = index_.find(key);
        if(it == index_.end()) {
            index_.emplace(key, terms_.size());
            terms_.push_back({c, p});
        } else {
            terms_[it->second].coeff += c;
        }
    }
    void add(const OperatorSum& o, double scale = 1.0) {
        for(const auto& t : o.terms_) add(scale * t.coeff, t.op);
    }
    // drop merged terms whose coefficient cancelled
    void prune(double tol = 0.0) {
        std::vector<Term> kept;
        for(auto& t : terms_)
            if(std::abs(t.coeff) > tol) kept.push_back(t);
        terms_ = std::move(kept);
        index_.clear();
        for(std::size_t k = 0; k < terms_.size(); ++k) index_.emplace(std::make_pair(terms_[k].op.x, terms_[k].op.z), k);
    }
    OperatorSum operator+(const OperatorSum& o) const {
        OperatorSum r = *this;
        r.add(o);
        return r;
    }
    bool commutes_with(const PauliString& p) const {
        return std::all_of(terms_.begin(), terms_.end(), [&](const Term& t) { return commutes(t.op, p); });
    }
    std::vector<cplx> apply(const std::vector<cplx>& state) const {
        if(state.size() != (std::size_t(1) << n_)) throw std::invalid_argument("dimension mismatch");
        std::vector<cplx> out(state.size(), cplx(0));
        for(const auto& t : terms_) apply_add(t.op, cplx(t.coeff), state, out);
        return out;
    }

  private:
    int                                         n_;
    std::vector<Term>                           terms_;
    std::map<std::pair<Mask, Mask>, std::size_t> index_;
};

} // namespace z2ent
