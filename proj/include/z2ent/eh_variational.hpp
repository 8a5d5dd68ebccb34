#pragma once
#include "entanglement.hpp"

#include <limits>

namespace z2ent {

struct AnsatzTerm {
    std::string label; // "electric" or "magnetic"
    std::string kind;  // finer lattice kind, see a_supported_terms
    int         column = 0;
    int         row = 0;
    PauliString op;    // on the reduced A register
};

// sigma_A ~ exp(-sum_n beta_n h_n). Parameters are shared inside a tie group.
struct VariationalAnsatz {
    std::vector<AnsatzTerm> operators;
    std::vector<int>        tie_group; // per operator, parameter index
    std::vector<double>     betas;     // per parameter
    int                     n_qubits = 0;

    std::size_t num_params() const { return betas.size(); }
    std::vector<double> expand(const std::vector<double>& params) const {
        std::vector<double> b(operators.size());
        for(std::size_t k = 0; k < operators.size(); ++k) b[k] = params[std::size_t(tie_group[k])];
        return b;
    }
};

struct AnsatzOptions {
    bool   boundary_links = false; // add electric terms of the links crossing the cut
    bool   tie_rows = true;        // translation invariance parallel to the cut
    double beta0 = 0.1;
};

inline VariationalAnsatz make_ansatz(const CutSystem& cs, const AnsatzOptions& o = {}) {
    VariationalAnsatz a;
    a.n_qubits = cs.n_a();
    std::map<std::pair<std::string, int>, int> groups;
    for(auto& t : a_supported_terms(cs.model, o.boundary_links)) {
        AnsatzTerm at;
        at.kind = t.kind;
        at.label = t.kind == "magnetic" ? "magnetic" : "electric";
        at.column = t.column;
        at.row = t.row;
        at.op = cs.restrict_to_a(cs.space.reduce(t.op));
        if(at.op.is_identity()) continue;
        int g;
        if(o.tie_rows) {
            auto key = std::make_pair(t.kind, t.column);
            auto it = groups.find(key);
            if(it == groups.end()) it = groups.emplace(key, int(groups.size())).first;
            g = it->second;
        } else
            g = int(a.operators.size());
        a.tie_group.push_back(g);
        a.operators.push_back(at);
    }
    int np = 0;
    for(int g : a.tie_group) np = std::max(np, g + 1);
    a.betas.assign(std::size_t(np), o.beta0);
    return a;
}

// Dense evaluation of the relative entropy and its gradient for a fixed rho.
class RelativeEntropy {
  public:
    RelativeEntropy(const DensityMatrix& rho, const VariationalAnsatz& a) : a_(a), d_(rho.dim()) {
        if((Eigen::Index(1) << a.n_qubits) != d_) throw std::invalid_argument("relative_entropy: rho and ansatz registers differ");
        for(auto& t : a.operators)
            if(t.op.n != a.n_qubits) throw std::invalid_argument("relative_entropy: ansatz operator outside A");
        Eigen::SelfAdjointEigenSolver<MatC> es(rho.matrix, Eigen::EigenvaluesOnly);
        s_rho_ = von_neumann_entropy(es.eigenvalues());
        rho_levels_ = es.eigenvalues();
        for(auto& t : a.operators) h_rho_.push_back(trace_with(rho.matrix, t.op));
    }

    double entropy_exact() const { return s_rho_; }
    const Eigen::VectorXd& rho_eigenvalues() const { return rho_levels_; }

    // value and gradient in the parameter space of the ansatz
    double evaluate(const std::vector<double>& params, std::vector<double>* grad = nullptr) const {
        auto b = a_.expand(params);
        MatC K = generator(b);
        Eigen::SelfAdjointEigenSolver<MatC> es(K);
        const Eigen::VectorXd& k = es.eigenvalues();
        double kmin = k.minCoeff();
        Eigen::VectorXd w = (-(k.array() - kmin)).exp();
        double zs = w.sum();
        double logz = std::log(zs) - kmin;
        double val = -s_rho_ + logz;
        for(std::size_t n = 0; n < b.size(); ++n) val += b[n] * h_rho_[n];
        if(grad) {
            Eigen::VectorXd p = w / zs;
            const MatC& V = es.eigenvectors();
            grad->assign(a_.num_params(), 0.0);
            MatC hv(d_, d_);
            for(std::size_t n = 0; n < b.size(); ++n) {
                apply_columns(a_.operators[n].op, V, hv);
                double hs = 0;
                for(Eigen::Index i = 0; i < d_; ++i) hs += p[i] * V.col(i).dot(hv.col(i)).real();
                (*grad)[std::size_t(a_.tie_group[n])] += h_rho_[n] - hs;
            }
        }
        return val;
    }

    MatC generator(const std::vector<double>& b) const {
        MatC K = MatC::Zero(d_, d_);
        for(std::size_t n = 0; n < b.size(); ++n) {
            const auto& p = a_.operators[n].op;
            for(Eigen::Index i = 0; i < d_; ++i) K(Eigen::Index(Mask(i) ^ p.x), i) += b[n] * matrix_element(p, Mask(i));
        }
        return K;
    }

    // normalized sigma for the given parameters
    MatC sigma(const std::vector<double>& params) const {
        Eigen::SelfAdjointEigenSolver<MatC> es(generator(a_.expand(params)));
        const Eigen::VectorXd& k = es.eigenvalues();
        Eigen::VectorXd w = (-(k.array() - k.minCoeff())).exp();
        w /= w.sum();
        return es.eigenvectors() * w.cast<cplx>().asDiagonal() * es.eigenvectors().adjoint();
    }

  private:
    double trace_with(const MatC& m, const PauliString& p) const {
        cplx s = 0;
        for(Eigen::Index i = 0; i < d_; ++i) s += m(i, Eigen::Index(Mask(i) ^ p.x)) * matrix_element(p, Mask(i));
        return s.real();
    }
    void apply_columns(const PauliString& p, const MatC& V, MatC& out) const {
        for(Eigen::Index i = 0; i < d_; ++i) out.row(Eigen::Index(Mask(i) ^ p.x)) = matrix_element(p, Mask(i)) * V.row(i);
    }

    const VariationalAnsatz& a_;
    Eigen::Index             d_;
    double                   s_rho_ = 0;
    Eigen::VectorXd          rho_levels_;
    std::vector<double>      h_rho_;
};

inline double relative_entropy(const DensityMatrix& rho, const VariationalAnsatz& a) {
    return RelativeEntropy(rho, a).evaluate(a.betas);
}

struct FitOptions {
    double grad_tol = 1e-8;
    int    max_evaluations = 2000;
};

struct FitResult {
    std::vector<double>                betas;  // per operator
    std::vector<double>                params; // per tie group
    double                             relative_entropy = 0;
    double                             entropy_exact = 0;
    double                             entropy_variational = 0;
    std::vector<std::pair<int, double>> trajectory;
    int                                evaluations = 0;
    double                             grad_norm = 0;
    bool                               converged = false;
    Eigen::VectorXd                    sigma_eigenvalues; // ascending
};

// Quasi-Newton (BFGS) with backtracking on the convex objective.
inline FitResult fit(const DensityMatrix& rho, const VariationalAnsatz& a, const FitOptions& o = {}) {
    RelativeEntropy re(rho, a);
    const std::size_t n = a.num_params();
    Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(a.betas.data(), Eigen::Index(n));
    auto eval = [&](const Eigen::VectorXd& v, Eigen::VectorXd& g) {
        std::vector<double> p(v.data(), v.data() + v.size()), gg;
        double f = re.evaluate(p, &gg);
        g = Eigen::Map<Eigen::VectorXd>(gg.data(), Eigen::Index(n));
        return f;
    };
    FitResult r;
    Eigen::VectorXd g;
    double f = eval(x, g);
    r.evaluations = 1;
    MatD Hinv = MatD::Identity(Eigen::Index(n), Eigen::Index(n));
    int iter = 0;
    r.trajectory.push_back({0, f});
    while(g.cwiseAbs().maxCoeff() >= o.grad_tol && r.evaluations < o.max_evaluations) {
        Eigen::VectorXd dir = -Hinv * g;
        double slope = g.dot(dir);
        if(slope >= 0) {
            Hinv.setIdentity();
            dir = -g;
            slope = -g.squaredNorm();
        }
        double step = 1.0;
        Eigen::VectorXd xn, gn;
        double fn = f;
        bool accepted = false;
        while(r.evaluations < o.max_evaluations) {
            xn = x + step * dir;
            fn = eval(xn, gn);
            ++r.evaluations;
            // near the optimum the Armijo decrease drops below roundoff; accept a smaller gradient then
            if(fn <= f + 1e-4 * step * slope || (fn <= f + 1e-12 && gn.cwiseAbs().maxCoeff() < g.cwiseAbs().maxCoeff())) {
                accepted = true;
                break;
            }
            step *= 0.5;
            if(step < 1e-12) break;
        }
        if(!accepted) {
            if(Hinv.isIdentity()) break;
            Hinv.setIdentity();
            continue;
        }
        Eigen::VectorXd s = xn - x, y = gn - g;
        double sy = s.dot(y);
        if(sy > 1e-14 * s.norm() * y.norm()) {
            double rho_k = 1.0 / sy;
            MatD I = MatD::Identity(Eigen::Index(n), Eigen::Index(n));
            Hinv = (I - rho_k * s * y.transpose()) * Hinv * (I - rho_k * y * s.transpose()) + rho_k * s * s.transpose();
        }
        x = xn;
        g = gn;
        f = fn;
        r.trajectory.push_back({++iter, f});
    }
    r.params.assign(x.data(), x.data() + x.size());
    r.betas = a.expand(r.params);
    r.relative_entropy = f;
    r.grad_norm = g.cwiseAbs().maxCoeff();
    r.converged = r.grad_norm < o.grad_tol;
    r.entropy_exact = re.entropy_exact();
    Eigen::SelfAdjointEigenSolver<MatC> es(re.sigma(r.params), Eigen::EigenvaluesOnly);
    r.sigma_eigenvalues = es.eigenvalues();
    r.entropy_variational = von_neumann_entropy(r.sigma_eigenvalues);
    return r;
}

// Largest relative deviation over the lowest `fraction` of the nonzero levels of rho.
inline double es_relative_error(const Eigen::VectorXd& rho_eigs, const Eigen::VectorXd& sigma_eigs, double fraction = 0.5,
                                double cutoff = 1e-14) {
    std::vector<double> xr, xs;
    for(double l : rho_eigs)
        if(l > cutoff) xr.push_back(-std::log(l));
    for(double l : sigma_eigs) xs.push_back(-std::log(std::max(l, 1e-300)));
    std::sort(xr.begin(), xr.end());
    std::sort(xs.begin(), xs.end());
    std::size_t m = std::max<std::size_t>(1, std::size_t(fraction * double(xr.size())));
    double worst = 0;
    for(std::size_t k = 0; k < m && k < xs.size(); ++k) worst = std::max(worst, std::abs(xs[k] - xr[k]) / std::abs(xr[k]));
    return worst;
}

} // namespace z2ent
