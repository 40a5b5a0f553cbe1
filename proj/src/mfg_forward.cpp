#include "mfglab/mfg_forward.hpp"

#include <cmath>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

namespace mfglab {

void FSeries::check() const {
    int last = 1;
    for (const auto& t : terms) {
        if (t.order < 2) throw ParameterError("F series orders must be >= 2");
        if (t.order <= last) throw ParameterError("F series orders must be strictly increasing");
        if (t.order > kMaxOrder) throw ParameterError("F series truncation order exceeds 6");
        t.coeff.check();
        last = t.order;
    }
}

const ScalarField* FSeries::find(int order) const {
    for (const auto& t : terms)
        if (t.order == order) return &t.coeff;
    return nullptr;
}

void MfgCoefficients::check() const {
    if (!(v > 0.0)) throw ParameterError("viscosity must be positive");
    k.check();
    r.check();
    if (k.grid != r.grid) throw ParameterError("k and r live on different grids");
    if (k.values.real().minCoeff() < 0.0 || r.values.real().minCoeff() < 0.0)
        throw ParameterError("discount coefficients must be nonnegative");
    F.check();
    for (const auto& t : F.terms)
        if (t.coeff.grid != k.grid) throw ParameterError("F coefficient lives on a different grid");
}

MfgCoefficients MfgCoefficients::constant(GridPtr g, double v, double k, double r) {
    return {v, ScalarField::constant(g, k), ScalarField::constant(g, r), {}};
}

namespace {

double factorial(int n) {
    double f = 1.0;
    for (int i = 2; i <= n; ++i) f *= i;
    return f;
}

}  // namespace

VecR evaluate_F_values(const FSeries& F, const VecR& m) {
    VecR out = VecR::Zero(m.size());
    for (const auto& t : F.terms)
        out.array() += t.coeff.values.real().array() * m.array().pow(t.order) / factorial(t.order);
    return out;
}

namespace {

struct Residual {
    VecR ru, rm;
    double maxnorm() const { return std::max(ru.cwiseAbs().maxCoeff(), rm.cwiseAbs().maxCoeff()); }
};

Residual residual(const MfgCoefficients& c, const VecR& u, const VecR& m, const VecR& f, const VecR& gb) {
    const Grid& g = *c.grid();
    const VecR k = c.k.real(), r = c.r.real();
    VecR ru = neg_laplacian(g, c.v, u) + 0.5 * grad_dot(g, u, u) + k.cwiseProduct(u) - evaluate_F_values(c.F, m);
    VecR rm = neg_laplacian(g, c.v, m) - flux_divergence(g, m, u) + r.cwiseProduct(m);
    for (int b = 0; b < g.boundary_count(); ++b) {
        const int p = g.boundary_nodes()[b];
        ru[p] = u[p] - f[b];
        rm[p] = m[p] - gb[b];
    }
    return {ru, rm};
}

/// Eigen-compatible block-diagonal preconditioner built from two LDLT factorizations
class BlockPreconditioner {
public:
    using StorageIndex = int;
    enum { ColsAtCompileTime = Eigen::Dynamic, MaxColsAtCompileTime = Eigen::Dynamic };

    void set(const Eigen::SimplicialLDLT<SpMat>* a, const Eigen::SimplicialLDLT<SpMat>* b) {
        a_ = a;
        b_ = b;
    }
    template <class M>
    BlockPreconditioner& analyzePattern(const M&) { return *this; }
    template <class M>
    BlockPreconditioner& factorize(const M&) { return *this; }
    template <class M>
    BlockPreconditioner& compute(const M&) { return *this; }
    template <class Rhs>
    VecR solve(const Eigen::MatrixBase<Rhs>& rhs) const {
        const Eigen::Index n = rhs.size() / 2;
        VecR x(rhs.size());
        x.head(n) = a_->solve(VecR(rhs.head(n)));
        x.tail(n) = b_->solve(VecR(rhs.tail(n)));
        return x;
    }
    Eigen::ComputationInfo info() const { return Eigen::Success; }

private:
    const Eigen::SimplicialLDLT<SpMat>* a_ = nullptr;
    const Eigen::SimplicialLDLT<SpMat>* b_ = nullptr;
};

SpMat screened_block(const Grid& g, double v, const VecR& c) {
    const double ih2 = v / (g.h_mesh() * g.h_mesh());
    std::vector<Eigen::Triplet<double>> t;
    for (int i = 0; i < g.interior_count(); ++i) {
        const int p = g.interior_nodes()[i];
        t.emplace_back(i, i, 2.0 * g.dim() * ih2 + c[p]);
        for (int ax = 0; ax < g.dim(); ++ax)
            for (int q : {p + g.stride(ax), p - g.stride(ax)})
                if (!g.is_boundary(q)) t.emplace_back(i, g.interior_slot(q), -ih2);
    }
    SpMat K(g.interior_count(), g.interior_count());
    K.setFromTriplets(t.begin(), t.end());
    return K;
}

class NewtonSystem {
public:
    explicit NewtonSystem(const MfgCoefficients& c) : c_(c), g_(*c.grid()) {
        Kk_.compute(screened_block(g_, c.v, c.k.real()));
        Kr_.compute(screened_block(g_, c.v, c.r.real()));
        if (Kk_.info() != Eigen::Success || Kr_.info() != Eigen::Success)
            throw SingularOperator("screened operator factorization failed");
        for (auto* f : {&Kk_, &Kr_}) {
            const VecR d = f->vectorD();
            if (d.cwiseAbs().minCoeff() < 1e-12 * d.cwiseAbs().maxCoeff()) throw SingularOperator("pivot below tolerance");
        }
    }

    /// Newton step: J d = -R with boundary increments prescribed
    void step(const VecR& u, const VecR& m, const Residual& R, VecR& du, VecR& dm) {
        const int ni = g_.interior_count(), nb = g_.boundary_count();
        const double h = g_.h_mesh(), ih2 = 1.0 / (h * h), vh2 = c_.v * ih2;
        const VecR k = c_.k.real(), r = c_.r.real();
        const VecR dF = evaluate_dF(c_.F, m);
        std::vector<VecR> grad(g_.dim());
        for (int ax = 0; ax < g_.dim(); ++ax) grad[ax] = gradient_component(g_, u, ax);

        // boundary increments
        VecR db(2 * nb);
        for (int b = 0; b < nb; ++b) {
            const int p = g_.boundary_nodes()[b];
            db[b] = -R.ru[p];
            db[nb + b] = -R.rm[p];
        }
        std::vector<Eigen::Triplet<double>> tii;
        tii.reserve(static_cast<std::size_t>(ni) * (6 * g_.dim() + 4));
        VecR rhs(2 * ni);
        for (int i = 0; i < ni; ++i) {
            const int p = g_.interior_nodes()[i];
            rhs[i] = -R.ru[p];
            rhs[ni + i] = -R.rm[p];
        }
        auto add = [&](int row, int q, int blk, double val) {
            // blk 0 = u unknowns, 1 = m unknowns
            if (g_.is_boundary(q))
                rhs[row] -= val * db[blk * nb + g_.boundary_slot(q)];
            else
                tii.emplace_back(row, blk * ni + g_.interior_slot(q), val);
        };
        for (int i = 0; i < ni; ++i) {
            const int p = g_.interior_nodes()[i];
            double duu = 2.0 * g_.dim() * vh2 + k[p];
            double dmm = 2.0 * g_.dim() * vh2 + r[p];
            double dmu = 0.0;
            for (int ax = 0; ax < g_.dim(); ++ax) {
                const int s = g_.stride(ax);
                // HJB row
                add(i, p + s, 0, -vh2 + grad[ax][p] * 0.5 / h);
                add(i, p - s, 0, -vh2 - grad[ax][p] * 0.5 / h);
                // KFP row: -div(m grad du) and -div(dm grad u)
                const double mp = 0.5 * (m[p] + m[p + s]), mm = 0.5 * (m[p] + m[p - s]);
                add(ni + i, p + s, 0, -mp * ih2);
                add(ni + i, p - s, 0, -mm * ih2);
                dmu += (mp + mm) * ih2;
                const double fp = u[p + s] - u[p], fm = u[p] - u[p - s];
                dmm += -0.5 * ih2 * (fp - fm);
                add(ni + i, p + s, 1, -vh2 - 0.5 * ih2 * fp);
                add(ni + i, p - s, 1, -vh2 + 0.5 * ih2 * fm);
            }
            tii.emplace_back(i, i, duu);
            tii.emplace_back(i, ni + i, -dF[p]);
            tii.emplace_back(ni + i, i, dmu);
            tii.emplace_back(ni + i, ni + i, dmm);
        }
        SpMat J(2 * ni, 2 * ni);
        J.setFromTriplets(tii.begin(), tii.end());

        Eigen::BiCGSTAB<SpMat, BlockPreconditioner> solver;
        solver.preconditioner().set(&Kk_, &Kr_);
        solver.setTolerance(1e-14);
        solver.setMaxIterations(500);
        solver.compute(J);
        VecR x = solver.solve(rhs);
        if (solver.info() != Eigen::Success || !x.allFinite() || (J * x - rhs).norm() > 1e-11 * rhs.norm()) {
            Eigen::SparseLU<SpMat> lu(J);
            if (lu.info() != Eigen::Success) throw SingularOperator("Newton Jacobian is singular");
            x = lu.solve(rhs);
        }
        du = VecR::Zero(g_.node_count());
        dm = VecR::Zero(g_.node_count());
        for (int i = 0; i < ni; ++i) {
            du[g_.interior_nodes()[i]] = x[i];
            dm[g_.interior_nodes()[i]] = x[ni + i];
        }
        for (int b = 0; b < nb; ++b) {
            du[g_.boundary_nodes()[b]] = db[b];
            dm[g_.boundary_nodes()[b]] = db[nb + b];
        }
    }

private:
    const MfgCoefficients& c_;
    const Grid& g_;
    Eigen::SimplicialLDLT<SpMat> Kk_, Kr_;
};

}  // namespace

VecR evaluate_dF(const FSeries& F, const VecR& m) {
    VecR out = VecR::Zero(m.size());
    for (const auto& t : F.terms)
        out.array() += t.coeff.values.real().array() * m.array().pow(t.order - 1) / factorial(t.order - 1);
    return out;
}

ScalarField evaluate_F(const FSeries& F, const ScalarField& m) {
    F.check();
    ScalarField out = ScalarField::zeros(m.grid, m.is_complex);
    for (const auto& t : F.terms)
        out.values.array() += t.coeff.values.array() * m.values.array().pow(t.order) / factorial(t.order);
    return out;
}

std::pair<ScalarField, ScalarField> mfg_residual(const MfgCoefficients& coeffs, const ScalarField& u,
                                                 const ScalarField& m, const BoundaryTrace& f,
                                                 const BoundaryTrace& g) {
    coeffs.check();
    const auto& G = coeffs.grid();
    if (u.grid != G || m.grid != G || f.grid != G || g.grid != G) throw ParameterError("fields live on different grids");
    const Residual R = residual(coeffs, u.real(), m.real(), f.real(), g.real());
    return {ScalarField::from_real(G, R.ru), ScalarField::from_real(G, R.rm)};
}

MfgSolution solve_mfg(const MfgCoefficients& coeffs, const BoundaryTrace& f, const BoundaryTrace& g,
                      const NewtonOptions& opts) {
    coeffs.check();
    const auto& G = coeffs.grid();
    if (f.grid != G || g.grid != G) throw ParameterError("boundary data live on a different grid");
    f.check();
    g.check();
    const VecR fb = f.real(), gb = g.real();
    const double amp = fb.cwiseAbs().maxCoeff() + gb.cwiseAbs().maxCoeff();
    if (amp > opts.delta)
        throw ParameterError("boundary data amplitude " + std::to_string(amp) + " exceeds delta " +
                             std::to_string(opts.delta));
    if (opts.require_nonneg_g && gb.minCoeff() < 0.0) throw PositivityViolation("g must be nonnegative");

    NewtonSystem sys(coeffs);
    VecR u = VecR::Zero(G->node_count()), m = VecR::Zero(G->node_count());
    Residual R = residual(coeffs, u, m, fb, gb);
    MfgSolution sol;
    sol.residual_history.push_back(R.maxnorm());
    int it = 0;
    double res = 0.0;
    do {
        VecR du, dm;
        sys.step(u, m, R, du, dm);
        u += du;
        m += dm;
        ++it;
        R = residual(coeffs, u, m, fb, gb);
        res = R.maxnorm();
        sol.residual_history.push_back(res);
        if (!std::isfinite(res)) throw NonConvergence("Newton iterate diverged");
    } while (res > opts.tol && it < opts.max_iter);
    if (res > opts.tol)
        throw NonConvergence("Newton residual " + std::to_string(res) + " after " + std::to_string(it) + " iterations");
    sol.u = ScalarField::from_real(G, u);
    sol.m = ScalarField::from_real(G, m);
    sol.newton_iterations = it;
    sol.final_residual = res;
    return sol;
}

}  // namespace mfglab
