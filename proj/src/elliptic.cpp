#include "mfglab/elliptic.hpp"

#include <cmath>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

namespace mfglab {

namespace {

constexpr double kPivotTol = 1e-12;

bool use_iterative(const Grid& g) { return g.dim() == 3 && g.n_cells() > 32; }

}  // namespace

SpMat energy_matrix(const Grid& g, double v, const VecR& c) {
    const int n = g.n_cells();
    const double hd2 = std::pow(g.h_mesh(), g.dim() - 2);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(g.node_count()) * (2 * g.dim() + 1));
    for (int p = 0; p < g.node_count(); ++p) {
        trip.emplace_back(p, p, g.weights()[p] * c[p]);
        const auto idx = g.multi_index(p);
        for (int ax = 0; ax < g.dim(); ++ax) {
            if (idx[ax] == n) continue;
            const int q = p + g.stride(ax);
            double kappa = 1.0;
            for (int b = 0; b < g.dim(); ++b)
                if (b != ax && (idx[b] == 0 || idx[b] == n)) kappa *= 0.5;
            const double a = v * hd2 * kappa;
            trip.emplace_back(p, p, a);
            trip.emplace_back(q, q, a);
            trip.emplace_back(p, q, -a);
            trip.emplace_back(q, p, -a);
        }
    }
    SpMat A(g.node_count(), g.node_count());
    A.setFromTriplets(trip.begin(), trip.end());
    return A;
}

struct EllipticOperator::Backend {
    Eigen::SimplicialLDLT<SpMat> ldlt;
    Eigen::SparseLU<SpMat> lu;
    Eigen::SparseLU<SpMatC> luc;
    Eigen::BiCGSTAB<SpMat, Eigen::DiagonalPreconditioner<double>> cg;
    Eigen::BiCGSTAB<SpMatC, Eigen::DiagonalPreconditioner<cplx>> cgc;
    enum Kind { LDLT, LU, LUC, ITER, ITERC } kind = LDLT;
    SpMat K;
};

EllipticOperator::~EllipticOperator() = default;

EllipticOperator::EllipticOperator(GridPtr grid, double v, const VecC& c, const VecR* drift)
    : grid_(std::move(grid)), v_(v), c_(c), backend_(std::make_unique<Backend>()) {
    const Grid& g = *grid_;
    if (!(v > 0.0)) throw ParameterError("viscosity must be positive");
    if (c.size() != g.node_count()) throw ParameterError("coefficient size mismatch");
    if (!c.allFinite()) throw ParameterError("coefficient has non-finite values");
    has_drift_ = drift != nullptr;
    if (has_drift_ && drift->size() != g.node_count()) throw ParameterError("drift size mismatch");
    complex_ = c.imag().cwiseAbs().maxCoeff() > 0.0;

    const double ih2 = 1.0 / (g.h_mesh() * g.h_mesh());
    std::vector<Eigen::Triplet<cplx>> tii, tib;
    for (int i = 0; i < g.interior_count(); ++i) {
        const int p = g.interior_nodes()[i];
        cplx diag = 2.0 * g.dim() * v * ih2 + c[p];
        auto add = [&](int q, cplx a) {
            if (g.is_boundary(q))
                tib.emplace_back(i, g.boundary_slot(q), a);
            else
                tii.emplace_back(i, g.interior_slot(q), a);
        };
        for (int ax = 0; ax < g.dim(); ++ax) {
            const int s = g.stride(ax);
            double cp = -v * ih2, cm = -v * ih2;
            if (has_drift_) {
                const VecR& U = *drift;
                const double fp = U[p + s] - U[p], fm = U[p] - U[p - s];
                diag += -0.5 * ih2 * (fp - fm);
                cp += -0.5 * ih2 * fp;
                cm += 0.5 * ih2 * fm;
            }
            add(p + s, cp);
            add(p - s, cm);
        }
        tii.emplace_back(i, i, diag);
    }
    L_ii_.resize(g.interior_count(), g.interior_count());
    L_ii_.setFromTriplets(tii.begin(), tii.end());
    L_ib_.resize(g.interior_count(), g.boundary_count());
    L_ib_.setFromTriplets(tib.begin(), tib.end());

    A_ = energy_matrix(g, v, c.real());
    mass_imag_ = g.weights().cast<cplx>().cwiseProduct(c.imag().cast<cplx>());

    // diagonal dominance check (M-matrix property) for the real drift-free case
    if (!complex_ && !has_drift_) {
        m_matrix_ = c.real().minCoeff() >= 0.0;
        for (int k = 0; k < L_ii_.outerSize() && m_matrix_; ++k) {
            double d = 0.0, off = 0.0;
            for (SpMatC::InnerIterator it(L_ii_, k); it; ++it) {
                if (it.row() == it.col())
                    d = it.value().real();
                else if (it.value().real() > 0.0)
                    m_matrix_ = false;
                else
                    off += std::abs(it.value());
            }
            if (d < off - 1e-12 * d) m_matrix_ = false;
        }
    }

    Backend& be = *backend_;
    if (complex_) {
        if (use_iterative(g)) {
            be.kind = Backend::ITERC;
            be.cgc.setTolerance(1e-12);
            be.cgc.setMaxIterations(10000);
            be.cgc.compute(L_ii_);
        } else {
            be.kind = Backend::LUC;
            be.luc.compute(L_ii_);
            if (be.luc.info() != Eigen::Success) throw SingularOperator("complex LU factorization failed");
        }
        return;
    }
    be.K = L_ii_.real();
    if (use_iterative(g)) {
        be.kind = Backend::ITER;
        be.cg.setTolerance(1e-12);
        be.cg.setMaxIterations(10000);
        be.cg.compute(be.K);
    } else if (has_drift_) {
        be.kind = Backend::LU;
        be.lu.compute(be.K);
        if (be.lu.info() != Eigen::Success) throw SingularOperator("LU factorization failed");
    } else {
        be.kind = Backend::LDLT;
        be.ldlt.compute(be.K);
        if (be.ldlt.info() != Eigen::Success) throw SingularOperator("LDLT factorization failed");
        const VecR d = be.ldlt.vectorD();
        const double dmax = d.cwiseAbs().maxCoeff();
        if (d.cwiseAbs().minCoeff() < kPivotTol * dmax) throw SingularOperator("pivot below tolerance");
    }
}

VecC EllipticOperator::solve(const VecC& source, const VecC& dirichlet) const {
    const Grid& g = *grid_;
    if (source.size() != g.node_count() || dirichlet.size() != g.boundary_count())
        throw ParameterError("solve: size mismatch");
    VecC rhs(g.interior_count());
    for (int i = 0; i < g.interior_count(); ++i) rhs[i] = source[g.interior_nodes()[i]];
    rhs -= L_ib_ * dirichlet;

    const Backend& be = *backend_;
    VecC xi(g.interior_count());
    auto real_solve = [&](const VecR& b) -> VecR {
        switch (be.kind) {
            case Backend::LDLT: return be.ldlt.solve(b);
            case Backend::LU: return be.lu.solve(b);
            default: {
                std::lock_guard<std::mutex> lock(iter_mutex_);
                VecR x = be.cg.solve(b);
                if (be.cg.info() != Eigen::Success) throw NonConvergence("BiCGSTAB exceeded its budget");
                return x;
            }
        }
    };
    switch (be.kind) {
        case Backend::LUC: xi = be.luc.solve(rhs); break;
        case Backend::ITERC: {
            std::lock_guard<std::mutex> lock(iter_mutex_);
            xi = be.cgc.solve(rhs);
            if (be.cgc.info() != Eigen::Success) throw NonConvergence("BiCGSTAB exceeded its budget");
            break;
        }
        default: {
            const VecR re = real_solve(rhs.real());
            if (rhs.imag().cwiseAbs().maxCoeff() > 0.0) {
                const VecR im = real_solve(rhs.imag());
                xi = re.cast<cplx>() + cplx(0, 1) * im.cast<cplx>();
            } else {
                xi = re.cast<cplx>();
            }
        }
    }
    if (!xi.allFinite()) throw SingularOperator("solve produced non-finite values");
    VecC w(g.node_count());
    for (int i = 0; i < g.interior_count(); ++i) w[g.interior_nodes()[i]] = xi[i];
    for (int b = 0; b < g.boundary_count(); ++b) w[g.boundary_nodes()[b]] = dirichlet[b];
    return w;
}

VecC EllipticOperator::apply(const VecC& w) const {
    const Grid& g = *grid_;
    VecC wi(g.interior_count()), wb(g.boundary_count());
    for (int i = 0; i < g.interior_count(); ++i) wi[i] = w[g.interior_nodes()[i]];
    for (int b = 0; b < g.boundary_count(); ++b) wb[b] = w[g.boundary_nodes()[b]];
    const VecC li = L_ii_ * wi + L_ib_ * wb;
    VecC out(g.node_count());
    for (int i = 0; i < g.interior_count(); ++i) out[g.interior_nodes()[i]] = li[i];
    for (int b = 0; b < g.boundary_count(); ++b) out[g.boundary_nodes()[b]] = wb[b];
    return out;
}

VecC EllipticOperator::conormal_flux(const VecC& w, const VecC* source) const {
    const Grid& g = *grid_;
    VecC Aw = A_.cast<cplx>() * w;
    if (complex_) Aw += cplx(0, 1) * mass_imag_.cwiseProduct(w);
    VecC out(g.boundary_count());
    for (int b = 0; b < g.boundary_count(); ++b) {
        const int p = g.boundary_nodes()[b];
        cplx val = Aw[p];
        if (source) val -= g.weights()[p] * (*source)[p];
        out[b] = val / g.boundary_weights()[b];
    }
    return out;
}

double EllipticOperator::min_eigenvalue(double rel_tol, int max_iter) const {
    if (complex_ || has_drift_) throw ParameterError("eigenvalue estimate needs a real drift-free operator");
    const Grid& g = *grid_;
    const Backend& be = *backend_;
    VecR x = VecR::Ones(g.interior_count());
    x.normalize();
    double lam = 0.0;
    for (int it = 0; it < max_iter; ++it) {
        VecR y;
        if (be.kind == Backend::LDLT)
            y = be.ldlt.solve(x);
        else {
            std::lock_guard<std::mutex> lock(iter_mutex_);
            y = be.cg.solve(x);
        }
        const double ny = y.norm();
        if (!(ny > 0.0) || !std::isfinite(ny)) throw SingularOperator("inverse iteration broke down");
        y /= ny;
        const double rq = y.dot(be.K * y);
        if (it > 0 && std::abs(rq - lam) <= rel_tol * std::abs(rq)) return rq;
        lam = rq;
        x = y;
    }
    throw NonConvergence("inverse power iteration did not converge");
}

namespace {
void check_problem(const LinearEllipticProblem& pr) {
    if (!pr.c.grid) throw ParameterError("problem has no grid");
    const auto& g = pr.c.grid;
    if (pr.source.grid != g || pr.dirichlet.grid != g || (pr.drift_potential && pr.drift_potential->grid != g))
        throw ParameterError("problem fields live on different grids");
    pr.c.check();
    pr.source.check();
    pr.dirichlet.check();
}

EllipticOperator make_op(const LinearEllipticProblem& pr) {
    check_problem(pr);
    VecR U;
    if (pr.drift_potential) U = pr.drift_potential->real();
    return EllipticOperator(pr.c.grid, pr.v, pr.c.values, pr.drift_potential ? &U : nullptr);
}
}  // namespace

ScalarField solve_linear(const LinearEllipticProblem& pr) {
    const EllipticOperator op = make_op(pr);
    ScalarField out{pr.c.grid, op.solve(pr.source.values, pr.dirichlet.values),
                    pr.c.is_complex || pr.source.is_complex || pr.dirichlet.is_complex};
    if (!out.is_complex) out.values = out.values.real().cast<cplx>();
    return out;
}

ScalarField apply_operator(const LinearEllipticProblem& pr, const ScalarField& w) {
    const EllipticOperator op = make_op(pr);
    if (w.grid != pr.c.grid) throw ParameterError("field lives on a different grid");
    VecC out = op.apply(w.values);
    const Grid& g = *pr.c.grid;
    for (int b = 0; b < g.boundary_count(); ++b) out[g.boundary_nodes()[b]] -= pr.dirichlet.values[b];
    return {pr.c.grid, out, w.is_complex || pr.c.is_complex};
}

double min_eigen_estimate(const LinearEllipticProblem& pr) {
    if (pr.drift_potential) throw ParameterError("eigenvalue estimate needs a drift-free operator");
    if (pr.c.values.imag().cwiseAbs().maxCoeff() > 0.0) throw ParameterError("eigenvalue estimate needs real c");
    return make_op(pr).min_eigenvalue(1e-10, 500);
}

}  // namespace mfglab
