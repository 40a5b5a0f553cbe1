#pragma once

#include <memory>
#include <mutex>
#include <optional>

#include <Eigen/Sparse>

#include "mfglab/field.hpp"

namespace mfglab {

using SpMat = Eigen::SparseMatrix<double>;
using SpMatC = Eigen::SparseMatrix<cplx>;

struct LinearEllipticProblem {
    double v = 1.0;
    ScalarField c;
    std::optional<ScalarField> drift_potential;
    ScalarField source;
    BoundaryTrace dirichlet;
};

/// Full-node matrix of the discrete energy form
///   a(w,z) = v sum_edges h^(d-2) kappa_e (w_p - w_q)(z_p - z_q) + sum_p omega_p c_p w_p z_p
/// with kappa_e = 1/2 per boundary face containing the edge. Interior rows equal
/// omega_p times the 5/7-point operator -v Lap + c.
SpMat energy_matrix(const Grid& g, double v, const VecR& c);

/// Reusable factorization of -v Lap w - div(w grad U) + c w on interior nodes with
/// Dirichlet data. Immutable after construction; solves may run concurrently.
class EllipticOperator {
public:
    EllipticOperator(GridPtr grid, double v, const VecC& c, const VecR* drift_potential = nullptr);
    EllipticOperator(GridPtr grid, double v, const VecR& c) : EllipticOperator(std::move(grid), v, VecC(c.cast<cplx>())) {}
    ~EllipticOperator();

    const GridPtr& grid() const { return grid_; }
    double v() const { return v_; }
    const VecC& c() const { return c_; }
    bool is_m_matrix() const { return m_matrix_; }

    /// interior: L w = source, boundary: w = dirichlet (one value per boundary slot)
    VecC solve(const VecC& source, const VecC& dirichlet) const;
    /// solution with zero source
    VecC solve_dirichlet(const VecC& dirichlet) const { return solve(VecC::Zero(grid_->node_count()), dirichlet); }
    /// interior rows hold L w, boundary rows hold w
    VecC apply(const VecC& w) const;
    /// ((A w)_b - omega_b s_b) / sigma_b per boundary slot, A the energy matrix (drift excluded)
    VecC conormal_flux(const VecC& w, const VecC* source = nullptr) const;

    /// smallest eigenvalue of the interior block by inverse power iteration
    double min_eigenvalue(double rel_tol = 1e-10, int max_iter = 500) const;

private:
    struct Backend;
    GridPtr grid_;
    double v_;
    VecC c_;
    bool has_drift_ = false;
    bool complex_ = false;
    bool m_matrix_ = false;
    SpMatC L_ii_, L_ib_;  // interior-interior, interior-boundary blocks
    SpMat A_;             // energy form with Re c
    VecC mass_imag_;      // omega * Im c, added to A w when c is complex
    std::unique_ptr<Backend> backend_;
    mutable std::mutex iter_mutex_;
};

ScalarField solve_linear(const LinearEllipticProblem& problem);
ScalarField apply_operator(const LinearEllipticProblem& problem, const ScalarField& w);
double min_eigen_estimate(const LinearEllipticProblem& problem);

}  // namespace mfglab
