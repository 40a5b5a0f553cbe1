#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mfglab/mfg_forward.hpp"

namespace mfglab {

enum class Slot { u, m };

/// Face-wise cosine products cos(k1 pi s) cos(k2 pi t), 0 <= k <= max_freq, on the nodes owned by
/// each face, scaled to unit sup-norm.
struct BoundaryBasis {
    GridPtr grid;
    int max_freq = 4;
    std::vector<BoundaryTrace> traces;
    std::vector<int> face_of;

    int size() const { return static_cast<int>(traces.size()); }
    /// boundary_count x size matrix of basis values
    Eigen::MatrixXd matrix() const;
    BoundaryTrace combine(const VecC& coeffs) const;
};

BoundaryBasis make_boundary_basis(GridPtr grid, int max_freq = 4);

struct DnMatrix {
    /// rows: boundary nodes, columns: basis functions
    Eigen::MatrixXd values;
    Slot slot = Slot::m;

    /// boundary quadrature of the output against the basis (size x size)
    Eigen::MatrixXd galerkin(const BoundaryBasis& basis) const;
};

void write_dn_csv(const std::string& path, const DnMatrix& dn);

struct PartialDataSpec {
    Vec3 lambda_prime{1.0, 0.0, 0.0};
    double eps0 = 0.25;
    BoundaryRegion u_plus, u_minus;

    /// U+ = {lambda'.nu > -2 eps0}, U- = {lambda'.nu < 2 eps0}
    static PartialDataSpec make(GridPtr grid, const Vec3& lambda_prime, double eps0);
    void check() const;
};

/// First-order DN map of one slot: data -> conormal flux / v of the screened solution.
class LinearDn {
public:
    LinearDn(GridPtr grid, double v, const VecR& coefficient) : op_(std::move(grid), v, coefficient) {}

    const EllipticOperator& op() const { return op_; }
    VecC solve(const VecC& data) const { return op_.solve_dirichlet(data); }
    VecC apply(const VecC& data) const { return flux(solve(data)); }
    /// flux of a field solving the operator with the given source
    VecC flux(const VecC& w, const VecC* source = nullptr) const { return op_.conormal_flux(w, source) / op_.v(); }

private:
    EllipticOperator op_;
};

/// u-slot and m-slot boundary fluxes of a solution of the nonlinear system
std::pair<VecC, VecC> nonlinear_fluxes(const MfgCoefficients& coeffs, const VecR& u, const VecR& m);

std::pair<BoundaryTrace, BoundaryTrace> evaluate_dn(const MfgCoefficients& coeffs, const BoundaryTrace& f,
                                                    const BoundaryTrace& g, const NewtonOptions& opts = {});

DnMatrix linearized_dn_matrix(const MfgCoefficients& coeffs, const BoundaryBasis& basis, Slot slot, int workers = 1);

struct PartialDnResult {
    BoundaryTrace du, dm;
    /// 1 where the value was measured (inside U-), 0 where it was zeroed
    std::vector<char> measured;
};

PartialDnResult evaluate_partial_dn(const MfgCoefficients& coeffs, const BoundaryTrace& f, const BoundaryTrace& g,
                                    const PartialDataSpec& spec, const NewtonOptions& opts = {});

/// throw SupportViolation if the trace is nonzero outside the region
void check_support(const BoundaryTrace& t, const BoundaryRegion& region, const char* name);

}  // namespace mfglab
