#include "mfglab/dn_map.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>

#include "mfglab/parallel.hpp"

namespace mfglab {

BoundaryBasis make_boundary_basis(GridPtr grid, int max_freq) {
    if (max_freq < 0) throw ParameterError("basis frequency must be nonnegative");
    const Grid& g = *grid;
    BoundaryBasis basis;
    basis.grid = grid;
    basis.max_freq = max_freq;
    const int K = std::min(max_freq, g.n_cells() - 2);
    for (int f = 0; f < 2 * g.dim(); ++f) {
        const int normal_axis = f / 2;
        std::vector<int> axes;
        for (int ax = 0; ax < g.dim(); ++ax)
            if (ax != normal_axis) axes.push_back(ax);
        const int K2 = g.dim() == 3 ? K : 0;
        for (int k1 = 0; k1 <= K; ++k1) {
            for (int k2 = 0; k2 <= K2; ++k2) {
                BoundaryTrace t = BoundaryTrace::zeros(grid);
                for (int b = 0; b < g.boundary_count(); ++b) {
                    if (g.face(b) != f) continue;
                    const Vec3 x = g.coord(g.boundary_nodes()[b]);
                    double v = std::cos(k1 * M_PI * x[axes[0]]);
                    if (g.dim() == 3) v *= std::cos(k2 * M_PI * x[axes[1]]);
                    t.values[b] = v;
                }
                const double s = t.values.cwiseAbs().maxCoeff();
                if (s <= 0.0) continue;
                t.values /= s;
                basis.traces.push_back(std::move(t));
                basis.face_of.push_back(f);
            }
        }
    }
    return basis;
}

Eigen::MatrixXd BoundaryBasis::matrix() const {
    Eigen::MatrixXd M(grid->boundary_count(), size());
    for (int j = 0; j < size(); ++j) M.col(j) = traces[j].real();
    return M;
}

BoundaryTrace BoundaryBasis::combine(const VecC& coeffs) const {
    if (coeffs.size() != size()) throw ParameterError("coefficient count does not match the basis");
    BoundaryTrace t = BoundaryTrace::zeros(grid, true);
    for (int j = 0; j < size(); ++j) t.values += coeffs[j] * traces[j].values;
    return t;
}

Eigen::MatrixXd DnMatrix::galerkin(const BoundaryBasis& basis) const {
    const Eigen::MatrixXd Phi = basis.matrix();
    return Phi.transpose() * basis.grid->boundary_weights().asDiagonal() * values;
}

void write_dn_csv(const std::string& path, const DnMatrix& dn) {
    std::ofstream os(path);
    if (!os) throw ParameterError("cannot write " + path);
    os << "row,col,value\n" << std::setprecision(17);
    for (int i = 0; i < dn.values.rows(); ++i)
        for (int j = 0; j < dn.values.cols(); ++j) os << i << ',' << j << ',' << dn.values(i, j) << '\n';
}

PartialDataSpec PartialDataSpec::make(GridPtr grid, const Vec3& lp, double eps0) {
    const double n = std::sqrt(lp[0] * lp[0] + lp[1] * lp[1] + lp[2] * lp[2]);
    if (std::abs(n - 1.0) > 1e-12) throw ParameterError("lambda' must be a unit vector");
    if (eps0 <= 0.0 || eps0 >= 0.5) throw ParameterError("eps0 must lie in (0, 0.5)");
    PartialDataSpec s;
    s.lambda_prime = lp;
    s.eps0 = eps0;
    s.u_plus = threshold_region(grid, lp, -2.0 * eps0, true);
    s.u_minus = threshold_region(grid, lp, 2.0 * eps0, false);
    return s;
}

void PartialDataSpec::check() const {
    const auto& g = u_plus.grid;
    if (!g || u_minus.grid != g) throw ParameterError("partial data regions live on different grids");
    for (int b = 0; b < g->boundary_count(); ++b) {
        const Vec3& nu = g->normal(b);
        const double d = lambda_prime[0] * nu[0] + lambda_prime[1] * nu[1] + lambda_prime[2] * nu[2];
        if (d > -2 * eps0 && !u_plus.contains(b)) throw ParameterError("U+ misses part of {lambda'.nu > -2 eps0}");
        if (d > 0 && d < 2 * eps0 && !u_minus.contains(b)) throw ParameterError("U- misses part of {0 < lambda'.nu < 2 eps0}");
    }
}

void check_support(const BoundaryTrace& t, const BoundaryRegion& region, const char* name) {
    for (int b = 0; b < t.values.size(); ++b)
        if (!region.contains(b) && std::abs(t.values[b]) > 1e-12)
            throw SupportViolation(std::string(name) + " is nonzero outside the input region");
}

std::pair<VecC, VecC> nonlinear_fluxes(const MfgCoefficients& c, const VecR& u, const VecR& m) {
    const GridPtr& G = c.grid();
    const Grid& g = *G;
    LinearDn dk(G, c.v, c.k.real()), dr(G, c.v, c.r.real());
    const VecR su = evaluate_F_values(c.F, m) - 0.5 * grad_dot(g, u, u);
    const VecR sm = flux_divergence(g, m, u);
    const VecC suc = su.cast<cplx>(), smc = sm.cast<cplx>();
    return {dk.flux(u.cast<cplx>(), &suc), dr.flux(m.cast<cplx>(), &smc)};
}

std::pair<BoundaryTrace, BoundaryTrace> evaluate_dn(const MfgCoefficients& coeffs, const BoundaryTrace& f,
                                                    const BoundaryTrace& g, const NewtonOptions& opts) {
    const MfgSolution s = solve_mfg(coeffs, f, g, opts);
    auto [nu, nm] = nonlinear_fluxes(coeffs, s.u.real(), s.m.real());
    return {BoundaryTrace::from_real(coeffs.grid(), nu.real()), BoundaryTrace::from_real(coeffs.grid(), nm.real())};
}

DnMatrix linearized_dn_matrix(const MfgCoefficients& coeffs, const BoundaryBasis& basis, Slot slot, int workers) {
    coeffs.check();
    if (basis.grid != coeffs.grid()) throw ParameterError("basis lives on a different grid");
    const LinearDn dn(coeffs.grid(), coeffs.v, slot == Slot::u ? coeffs.k.real() : coeffs.r.real());
    DnMatrix out;
    out.slot = slot;
    out.values.resize(coeffs.grid()->boundary_count(), basis.size());
    parallel_for(basis.size(), workers, [&](int j) { out.values.col(j) = dn.apply(basis.traces[j].values).real(); });
    return out;
}

PartialDnResult evaluate_partial_dn(const MfgCoefficients& coeffs, const BoundaryTrace& f, const BoundaryTrace& g,
                                    const PartialDataSpec& spec, const NewtonOptions& opts) {
    check_support(f, spec.u_plus, "f");
    check_support(g, spec.u_plus, "g");
    spec.check();
    auto [du, dm] = evaluate_dn(coeffs, f, g, opts);
    PartialDnResult r{du, dm, spec.u_minus.mask};
    for (int b = 0; b < du.values.size(); ++b) {
        if (r.measured[b]) continue;
        r.du.values[b] = 0.0;
        r.dm.values[b] = 0.0;
    }
    return r;
}

}  // namespace mfglab
