#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mfglab/errors.hpp"

namespace mfglab {

using cplx = std::complex<double>;
using Vec3 = std::array<double, 3>;
using VecR = Eigen::VectorXd;
using VecC = Eigen::VectorXcd;

/// Uniform node lattice on the unit box [0,1]^dim.
///
/// Nodes are numbered lexicographically with the first axis slowest.
/// Boundary nodes carry a face id (2*axis + side) and an outward normal;
/// nodes on several faces take the lowest face id in the order
/// x=0, x=1, y=0, y=1, z=0, z=1.
class Grid {
public:
    Grid(int dim, int n_cells);

    int dim() const { return dim_; }
    int n_cells() const { return n_; }
    double h_mesh() const { return h_; }
    int nodes_per_axis() const { return n_ + 1; }
    int node_count() const { return count_; }
    int boundary_count() const { return static_cast<int>(bnodes_.size()); }
    int interior_count() const { return static_cast<int>(inodes_.size()); }

    const std::vector<int>& boundary_nodes() const { return bnodes_; }
    const std::vector<int>& interior_nodes() const { return inodes_; }
    /// boundary slot of a node, -1 for interior nodes
    int boundary_slot(int node) const { return slot_[node]; }
    bool is_boundary(int node) const { return slot_[node] >= 0; }
    /// position of an interior node inside interior_nodes(), -1 on the boundary
    int interior_slot(int node) const { return islot_[node]; }

    int stride(int axis) const { return stride_[axis]; }
    std::array<int, 3> multi_index(int node) const;
    int node(const std::array<int, 3>& idx) const;
    Vec3 coord(int node) const;

    /// face id of boundary slot b
    int face(int b) const { return face_[b]; }
    const Vec3& normal(int b) const { return normal_[b]; }
    /// bitmask of faces containing the node
    unsigned face_mask(int node) const;

    /// trapezoid weight of every node
    const VecR& weights() const { return w_; }
    /// face-wise trapezoid weight of every boundary slot, summed over incident faces
    const VecR& boundary_weights() const { return sigma_; }

private:
    int dim_, n_, count_;
    double h_;
    std::array<int, 3> stride_{0, 0, 0};
    std::vector<int> bnodes_, inodes_, slot_, islot_, face_;
    std::vector<Vec3> normal_;
    VecR w_, sigma_;
};

using GridPtr = std::shared_ptr<const Grid>;

GridPtr make_grid(int dim, int n_cells);

struct ScalarField {
    GridPtr grid;
    VecC values;
    bool is_complex = false;

    static ScalarField zeros(GridPtr g, bool complex = false);
    static ScalarField constant(GridPtr g, double c);
    static ScalarField from_real(GridPtr g, const VecR& v);
    static ScalarField from_complex(GridPtr g, const VecC& v);
    template <class Fn>
    static ScalarField sample(GridPtr g, Fn&& fn);

    VecR real() const { return values.real(); }
    void check() const;
};

struct BoundaryTrace {
    GridPtr grid;
    VecC values;
    bool is_complex = false;

    static BoundaryTrace zeros(GridPtr g, bool complex = false);
    static BoundaryTrace constant(GridPtr g, double c);
    static BoundaryTrace from_real(GridPtr g, const VecR& v);
    static BoundaryTrace from_complex(GridPtr g, const VecC& v);
    template <class Fn>
    static BoundaryTrace sample(GridPtr g, Fn&& fn);

    VecR real() const { return values.real(); }
    void check() const;
};

struct BoundaryRegion {
    GridPtr grid;
    std::vector<char> mask;
    std::optional<Vec3> direction;
    double eps0 = 0.0;
    int sign = +1;

    int count() const;
    bool contains(int b) const { return mask[b] != 0; }
};

double l2_norm(const ScalarField& field);
/// trapezoid quadrature of the values (no conjugation)
cplx integrate(const ScalarField& field);
cplx integrate(const GridPtr& g, const VecC& values);
cplx boundary_integrate(const GridPtr& g, const VecC& values);

BoundaryTrace trace(const ScalarField& field);
/// field equal to the trace on the boundary and zero inside
ScalarField extend_by_zero(const BoundaryTrace& t);

BoundaryTrace normal_derivative(const ScalarField& field);

BoundaryRegion boundary_region(GridPtr grid, const Vec3& direction, double eps0, int sign);
/// region {dir.nu > threshold} (greater) or {dir.nu < threshold}; no range checks
BoundaryRegion threshold_region(GridPtr grid, const Vec3& direction, double threshold, bool greater);

void write_field_csv(std::ostream& os, const ScalarField& f);
void write_field_csv(const std::string& path, const ScalarField& f);
ScalarField read_field_csv(const std::string& path);

template <class Fn>
ScalarField ScalarField::sample(GridPtr g, Fn&& fn) {
    ScalarField f;
    f.grid = g;
    f.values.resize(g->node_count());
    for (int p = 0; p < g->node_count(); ++p) f.values[p] = cplx(fn(g->coord(p)));
    using R = decltype(fn(Vec3{}));
    f.is_complex = !std::is_floating_point_v<R>;
    return f;
}

template <class Fn>
BoundaryTrace BoundaryTrace::sample(GridPtr g, Fn&& fn) {
    BoundaryTrace t;
    t.grid = g;
    t.values.resize(g->boundary_count());
    for (int b = 0; b < g->boundary_count(); ++b) t.values[b] = cplx(fn(g->coord(g->boundary_nodes()[b])));
    using R = decltype(fn(Vec3{}));
    t.is_complex = !std::is_floating_point_v<R>;
    return t;
}

// ---- stencil helpers shared by the solvers ----

/// d/dx_axis: centered inside, second-order one-sided where the axis hits the boundary
template <class V>
V gradient_component(const Grid& g, const V& u, int axis) {
    V out(u.size());
    const int s = g.stride(axis), n = g.n_cells();
    const double inv = 1.0 / g.h_mesh();
    for (int p = 0; p < g.node_count(); ++p) {
        const int i = g.multi_index(p)[axis];
        if (i == 0)
            out[p] = (-3.0 * u[p] + 4.0 * u[p + s] - u[p + 2 * s]) * (0.5 * inv);
        else if (i == n)
            out[p] = (3.0 * u[p] - 4.0 * u[p - s] + u[p - 2 * s]) * (0.5 * inv);
        else
            out[p] = (u[p + s] - u[p - s]) * (0.5 * inv);
    }
    return out;
}

/// sum_axis grad_axis(a) * grad_axis(b)
template <class V>
V grad_dot(const Grid& g, const V& a, const V& b) {
    V out = V::Zero(a.size());
    for (int ax = 0; ax < g.dim(); ++ax)
        out += gradient_component(g, a, ax).cwiseProduct(gradient_component(g, b, ax));
    return out;
}

/// flux-form div(w grad U) with face-averaged w; one-sided closure on the boundary
template <class V>
V flux_divergence(const Grid& g, const V& w, const V& U) {
    V out = V::Zero(w.size());
    const int n = g.n_cells();
    const double ih2 = 1.0 / (g.h_mesh() * g.h_mesh());
    for (int p = 0; p < g.node_count(); ++p) {
        const auto idx = g.multi_index(p);
        for (int ax = 0; ax < g.dim(); ++ax) {
            const int s = g.stride(ax);
            const int i = idx[ax];
            if (i > 0 && i < n) {
                out[p] += (0.5 * (w[p] + w[p + s]) * (U[p + s] - U[p]) -
                           0.5 * (w[p] + w[p - s]) * (U[p] - U[p - s])) * ih2;
            } else {
                // boundary: w * U'' + w' * U' with one-sided stencils
                const int d = (i == 0) ? s : -s;
                const auto u2 = (2.0 * U[p] - 5.0 * U[p + d] + 4.0 * U[p + 2 * d] - U[p + 3 * d]) * ih2;
                const auto u1 = (-3.0 * U[p] + 4.0 * U[p + d] - U[p + 2 * d]) * (0.5 / g.h_mesh());
                const auto w1 = (-3.0 * w[p] + 4.0 * w[p + d] - w[p + 2 * d]) * (0.5 / g.h_mesh());
                out[p] += w[p] * u2 + w1 * u1;
            }
        }
    }
    return out;
}

}  // namespace mfglab
