#include "mfglab/field.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace mfglab {

Grid::Grid(int dim, int n_cells) : dim_(dim), n_(n_cells), h_(1.0 / n_cells) {
    if (dim != 2 && dim != 3) throw ParameterError("dim must be 2 or 3, got " + std::to_string(dim));
    if (n_cells < 3) throw ParameterError("n_cells too small: " + std::to_string(n_cells));
    const int N = n_ + 1;
    count_ = (dim == 2) ? N * N : N * N * N;
    for (int ax = 0; ax < dim; ++ax) {
        int s = 1;
        for (int k = ax + 1; k < dim; ++k) s *= N;
        stride_[ax] = s;
    }
    slot_.assign(count_, -1);
    islot_.assign(count_, -1);
    w_.resize(count_);
    for (int p = 0; p < count_; ++p) {
        const unsigned fm = face_mask(p);
        auto idx = multi_index(p);
        double w = std::pow(h_, dim);
        for (int ax = 0; ax < dim; ++ax)
            if (idx[ax] == 0 || idx[ax] == n_) w *= 0.5;
        w_[p] = w;
        if (fm == 0) {
            islot_[p] = static_cast<int>(inodes_.size());
            inodes_.push_back(p);
            continue;
        }
        slot_[p] = static_cast<int>(bnodes_.size());
        bnodes_.push_back(p);
        int f = 0;
        while (!(fm & (1u << f))) ++f;
        face_.push_back(f);
        Vec3 nu{0.0, 0.0, 0.0};
        nu[f / 2] = (f % 2 == 0) ? -1.0 : 1.0;
        normal_.push_back(nu);
    }
    // face trapezoid weight: product of 1D weights over the in-face axes
    sigma_ = VecR::Zero(static_cast<int>(bnodes_.size()));
    for (std::size_t b = 0; b < bnodes_.size(); ++b) {
        const int p = bnodes_[b];
        const unsigned fm = face_mask(p);
        auto idx = multi_index(p);
        for (int f = 0; f < 2 * dim; ++f) {
            if (!(fm & (1u << f))) continue;
            double s = std::pow(h_, dim - 1);
            for (int ax = 0; ax < dim; ++ax) {
                if (ax == f / 2) continue;
                if (idx[ax] == 0 || idx[ax] == n_) s *= 0.5;
            }
            sigma_[static_cast<int>(b)] += s;
        }
    }
}

std::array<int, 3> Grid::multi_index(int node) const {
    std::array<int, 3> idx{0, 0, 0};
    for (int ax = 0; ax < dim_; ++ax) {
        idx[ax] = node / stride_[ax];
        node -= idx[ax] * stride_[ax];
    }
    return idx;
}

int Grid::node(const std::array<int, 3>& idx) const {
    int p = 0;
    for (int ax = 0; ax < dim_; ++ax) p += idx[ax] * stride_[ax];
    return p;
}

Vec3 Grid::coord(int node) const {
    auto idx = multi_index(node);
    return {idx[0] * h_, idx[1] * h_, dim_ == 3 ? idx[2] * h_ : 0.0};
}

unsigned Grid::face_mask(int node) const {
    auto idx = multi_index(node);
    unsigned m = 0;
    for (int ax = 0; ax < dim_; ++ax) {
        if (idx[ax] == 0) m |= 1u << (2 * ax);
        if (idx[ax] == n_) m |= 1u << (2 * ax + 1);
    }
    return m;
}

GridPtr make_grid(int dim, int n_cells) { return std::make_shared<const Grid>(dim, n_cells); }

namespace {
void check_finite(const VecC& v, const char* what) {
    if (!v.allFinite()) throw ParameterError(std::string(what) + " has non-finite values");
}
}  // namespace

ScalarField ScalarField::zeros(GridPtr g, bool complex) {
    const int n = g->node_count();
    return {std::move(g), VecC::Zero(n), complex};
}
ScalarField ScalarField::constant(GridPtr g, double c) {
    const int n = g->node_count();
    return {std::move(g), VecC::Constant(n, c), false};
}
ScalarField ScalarField::from_real(GridPtr g, const VecR& v) {
    if (v.size() != g->node_count()) throw ParameterError("field size mismatch");
    return {std::move(g), v.cast<cplx>(), false};
}
ScalarField ScalarField::from_complex(GridPtr g, const VecC& v) {
    if (v.size() != g->node_count()) throw ParameterError("field size mismatch");
    return {std::move(g), v, true};
}
void ScalarField::check() const {
    if (!grid || values.size() != grid->node_count()) throw ParameterError("field size mismatch");
    check_finite(values, "field");
}

BoundaryTrace BoundaryTrace::zeros(GridPtr g, bool complex) {
    const int n = g->boundary_count();
    return {std::move(g), VecC::Zero(n), complex};
}
BoundaryTrace BoundaryTrace::constant(GridPtr g, double c) {
    const int n = g->boundary_count();
    return {std::move(g), VecC::Constant(n, c), false};
}
BoundaryTrace BoundaryTrace::from_real(GridPtr g, const VecR& v) {
    if (v.size() != g->boundary_count()) throw ParameterError("trace size mismatch");
    return {std::move(g), v.cast<cplx>(), false};
}
BoundaryTrace BoundaryTrace::from_complex(GridPtr g, const VecC& v) {
    if (v.size() != g->boundary_count()) throw ParameterError("trace size mismatch");
    return {std::move(g), v, true};
}
void BoundaryTrace::check() const {
    if (!grid || values.size() != grid->boundary_count()) throw ParameterError("trace size mismatch");
    check_finite(values, "trace");
}

int BoundaryRegion::count() const {
    int c = 0;
    for (char m : mask) c += m ? 1 : 0;
    return c;
}

double l2_norm(const ScalarField& field) {
    const VecR& w = field.grid->weights();
    double s = 0.0;
    for (int p = 0; p < w.size(); ++p) s += w[p] * std::norm(field.values[p]);
    return std::sqrt(s);
}

cplx integrate(const GridPtr& g, const VecC& values) { return (g->weights().cast<cplx>().array() * values.array()).sum(); }
cplx integrate(const ScalarField& field) { return integrate(field.grid, field.values); }
cplx boundary_integrate(const GridPtr& g, const VecC& values) {
    return (g->boundary_weights().cast<cplx>().array() * values.array()).sum();
}

BoundaryTrace trace(const ScalarField& field) {
    const Grid& g = *field.grid;
    BoundaryTrace t{field.grid, VecC(g.boundary_count()), field.is_complex};
    for (int b = 0; b < g.boundary_count(); ++b) t.values[b] = field.values[g.boundary_nodes()[b]];
    return t;
}

ScalarField extend_by_zero(const BoundaryTrace& t) {
    const Grid& g = *t.grid;
    ScalarField f = ScalarField::zeros(t.grid, t.is_complex);
    for (int b = 0; b < g.boundary_count(); ++b) f.values[g.boundary_nodes()[b]] = t.values[b];
    return f;
}

BoundaryTrace normal_derivative(const ScalarField& field) {
    const Grid& g = *field.grid;
    BoundaryTrace t{field.grid, VecC(g.boundary_count()), field.is_complex};
    const double inv = 0.5 / g.h_mesh();
    for (int b = 0; b < g.boundary_count(); ++b) {
        const int p = g.boundary_nodes()[b];
        const int f = g.face(b);
        // step inward along the assigned face normal
        const int d = (f % 2 == 0) ? g.stride(f / 2) : -g.stride(f / 2);
        const auto& u = field.values;
        t.values[b] = (3.0 * u[p] - 4.0 * u[p + d] + u[p + 2 * d]) * inv;
    }
    return t;
}

BoundaryRegion threshold_region(GridPtr grid, const Vec3& direction, double threshold, bool greater) {
    BoundaryRegion r;
    r.grid = grid;
    r.direction = direction;
    r.eps0 = threshold;
    r.sign = greater ? +1 : -1;
    r.mask.assign(grid->boundary_count(), 0);
    for (int b = 0; b < grid->boundary_count(); ++b) {
        const Vec3& nu = grid->normal(b);
        const double dot = direction[0] * nu[0] + direction[1] * nu[1] + direction[2] * nu[2];
        r.mask[b] = greater ? (dot > threshold) : (dot < threshold);
    }
    return r;
}

BoundaryRegion boundary_region(GridPtr grid, const Vec3& direction, double eps0, int sign) {
    double n2 = 0.0;
    for (int i = 0; i < 3; ++i) n2 += direction[i] * direction[i];
    if (std::abs(std::sqrt(n2) - 1.0) > 1e-12) throw ParameterError("direction is not a unit vector");
    if (grid->dim() == 2 && direction[2] != 0.0) throw ParameterError("direction has a z component on a 2D grid");
    if (eps0 < 0.0 || eps0 >= 1.0) throw ParameterError("eps0 must lie in [0,1)");
    if (sign != 1 && sign != -1) throw ParameterError("sign must be +1 or -1");
    return threshold_region(std::move(grid), direction, eps0, sign > 0);
}

void write_field_csv(std::ostream& os, const ScalarField& f) {
    os << "# " << f.grid->dim() << ',' << f.grid->n_cells() << '\n';
    os << std::setprecision(17);
    for (int p = 0; p < f.values.size(); ++p) os << p << ',' << f.values[p].real() << ',' << f.values[p].imag() << '\n';
}

void write_field_csv(const std::string& path, const ScalarField& f) {
    std::ofstream os(path);
    if (!os) throw ParameterError("cannot write " + path);
    write_field_csv(os, f);
}

ScalarField read_field_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ParameterError("cannot read " + path);
    std::string line;
    std::getline(is, line);
    int dim = 0, n = 0;
    if (std::sscanf(line.c_str(), "# %d,%d", &dim, &n) != 2) throw ParameterError("bad field header in " + path);
    auto g = make_grid(dim, n);
    ScalarField f = ScalarField::zeros(g);
    int rows = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        int idx;
        double re, im;
        if (std::sscanf(line.c_str(), "%d,%lf,%lf", &idx, &re, &im) != 3 || idx < 0 || idx >= g->node_count())
            throw ParameterError("bad field row in " + path);
        f.values[idx] = cplx(re, im);
        if (im != 0.0) f.is_complex = true;
        ++rows;
    }
    if (rows != g->node_count()) throw ParameterError("field row count mismatch in " + path);
    return f;
}

}  // namespace mfglab
