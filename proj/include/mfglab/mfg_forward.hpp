#pragma once

#include <utility>
#include <vector>

#include "mfglab/elliptic.hpp"

namespace mfglab {

/// Truncated series F(x,z) = sum_i F_i(x) z^i / i!, orders >= 2.
struct FSeries {
    struct Term {
        int order;
        ScalarField coeff;
    };
    std::vector<Term> terms;
    static constexpr int kMaxOrder = 6;

    void check() const;
    /// coefficient of the given order, or nullptr
    const ScalarField* find(int order) const;
};

struct MfgCoefficients {
    double v = 1.0;
    ScalarField k, r;
    FSeries F;

    const GridPtr& grid() const { return k.grid; }
    void check() const;
    static MfgCoefficients constant(GridPtr g, double v, double k, double r);
};

struct NewtonOptions {
    double tol = 1e-10;
    int max_iter = 20;
    double delta = 0.1;
    bool require_nonneg_g = false;
};

struct MfgSolution {
    ScalarField u, m;
    int newton_iterations = 0;
    double final_residual = 0.0;
    std::vector<double> residual_history;
};

ScalarField evaluate_F(const FSeries& F, const ScalarField& m);
VecR evaluate_F_values(const FSeries& F, const VecR& m);
/// pointwise d/dz F(x, m(x))
VecR evaluate_dF(const FSeries& F, const VecR& m);

std::pair<ScalarField, ScalarField> mfg_residual(const MfgCoefficients& coeffs, const ScalarField& u,
                                                 const ScalarField& m, const BoundaryTrace& f,
                                                 const BoundaryTrace& g);

MfgSolution solve_mfg(const MfgCoefficients& coeffs, const BoundaryTrace& f, const BoundaryTrace& g,
                      const NewtonOptions& opts = {});

/// -v Lap_h w on interior nodes, zero on the boundary
template <class V>
V neg_laplacian(const Grid& g, double v, const V& w) {
    V out = V::Zero(w.size());
    const double ih2 = v / (g.h_mesh() * g.h_mesh());
    for (int p : g.interior_nodes()) {
        auto acc = 2.0 * g.dim() * w[p];
        for (int ax = 0; ax < g.dim(); ++ax) acc -= w[p + g.stride(ax)] + w[p - g.stride(ax)];
        out[p] = acc * ih2;
    }
    return out;
}

}  // namespace mfglab
