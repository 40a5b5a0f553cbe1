#pragma once

#include <utility>
#include <vector>

#include "mfglab/dn_map.hpp"

namespace mfglab {

struct EpsFamily {
    std::vector<BoundaryTrace> f, g;
    std::vector<double> eps;
    /// require the summed datum sum eps_l g_l > 0 at every evaluated point
    bool positivity = false;

    int size() const { return static_cast<int>(eps.size()); }
    void check() const;
};

struct FieldPair {
    ScalarField u, m;
};

enum class Provenance { analytic_system, finite_difference };

struct LinearizationResult {
    std::vector<FieldPair> first;  // (u^(l), m^(l))
    std::optional<FieldPair> second;
    Provenance provenance = Provenance::analytic_system;
};

FieldPair first_order(const MfgCoefficients& coeffs, const BoundaryTrace& f, const BoundaryTrace& g);

/// sources of the second-order system: (F2 m1 m2 - grad u1.grad u2, div(m1 grad u2) + div(m2 grad u1))
std::pair<VecC, VecC> second_order_sources(const MfgCoefficients& coeffs, const FieldPair& a, const FieldPair& b);
FieldPair second_order(const MfgCoefficients& coeffs, const FieldPair& first1, const FieldPair& first2);

/// HJB part of the third-order system; second[i] pairs (jk) in the order (23, 13, 12)
ScalarField third_order_u(const MfgCoefficients& coeffs, const std::array<FieldPair, 3>& first,
                          const std::array<FieldPair, 3>& second);
VecC third_order_source(const MfgCoefficients& coeffs, const std::array<FieldPair, 3>& first,
                        const std::array<FieldPair, 3>& second);

/// boundary flux (divided by v) of a u-slot field solving -v Lap w + k w = source
VecC u_flux(const MfgCoefficients& coeffs, const VecC& w, const VecC& source);

LinearizationResult linearize_analytic(const MfgCoefficients& coeffs, const EpsFamily& family);

/// multi_index holds 1-based component ids, e.g. {1} or {1,2}
FieldPair fd_derivative(const MfgCoefficients& coeffs, const EpsFamily& family, const std::vector<int>& multi_index,
                        const NewtonOptions& opts = {});

double positivity_margin(const EpsFamily& family);

}  // namespace mfglab
