#pragma once

#include <array>
#include <optional>
#include <utility>
#include <vector>

#include "mfglab/dn_map.hpp"

namespace mfglab {

using Phase = std::array<cplx, 3>;

/// Phase directions and frequency of a CGO solution z = exp(sign (lambda + i eta).x / h) (a + b).
struct CgoParams {
    Vec3 lambda{1.0, 0.0, 0.0};
    Vec3 eta{0.0, 1.0, 0.0};
    Vec3 xi{0.0, 0.0, 0.0};
    double h = 0.25;
    int sign = +1;

    void check() const;
};

enum class Amplitude {
    one,         // a = 1
    plane_wave,  // a = exp(i xi.x)
    split,       // a = 1, frequency shared between the sign -1 and sign +1 phases
};

/// Fields are stored peak-normalized: the true value is exp(log_scale) * field.
struct CgoSolution {
    CgoParams params;
    Amplitude kind = Amplitude::one;
    Phase zeta{};
    double log_scale = 0.0;
    ScalarField amplitude, remainder, field;
    double remainder_norm = 0.0;
    /// max interior |(-v Lap + c) field| / max |field|
    double residual = 0.0;
    int iterations = 0;
};

/// Unit (lambda, eta) with {lambda, eta, xi} mutually orthogonal.
std::pair<Vec3, Vec3> orthogonal_triplet(const Vec3& xi, int dim = 3);

/// Discrete phase of the requested kind: sum_j (cosh(h_mesh zeta_j) - 1) = 0, so exp(zeta.x) is
/// annihilated by the 7-point Laplacian. For Amplitude::split the two signs add up to i xi exactly.
Phase cgo_phase(const Grid& g, const CgoParams& params, Amplitude kind);
std::pair<Phase, Phase> split_phases(const Grid& g, const CgoParams& params);

double resolution_floor(const Grid& g);

CgoSolution build_cgo(const ScalarField& c, double v, const CgoParams& params, Amplitude kind = Amplitude::one);

/// z = z0 - y with y the screened solution carrying the data of z0 on the region, so z = 0 there.
CgoSolution build_vanishing_cgo(const ScalarField& c, double v, const CgoParams& params, const BoundaryRegion& region,
                                Amplitude kind = Amplitude::one);

/// max interior |(-v Lap + c) w|
double interior_residual(const ScalarField& c, double v, const VecC& w);

/// nodes at distance >= collar from the boundary
std::vector<char> interior_subdomain(const Grid& g, double collar);

struct RungeResult {
    BoundaryTrace datum;
    double achieved_error = 0.0;
    int columns = 0;
};

/// Regularized least squares over boundary-basis data (zeroed on the constraint region) for the
/// solution closest to the target on the subdomain.
RungeResult runge_approximate(const ScalarField& c, double v, const ScalarField& target,
                              const BoundaryRegion* constraint = nullptr, const std::vector<char>* subdomain = nullptr,
                              double reg = 1e-8, int max_freq = 4);

void write_decay_csv(const std::string& path, const std::vector<CgoSolution>& sweep);

}  // namespace mfglab
