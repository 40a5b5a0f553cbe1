#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mfglab/cgo.hpp"
#include "mfglab/linearize.hpp"

namespace mfglab {

/// Linearized DN map of one slot: boundary data -> flux / v. Must be safe to call concurrently.
using DnOracle = std::function<VecC(const VecC& data)>;
/// Mixed higher-order u-slot DN data: probes (f_l, g_l) -> flux / v of u^(1..n), n = 2 or 3.
using HigherOrderOracle = std::function<VecC(const std::vector<BoundaryTrace>& f, const std::vector<BoundaryTrace>& g)>;

/// Slot::m probes r, Slot::u probes k.
DnOracle simulated_dn(const MfgCoefficients& hidden, Slot slot);
/// Rejects data outside U+ and zeroes the output outside U-.
DnOracle partial_dn(DnOracle full, const PartialDataSpec& spec);
HigherOrderOracle simulated_higher_order(const MfgCoefficients& hidden);

struct FourierData {
    enum class Domain { full_lattice, cone };
    Domain domain = Domain::full_lattice;
    std::vector<Vec3> xi;
    VecC values;
    /// per frequency: largest CGO remainder norm used
    std::vector<double> remainder;
    double h = 0.25;
    bool richardson = false;
    Vec3 cone_lambda{0.0, 0.0, 0.0};
    double cone_eps0 = 0.0;

    int size() const { return static_cast<int>(xi.size()); }
    void check() const;
};

/// xi = 2 pi k with |k|_inf <= cutoff and |xi| h_mesh <= 1, ordered by |k| then lexicographically
std::vector<Vec3> frequency_lattice(const Grid& g, int cutoff);

struct ExtractOptions {
    double h = 0.25;
    /// 2 V(h/2) - V(h)
    bool richardson = false;
    int workers = 1;
};

FourierData extract_fourier(Slot slot, const DnOracle& measured, const MfgCoefficients& reference,
                            const std::vector<Vec3>& xi, const ExtractOptions& opts = {});

/// sum_xi value e^{-i xi.x}; the largest imaginary part is written to imag_residual
ScalarField invert_fourier(const FourierData& data, const GridPtr& grid, double* imag_residual = nullptr);

struct ReconstructOptions {
    int cutoff = 4;
    ExtractOptions extract;
    /// discrepancy to compare against (hidden - reference)
    std::optional<ScalarField> truth;
    /// smallest admissible first-order density before dividing
    double positivity_floor = 1e-3;
};

struct ReconstructionResult {
    ScalarField recovered;
    /// relative L2 error against the truth, absolute when the truth vanishes
    std::optional<double> error;
    int cutoff = 0;
    double h = 0.0;
    double imag_residual = 0.0;
    FourierData data;
};

ReconstructionResult reconstruct_coefficient(Slot slot, const DnOracle& measured, const MfgCoefficients& reference,
                                             const ReconstructOptions& opts = {});

/// Positive probes (f_l, g_l) for the higher-order recoveries.
struct Probes {
    std::vector<BoundaryTrace> f, g;
};

/// F2 discrepancy from mixed second-order data; one positive probe.
ReconstructionResult reconstruct_F2(const HigherOrderOracle& measured, const MfgCoefficients& known,
                                    const Probes& probes, const ReconstructOptions& opts = {});
/// F3 discrepancy from mixed third-order data; two positive probes, F2 already known.
ReconstructionResult reconstruct_F3(const HigherOrderOracle& measured, const MfgCoefficients& known,
                                    const Probes& probes, const ReconstructOptions& opts = {});

/// Boundary pairing split over A = {lambda.nu > eps0} (probe vanishes), B = U- minus A and C = rest,
/// against the volume integral it must equal.
struct BoundaryAudit {
    Vec3 xi{};
    cplx a = 0.0, b = 0.0, c = 0.0, volume = 0.0;
    int c_nodes = 0;
    double relative = 0.0;
};

struct ConeData {
    FourierData data;
    std::vector<BoundaryAudit> audit;
};

/// Lattice frequencies whose CGO direction lies within eps0 of lambda'
std::vector<Vec3> cone_frequencies(const Grid& g, const PartialDataSpec& spec, int cutoff, int count);

/// Cone-restricted data from U- measurements. The audit runs when the hidden coefficient is given.
ConeData cone_fourier_data(Slot slot, const DnOracle& partial_measured, const MfgCoefficients& reference,
                           const PartialDataSpec& spec, int xi_count, const ExtractOptions& opts = {},
                           int cutoff = 4, const ScalarField* hidden_coefficient = nullptr);

void write_fourier_csv(const std::string& path, const FourierData& data);
void write_metrics_csv(const std::string& path, const ReconstructionResult& result);

}  // namespace mfglab
