#pragma once

#include <iosfwd>
#include <optional>
#include <string>

#include "mfglab/config.hpp"
#include "mfglab/reconstruct.hpp"

namespace mfglab {

inline constexpr const char* kToolVersion = "0.1.0";

struct RunOptions {
    std::optional<int> workers;
    std::optional<std::string> out;
};

/// Exit codes: 0 success, 1 numerical failure or failed declared check, 2 configuration error.
int run_experiment(const std::string& config_path, const RunOptions& opts, std::ostream& diag);
/// Prints the resolved plan and any violations to `os`; never runs a solve.
int verify_experiment(const std::string& config_path, std::ostream& os);

/// Adds sigma * max|output| Gaussian noise to every DN output; the draw depends only on the seed and the input.
DnOracle noisy_dn(DnOracle base, double sigma, std::uint64_t seed);

/// Measured DN from a stored matrix in the boundary basis: reference map plus the stored
/// difference applied to the weighted projection of the data.
DnOracle stored_dn(const std::string& path, int max_freq, const MfgCoefficients& reference, Slot slot, int workers);

DnMatrix read_dn_csv(const std::string& path);

}  // namespace mfglab
