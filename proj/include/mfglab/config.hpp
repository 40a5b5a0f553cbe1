#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfglab/mfg_forward.hpp"

namespace mfglab {

using Json = nlohmann::json;

/// Experiment description read from a single JSON document; see README for the schema.
struct ExperimentConfig {
    std::string kind;
    int dim = 3;
    int n_cells = 0;
    std::string output_dir = "out";
    int workers = 0;
    std::uint64_t seed = 0;
    double noise = 0.0;
    Json doc;

    static ExperimentConfig parse(const Json& doc);
    /// invariant violations that can be found without running solves
    std::vector<std::string> violations() const;
    /// sha256 of the canonical (sorted-key) dump
    std::string hash() const;

    /// the named top-level object, or an empty object
    const Json& section(const char* key) const;
};

ExperimentConfig load_config(const std::string& path);

std::string sha256_hex(const std::string& bytes);

/// number | {"constant": c} | {"base": b, "bumps": [{"center": [..], "width": w, "amplitude": a}]} | {"file": path}
/// A bump contributes amplitude * exp(-|x - center|^2 / width).
ScalarField make_field(const GridPtr& g, const Json& spec, const std::string& key);
/// field specs evaluated on the boundary, plus {"cos": {"freq": [..], "amplitude": a, "base": b}}
/// = base + amplitude cos(2 pi freq.x)
BoundaryTrace make_trace(const GridPtr& g, const Json& spec, const std::string& key);

/// {"v": .., "k": field, "r": field, "F": [{"order": i, "coeff": field}]}; k, r default to 1
MfgCoefficients make_coefficients(const GridPtr& g, const Json& spec, const std::string& key);
/// base coefficients with the entries present in `overrides` replaced
MfgCoefficients override_coefficients(const MfgCoefficients& base, const Json& overrides, const std::string& key);
NewtonOptions make_newton(const Json& spec);

}  // namespace mfglab
