#pragma once

// Run configuration: JSON with // and /* */ comments allowed.

#include "cwtopo/component.hpp"
#include "cwtopo/optimize.hpp"
#include "cwtopo/port_reduction.hpp"

#include <string>
#include <vector>

namespace cwtopo {

struct OnlineOptions {
    int basis_size = 8;    // per port, constants included; 0: library default
    double density = 0.0;  // uniform density for solve/compare/verify; 0: optimizer volume fraction
};

struct CompareOptions {
    std::vector<int> basis_sizes{4, 6, 8, 12, 16, 20};
    int repetitions = 5;
    bool full_order = true; // false: use the full-basis condensed model as reference
};

struct VerifyOptions {
    std::vector<int> basis_sizes{4, 6, 8, 12, 16, 20};
    int random_densities = 2; // extra random density draws per size besides the uniform one
    int dense_limit = 2000;
};

struct RunConfig {
    ComponentGeometry geometry;
    PlaneStressMaterial material{69e9, 0.3};
    LatticeSpec lattice = small_cantilever();
    TrainingOptions training;
    PodOptions pod;
    SimpParams simp;
    OptimizationOptions optimizer;
    OnlineOptions online;
    CompareOptions compare;
    VerifyOptions verify;
    int threads = 1;

    /// Throws ConfigError for non-physical or inconsistent values.
    void validate() const;
};

/// Parses a config document; missing keys keep their defaults, unknown keys are errors.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);
/// Fully explicit document (lattice presets expanded).
std::string serialize_config(const RunConfig& config);

} // namespace cwtopo
