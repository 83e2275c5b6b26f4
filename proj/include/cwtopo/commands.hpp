#pragma once

// Command implementations behind the cwtopo executable.

#include "cwtopo/config.hpp"
#include "cwtopo/port_reduction.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cwtopo {

struct CommandOptions {
    std::string config_path;
    std::string library_path;
    std::string out_dir = "out";
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::optional<int> basis_size;
    std::string density_path;     // solve: one density per line
    bool cwfom_reference = false; // compare: full-basis condensed model instead of the FOM
    bool write_fields = true;
};

/// Config from the file (or defaults) with command-line overrides applied.
RunConfig resolve_config(const CommandOptions& options, bool training);

/// Lattice topology of the config checked against a library.
SystemTopology lattice_topology(const RunConfig& config, const TrainedLibrary& library);

/// Online basis size: explicit request, else the config, else the library default.
int online_basis_size(const RunConfig& config, const TrainedLibrary& library);

struct CompareRow {
    std::string model; // FOM, CWFOM or CWROM
    int size = 0;      // port basis size (0 for the FOM)
    int dofs = 0;
    double time = 0.0; // seconds, median
    double relative_time = 1.0;
    double error = 0.0;
};

/// Timing and relative L2 error of the FOM, the full-basis condensed model and
/// the reduced models for each basis size.
std::vector<CompareRow> compare_models(const RunConfig& config, const TrainedLibrary& library, bool fom_reference);

std::string format_compare_table(const std::vector<CompareRow>& rows);

int cmd_train(const CommandOptions& options);
int cmd_solve(const CommandOptions& options);
int cmd_optimize(const CommandOptions& options);
int cmd_compare(const CommandOptions& options);
int cmd_verify(const CommandOptions& options);

} // namespace cwtopo
