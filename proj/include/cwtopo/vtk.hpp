#pragma once

// Legacy ASCII VTK unstructured-grid export of displacement and stress fields.

#include "cwtopo/component.hpp"
#include "cwtopo/simp.hpp"

#include <map>
#include <string>
#include <vector>

namespace cwtopo {

struct VtkPiece {
    QuadMesh mesh;                             // global frame
    Vector displacement;                       // global frame, 2 per node
    std::map<std::string, Vector> cell_fields; // one value per element
};

void write_vtk(const std::string& path, const VtkPiece& piece, const std::string& title = "cwtopo field");

/// Per-instance pieces from component-frame displacement fields: displacement,
/// von Mises stress (s(mu_i) E) and density.
std::vector<VtkPiece> field_pieces(const SystemTopology& topology, std::span<const ReferenceComponent> library,
                                   std::span<const Vector> fields, std::span<const double> mu, const SimpParams& simp);

/// Concatenates pieces without merging coincident nodes.
VtkPiece combine_pieces(std::span<const VtkPiece> pieces);

/// Writes component_<i>.vtk for each piece (when per_component) and lattice.vtk into dir.
void export_fields(const std::string& dir, std::span<const VtkPiece> pieces, bool per_component = true);

} // namespace cwtopo
