#pragma once

// Conforming full-order model of an assembled lattice: instance meshes merged
// at shared port nodes, per-instance density scaling.

#include "cwtopo/component.hpp"
#include "cwtopo/fem.hpp"

namespace cwtopo {

struct FomModel {
    QuadMesh mesh;                            // global frame
    std::vector<std::vector<int>> node_map;   // [instance][reference node] -> global node
    std::vector<int> element_owner;           // instance of each global element
    std::vector<int> fixed_dofs;              // Dirichlet port DOFs
    Vector load;                              // port tractions

    [[nodiscard]] int dof_count() const { return mesh.dof_count(); }
};

FomModel build_fom(const SystemTopology& topology, std::span<const ReferenceComponent> library);

/// Stiffness with instance i scaled by scale[i]; reference element matrices are reused across instances.
SparseMatrix assemble_fom(const FomModel& fom, const SystemTopology& topology,
                          std::span<const ReferenceComponent> library, std::span<const double> scale);

struct FomSolution {
    Vector displacement; // global frame, all DOFs
    double compliance = 0.0;
};

FomSolution solve_fom(const FomModel& fom, const SystemTopology& topology, std::span<const ReferenceComponent> library,
                      std::span<const double> scale);

/// Component-frame restriction of a global displacement to every instance.
std::vector<Vector> restrict_to_instances(const FomModel& fom, const SystemTopology& topology, const Vector& u);

/// sqrt(sum_i |u_i - v_i|^2_{L2(Omega_i)} / sum_i |u_i|^2_{L2(Omega_i)}) over component-frame fields.
double relative_l2_error(const SystemTopology& topology, std::span<const ReferenceComponent> library,
                         std::span<const Vector> reference, std::span<const Vector> approximation);

} // namespace cwtopo
