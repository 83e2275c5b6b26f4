#include "cwtopo/fom.hpp"

#include "cwtopo/condensation.hpp"
#include "cwtopo/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace cwtopo {

FomModel build_fom(const SystemTopology& topology, std::span<const ReferenceComponent> library) {
    FomModel fom;
    const int n_inst = topology.instance_count();
    fom.node_map.resize(n_inst);
    for (int i = 0; i < n_inst; ++i) {
        const auto& ref = library[topology.instances[i].reference];
        fom.node_map[i].assign(ref.mesh.node_count(), -1);
    }
    for (int i = 0; i < n_inst; ++i) {
        const auto& inst = topology.instances[i];
        const auto& ref = library[inst.reference];
        auto& map = fom.node_map[i];
        for (int n = 0; n < ref.mesh.node_count(); ++n) {
            if (map[n] < 0) {
                map[n] = fom.mesh.node_count();
                fom.mesh.nodes.push_back(inst.map.apply(ref.mesh.nodes[n]));
            }
        }
        // later owners of shared ports reuse this numbering
        for (int j = 0; j < ref.port_count(); ++j) {
            const auto& gp = topology.ports[topology.local_to_global[i][j]];
            if (!gp.interior()) continue;
            for (const auto& lp : gp.owners) {
                if (lp.instance <= i) continue;
                const auto& theirs = library[topology.instances[lp.instance].reference].ports[lp.port];
                for (int a = 0; a < theirs.node_count(); ++a) {
                    fom.node_map[lp.instance][theirs.nodes[a]] = map[ref.ports[j].nodes[a]];
                }
            }
        }
        for (const auto& el : ref.mesh.elements) {
            fom.mesh.elements.push_back({map[el[0]], map[el[1]], map[el[2]], map[el[3]]});
            fom.element_owner.push_back(i);
        }
    }
    fom.load = Vector::Zero(fom.mesh.dof_count());
    std::vector<bool> fixed(fom.mesh.dof_count(), false);
    for (const auto& gp : topology.ports) {
        const LocalPort lp = gp.owners.front();
        const auto& inst = topology.instances[lp.instance];
        const Port& port = library[inst.reference].ports[lp.port];
        if (gp.dirichlet) {
            for (int n : port.nodes) {
                const int g = fom.node_map[lp.instance][n];
                fixed[dof(g, 0)] = fixed[dof(g, 1)] = true;
            }
        } else if (gp.traction) {
            const Vector f = port_traction_load(port, *gp.traction);
            for (int a = 0; a < port.node_count(); ++a) {
                const int g = fom.node_map[lp.instance][port.nodes[a]];
                fom.load.segment<2>(2 * g) += f.segment<2>(2 * a);
            }
        }
    }
    for (int d = 0; d < fom.mesh.dof_count(); ++d) {
        if (fixed[d]) fom.fixed_dofs.push_back(d);
    }
    return fom;
}

SparseMatrix assemble_fom(const FomModel& fom, const SystemTopology& topology,
                          std::span<const ReferenceComponent> library, std::span<const double> scale) {
    if (static_cast<int>(scale.size()) != topology.instance_count()) {
        throw ContractError("one scale factor per instance is required");
    }
    std::vector<std::vector<ElementMatrix>> ref_ke(library.size());
    for (std::size_t r = 0; r < library.size(); ++r) {
        const auto& ref = library[r];
        for (int e = 0; e < ref.mesh.element_count(); ++e) {
            ref_ke[r].push_back(element_stiffness(ref.mesh.corners(e), ref.material, ref.thickness));
        }
    }
    const ElementAssembler assembler(fom.mesh.node_count(), fom.mesh.elements);
    SparseMatrix K = assembler.zero_matrix();
    int e_global = 0;
    for (int i = 0; i < topology.instance_count(); ++i) {
        const auto& inst = topology.instances[i];
        const auto& kes = ref_ke[inst.reference];
        ElementMatrix T = ElementMatrix::Zero();
        for (int a = 0; a < 4; ++a) {
            T.block<2, 2>(2 * a, 2 * a) = inst.map.rotation();
        }
        const bool rotated = inst.map.quarter_turns % 4 != 0;
        for (const auto& ke : kes) {
            const auto& el = fom.mesh.elements[e_global++];
            if (rotated) {
                assembler.scatter(K, el, T * ke * T.transpose(), scale[i]);
            } else {
                assembler.scatter(K, el, ke, scale[i]);
            }
        }
    }
    return K;
}

FomSolution solve_fom(const FomModel& fom, const SystemTopology& topology, std::span<const ReferenceComponent> library,
                      std::span<const double> scale) {
    SparseMatrix K = assemble_fom(fom, topology, library, scale);
    const Vector zeros = Vector::Zero(static_cast<Eigen::Index>(fom.fixed_dofs.size()));
    ReducedSystem red = apply_dirichlet(K, fom.load, fom.fixed_dofs, {zeros.data(), fom.fixed_dofs.size()});
    K.resize(0, 0);
    K.data().squeeze();
    red.matrix.makeCompressed();
    FomSolution sol;
    sol.displacement = red.recover(solve_spd(red.matrix, red.rhs));
    sol.compliance = fom.load.dot(sol.displacement);
    return sol;
}

std::vector<Vector> restrict_to_instances(const FomModel& fom, const SystemTopology& topology, const Vector& u) {
    std::vector<Vector> out(topology.instance_count());
    for (int i = 0; i < topology.instance_count(); ++i) {
        const auto& map = fom.node_map[i];
        Vector g(2 * map.size());
        for (std::size_t n = 0; n < map.size(); ++n) {
            g.segment<2>(2 * n) = u.segment<2>(2 * map[n]);
        }
        out[i] = to_local_frame(topology.instances[i].map, g);
    }
    return out;
}

double relative_l2_error(const SystemTopology& topology, std::span<const ReferenceComponent> library,
                         std::span<const Vector> reference, std::span<const Vector> approximation) {
    std::vector<SparseMatrix> mass;
    for (const auto& ref : library) {
        mass.push_back(assemble_vector_mass(ref.mesh));
    }
    double err = 0.0;
    double norm = 0.0;
    for (int i = 0; i < topology.instance_count(); ++i) {
        const auto& M = mass[topology.instances[i].reference];
        const Vector e = reference[i] - approximation[i];
        err += e.dot(M * e);
        norm += reference[i].dot(M * reference[i]);
    }
    return norm > 0.0 ? std::sqrt(err / norm) : std::sqrt(err);
}

} // namespace cwtopo
