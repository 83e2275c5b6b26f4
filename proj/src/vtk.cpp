#include "cwtopo/vtk.hpp"

#include "cwtopo/condensation.hpp"
#include "cwtopo/errors.hpp"

#include <fmt/format.h>
#include <fmt/os.h>

#include <filesystem>

namespace cwtopo {

void write_vtk(const std::string& path, const VtkPiece& piece, const std::string& title) {
    const auto& mesh = piece.mesh;
    auto out = fmt::output_file(path);
    out.print("# vtk DataFile Version 3.0\n{}\nASCII\nDATASET UNSTRUCTURED_GRID\n", title);
    out.print("POINTS {} double\n", mesh.node_count());
    for (const auto& x : mesh.nodes) {
        out.print("{:.17g} {:.17g} 0\n", x.x(), x.y());
    }
    out.print("CELLS {} {}\n", mesh.element_count(), 5 * mesh.element_count());
    for (const auto& e : mesh.elements) {
        out.print("4 {} {} {} {}\n", e[0], e[1], e[2], e[3]);
    }
    out.print("CELL_TYPES {}\n", mesh.element_count());
    for (int e = 0; e < mesh.element_count(); ++e) {
        out.print("9\n");
    }
    if (piece.displacement.size() == mesh.dof_count()) {
        out.print("POINT_DATA {}\nVECTORS displacement double\n", mesh.node_count());
        for (int n = 0; n < mesh.node_count(); ++n) {
            out.print("{:.17g} {:.17g} 0\n", piece.displacement[dof(n, 0)], piece.displacement[dof(n, 1)]);
        }
    }
    if (!piece.cell_fields.empty()) {
        out.print("CELL_DATA {}\n", mesh.element_count());
        for (const auto& [name, values] : piece.cell_fields) {
            if (values.size() != mesh.element_count()) {
                throw ContractError(fmt::format("cell field '{}' has {} values for {} cells", name, values.size(),
                                                mesh.element_count()));
            }
            out.print("SCALARS {} double 1\nLOOKUP_TABLE default\n", name);
            for (double v : values) {
                out.print("{:.17g}\n", v);
            }
        }
    }
}

std::vector<VtkPiece> field_pieces(const SystemTopology& topology, std::span<const ReferenceComponent> library,
                                   std::span<const Vector> fields, std::span<const double> mu, const SimpParams& simp) {
    std::vector<VtkPiece> pieces(topology.instance_count());
    for (int i = 0; i < topology.instance_count(); ++i) {
        const auto& inst = topology.instances[i];
        const auto& ref = library[inst.reference];
        auto& piece = pieces[i];
        piece.mesh.elements = ref.mesh.elements;
        for (const auto& x : ref.mesh.nodes) {
            piece.mesh.nodes.push_back(inst.map.apply(x));
        }
        piece.displacement = to_global_frame(inst.map, fields[i]);
        const double scale = cwtopo::simp(mu[i], simp);
        piece.cell_fields["von_mises"] = von_mises(ref.mesh, ref.material, fields[i], scale);
        piece.cell_fields["density"] = Vector::Constant(ref.mesh.element_count(), mu[i]);
    }
    return pieces;
}

VtkPiece combine_pieces(std::span<const VtkPiece> pieces) {
    VtkPiece all;
    int nodes = 0;
    int elements = 0;
    for (const auto& p : pieces) {
        nodes += p.mesh.node_count();
        elements += p.mesh.element_count();
    }
    all.mesh.nodes.reserve(nodes);
    all.mesh.elements.reserve(elements);
    all.displacement.resize(2 * nodes);
    int node_offset = 0;
    int element_offset = 0;
    for (const auto& p : pieces) {
        for (const auto& x : p.mesh.nodes) all.mesh.nodes.push_back(x);
        for (auto e : p.mesh.elements) {
            for (int& n : e) n += node_offset;
            all.mesh.elements.push_back(e);
        }
        all.displacement.segment(2 * node_offset, p.mesh.dof_count()) = p.displacement;
        for (const auto& [name, values] : p.cell_fields) {
            auto& target = all.cell_fields[name];
            if (target.size() == 0) target = Vector::Zero(elements);
            target.segment(element_offset, values.size()) = values;
        }
        node_offset += p.mesh.node_count();
        element_offset += p.mesh.element_count();
    }
    return all;
}

void export_fields(const std::string& dir, std::span<const VtkPiece> pieces, bool per_component) {
    std::filesystem::create_directories(dir);
    const auto base = std::filesystem::path(dir);
    if (per_component) {
        for (std::size_t i = 0; i < pieces.size(); ++i) {
            write_vtk((base / fmt::format("component_{:04d}.vtk", i)).string(), pieces[i],
                      fmt::format("component {}", i));
        }
    }
    write_vtk((base / "lattice.vtk").string(), combine_pieces(pieces), "lattice");
}

} // namespace cwtopo
