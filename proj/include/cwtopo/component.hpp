#pragma once

// Reference-component library, procedural joint/strut geometry, rigid
// instantiation maps and port bookkeeping for assembled lattices.

#include "cwtopo/fem.hpp"

#include <optional>
#include <string>
#include <vector>

namespace cwtopo {

/// A port of a reference component. Nodes are ordered by arclength from the
/// lexicographically smaller endpoint, so two coincident ports with the same
/// orientation share node order and basis sign convention.
struct Port {
    std::string name;
    std::string port_class; // ports that may connect share a class (and a trained port space)
    std::vector<int> nodes;
    std::vector<double> arclength;
    Vec2 outward_normal = Vec2::Zero();

    [[nodiscard]] int node_count() const { return static_cast<int>(nodes.size()); }
    [[nodiscard]] int dof_count() const { return 2 * node_count(); }
    [[nodiscard]] double length() const { return arclength.empty() ? 0.0 : arclength.back(); }
};

struct ReferenceComponent {
    int id = 0;
    std::string name;
    QuadMesh mesh;
    std::vector<Port> ports;
    PlaneStressMaterial material;
    double thickness = 1.0;

    /// Checks mesh validity, port disjointness and that port nodes lie on the boundary.
    void validate() const;
    [[nodiscard]] int port_count() const { return static_cast<int>(ports.size()); }
    [[nodiscard]] double volume() const { return mesh.area() * thickness; }
};

struct ComponentGeometry {
    double port_length = 0.01;   // m
    double strut_length = 0.05;  // m
    int port_nodes = 36;         // nodes across one port
    int strut_axial_elements = 0;  // 0: about 3.1 (port_nodes - 1), 3,815 elements at 36 nodes
    int joint_radial_elements = 0; // 0: about 0.37 (port_nodes - 1), 3,721 joint elements at 36 nodes
    double thickness = 1.0;      // m

    void validate() const;
};

/// Octagonal joint on a 3x3 port-length footprint: four ports (W, N, E, S)
/// centred on the sides, 45 degree chamfers joining neighbouring port ends.
ReferenceComponent make_joint(const ComponentGeometry& geometry, const PlaneStressMaterial& material);

/// Rectangular strut of length geometry.strut_length and width port_length.
/// Horizontal struts have ports (W, E); vertical ones (N, S).
ReferenceComponent make_strut(const ComponentGeometry& geometry, const PlaneStressMaterial& material, bool vertical);

/// The three-entry lattice library: joint (0), horizontal strut (1), vertical strut (2).
std::vector<ReferenceComponent> make_lattice_library(const ComponentGeometry& geometry,
                                                      const PlaneStressMaterial& material);

/// Orientation-preserving isometry: rotation by quarter_turns * 90 degrees
/// about the reference origin, then translation.
struct TransformationMap {
    int quarter_turns = 0;
    Vec2 translation = Vec2::Zero();

    [[nodiscard]] Eigen::Matrix2d rotation() const;
    [[nodiscard]] Vec2 apply(const Vec2& x) const { return rotation() * x + translation; }
    [[nodiscard]] Vec2 inverse(const Vec2& y) const { return rotation().transpose() * (y - translation); }
};

struct Instance {
    int reference = 0;
    TransformationMap map;
};

struct LocalPort {
    int instance = 0;
    int port = 0;
    friend bool operator==(const LocalPort&, const LocalPort&) = default;
};

struct GlobalPort {
    std::vector<LocalPort> owners; // connectivity set: one or two local ports
    bool dirichlet = false;
    std::optional<Vec2> traction; // N/m, constant over the port, global frame

    [[nodiscard]] bool interior() const { return owners.size() == 2; }
};

struct SystemTopology {
    std::vector<Instance> instances;
    std::vector<GlobalPort> ports;
    std::vector<std::vector<int>> local_to_global; // [instance][local port] -> global port

    [[nodiscard]] int instance_count() const { return static_cast<int>(instances.size()); }
    [[nodiscard]] int global_port_count() const { return static_cast<int>(ports.size()); }
    [[nodiscard]] int free_port_count() const;
    [[nodiscard]] std::vector<int> dirichlet_ports() const;

    /// Global-frame node positions of a local port, in port order.
    [[nodiscard]] std::vector<Vec2> port_positions(std::span<const ReferenceComponent> library, LocalPort lp) const;
};

/// Detects shared ports by geometric coincidence and builds the connectivity
/// sets. Throws TopologyError for ports shared by more than two components,
/// coincident ports whose nodes do not match pointwise, or mismatched classes.
SystemTopology connect(std::span<const ReferenceComponent> library, std::vector<Instance> instances);

enum class Side { Left, Right, Bottom, Top };
Side parse_side(const std::string& name);
std::string to_string(Side side);

struct BoundarySelector {
    Side side = Side::Left;
    int index = 0; // along the side, ascending coordinate
};

struct PortLoad {
    BoundarySelector where;
    Vec2 traction = Vec2::Zero();
};

/// Joints on a columns x rows grid joined by struts; optional outward stubs
/// (single struts hanging off the outer joints) on each side.
struct LatticeSpec {
    int columns = 1;
    int rows = 1;
    bool stub_left = false;
    bool stub_right = false;
    bool stub_bottom = false;
    bool stub_top = false;
    std::vector<BoundarySelector> dirichlet;
    std::vector<PortLoad> loads;
};

/// Boundary (singleton) ports on one side of the structure's bounding box, sorted along the side.
std::vector<int> boundary_ports_on_side(const SystemTopology& topology, std::span<const ReferenceComponent> library,
                                        Side side);

SystemTopology build_lattice(const LatticeSpec& spec, std::span<const ReferenceComponent> library);

/// Four joints and four struts in a ring.
LatticeSpec ring_lattice();
/// 10 x 10 joints with left stubs (290 components), clamped at four left ports, loaded at two right ports.
LatticeSpec small_cantilever();
/// 56 x 18 joints (2,950 components), clamped on the left, loaded at the lower right joint.
LatticeSpec large_cantilever();

/// Maps (instance, local port, basis index) to condensed DOF indices. Dirichlet
/// ports carry no condensed DOFs.
class PortDofMap {
public:
    PortDofMap() = default;
    /// port_size(instance, local port) gives the basis size used by that local port.
    template <typename SizeFn>
    PortDofMap(const SystemTopology& topology, SizeFn&& port_size);

    [[nodiscard]] int size() const { return total_; }
    [[nodiscard]] int offset(int global_port) const { return offset_[global_port]; }
    [[nodiscard]] int port_size(int global_port) const { return size_[global_port]; }
    /// Condensed index of basis function k on local port j of instance i, or -1 for Dirichlet ports.
    [[nodiscard]] int index(int instance, int local_port, int k) const;

private:
    void build(const SystemTopology& topology, const std::vector<std::vector<int>>& local_sizes);
    const SystemTopology* topology_ = nullptr;
    std::vector<int> offset_;
    std::vector<int> size_;
    int total_ = 0;
};

PortDofMap port_dof_map(const SystemTopology& topology, std::span<const ReferenceComponent> library,
                        int basis_size_per_port = 0); // 0: full nodal dimension

std::vector<double> instance_volumes(const SystemTopology& topology, std::span<const ReferenceComponent> library);

template <typename SizeFn>
PortDofMap::PortDofMap(const SystemTopology& topology, SizeFn&& port_size) {
    std::vector<std::vector<int>> local(topology.instances.size());
    for (int i = 0; i < topology.instance_count(); ++i) {
        for (std::size_t j = 0; j < topology.local_to_global[i].size(); ++j) {
            local[i].push_back(port_size(i, static_cast<int>(j)));
        }
    }
    build(topology, local);
}

} // namespace cwtopo
