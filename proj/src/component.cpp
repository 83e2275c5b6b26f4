#include "cwtopo/component.hpp"

#include "cwtopo/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <unordered_map>

namespace cwtopo {

namespace {

/// Merges coincident nodes produced by independently meshed blocks.
class NodeMerger {
public:
    NodeMerger(std::vector<Vec2>& nodes, double tolerance) : nodes_(nodes), tol_(tolerance) {}

    int add(const Vec2& p) {
        const long long cx = std::llround(p.x() / tol_);
        const long long cy = std::llround(p.y() / tol_);
        for (long long dx = -1; dx <= 1; ++dx) {
            for (long long dy = -1; dy <= 1; ++dy) {
                auto it = cells_.find(key(cx + dx, cy + dy));
                if (it == cells_.end()) {
                    continue;
                }
                for (int id : it->second) {
                    if ((nodes_[id] - p).norm() <= tol_) {
                        return id;
                    }
                }
            }
        }
        const int id = static_cast<int>(nodes_.size());
        nodes_.push_back(p);
        cells_[key(cx, cy)].push_back(id);
        return id;
    }

private:
    static long long key(long long x, long long y) { return x * 1000003LL + y; }
    std::vector<Vec2>& nodes_;
    double tol_;
    std::unordered_map<long long, std::vector<int>> cells_;
};

/// Bilinear block p0 -> p1 -> p2 -> p3 (counter-clockwise) split into nu x nv quads.
void mesh_block(QuadMesh& mesh, NodeMerger& merger, const Vec2& p0, const Vec2& p1, const Vec2& p2, const Vec2& p3,
                int nu, int nv) {
    std::vector<int> ids((nu + 1) * (nv + 1));
    for (int j = 0; j <= nv; ++j) {
        const double v = static_cast<double>(j) / nv;
        for (int i = 0; i <= nu; ++i) {
            const double u = static_cast<double>(i) / nu;
            const Vec2 x = (1 - u) * (1 - v) * p0 + u * (1 - v) * p1 + u * v * p2 + (1 - u) * v * p3;
            ids[j * (nu + 1) + i] = merger.add(x);
        }
    }
    for (int j = 0; j < nv; ++j) {
        for (int i = 0; i < nu; ++i) {
            mesh.elements.push_back({ids[j * (nu + 1) + i], ids[j * (nu + 1) + i + 1], ids[(j + 1) * (nu + 1) + i + 1],
                                     ids[(j + 1) * (nu + 1) + i]});
        }
    }
}

bool lex_less(const Vec2& a, const Vec2& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
}

/// Collects mesh nodes on the segment [a, b] and orders them from the lexicographically smaller endpoint.
Port make_port(const QuadMesh& mesh, std::string name, std::string port_class, const Vec2& a, const Vec2& b,
               const Vec2& normal, double tol) {
    Port port;
    port.name = std::move(name);
    port.port_class = std::move(port_class);
    port.outward_normal = normal;
    const Vec2 start = lex_less(a, b) ? a : b;
    const Vec2 end = lex_less(a, b) ? b : a;
    const Vec2 dir = (end - start).normalized();
    const double len = (end - start).norm();
    std::vector<std::pair<double, int>> hits;
    for (int n = 0; n < mesh.node_count(); ++n) {
        const Vec2 d = mesh.nodes[n] - start;
        const double t = d.dot(dir);
        const double off = std::abs(d.x() * dir.y() - d.y() * dir.x());
        if (off <= tol && t >= -tol && t <= len + tol) {
            hits.emplace_back(t, n);
        }
    }
    std::sort(hits.begin(), hits.end());
    for (const auto& [t, n] : hits) {
        port.nodes.push_back(n);
        port.arclength.push_back((mesh.nodes[n] - mesh.nodes[hits.front().second]).norm());
    }
    return port;
}

void tag_ports(ReferenceComponent& comp) {
    for (const auto& port : comp.ports) {
        comp.mesh.boundary_tags[port.name] = port.nodes;
    }
}

} // namespace

void ComponentGeometry::validate() const {
    if (port_nodes < 2) {
        throw ConfigError(fmt::format("port resolution must be at least 2 nodes, got {}", port_nodes));
    }
    if (!(port_length > 0.0) || !(strut_length > 0.0) || !(thickness > 0.0)) {
        throw ConfigError("component lengths and thickness must be positive");
    }
    if (strut_axial_elements < 0 || joint_radial_elements < 0) {
        throw ConfigError("element counts must be non-negative");
    }
}

void ReferenceComponent::validate() const {
    mesh.validate();
    material.validate();
    // boundary nodes: endpoints of edges used by exactly one element
    std::map<std::pair<int, int>, int> edge_count;
    for (const auto& el : mesh.elements) {
        for (int a = 0; a < 4; ++a) {
            const int u = el[a];
            const int v = el[(a + 1) % 4];
            ++edge_count[{std::min(u, v), std::max(u, v)}];
        }
    }
    std::set<int> boundary;
    for (const auto& [edge, count] : edge_count) {
        if (count == 1) {
            boundary.insert(edge.first);
            boundary.insert(edge.second);
        }
    }
    std::set<int> seen;
    for (const auto& port : ports) {
        if (port.node_count() < 2) {
            throw GeometryError(fmt::format("port '{}' has fewer than two nodes", port.name));
        }
        for (int n : port.nodes) {
            if (!boundary.contains(n)) {
                throw GeometryError(fmt::format("port '{}' node {} is not on the boundary", port.name, n));
            }
            if (!seen.insert(n).second) {
                throw GeometryError(fmt::format("ports of '{}' are not disjoint (node {})", name, n));
            }
        }
    }
}

ReferenceComponent make_joint(const ComponentGeometry& g, const PlaneStressMaterial& material) {
    g.validate();
    const double a = g.port_length;
    const int m = g.port_nodes - 1;
    const int r = g.joint_radial_elements > 0 ? g.joint_radial_elements
                                             : std::max(1, static_cast<int>(std::lround(m * 13.0 / 35.0)));
    ReferenceComponent comp;
    comp.name = "joint";
    comp.material = material;
    comp.thickness = g.thickness;
    const double tol = 1e-9 * a;
    NodeMerger merger(comp.mesh.nodes, tol);
    auto P = [a](double x, double y) { return Vec2(x * a, y * a); };
    auto& mesh = comp.mesh;
    mesh_block(mesh, merger, P(1, 1), P(2, 1), P(2, 2), P(1, 2), m, m); // centre
    mesh_block(mesh, merger, P(1, 2), P(2, 2), P(2, 3), P(1, 3), m, r); // north arm
    mesh_block(mesh, merger, P(1, 0), P(2, 0), P(2, 1), P(1, 1), m, r); // south arm
    mesh_block(mesh, merger, P(0, 1), P(1, 1), P(1, 2), P(0, 2), r, m); // west arm
    mesh_block(mesh, merger, P(2, 1), P(3, 1), P(3, 2), P(2, 2), r, m); // east arm
    // corner kites: inner corner, two port ends and the chamfer midpoint
    mesh_block(mesh, merger, P(2, 2), P(3, 2), P(2.5, 2.5), P(2, 3), r, r);
    mesh_block(mesh, merger, P(1, 2), P(1, 3), P(0.5, 2.5), P(0, 2), r, r);
    mesh_block(mesh, merger, P(1, 1), P(0, 1), P(0.5, 0.5), P(1, 0), r, r);
    mesh_block(mesh, merger, P(2, 1), P(2, 0), P(2.5, 0.5), P(3, 1), r, r);
    comp.ports.push_back(make_port(mesh, "W", "x", P(0, 1), P(0, 2), Vec2(-1, 0), tol));
    comp.ports.push_back(make_port(mesh, "N", "y", P(1, 3), P(2, 3), Vec2(0, 1), tol));
    comp.ports.push_back(make_port(mesh, "E", "x", P(3, 1), P(3, 2), Vec2(1, 0), tol));
    comp.ports.push_back(make_port(mesh, "S", "y", P(1, 0), P(2, 0), Vec2(0, -1), tol));
    tag_ports(comp);
    comp.validate();
    return comp;
}

ReferenceComponent make_strut(const ComponentGeometry& g, const PlaneStressMaterial& material, bool vertical) {
    g.validate();
    const double a = g.port_length;
    const double L = g.strut_length;
    const int m = g.port_nodes - 1;
    const int k = g.strut_axial_elements > 0 ? g.strut_axial_elements
                                            : std::max(1, static_cast<int>(std::lround(m * 109.0 / 35.0)));
    ReferenceComponent comp;
    comp.name = vertical ? "vstrut" : "hstrut";
    comp.material = material;
    comp.thickness = g.thickness;
    const double tol = 1e-9 * a;
    NodeMerger merger(comp.mesh.nodes, tol);
    if (vertical) {
        mesh_block(comp.mesh, merger, Vec2(0, 0), Vec2(a, 0), Vec2(a, L), Vec2(0, L), m, k);
        comp.ports.push_back(make_port(comp.mesh, "N", "y", Vec2(0, L), Vec2(a, L), Vec2(0, 1), tol));
        comp.ports.push_back(make_port(comp.mesh, "S", "y", Vec2(0, 0), Vec2(a, 0), Vec2(0, -1), tol));
    } else {
        mesh_block(comp.mesh, merger, Vec2(0, 0), Vec2(L, 0), Vec2(L, a), Vec2(0, a), k, m);
        comp.ports.push_back(make_port(comp.mesh, "W", "x", Vec2(0, 0), Vec2(0, a), Vec2(-1, 0), tol));
        comp.ports.push_back(make_port(comp.mesh, "E", "x", Vec2(L, 0), Vec2(L, a), Vec2(1, 0), tol));
    }
    tag_ports(comp);
    comp.validate();
    return comp;
}

std::vector<ReferenceComponent> make_lattice_library(const ComponentGeometry& geometry,
                                                      const PlaneStressMaterial& material) {
    std::vector<ReferenceComponent> lib;
    lib.push_back(make_joint(geometry, material));
    lib.push_back(make_strut(geometry, material, false));
    lib.push_back(make_strut(geometry, material, true));
    for (int r = 0; r < 3; ++r) {
        lib[r].id = r;
    }
    return lib;
}

Eigen::Matrix2d TransformationMap::rotation() const {
    const int q = ((quarter_turns % 4) + 4) % 4;
    static constexpr int c[4] = {1, 0, -1, 0};
    static constexpr int s[4] = {0, 1, 0, -1};
    Eigen::Matrix2d R;
    R << c[q], -s[q], s[q], c[q];
    return R;
}

int SystemTopology::free_port_count() const {
    return static_cast<int>(std::count_if(ports.begin(), ports.end(), [](const GlobalPort& p) { return !p.dirichlet; }));
}

std::vector<int> SystemTopology::dirichlet_ports() const {
    std::vector<int> out;
    for (int p = 0; p < global_port_count(); ++p) {
        if (ports[p].dirichlet) {
            out.push_back(p);
        }
    }
    return out;
}

std::vector<Vec2> SystemTopology::port_positions(std::span<const ReferenceComponent> library, LocalPort lp) const {
    const Instance& inst = instances.at(lp.instance);
    const ReferenceComponent& ref = library[inst.reference];
    const Port& port = ref.ports.at(lp.port);
    std::vector<Vec2> out;
    out.reserve(port.nodes.size());
    for (int n : port.nodes) {
        out.push_back(inst.map.apply(ref.mesh.nodes[n]));
    }
    return out;
}

SystemTopology connect(std::span<const ReferenceComponent> library, std::vector<Instance> instances) {
    SystemTopology topo;
    topo.instances = std::move(instances);
    topo.local_to_global.resize(topo.instances.size());
    double scale = 0.0;
    for (const auto& inst : topo.instances) {
        if (inst.reference < 0 || inst.reference >= static_cast<int>(library.size())) {
            throw TopologyError(fmt::format("instance references unknown component {}", inst.reference));
        }
        for (const auto& port : library[inst.reference].ports) {
            scale = std::max(scale, port.length());
        }
    }
    const double tol = 1e-7 * std::max(scale, 1e-12);
    // group local ports by the rounded global midpoint
    std::map<std::pair<long long, long long>, std::vector<LocalPort>> groups;
    std::vector<std::pair<long long, long long>> order;
    for (int i = 0; i < topo.instance_count(); ++i) {
        const auto& ref = library[topo.instances[i].reference];
        topo.local_to_global[i].assign(ref.ports.size(), -1);
        for (int j = 0; j < ref.port_count(); ++j) {
            const auto pos = topo.port_positions(library, {i, j});
            const Vec2 mid = 0.5 * (pos.front() + pos.back());
            const std::pair key{std::llround(mid.x() / tol), std::llround(mid.y() / tol)};
            auto& g = groups[key];
            if (g.empty()) {
                order.push_back(key);
            }
            g.push_back({i, j});
        }
    }
    for (const auto& key : order) {
        const auto& g = groups[key];
        if (g.size() > 2) {
            throw TopologyError(fmt::format("port shared by {} components", g.size()));
        }
        if (g.size() == 2) {
            const auto& ia = topo.instances[g[0].instance];
            const auto& ib = topo.instances[g[1].instance];
            const Port& pa = library[ia.reference].ports[g[0].port];
            const Port& pb = library[ib.reference].ports[g[1].port];
            if (pa.port_class != pb.port_class || pa.node_count() != pb.node_count()) {
                throw TopologyError(fmt::format("coincident ports '{}' and '{}' are not compatible", pa.name, pb.name));
            }
            if (((ia.map.quarter_turns - ib.map.quarter_turns) % 4 + 4) % 4 != 0) {
                throw TopologyError("coincident ports have different orientations");
            }
            const auto xa = topo.port_positions(library, g[0]);
            const auto xb = topo.port_positions(library, g[1]);
            for (std::size_t n = 0; n < xa.size(); ++n) {
                if ((xa[n] - xb[n]).norm() > 1e-9) {
                    throw TopologyError("coincident ports do not match node to node");
                }
            }
            if ((ia.map.rotation() * pa.outward_normal + ib.map.rotation() * pb.outward_normal).norm() > 1e-12) {
                throw TopologyError("coincident ports do not face each other");
            }
        }
        GlobalPort gp;
        gp.owners = g;
        const int p = topo.global_port_count();
        for (const auto& lp : g) {
            topo.local_to_global[lp.instance][lp.port] = p;
        }
        topo.ports.push_back(std::move(gp));
    }
    return topo;
}

Side parse_side(const std::string& name) {
    if (name == "left") return Side::Left;
    if (name == "right") return Side::Right;
    if (name == "bottom") return Side::Bottom;
    if (name == "top") return Side::Top;
    throw ConfigError(fmt::format("unknown side '{}'", name));
}

std::string to_string(Side side) {
    switch (side) {
    case Side::Left: return "left";
    case Side::Right: return "right";
    case Side::Bottom: return "bottom";
    case Side::Top: return "top";
    }
    return "left";
}

std::vector<int> boundary_ports_on_side(const SystemTopology& topology, std::span<const ReferenceComponent> library,
                                        Side side) {
    const Vec2 normal = side == Side::Left    ? Vec2(-1, 0)
                        : side == Side::Right ? Vec2(1, 0)
                        : side == Side::Bottom ? Vec2(0, -1)
                                               : Vec2(0, 1);
    const int axis = (side == Side::Left || side == Side::Right) ? 0 : 1;
    struct Candidate {
        int port;
        double normal_coord;
        double along;
    };
    std::vector<Candidate> candidates;
    double extreme = -std::numeric_limits<double>::infinity();
    for (int p = 0; p < topology.global_port_count(); ++p) {
        const auto& gp = topology.ports[p];
        if (gp.interior()) {
            continue;
        }
        const auto& owner = gp.owners.front();
        const auto& inst = topology.instances[owner.instance];
        const Port& port = library[inst.reference].ports[owner.port];
        if ((inst.map.rotation() * port.outward_normal - normal).norm() > 1e-12) {
            continue;
        }
        const auto pos = topology.port_positions(library, owner);
        const Vec2 mid = 0.5 * (pos.front() + pos.back());
        const double nc = mid.dot(normal);
        candidates.push_back({p, nc, mid(1 - axis)});
        extreme = std::max(extreme, nc);
    }
    std::vector<Candidate> on_side;
    for (const auto& c : candidates) {
        if (std::abs(c.normal_coord - extreme) <= 1e-9) {
            on_side.push_back(c);
        }
    }
    std::sort(on_side.begin(), on_side.end(), [](const Candidate& a, const Candidate& b) { return a.along < b.along; });
    std::vector<int> out;
    for (const auto& c : on_side) {
        out.push_back(c.port);
    }
    return out;
}

SystemTopology build_lattice(const LatticeSpec& spec, std::span<const ReferenceComponent> library) {
    if (spec.columns < 1 || spec.rows < 1) {
        throw ConfigError("lattice needs at least one joint in each direction");
    }
    if (library.size() < 3) {
        throw ConfigError("lattice library needs joint, horizontal strut and vertical strut");
    }
    const ReferenceComponent& joint = library[0];
    const double a = joint.ports[0].length();
    const double footprint = 3.0 * a;
    const double L = library[1].mesh.nodes.empty() ? 0.0 : [&] {
        double xmax = 0.0;
        for (const auto& p : library[1].mesh.nodes) {
            xmax = std::max(xmax, p.x());
        }
        return xmax;
    }();
    const double pitch = footprint + L;
    std::vector<Instance> inst;
    auto add = [&inst](int ref, double x, double y) { inst.push_back({ref, {0, Vec2(x, y)}}); };
    for (int r = 0; r < spec.rows; ++r) {
        for (int c = 0; c < spec.columns; ++c) {
            add(0, c * pitch, r * pitch);
        }
    }
    for (int r = 0; r < spec.rows; ++r) {
        if (spec.stub_left) {
            add(1, -L, r * pitch + a);
        }
        for (int c = 0; c + 1 < spec.columns; ++c) {
            add(1, c * pitch + footprint, r * pitch + a);
        }
        if (spec.stub_right) {
            add(1, (spec.columns - 1) * pitch + footprint, r * pitch + a);
        }
    }
    for (int c = 0; c < spec.columns; ++c) {
        if (spec.stub_bottom) {
            add(2, c * pitch + a, -L);
        }
        for (int r = 0; r + 1 < spec.rows; ++r) {
            add(2, c * pitch + a, r * pitch + footprint);
        }
        if (spec.stub_top) {
            add(2, c * pitch + a, (spec.rows - 1) * pitch + footprint);
        }
    }
    SystemTopology topo = connect(library, std::move(inst));
    auto select = [&](const BoundarySelector& sel) {
        const auto ports = boundary_ports_on_side(topo, library, sel.side);
        if (sel.index < 0 || sel.index >= static_cast<int>(ports.size())) {
            throw ConfigError(fmt::format("{} side has {} boundary ports; index {} is out of range", to_string(sel.side),
                                          ports.size(), sel.index));
        }
        return ports[sel.index];
    };
    for (const auto& sel : spec.dirichlet) {
        topo.ports[select(sel)].dirichlet = true;
    }
    for (const auto& load : spec.loads) {
        const int p = select(load.where);
        if (!load.traction.allFinite()) {
            throw ConfigError("port traction must be finite");
        }
        auto& t = topo.ports[p].traction;
        t = t.value_or(Vec2::Zero()) + load.traction;
    }
    return topo;
}

LatticeSpec ring_lattice() {
    LatticeSpec spec;
    spec.columns = 2;
    spec.rows = 2;
    return spec;
}

LatticeSpec small_cantilever() {
    LatticeSpec spec;
    spec.columns = 10;
    spec.rows = 10;
    spec.stub_left = true;
    for (int idx : {0, 4, 5, 9}) {
        spec.dirichlet.push_back({Side::Left, idx});
    }
    const double t = 100e6;
    spec.loads.push_back({{Side::Right, 4}, Vec2(t, -t)});
    spec.loads.push_back({{Side::Right, 5}, Vec2(t, t)});
    return spec;
}

LatticeSpec large_cantilever() {
    LatticeSpec spec;
    spec.columns = 56;
    spec.rows = 18;
    for (int idx = 0; idx < spec.rows; ++idx) {
        spec.dirichlet.push_back({Side::Left, idx});
    }
    spec.loads.push_back({{Side::Right, 0}, Vec2(1e7, 0.0)});
    spec.loads.push_back({{Side::Bottom, spec.columns - 1}, Vec2(0.0, -3e7)});
    return spec;
}

int PortDofMap::index(int instance, int local_port, int k) const {
    const int p = topology_->local_to_global.at(instance).at(local_port);
    if (offset_[p] < 0) {
        return -1;
    }
    if (k < 0 || k >= size_[p]) {
        throw IndexError(fmt::format("basis index {} out of range for port {}", k, p));
    }
    return offset_[p] + k;
}

void PortDofMap::build(const SystemTopology& topology, const std::vector<std::vector<int>>& local_sizes) {
    topology_ = &topology;
    offset_.assign(topology.ports.size(), -1);
    size_.assign(topology.ports.size(), 0);
    total_ = 0;
    for (int p = 0; p < topology.global_port_count(); ++p) {
        const auto& gp = topology.ports[p];
        const int n = local_sizes[gp.owners[0].instance][gp.owners[0].port];
        for (const auto& lp : gp.owners) {
            if (local_sizes[lp.instance][lp.port] != n) {
                throw TopologyError(fmt::format("port {} has basis sizes {} and {} on its two sides", p, n,
                                                local_sizes[lp.instance][lp.port]));
            }
        }
        size_[p] = n;
        if (!gp.dirichlet) {
            offset_[p] = total_;
            total_ += n;
        }
    }
}

PortDofMap port_dof_map(const SystemTopology& topology, std::span<const ReferenceComponent> library,
                        int basis_size_per_port) {
    return PortDofMap(topology, [&](int i, int j) {
        const int full = library[topology.instances[i].reference].ports[j].dof_count();
        return basis_size_per_port > 0 ? std::min(basis_size_per_port, full) : full;
    });
}

std::vector<double> instance_volumes(const SystemTopology& topology, std::span<const ReferenceComponent> library) {
    std::vector<double> ref_volume;
    for (const auto& ref : library) {
        ref_volume.push_back(ref.volume());
    }
    std::vector<double> out;
    for (const auto& inst : topology.instances) {
        out.push_back(ref_volume[inst.reference]);
    }
    return out;
}

} // namespace cwtopo
