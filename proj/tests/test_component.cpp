#include "cwtopo/component.hpp"
#include "cwtopo/errors.hpp"

#include <gtest/gtest.h>

#include <numeric>

using namespace cwtopo;

namespace {

const PlaneStressMaterial kAl{69e9, 0.3};

ComponentGeometry coarse() {
    ComponentGeometry g;
    g.port_nodes = 5;
    return g;
}

} // namespace

TEST(Geometry, FullResolutionElementCounts) {
    const auto lib = make_lattice_library(ComponentGeometry{}, kAl);
    ASSERT_EQ(lib.size(), 3u);
    EXPECT_EQ(lib[0].mesh.element_count(), 3721);
    EXPECT_EQ(lib[1].mesh.element_count(), 3815);
    EXPECT_EQ(lib[2].mesh.element_count(), 3815);
    for (const auto& c : lib) {
        for (const auto& p : c.ports) EXPECT_EQ(p.node_count(), 36);
    }
}

TEST(Geometry, ExplicitResolutionKnobs) {
    ComponentGeometry g;
    g.port_nodes = 39;
    g.strut_axial_elements = 100;
    EXPECT_EQ(make_strut(g, kAl, false).mesh.element_count(), 3800);
}

TEST(Geometry, AreasFromJacobians) {
    const auto g = coarse();
    const auto lib = make_lattice_library(g, kAl);
    const double a = g.port_length;
    EXPECT_NEAR(lib[0].mesh.area(), 7.0 * a * a, 1e-12 * a * a);
    EXPECT_NEAR(lib[1].mesh.area(), g.strut_length * a, 1e-12 * a * a);
    EXPECT_NEAR(lib[2].mesh.area(), g.strut_length * a, 1e-12 * a * a);
}

TEST(Geometry, PortsOrderedByArclengthOnBoundary) {
    const auto joint = make_joint(coarse(), kAl);
    ASSERT_EQ(joint.port_count(), 4);
    const char* names[] = {"W", "N", "E", "S"};
    const char* classes[] = {"x", "y", "x", "y"};
    for (int j = 0; j < 4; ++j) {
        const auto& p = joint.ports[j];
        EXPECT_EQ(p.name, names[j]);
        EXPECT_EQ(p.port_class, classes[j]);
        EXPECT_NEAR(p.length(), 0.01, 1e-15);
        for (int k = 1; k < p.node_count(); ++k) {
            EXPECT_GT(p.arclength[k], p.arclength[k - 1]);
            const Vec2 prev = joint.mesh.nodes[p.nodes[k - 1]];
            const Vec2 cur = joint.mesh.nodes[p.nodes[k]];
            EXPECT_TRUE(prev.x() < cur.x() || (prev.x() == cur.x() && prev.y() < cur.y()));
        }
    }
    EXPECT_NO_THROW(joint.validate());
}

TEST(Geometry, RejectsBadResolution) {
    ComponentGeometry g;
    g.port_nodes = 1;
    EXPECT_THROW(make_joint(g, kAl), ConfigError);
    g = ComponentGeometry{};
    g.strut_length = -1.0;
    EXPECT_THROW(make_strut(g, kAl, true), ConfigError);
}

TEST(TransformationMap, RoundTripAndRotation) {
    for (int q = -2; q < 6; ++q) {
        const TransformationMap T{q, Vec2(0.3, -0.7)};
        const Vec2 x(0.012, 0.034);
        EXPECT_LE((T.inverse(T.apply(x)) - x).norm(), 1e-12);
        EXPECT_NEAR(T.rotation().determinant(), 1.0, 0.0);
    }
    EXPECT_LE((TransformationMap{1, Vec2::Zero()}.apply(Vec2(1, 0)) - Vec2(0, 1)).norm(), 0.0);
}

TEST(Connect, JointStrutPairSharesOnePort) {
    const auto g = coarse();
    const auto lib = make_lattice_library(g, kAl);
    const double a = g.port_length;
    // joint at the origin, horizontal strut against its east port
    const auto topo = connect(lib, {{0, {0, Vec2::Zero()}}, {1, {0, Vec2(3 * a, a)}}});
    EXPECT_EQ(topo.global_port_count(), 5);
    const int shared = topo.local_to_global[0][2];
    EXPECT_EQ(shared, topo.local_to_global[1][0]);
    EXPECT_TRUE(topo.ports[shared].interior());
    EXPECT_EQ(topo.ports[shared].owners, (std::vector<LocalPort>{{0, 2}, {1, 0}}));
    const int boundary = topo.local_to_global[1][1];
    EXPECT_EQ(topo.ports[boundary].owners, (std::vector<LocalPort>{{1, 1}}));
    const auto xa = topo.port_positions(lib, {0, 2});
    const auto xb = topo.port_positions(lib, {1, 0});
    for (std::size_t n = 0; n < xa.size(); ++n) EXPECT_LE((xa[n] - xb[n]).norm(), 1e-9);
}

TEST(Connect, RejectsIncompatibleJoins) {
    const auto g = coarse();
    const auto lib = make_lattice_library(g, kAl);
    const double a = g.port_length;
    // three owners of one port
    EXPECT_THROW(connect(lib, {{0, {0, Vec2::Zero()}}, {1, {0, Vec2(3 * a, a)}}, {1, {0, Vec2(3 * a, a)}}}),
                 TopologyError);
    // vertical strut's south port (class y) against the joint's east port (class x) after rotation
    EXPECT_THROW(connect(lib, {{0, {0, Vec2::Zero()}}, {2, {1, Vec2(3 * a, a)}}}), TopologyError);
    // strut shifted half a port: midpoints differ, so the joint port stays a boundary port
    const auto topo = connect(lib, {{0, {0, Vec2::Zero()}}, {1, {0, Vec2(3 * a, 1.5 * a)}}});
    EXPECT_EQ(topo.global_port_count(), 6);
    EXPECT_THROW(connect(lib, {{7, {}}}), TopologyError);
}

TEST(Lattice, SmallCantileverLayout) {
    const auto lib = make_lattice_library(coarse(), kAl);
    const auto topo = build_lattice(small_cantilever(), lib);
    EXPECT_EQ(topo.instance_count(), 290);
    EXPECT_EQ(topo.dirichlet_ports().size(), 4u);
    const auto left = boundary_ports_on_side(topo, lib, Side::Left);
    ASSERT_EQ(left.size(), 10u);
    for (int idx : {0, 4, 5, 9}) EXPECT_TRUE(topo.ports[left[idx]].dirichlet);
    const auto right = boundary_ports_on_side(topo, lib, Side::Right);
    ASSERT_EQ(right.size(), 10u);
    EXPECT_TRUE(topo.ports[right[4]].traction.has_value());
    EXPECT_TRUE(topo.ports[right[5]].traction.has_value());
    EXPECT_GT(topo.ports[right[5]].traction->y(), 0.0);
    EXPECT_LT(topo.ports[right[4]].traction->y(), 0.0);
    for (const auto& p : topo.ports) EXPECT_FALSE(p.dirichlet && p.interior());
}

TEST(Lattice, LargeCantileverCount) {
    const auto lib = make_lattice_library(coarse(), kAl);
    const auto topo = build_lattice(large_cantilever(), lib);
    EXPECT_EQ(topo.instance_count(), 2950);
    EXPECT_EQ(topo.dirichlet_ports().size(), 18u);
}

TEST(Lattice, VolumesSumToMaterialArea) {
    const auto g = coarse();
    const auto lib = make_lattice_library(g, kAl);
    const auto topo = build_lattice(small_cantilever(), lib);
    const auto v = instance_volumes(topo, lib);
    const double total = std::accumulate(v.begin(), v.end(), 0.0);
    const double a = g.port_length;
    const double expected = (100 * 7.0 * a * a + 190 * g.strut_length * a) * g.thickness;
    EXPECT_NEAR(total, expected, 1e-10 * expected);
}

TEST(Lattice, SelectorOutOfRange) {
    const auto lib = make_lattice_library(coarse(), kAl);
    LatticeSpec spec = ring_lattice();
    spec.dirichlet.push_back({Side::Left, 5});
    EXPECT_THROW(build_lattice(spec, lib), ConfigError);
    EXPECT_THROW(parse_side("middle"), ConfigError);
}

TEST(PortDofMap, OffsetsAndDirichlet) {
    const auto lib = make_lattice_library(coarse(), kAl);
    LatticeSpec spec = ring_lattice();
    auto topo = build_lattice(spec, lib);
    EXPECT_EQ(topo.instance_count(), 8);
    EXPECT_EQ(topo.global_port_count(), 16);
    const auto map = port_dof_map(topo, lib, 3);
    EXPECT_EQ(map.size(), 48);
    EXPECT_EQ(port_dof_map(topo, lib).size(), 16 * 10);
    const int p = topo.local_to_global[0][0];
    topo.ports[p].dirichlet = true;
    const auto map2 = port_dof_map(topo, lib, 3);
    EXPECT_EQ(map2.size(), 45);
    EXPECT_EQ(map2.index(0, 0, 1), -1);
    EXPECT_THROW(map2.index(0, 1, 3), IndexError);
    for (auto& gp : topo.ports) gp.dirichlet = true;
    EXPECT_EQ(port_dof_map(topo, lib, 3).size(), 0);
}

TEST(PortDofMap, MismatchedSidesRejected) {
    const auto lib = make_lattice_library(coarse(), kAl);
    const auto topo = build_lattice(ring_lattice(), lib);
    EXPECT_THROW(PortDofMap(topo, [](int i, int) { return i == 0 ? 2 : 3; }), TopologyError);
}
