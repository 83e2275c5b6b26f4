#include "cwtopo/errors.hpp"
#include "cwtopo/fom.hpp"
#include "cwtopo/port_reduction.hpp"
#include "cwtopo/random.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace cwtopo;

namespace {

const PlaneStressMaterial kAl{69e9, 0.3};

ComponentGeometry coarse(int nodes = 5) {
    ComponentGeometry g;
    g.port_nodes = nodes;
    return g;
}

Port uniform_port(int nodes, double length) {
    Port p;
    p.name = "test";
    p.port_class = "x";
    for (int a = 0; a < nodes; ++a) {
        p.nodes.push_back(a);
        p.arclength.push_back(length * a / (nodes - 1));
    }
    return p;
}

Port graded_port(int nodes, double length) {
    Port p = uniform_port(nodes, length);
    for (int a = 0; a < nodes; ++a) {
        const double t = static_cast<double>(a) / (nodes - 1);
        p.arclength[a] = length * t * t * (3.0 - 2.0 * t);
    }
    return p;
}

} // namespace

TEST(VanishingMode, NodallyExactQuadratic) {
    for (const Port& p : {uniform_port(9, 0.01), graded_port(12, 0.02)}) {
        const Vector s = vanishing_mode(p);
        const double L = p.length();
        for (int a = 0; a < p.node_count(); ++a) {
            const double x = p.arclength[a];
            EXPECT_NEAR(s[a], x * (L - x) / 2.0, 1e-12 * L * L);
        }
        EXPECT_EQ(s[0], 0.0);
        EXPECT_EQ(s[p.node_count() - 1], 0.0);
    }
    const Vector s = vanishing_mode(uniform_port(10, 1.0));
    for (int a = 1; a < 9; ++a) {
        EXPECT_GT(s[a], 0.0);
        EXPECT_NEAR(s[a], s[9 - a], 1e-14);
    }
}

TEST(PortMass, IntegratesPolynomials) {
    const Port p = graded_port(15, 0.3);
    const Matrix M = port_mass(p);
    const Vector one = Vector::Ones(p.node_count());
    EXPECT_NEAR(one.dot(M * one), 0.3, 1e-15);
    Vector x(p.node_count());
    for (int a = 0; a < p.node_count(); ++a) x[a] = p.arclength[a];
    // P1 mass is exact for products of linear functions
    EXPECT_NEAR(x.dot(M * x), std::pow(0.3, 3) / 3.0, 1e-15);
    EXPECT_LE((port_weights(p) - M * one).norm(), 1e-15);
}

TEST(LegendreModes, ApproximateContinuousSpectrum) {
    // -(s u')' = lambda u with s = x (L - x) / 2 has eigenvalues k (k + 1) / 2 for any L.
    const Port p = uniform_port(36, 0.01);
    const auto eig = legendre_modes(p, vanishing_mode(p));
    const Port fine = uniform_port(71, 0.01);
    const auto eig_fine = legendre_modes(fine, vanishing_mode(fine));
    EXPECT_NEAR(eig.eigenvalues[0], 0.0, 1e-9);
    for (int k = 1; k < 6; ++k) {
        const double exact = k * (k + 1) / 2.0;
        EXPECT_NEAR(eig.eigenvalues[k], exact, 2e-2 * exact);
        if (std::abs(eig_fine.eigenvalues[k] - exact) < 1e-9) continue; // reproduced up to roundoff
        // second-order convergence under mesh halving
        const double ratio = (eig.eigenvalues[k] - exact) / (eig_fine.eigenvalues[k] - exact);
        EXPECT_GT(ratio, 3.5);
        EXPECT_LT(ratio, 4.5);
    }
    for (int k = 1; k < p.node_count(); ++k) EXPECT_GE(eig.eigenvalues[k], eig.eigenvalues[k - 1]);
    const Matrix M = port_mass(p);
    EXPECT_LE((eig.modes.transpose() * M * eig.modes - Matrix::Identity(36, 36)).norm(), 1e-9);
}

TEST(LegendreModes, ParityAndSign) {
    const Port p = uniform_port(21, 2.0);
    const auto eig = legendre_modes(p, vanishing_mode(p));
    const int n = p.node_count();
    for (int k = 0; k < 6; ++k) {
        const double parity = k % 2 == 0 ? 1.0 : -1.0;
        for (int a = 0; a < n; ++a) EXPECT_NEAR(eig.modes(a, k), parity * eig.modes(n - 1 - a, k), 1e-8);
        // first nonnegligible entry positive
        EXPECT_GT(eig.modes(0, k), 0.0);
    }
    // constant mode
    EXPECT_LE((eig.modes.col(0) - Vector::Constant(n, 1.0 / std::sqrt(2.0))).norm(), 1e-9);
    EXPECT_THROW(legendre_modes(p, Vector::Zero(3)), ContractError);
}

TEST(MeanCorrection, RemovesComponentMeans) {
    const Port p = graded_port(8, 0.5);
    Rng rng(3);
    Vector g(p.dof_count());
    for (Eigen::Index k = 0; k < g.size(); ++k) g[k] = rng.uniform(-1.0, 1.0) + (k % 2 == 0 ? 4.0 : -2.0);
    const Vector h = mean_corrected(p, g);
    const Vector w = port_weights(p);
    for (int c = 0; c < 2; ++c) {
        double m = 0.0;
        for (int a = 0; a < p.node_count(); ++a) m += w[a] * h[2 * a + c];
        EXPECT_NEAR(m, 0.0, 1e-14);
    }
    EXPECT_LE((mean_corrected(p, h) - h).norm(), 1e-14);
    // differences between nodes are unchanged
    EXPECT_NEAR(h[4] - h[2], g[4] - g[2], 1e-14);
}

TEST(PairSample, DeterministicStreams) {
    const auto lib = make_lattice_library(coarse(), kAl);
    TrainingOptions opt;
    opt.seed = 17;
    const auto a = draw_pair_sample(lib[0], 2, lib[1], 0, opt, 5);
    const auto b = draw_pair_sample(lib[0], 2, lib[1], 0, opt, 5);
    const auto c = draw_pair_sample(lib[0], 2, lib[1], 0, opt, 6);
    EXPECT_EQ(a.mu_a, b.mu_a);
    EXPECT_EQ(a.traces_a[0], b.traces_a[0]);
    EXPECT_NE(a.mu_a, c.mu_a);
    EXPECT_TRUE(a.traces_a[2].size() == 0 && a.traces_b[0].size() == 0);
    EXPECT_EQ(a.traces_b[1].size(), lib[1].ports[1].dof_count());
    EXPECT_GE(a.mu_a, opt.simp.lower_bound);
    EXPECT_LT(a.mu_a, 1.0);
}

TEST(PairSample, MatchesMonolithicTwoComponentSolve) {
    const auto g = coarse(6);
    const auto lib = make_lattice_library(g, kAl);
    const double a = g.port_length;
    const auto topo = connect(lib, {{0, {0, Vec2::Zero()}}, {1, {0, Vec2(3 * a, a)}}});
    const FomModel fom = build_fom(topo, lib);
    const ComponentOperator op_a(lib[0]);
    const ComponentOperator op_b(lib[1]);
    TrainingOptions opt;
    opt.samples = 4;
    opt.seed = 9;
    const SnapshotSet set = pairwise_train(op_a, 2, op_b, 0, opt, 100);
    ASSERT_EQ(set.S.cols(), 4);
    for (int k = 0; k < opt.samples; ++k) {
        const PairSample smp = draw_pair_sample(lib[0], 2, lib[1], 0, opt, 100 + k);
        const std::vector<double> scale{simp(smp.mu_a, opt.simp), simp(smp.mu_b, opt.simp)};
        const SparseMatrix K = assemble_fom(fom, topo, lib, scale);
        std::vector<int> fixed;
        std::vector<double> values;
        auto impose = [&](int inst, const std::vector<Vector>& traces) {
            const auto& comp = lib[topo.instances[inst].reference];
            for (int j = 0; j < comp.port_count(); ++j) {
                if (traces[j].size() == 0) continue;
                for (int n = 0; n < comp.ports[j].node_count(); ++n) {
                    for (int c = 0; c < 2; ++c) {
                        fixed.push_back(dof(fom.node_map[inst][comp.ports[j].nodes[n]], c));
                        values.push_back(traces[j][2 * n + c]);
                    }
                }
            }
        };
        impose(0, smp.traces_a);
        impose(1, smp.traces_b);
        const auto red = apply_dirichlet(K, Vector::Zero(fom.dof_count()), fixed, values);
        const Vector u = red.recover(Matrix(red.matrix).ldlt().solve(red.rhs));
        const Port& shared = lib[0].ports[2];
        Vector trace(shared.dof_count());
        for (int n = 0; n < shared.node_count(); ++n)
            for (int c = 0; c < 2; ++c) trace[2 * n + c] = u[dof(fom.node_map[0][shared.nodes[n]], c)];
        const Vector oracle = mean_corrected(shared, trace);
        EXPECT_LE((set.S.col(k) - oracle).norm(), 1e-8 * oracle.norm());
    }
}

TEST(PairTraining, ThreadCountDoesNotChangeSnapshots) {
    const auto lib = make_lattice_library(coarse(), kAl);
    const ComponentOperator op_a(lib[0]);
    const ComponentOperator op_b(lib[2]);
    TrainingOptions opt;
    opt.samples = 12;
    const Matrix s1 = pairwise_train(op_a, 1, op_b, 1, opt).S;
    opt.threads = 3;
    const Matrix s3 = pairwise_train(op_a, 1, op_b, 1, opt).S;
    EXPECT_EQ(s1, s3);
    opt.samples = 0;
    EXPECT_THROW(pairwise_train(op_a, 1, op_b, 1, opt), ConfigError);
}

TEST(Pod, RecoversPlantedSpectrum) {
    const int nodes = 10;
    const int N = 2 * nodes;
    const Matrix C = constant_modes(nodes);
    Rng rng(8);
    Matrix R(N, 4);
    for (Eigen::Index k = 0; k < R.size(); ++k) R.data()[k] = rng.uniform(-1.0, 1.0);
    R -= C * (C.transpose() * R);
    const Matrix U = Eigen::HouseholderQR<Matrix>(R).householderQ() * Matrix::Identity(N, 4);
    Matrix V(30, 4);
    for (Eigen::Index k = 0; k < V.size(); ++k) V.data()[k] = rng.uniform(-1.0, 1.0);
    const Matrix Vq = Eigen::HouseholderQR<Matrix>(V).householderQ() * Matrix::Identity(30, 4);
    const Vector sigma = (Vector(4) << 5.0, 1.0, 1e-2, 1e-5).finished();
    Matrix A(2, 30);
    for (Eigen::Index k = 0; k < A.size(); ++k) A.data()[k] = rng.uniform(-1.0, 1.0);
    const Matrix S = U * sigma.asDiagonal() * Vq.transpose() + C * A;

    const TrainedPortSpace space = pod(S);
    EXPECT_EQ(space.rank, 4);
    for (int k = 0; k < 4; ++k) EXPECT_NEAR(space.singular_values[k], sigma[k], 1e-12 * sigma[0]);
    EXPECT_LE((space.basis.transpose() * space.basis - Matrix::Identity(N, N)).norm(), 1e-12);
    EXPECT_LE((space.basis.leftCols(2) - C).norm(), 0.0);
    // tail fraction 1e-10 / 26 is below the default tolerance only once the 1e-2 mode is kept
    EXPECT_EQ(space.default_size, 5);
    for (int n = 2; n <= 6; ++n) {
        const double e = projection_error(space, S, n);
        EXPECT_NEAR(e * e, tail_energy(space, n), 1e-10 * S.squaredNorm());
    }
    EXPECT_LE(projection_error(space, S, 6), 1e-12 * S.norm());
    // first POD mode spans the planted leading direction
    EXPECT_NEAR(std::abs(space.basis.col(2).dot(U.col(0))), 1.0, 1e-12);
}

TEST(Pod, ExplicitSizeAndRankCap) {
    Rng rng(2);
    Matrix S(12, 3);
    for (Eigen::Index k = 0; k < S.size(); ++k) S.data()[k] = rng.uniform(-1.0, 1.0);
    PodOptions o;
    o.size = 4;
    EXPECT_EQ(pod(S, o).default_size, 4);
    o.size = 9;
    EXPECT_EQ(pod(S, o).default_size, 5);
    EXPECT_THROW(pod(Matrix(3, 4)), ContractError);
    EXPECT_THROW(pod(Matrix(8, 0)), ContractError);
}

TEST(TrainedLibrary, SmallTrainingRun) {
    TrainingOptions opt;
    opt.samples = 30;
    PodOptions po;
    po.size = 6;
    const auto lib = train_library(coarse(), kAl, opt, po);
    ASSERT_EQ(lib.spaces.size(), 2u);
    for (const auto& [cls, space] : lib.spaces) {
        EXPECT_EQ(space.dimension(), 10);
        EXPECT_EQ(space.default_size, 6);
        EXPECT_LE(lib.pod_defect.at(cls), 1e-10);
    }
    EXPECT_EQ(lib.default_size(), 6);
    EXPECT_EQ(lib.max_size(), 10);
    const auto m = lib.models_for(3);
    EXPECT_EQ(m[0].schur.size(), 12);
    EXPECT_EQ(m[1].schur.size(), 6);
    EXPECT_THROW(lib.models_for(0), ContractError);
    EXPECT_NO_THROW(lib.check_covers(build_lattice(small_cantilever(), lib.components)));

    const auto all = lattice_pair_configs();
    const auto partial = train_library(coarse(), kAl, opt, po, {all[0], all[1], all[3]});
    EXPECT_NO_THROW(partial.check_covers(build_lattice(LatticeSpec{}, partial.components)));
    EXPECT_THROW(train_library(coarse(), kAl, opt, po, {all[0]}), LibraryError);
    EXPECT_THROW(partial.check_covers(build_lattice(ring_lattice(), partial.components)), LibraryError);
    EXPECT_THROW(train_library(coarse(), kAl, opt, po, {{0, 0, 1, 1}, {0, 1, 1, 1}}), ConfigError);
}

TEST(TrainedLibrary, ModelsUseSharedClassBases) {
    TrainingOptions opt;
    opt.samples = 20;
    const auto lib = train_library(coarse(), kAl, opt, {});
    // joint E and strut W carry the same trace basis
    EXPECT_EQ(lib.models[0].traces[2], lib.models[1].traces[0]);
    EXPECT_EQ(lib.models[0].traces[1], lib.models[2].traces[1]);
    const ModelSet rebuilt = build_models(lib.components, lib.spaces, 2);
    for (std::size_t r = 0; r < rebuilt.size(); ++r) EXPECT_EQ(rebuilt[r].schur.kbar, lib.models[r].schur.kbar);
}
