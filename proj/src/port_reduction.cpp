#include "cwtopo/port_reduction.hpp"

#include "cwtopo/errors.hpp"
#include "cwtopo/parallel.hpp"
#include "cwtopo/random.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace cwtopo {

namespace {

double segment(const Port& port, int e) { return port.arclength[e + 1] - port.arclength[e]; }

/// Largest-magnitude entry made positive.
void normalize_sign(Eigen::Ref<Vector> v) {
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0) v = -v;
}

} // namespace

Matrix port_mass(const Port& port) {
    const int n = port.node_count();
    Matrix M = Matrix::Zero(n, n);
    for (int e = 0; e + 1 < n; ++e) {
        const double h = segment(port, e);
        M(e, e) += h / 3.0;
        M(e + 1, e + 1) += h / 3.0;
        M(e, e + 1) += h / 6.0;
        M(e + 1, e) += h / 6.0;
    }
    return M;
}

Vector port_weights(const Port& port) {
    Vector w = Vector::Zero(port.node_count());
    for (int e = 0; e + 1 < port.node_count(); ++e) {
        w[e] += 0.5 * segment(port, e);
        w[e + 1] += 0.5 * segment(port, e);
    }
    return w;
}

Vector vanishing_mode(const Port& port) {
    const int n = port.node_count();
    Vector s = Vector::Zero(n);
    if (n < 3) {
        return s;
    }
    const int m = n - 2;
    Matrix K = Matrix::Zero(m, m);
    for (int e = 0; e + 1 < n; ++e) {
        const double k = 1.0 / segment(port, e);
        const int a = e - 1;
        const int b = e;
        if (a >= 0) K(a, a) += k;
        if (b < m) K(b, b) += k;
        if (a >= 0 && b < m) {
            K(a, b) -= k;
            K(b, a) -= k;
        }
    }
    const Vector w = port_weights(port);
    s.segment(1, m) = K.llt().solve(w.segment(1, m));
    return s;
}

PortEigenbasis legendre_modes(const Port& port, const Vector& s) {
    const int n = port.node_count();
    if (s.size() != n) {
        throw ContractError("vanishing mode has wrong length");
    }
    Matrix A = Matrix::Zero(n, n);
    for (int e = 0; e + 1 < n; ++e) {
        const double k = 0.5 * (s[e] + s[e + 1]) / segment(port, e);
        A(e, e) += k;
        A(e + 1, e + 1) += k;
        A(e, e + 1) -= k;
        A(e + 1, e) -= k;
    }
    Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> eig(A, port_mass(port));
    if (eig.info() != Eigen::Success) {
        throw NumericError("port eigenproblem did not converge");
    }
    PortEigenbasis out;
    out.s = s;
    out.eigenvalues = eig.eigenvalues();
    out.modes = eig.eigenvectors();
    for (int k = 0; k < n; ++k) {
        auto col = out.modes.col(k);
        for (int a = 0; a < n; ++a) {
            if (std::abs(col[a]) > 1e-12 * col.cwiseAbs().maxCoeff()) {
                if (col[a] < 0) col = -col;
                break;
            }
        }
    }
    return out;
}

Vector mean_corrected(const Port& port, const Vector& trace) {
    const Vector w = port_weights(port);
    Vector out = trace;
    for (int c = 0; c < 2; ++c) {
        double mean = 0.0;
        for (int a = 0; a < port.node_count(); ++a) {
            mean += w[a] * trace[2 * a + c];
        }
        mean /= port.length();
        for (int a = 0; a < port.node_count(); ++a) {
            out[2 * a + c] -= mean;
        }
    }
    return out;
}

PairSample draw_pair_sample(const ReferenceComponent& a, int port_a, const ReferenceComponent& b, int port_b,
                            const TrainingOptions& options, std::uint64_t stream) {
    Rng rng(options.seed, stream);
    PairSample sample;
    sample.mu_a = rng.uniform(options.simp.lower_bound, 1.0);
    sample.mu_b = rng.uniform(options.simp.lower_bound, 1.0);
    auto draw = [&](const ReferenceComponent& comp, int shared, std::vector<Vector>& traces) {
        for (int j = 0; j < comp.port_count(); ++j) {
            const Port& port = comp.ports[j];
            if (j == shared) {
                traces.emplace_back();
                continue;
            }
            const Matrix L = legendre_modes(port, vanishing_mode(port)).modes;
            Vector g = Vector::Zero(port.dof_count());
            for (int c = 0; c < 2; ++c) {
                for (int k = 1; k <= port.node_count(); ++k) {
                    const double q = rng.uniform(-1.0, 1.0) / std::pow(static_cast<double>(k), options.eta);
                    for (int n = 0; n < port.node_count(); ++n) {
                        g[2 * n + c] += q * L(n, k - 1);
                    }
                }
            }
            traces.push_back(std::move(g));
        }
    };
    draw(a, port_a, sample.traces_a);
    draw(b, port_b, sample.traces_b);
    return sample;
}

Vector solve_pair_sample(const ComponentOperator& a, int port_a, const ComponentOperator& b, int port_b,
                         const PairSample& sample, const SimpParams& params) {
    const int ns = static_cast<int>(a.port_dofs(port_a).size());
    if (static_cast<int>(b.port_dofs(port_b).size()) != ns) {
        throw TopologyError("paired ports have different sizes");
    }
    Matrix lhs = Matrix::Zero(ns, ns);
    Vector rhs = Vector::Zero(ns);
    auto add = [&](const ComponentOperator& op, int shared, double mu, const std::vector<Vector>& traces) {
        const double s = simp(mu, params);
        const Matrix& S = op.nodal_schur();
        const int off = op.port_offset(shared);
        Vector g = Vector::Zero(S.rows());
        for (int j = 0; j < op.port_count(); ++j) {
            if (j != shared) {
                g.segment(op.port_offset(j), traces[j].size()) = traces[j];
            }
        }
        lhs += s * S.block(off, off, ns, ns);
        rhs -= s * S.middleRows(off, ns) * g;
    };
    add(a, port_a, sample.mu_a, sample.traces_a);
    add(b, port_b, sample.mu_b, sample.traces_b);
    Eigen::LLT<Matrix> llt(lhs);
    if (llt.info() != Eigen::Success) {
        throw NotSpdError("pair system is not positive definite");
    }
    return llt.solve(rhs);
}

SnapshotSet pairwise_train(const ComponentOperator& a, int port_a, const ComponentOperator& b, int port_b,
                           const TrainingOptions& options, std::uint64_t stream_base) {
    if (options.samples < 1) {
        throw ConfigError("training needs at least one sample");
    }
    const Port& shared = a.component().ports[port_a];
    SnapshotSet set;
    set.samples = options.samples;
    set.seed = options.seed;
    set.S.resize(shared.dof_count(), options.samples);
    parallel_for(options.samples, options.threads, [&](int k) {
        const PairSample sample =
            draw_pair_sample(a.component(), port_a, b.component(), port_b, options, stream_base + k);
        set.S.col(k) = mean_corrected(shared, solve_pair_sample(a, port_a, b, port_b, sample, options.simp));
    });
    return set;
}

Matrix constant_modes(int nodes) {
    Matrix C = Matrix::Zero(2 * nodes, 2);
    for (int a = 0; a < nodes; ++a) {
        C(2 * a, 0) = 1.0;
        C(2 * a + 1, 1) = 1.0;
    }
    return C / std::sqrt(static_cast<double>(nodes));
}

TrainedPortSpace pod(const Matrix& S, const PodOptions& options) {
    if (S.cols() == 0 || S.rows() < 4 || S.rows() % 2 != 0) {
        throw ContractError("snapshot matrix must be nonempty with an even number (>= 4) of rows");
    }
    const int N = static_cast<int>(S.rows());
    const Matrix C = constant_modes(N / 2);
    const Eigen::HouseholderQR<Matrix> qr(C);
    const Matrix Q = qr.householderQ() * Matrix::Identity(N, N);
    const Matrix B = Q.rightCols(N - 2);
    const Matrix P = B.transpose() * S;
    Eigen::BDCSVD<Matrix> svd(P, Eigen::ComputeFullU);

    TrainedPortSpace space;
    space.singular_values = svd.singularValues();
    space.basis.resize(N, N);
    space.basis.leftCols(2) = C;
    space.basis.rightCols(N - 2) = B * svd.matrixU();
    for (int k = 2; k < N; ++k) {
        normalize_sign(space.basis.col(k));
    }
    const Vector& sv = space.singular_values;
    const double tol = sv.size() > 0 ? sv[0] * 1e-12 * std::max<double>(P.rows(), P.cols()) : 0.0;
    space.rank = static_cast<int>((sv.array() > tol).count());

    const double total = sv.squaredNorm();
    int n_pod = 0;
    double tail = total;
    while (n_pod < sv.size() && tail > options.energy_tol * total) {
        tail -= sv[n_pod] * sv[n_pod];
        ++n_pod;
    }
    space.default_size = 2 + n_pod;
    if (options.size > 0) {
        int n = std::min(options.size, N);
        if (n - 2 > space.rank) {
            fmt::print(stderr, "warning: requested basis size {} exceeds snapshot rank {} (+2 constants); using {}\n",
                       options.size, space.rank, space.rank + 2);
            n = space.rank + 2;
        }
        space.default_size = n;
    }
    return space;
}

double projection_error(const TrainedPortSpace& space, const Matrix& S, int n) {
    const auto X = space.basis.leftCols(n);
    return (S - X * (X.transpose() * S)).norm();
}

double tail_energy(const TrainedPortSpace& space, int n) {
    double e = 0.0;
    for (Eigen::Index k = std::max(0, n - 2); k < space.singular_values.size(); ++k) {
        e += space.singular_values[k] * space.singular_values[k];
    }
    return e;
}

std::vector<PairConfig> lattice_pair_configs() {
    // joint ports (W, N, E, S); h-strut (W, E); v-strut (N, S)
    return {{0, 2, 1, 0}, {1, 1, 0, 0}, {0, 1, 2, 1}, {2, 0, 0, 3}};
}

int TrainedLibrary::default_size() const {
    int n = 0;
    for (const auto& [name, space] : spaces) {
        n = std::max(n, space.default_size);
    }
    return n;
}

int TrainedLibrary::max_size() const {
    int n = std::numeric_limits<int>::max();
    for (const auto& [name, space] : spaces) {
        n = std::min(n, space.dimension());
    }
    return spaces.empty() ? 0 : n;
}

ModelSet TrainedLibrary::models_for(int n) const {
    if (n <= 0) {
        throw ContractError(fmt::format("basis size must be positive, got {}", n));
    }
    return truncate_models(models, n);
}

void TrainedLibrary::check_covers(const SystemTopology& topology) const {
    for (const auto& inst : topology.instances) {
        if (inst.reference < 0 || inst.reference >= static_cast<int>(components.size())) {
            throw LibraryError(fmt::format("library has no reference component {}", inst.reference));
        }
    }
    for (const auto& gp : topology.ports) {
        const auto& first = gp.owners.front();
        const int ra = topology.instances[first.instance].reference;
        const auto& cls = components[ra].ports[first.port].port_class;
        if (!spaces.contains(cls)) {
            throw LibraryError(fmt::format("port class '{}' was not trained", cls));
        }
        if (!gp.interior()) continue;
        const auto& second = gp.owners[1];
        const int rb = topology.instances[second.instance].reference;
        const PairConfig c1{ra, first.port, rb, second.port};
        const PairConfig c2{rb, second.port, ra, first.port};
        if (std::find(pairs.begin(), pairs.end(), c1) == pairs.end() &&
            std::find(pairs.begin(), pairs.end(), c2) == pairs.end()) {
            throw LibraryError(fmt::format("configuration {}:{} <-> {}:{} was not trained", components[ra].name,
                                           components[ra].ports[first.port].name, components[rb].name,
                                           components[rb].ports[second.port].name));
        }
    }
}

ModelSet build_models(const std::vector<ReferenceComponent>& components,
                      const std::map<std::string, TrainedPortSpace>& spaces, int threads) {
    ModelSet models(components.size());
    parallel_for(static_cast<int>(components.size()), threads, [&](int r) {
        const ComponentOperator op(components[r]);
        std::vector<Matrix> traces;
        for (const auto& port : components[r].ports) {
            auto it = spaces.find(port.port_class);
            if (it == spaces.end()) {
                throw LibraryError(fmt::format("port class '{}' was not trained", port.port_class));
            }
            if (it->second.dimension() != port.dof_count()) {
                throw LibraryError(fmt::format("port space '{}' has dimension {}, port '{}' has {} DOFs",
                                               port.port_class, it->second.dimension(), port.name, port.dof_count()));
            }
            traces.push_back(it->second.basis);
        }
        models[r] = make_model(op, traces);
    });
    return models;
}

TrainedLibrary train_library(const ComponentGeometry& geometry, const PlaneStressMaterial& material,
                             const TrainingOptions& options, const PodOptions& pod_options,
                             std::vector<PairConfig> pairs) {
    TrainedLibrary lib;
    lib.geometry = geometry;
    lib.material = material;
    lib.options = options;
    lib.components = make_lattice_library(geometry, material);
    lib.pairs = std::move(pairs);

    std::vector<std::unique_ptr<ComponentOperator>> ops;
    for (const auto& comp : lib.components) {
        ops.push_back(std::make_unique<ComponentOperator>(comp));
    }
    std::map<std::string, std::vector<Matrix>> snapshots;
    for (std::size_t c = 0; c < lib.pairs.size(); ++c) {
        const auto& pc = lib.pairs[c];
        const auto& pa = lib.components.at(pc.ref_a).ports.at(pc.port_a);
        const auto& pb = lib.components.at(pc.ref_b).ports.at(pc.port_b);
        if (pa.port_class != pb.port_class) {
            throw ConfigError(fmt::format("pair {} joins ports of classes '{}' and '{}'", c, pa.port_class,
                                          pb.port_class));
        }
        const std::uint64_t stream_base = static_cast<std::uint64_t>(c) << 32;
        snapshots[pa.port_class].push_back(
            pairwise_train(*ops[pc.ref_a], pc.port_a, *ops[pc.ref_b], pc.port_b, options, stream_base).S);
    }
    for (auto& [cls, parts] : snapshots) {
        Eigen::Index cols = 0;
        for (const auto& p : parts) cols += p.cols();
        Matrix S(parts.front().rows(), cols);
        cols = 0;
        for (const auto& p : parts) {
            S.middleCols(cols, p.cols()) = p;
            cols += p.cols();
        }
        lib.spaces[cls] = pod(S, pod_options);
        const auto& space = lib.spaces[cls];
        const double err = projection_error(space, S, space.default_size);
        lib.pod_defect[cls] = std::abs(err * err - tail_energy(space, space.default_size)) / S.squaredNorm();
        if (pod_options.size > 0 && lib.spaces[cls].default_size < std::min<int>(pod_options.size, S.rows())) {
            lib.warnings.push_back(fmt::format("port class '{}': basis size truncated to {}", cls,
                                               lib.spaces[cls].default_size));
        }
    }
    ops.clear();
    lib.models = build_models(lib.components, lib.spaces, options.threads);
    return lib;
}

} // namespace cwtopo
