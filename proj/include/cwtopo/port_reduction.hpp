#pragma once

// Offline port-space training: generalized Legendre port modes, pairwise
// snapshot generation, POD, and the trained component library.

#include "cwtopo/component.hpp"
#include "cwtopo/condensation.hpp"
#include "cwtopo/simp.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace cwtopo {

/// Consistent P1 mass matrix of a port (scalar, by arclength).
Matrix port_mass(const Port& port);
/// Integral of each P1 hat function over the port.
Vector port_weights(const Port& port);

/// Solves -s'' = 1 on the port with s = 0 at both ends (P1, nodal values).
Vector vanishing_mode(const Port& port);

struct PortEigenbasis {
    Vector s;
    Vector eigenvalues; // ascending
    Matrix modes;       // scalar nodal values, mass-orthonormal columns
};

/// Generalized eigenpairs of the s-weighted port stiffness against the port mass.
PortEigenbasis legendre_modes(const Port& port, const Vector& s);

/// Subtracts the integral mean of each displacement component from a trace.
Vector mean_corrected(const Port& port, const Vector& trace);

struct TrainingOptions {
    int samples = 500; // per pair configuration
    double eta = 1.0;
    std::uint64_t seed = 1;
    SimpParams simp;
    int threads = 1;
};

/// Two reference components joined at (ref_a, port_a) == (ref_b, port_b).
struct PairConfig {
    int ref_a = 0;
    int port_a = 0;
    int ref_b = 0;
    int port_b = 0;
    friend bool operator==(const PairConfig&, const PairConfig&) = default;
};

/// Random data of one training sample.
struct PairSample {
    double mu_a = 1.0;
    double mu_b = 1.0;
    std::vector<Vector> traces_a; // per port of a (empty for the shared port)
    std::vector<Vector> traces_b;
};

PairSample draw_pair_sample(const ReferenceComponent& a, int port_a, const ReferenceComponent& b, int port_b,
                            const TrainingOptions& options, std::uint64_t stream);

/// Shared-port trace of the two-component system under a sample's data (full nodal port bases).
Vector solve_pair_sample(const ComponentOperator& a, int port_a, const ComponentOperator& b, int port_b,
                         const PairSample& sample, const SimpParams& params);

struct SnapshotSet {
    Matrix S; // port DOFs x samples, mean-corrected columns
    int samples = 0;
    std::uint64_t seed = 0;
};

/// Streams are numbered stream_base + sample index.
SnapshotSet pairwise_train(const ComponentOperator& a, int port_a, const ComponentOperator& b, int port_b,
                           const TrainingOptions& options, std::uint64_t stream_base = 0);

struct TrainedPortSpace {
    Matrix basis;           // N x N orthonormal: two constant modes, then POD modes, then the rest
    Vector singular_values; // of the snapshots projected off the constants, descending
    int rank = 0;           // numerical rank of that projection
    int default_size = 0;   // energy-truncated size (constants included)

    [[nodiscard]] int dimension() const { return static_cast<int>(basis.rows()); }
};

struct PodOptions {
    int size = 0;             // basis size including the constants; 0 selects by energy
    double energy_tol = 1e-8; // tail energy fraction
};

/// Port constants (x then y), Euclidean-normalized, for a port with `nodes` nodes.
Matrix constant_modes(int nodes);

/// POD in the orthogonal complement of the constant modes.
TrainedPortSpace pod(const Matrix& S, const PodOptions& options = {});

/// Frobenius projection error of S onto the first n basis vectors.
double projection_error(const TrainedPortSpace& space, const Matrix& S, int n);
/// Squared singular values of the POD part beyond the first n basis vectors (constants included in n).
double tail_energy(const TrainedPortSpace& space, int n);

/// The four configurations used by joint/strut lattices.
std::vector<PairConfig> lattice_pair_configs();

struct TrainedLibrary {
    ComponentGeometry geometry;
    PlaneStressMaterial material;
    TrainingOptions options;
    std::vector<ReferenceComponent> components;
    std::vector<PairConfig> pairs;
    std::map<std::string, TrainedPortSpace> spaces; // by port class
    ModelSet models;                                // full trained bases
    std::map<std::string, double> pod_defect;       // |proj. error^2 - tail energy| / energy, at default size
    std::vector<std::string> warnings;

    [[nodiscard]] int default_size() const;
    [[nodiscard]] int max_size() const;
    /// Models truncated to n basis functions per port.
    [[nodiscard]] ModelSet models_for(int n) const;
    /// Throws LibraryError when the topology joins ports in a configuration that was not trained.
    void check_covers(const SystemTopology& topology) const;
};

/// Rebuilds lifted models from the stored components and spaces.
ModelSet build_models(const std::vector<ReferenceComponent>& components,
                      const std::map<std::string, TrainedPortSpace>& spaces, int threads = 1);

TrainedLibrary train_library(const ComponentGeometry& geometry, const PlaneStressMaterial& material,
                             const TrainingOptions& options, const PodOptions& pod_options,
                             std::vector<PairConfig> pairs = lattice_pair_configs());

} // namespace cwtopo
