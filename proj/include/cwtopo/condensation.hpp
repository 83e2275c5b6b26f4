#pragma once

// Static condensation of lattice systems onto port degrees of freedom:
// lifted skeleton bases, bubble solves, local Schur blocks, condensed
// assembly and field reconstruction.

#include "cwtopo/component.hpp"
#include "cwtopo/fem.hpp"

#include <vector>

namespace cwtopo {

enum class LiftingKind { Elasticity, Laplacian };

/// Port traces are stored with row 2a + c holding component c at port node a.
/// The operator caches the interior (bubble) factorization and the nodal
/// Schur complement of one reference component at unit density.
class ComponentOperator {
public:
    explicit ComponentOperator(const ReferenceComponent& component);

    [[nodiscard]] const ReferenceComponent& component() const { return *component_; }
    [[nodiscard]] const SparseMatrix& stiffness() const { return stiffness_; }
    [[nodiscard]] int port_count() const { return component_->port_count(); }
    /// Component DOFs of port j, in trace-row order.
    [[nodiscard]] const std::vector<int>& port_dofs(int port) const { return port_dofs_[port]; }
    /// All port DOFs concatenated in port order.
    [[nodiscard]] const std::vector<int>& skeleton_dofs() const { return skeleton_dofs_; }
    [[nodiscard]] const std::vector<int>& bubble_dofs() const { return bubble_dofs_; }
    [[nodiscard]] int port_offset(int port) const { return port_offset_[port]; }

    [[nodiscard]] const SpdSolver& bubble_solver() const { return bubble_solver_; }
    /// K restricted to (bubble rows, skeleton columns).
    [[nodiscard]] const SparseMatrix& coupling() const { return coupling_; }
    /// K_pp - K_pb K_bb^{-1} K_bp over all skeleton DOFs.
    [[nodiscard]] const Matrix& nodal_schur() const { return schur_; }
    /// -K_bb^{-1} K_bp: interior values of the elasticity extension of each skeleton DOF.
    [[nodiscard]] const Matrix& extension() const { return extension_; }

private:
    const ReferenceComponent* component_;
    SparseMatrix stiffness_;
    std::vector<std::vector<int>> port_dofs_;
    std::vector<int> skeleton_dofs_;
    std::vector<int> bubble_dofs_;
    std::vector<int> port_offset_;
    SpdSolver bubble_solver_;
    SparseMatrix coupling_;
    Matrix schur_;
    Matrix extension_;
};

/// Rows/columns of a sparse matrix selected by index lists.
SparseMatrix extract_block(const SparseMatrix& m, std::span<const int> rows, std::span<const int> cols);

struct SkeletonBasis {
    LiftingKind kind = LiftingKind::Elasticity;
    std::vector<Matrix> traces; // per port: trace rows x basis size
    std::vector<Matrix> psi;    // per port: component DOFs x basis size
};

/// Extends every trace column into the component with zero trace on the
/// other ports: a(psi, v; 1) = 0 on the bubble space (elasticity) or the
/// vector Laplacian analogue.
SkeletonBasis lift_basis(const ComponentOperator& op, const std::vector<Matrix>& traces, LiftingKind kind);

/// Solves s(mu) K_bb b = f_b. Throws ContractError when the load touches port DOFs.
Vector forcing_bubble(const ComponentOperator& op, double scale, const Vector& load);

/// Bubble corrections making psi + bubble the elasticity extension.
/// Exactly zero (no solve) for the elasticity lifting.
std::vector<Matrix> interface_bubble(const ComponentOperator& op, const SkeletonBasis& skeleton);

struct LocalSchur {
    Matrix kbar;
    std::vector<int> offsets; // per port, into kbar
    std::vector<int> sizes;

    [[nodiscard]] int size() const { return static_cast<int>(kbar.rows()); }
};

/// Parameter-independent local Schur block at unit density.
LocalSchur local_schur(const ComponentOperator& op, const SkeletonBasis& skeleton);

/// Everything the online stage needs for one reference component.
struct ComponentModel {
    std::vector<Matrix> traces; // per port basis, columns ordered by importance
    Matrix psi;                 // component DOFs x sum of basis sizes, port blocks in order
    LocalSchur schur;

    [[nodiscard]] int port_size(int port) const { return schur.sizes[port]; }
    /// Keeps the first sizes[j] basis functions of port j.
    [[nodiscard]] ComponentModel truncated(std::span<const int> sizes) const;
};

/// Model with full nodal (identity) port bases.
ComponentModel nodal_model(const ComponentOperator& op);
/// Model for the given per-port trace bases (elasticity lifting).
ComponentModel make_model(const ComponentOperator& op, const std::vector<Matrix>& traces);

/// Models indexed by reference component id.
using ModelSet = std::vector<ComponentModel>;
/// Truncates every port basis to at most n functions.
ModelSet truncate_models(const ModelSet& models, int n);

/// Consistent nodal forces of a constant traction (component frame) on a port.
Vector port_traction_load(const Port& port, const Vec2& traction);

/// Scatter map from local Schur blocks into the condensed matrix.
/// Dirichlet ports carry homogeneous data and are eliminated.
class CondensedAssembler {
public:
    CondensedAssembler(const SystemTopology& topology, std::span<const ReferenceComponent> library,
                       const ModelSet& models);

    [[nodiscard]] const PortDofMap& dofs() const { return dofs_; }
    [[nodiscard]] int size() const { return dofs_.size(); }
    [[nodiscard]] const SystemTopology& topology() const { return *topology_; }
    [[nodiscard]] const ModelSet& models() const { return *models_; }

    /// K = sum_i scale[i] * Kbar^{R(i)}.
    [[nodiscard]] SparseMatrix assemble(std::span<const double> scale) const;
    /// Only instance i's contribution (unscaled), on the full condensed pattern.
    [[nodiscard]] SparseMatrix instance_matrix(int instance) const;
    [[nodiscard]] const Vector& load() const { return load_; }
    /// Condensed index of each local basis function of instance i (-1 on Dirichlet ports).
    [[nodiscard]] const std::vector<int>& indices(int instance) const { return indices_[instance]; }
    /// U_i: local coefficients of instance i (zero on Dirichlet ports).
    [[nodiscard]] Vector gather(int instance, const Vector& U) const;

private:
    const SystemTopology* topology_;
    const ModelSet* models_;
    std::vector<int> reference_;
    PortDofMap dofs_;
    std::vector<std::vector<int>> indices_;
    SparseMatrix pattern_;
    std::vector<std::vector<int>> positions_; // per instance, column-major local (a, b) -> value index or -1
    Vector load_;
};

struct CondensedSystem {
    SparseMatrix K;
    Vector F;
    Vector U;
    bool solved = false;
};

CondensedSystem assemble_condensed(const CondensedAssembler& assembler, std::span<const double> scale);

/// Solves K U = F in place; throws NotSpdError when K is not positive definite.
const Vector& solve_condensed(CondensedSystem& system);

/// Component-frame displacement of every instance: sum_k U_(p,k) phi_(i,j,k) (+ bubble).
std::vector<Vector> reconstruct_field(const CondensedAssembler& assembler, const Vector& U,
                                      std::span<const Vector> bubbles = {});

/// Rotates a component-frame nodal vector into the global frame.
Vector to_global_frame(const TransformationMap& map, const Vector& local);
Vector to_local_frame(const TransformationMap& map, const Vector& global);

} // namespace cwtopo
