#pragma once

// Plane-stress Q1 finite elements: element matrices, sparse assembly,
// Dirichlet elimination and a cached sparse Cholesky solve.
//
// DOF ordering is node-major with (ux, uy) interleaved: dof(n, c) = 2 n + c.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <array>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

namespace cwtopo {

using Vec2 = Eigen::Vector2d;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double>;
using ElementMatrix = Eigen::Matrix<double, 8, 8>;
using Quad = std::array<Vec2, 4>;

inline constexpr int dof(int node, int component) { return 2 * node + component; }

struct QuadMesh {
    std::vector<Vec2> nodes;
    std::vector<std::array<int, 4>> elements; // counter-clockwise
    std::map<std::string, std::vector<int>> boundary_tags;

    [[nodiscard]] int node_count() const { return static_cast<int>(nodes.size()); }
    [[nodiscard]] int element_count() const { return static_cast<int>(elements.size()); }
    [[nodiscard]] int dof_count() const { return 2 * node_count(); }
    [[nodiscard]] Quad corners(int element) const;

    /// Throws IndexError on bad connectivity and GeometryError on
    /// non-finite coordinates or a non-positive Jacobian at a Gauss point.
    void validate() const;

    /// Area from element Jacobians (2x2 Gauss, exact for bilinear maps).
    [[nodiscard]] double area() const;
};

struct PlaneStressMaterial {
    double young_modulus = 1.0;
    double poisson_ratio = 0.0;

    void validate() const;
    /// 3x3 matrix mapping (exx, eyy, 2 exy) to (sxx, syy, sxy).
    [[nodiscard]] Eigen::Matrix3d constitutive() const;
};

/// Bilinear quad stiffness with 2x2 Gauss quadrature.
ElementMatrix element_stiffness(const Quad& corners, const PlaneStressMaterial& mat, double thickness);

/// Scalar-Laplacian stiffness of one quad, applied to both displacement
/// components (no coupling between ux and uy).
ElementMatrix element_vector_laplacian(const Quad& corners);

/// Consistent scalar mass matrix of one quad (4x4).
Eigen::Matrix4d element_scalar_mass(const Quad& corners);

/// Sparsity pattern of a node-interleaved 2-DOF mesh with fast element scatter.
class ElementAssembler {
public:
    ElementAssembler(int node_count, std::span<const std::array<int, 4>> elements);

    /// Returns a zeroed matrix with the full symmetric pattern.
    [[nodiscard]] SparseMatrix zero_matrix() const { return pattern_; }
    void scatter(SparseMatrix& target, const std::array<int, 4>& element, const ElementMatrix& ke, double scale) const;

private:
    [[nodiscard]] double& entry(SparseMatrix& m, int row, int col) const;
    SparseMatrix pattern_;
};

/// Global stiffness: sum of scale[e] * element_stiffness(e). Empty scale means 1.
SparseMatrix assemble(const QuadMesh& mesh, const PlaneStressMaterial& mat, double thickness,
                      std::span<const double> scale = {});

SparseMatrix assemble_vector_laplacian(const QuadMesh& mesh);

/// Scalar consistent mass expanded to both components (block identity per node pair).
SparseMatrix assemble_vector_mass(const QuadMesh& mesh);

struct ReducedSystem {
    SparseMatrix matrix;
    Vector rhs;
    std::vector<int> free_dofs;
    std::vector<int> fixed_dofs;
    Vector fixed_values;

    /// Reinserts the imposed values around a reduced solution.
    [[nodiscard]] Vector recover(const Vector& reduced_solution) const;
};

/// Symmetric elimination of fixed DOFs; the right-hand side is corrected by
/// -K[:, fixed] * values. Throws IndexError on duplicate or out-of-range DOFs.
ReducedSystem apply_dirichlet(const SparseMatrix& K, const Vector& f, std::span<const int> fixed_dofs,
                              std::span<const double> values);

/// Sparse Cholesky (CHOLMOD supernodal) with a cached factorization.
/// Refactoring a matrix with the same pattern reuses the symbolic analysis.
class SpdSolver {
public:
    SpdSolver();
    explicit SpdSolver(const SparseMatrix& K);
    ~SpdSolver();
    SpdSolver(SpdSolver&&) noexcept;
    SpdSolver& operator=(SpdSolver&&) noexcept;

    /// Throws NotSpdError when a non-positive pivot is met.
    void factor(const SparseMatrix& K);
    [[nodiscard]] Vector solve(const Vector& f) const;
    [[nodiscard]] Matrix solve(const Matrix& f) const;
    [[nodiscard]] int size() const { return size_; }
    [[nodiscard]] bool factored() const { return factored_; }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    int size_ = 0;
    bool factored_ = false;
};

Vector solve_spd(const SparseMatrix& K, const Vector& f);

/// Von Mises stress at each element center for a plane-stress displacement field.
Vector von_mises(const QuadMesh& mesh, const PlaneStressMaterial& mat, const Vector& displacement,
                 double stiffness_scale = 1.0);

} // namespace cwtopo
