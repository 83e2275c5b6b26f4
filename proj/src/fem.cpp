#include "cwtopo/fem.hpp"

#include "cwtopo/errors.hpp"

#include <Eigen/CholmodSupport>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace cwtopo {

namespace {

constexpr double kGauss = 0.57735026918962576451; // 1/sqrt(3)
constexpr std::array<std::array<double, 2>, 4> kGaussPoints{{{-kGauss, -kGauss}, {kGauss, -kGauss}, {kGauss, kGauss}, {-kGauss, kGauss}}};
constexpr std::array<std::array<double, 2>, 4> kRefCorners{{{-1.0, -1.0}, {1.0, -1.0}, {1.0, 1.0}, {-1.0, 1.0}}};

struct ShapeEval {
    Eigen::Vector4d N;
    Eigen::Matrix<double, 2, 4> dN_dx; // physical gradients
    double det_j = 0.0;
};

ShapeEval evaluate(const Quad& x, double xi, double eta) {
    ShapeEval s;
    Eigen::Matrix<double, 2, 4> dN_dref;
    for (int a = 0; a < 4; ++a) {
        const double xa = kRefCorners[a][0];
        const double ea = kRefCorners[a][1];
        s.N(a) = 0.25 * (1.0 + xa * xi) * (1.0 + ea * eta);
        dN_dref(0, a) = 0.25 * xa * (1.0 + ea * eta);
        dN_dref(1, a) = 0.25 * ea * (1.0 + xa * xi);
    }
    Eigen::Matrix2d J = Eigen::Matrix2d::Zero();
    for (int a = 0; a < 4; ++a) {
        J(0, 0) += dN_dref(0, a) * x[a].x();
        J(0, 1) += dN_dref(0, a) * x[a].y();
        J(1, 0) += dN_dref(1, a) * x[a].x();
        J(1, 1) += dN_dref(1, a) * x[a].y();
    }
    s.det_j = J.determinant();
    if (!(s.det_j > 0.0)) {
        throw GeometryError(fmt::format("non-positive Jacobian determinant {:.3e}", s.det_j));
    }
    s.dN_dx = J.inverse() * dN_dref;
    return s;
}

Eigen::Matrix<double, 3, 8> strain_operator(const ShapeEval& s) {
    Eigen::Matrix<double, 3, 8> B = Eigen::Matrix<double, 3, 8>::Zero();
    for (int a = 0; a < 4; ++a) {
        B(0, 2 * a) = s.dN_dx(0, a);
        B(1, 2 * a + 1) = s.dN_dx(1, a);
        B(2, 2 * a) = s.dN_dx(1, a);
        B(2, 2 * a + 1) = s.dN_dx(0, a);
    }
    return B;
}

template <typename ElementFn>
SparseMatrix assemble_with(const QuadMesh& mesh, ElementFn&& element_matrix, std::span<const double> scale) {
    if (!scale.empty() && static_cast<int>(scale.size()) != mesh.element_count()) {
        throw IndexError("per-element scale has wrong length");
    }
    ElementAssembler assembler(mesh.node_count(), mesh.elements);
    SparseMatrix K = assembler.zero_matrix();
    for (int e = 0; e < mesh.element_count(); ++e) {
        const double s = scale.empty() ? 1.0 : scale[e];
        assembler.scatter(K, mesh.elements[e], element_matrix(mesh.corners(e)), s);
    }
    return K;
}

} // namespace

Quad QuadMesh::corners(int element) const {
    const auto& el = elements[element];
    return {nodes[el[0]], nodes[el[1]], nodes[el[2]], nodes[el[3]]};
}

void QuadMesh::validate() const {
    for (const auto& p : nodes) {
        if (!std::isfinite(p.x()) || !std::isfinite(p.y())) {
            throw GeometryError("non-finite node coordinate");
        }
    }
    for (int e = 0; e < element_count(); ++e) {
        for (int n : elements[e]) {
            if (n < 0 || n >= node_count()) {
                throw IndexError(fmt::format("element {} references node {} out of range", e, n));
            }
        }
        const Quad x = corners(e);
        for (const auto& g : kGaussPoints) {
            (void)evaluate(x, g[0], g[1]);
        }
    }
    for (const auto& [tag, ids] : boundary_tags) {
        for (int n : ids) {
            if (n < 0 || n >= node_count()) {
                throw IndexError(fmt::format("boundary tag '{}' references node {} out of range", tag, n));
            }
        }
    }
}

double QuadMesh::area() const {
    double total = 0.0;
    for (int e = 0; e < element_count(); ++e) {
        const Quad x = corners(e);
        for (const auto& g : kGaussPoints) {
            total += evaluate(x, g[0], g[1]).det_j;
        }
    }
    return total;
}

void PlaneStressMaterial::validate() const {
    if (!(young_modulus > 0.0)) {
        throw ConfigError("young_modulus must be positive");
    }
    if (!(poisson_ratio >= 0.0 && poisson_ratio < 0.5)) {
        throw ConfigError("poisson_ratio must lie in [0, 0.5)");
    }
}

Eigen::Matrix3d PlaneStressMaterial::constitutive() const {
    const double nu = poisson_ratio;
    const double c = young_modulus / (1.0 - nu * nu);
    Eigen::Matrix3d D;
    D << c, c * nu, 0.0,
         c * nu, c, 0.0,
         0.0, 0.0, c * 0.5 * (1.0 - nu);
    return D;
}

ElementMatrix element_stiffness(const Quad& corners, const PlaneStressMaterial& mat, double thickness) {
    const Eigen::Matrix3d D = mat.constitutive();
    ElementMatrix K = ElementMatrix::Zero();
    for (const auto& g : kGaussPoints) {
        const ShapeEval s = evaluate(corners, g[0], g[1]);
        const auto B = strain_operator(s);
        K.noalias() += (B.transpose() * D * B) * (s.det_j * thickness);
    }
    return 0.5 * (K + K.transpose());
}

ElementMatrix element_vector_laplacian(const Quad& corners) {
    Eigen::Matrix4d L = Eigen::Matrix4d::Zero();
    for (const auto& g : kGaussPoints) {
        const ShapeEval s = evaluate(corners, g[0], g[1]);
        L.noalias() += (s.dN_dx.transpose() * s.dN_dx) * s.det_j;
    }
    ElementMatrix K = ElementMatrix::Zero();
    for (int a = 0; a < 4; ++a) {
        for (int b = 0; b < 4; ++b) {
            K(2 * a, 2 * b) = L(a, b);
            K(2 * a + 1, 2 * b + 1) = L(a, b);
        }
    }
    return K;
}

Eigen::Matrix4d element_scalar_mass(const Quad& corners) {
    Eigen::Matrix4d M = Eigen::Matrix4d::Zero();
    for (const auto& g : kGaussPoints) {
        const ShapeEval s = evaluate(corners, g[0], g[1]);
        M.noalias() += (s.N * s.N.transpose()) * s.det_j;
    }
    return M;
}

ElementAssembler::ElementAssembler(int node_count, std::span<const std::array<int, 4>> elements) {
    std::vector<std::vector<int>> neighbours(node_count);
    for (const auto& el : elements) {
        for (int a : el) {
            for (int b : el) {
                neighbours[a].push_back(b);
            }
        }
    }
    long long nnz = 0;
    for (auto& list : neighbours) {
        std::sort(list.begin(), list.end());
        list.erase(std::unique(list.begin(), list.end()), list.end());
        nnz += 4 * static_cast<long long>(list.size());
    }
    const int n = 2 * node_count;
    pattern_.resize(n, n);
    pattern_.resizeNonZeros(nnz);
    auto* outer = pattern_.outerIndexPtr();
    auto* inner = pattern_.innerIndexPtr();
    auto* values = pattern_.valuePtr();
    long long pos = 0;
    for (int node = 0; node < node_count; ++node) {
        for (int c = 0; c < 2; ++c) {
            outer[2 * node + c] = static_cast<int>(pos);
            for (int m : neighbours[node]) {
                inner[pos] = 2 * m;
                values[pos++] = 0.0;
                inner[pos] = 2 * m + 1;
                values[pos++] = 0.0;
            }
        }
    }
    outer[n] = static_cast<int>(pos);
}

double& ElementAssembler::entry(SparseMatrix& m, int row, int col) const {
    const int* inner = m.innerIndexPtr();
    const int begin = m.outerIndexPtr()[col];
    const int end = m.outerIndexPtr()[col + 1];
    const int* it = std::lower_bound(inner + begin, inner + end, row);
    return m.valuePtr()[it - inner];
}

void ElementAssembler::scatter(SparseMatrix& target, const std::array<int, 4>& element, const ElementMatrix& ke,
                               double scale) const {
    for (int b = 0; b < 4; ++b) {
        for (int cb = 0; cb < 2; ++cb) {
            const int col = dof(element[b], cb);
            for (int a = 0; a < 4; ++a) {
                // rows 2n and 2n+1 are adjacent in the pattern
                double* v = &entry(target, dof(element[a], 0), col);
                v[0] += scale * ke(2 * a, 2 * b + cb);
                v[1] += scale * ke(2 * a + 1, 2 * b + cb);
            }
        }
    }
}

SparseMatrix assemble(const QuadMesh& mesh, const PlaneStressMaterial& mat, double thickness,
                      std::span<const double> scale) {
    return assemble_with(mesh, [&](const Quad& x) { return element_stiffness(x, mat, thickness); }, scale);
}

SparseMatrix assemble_vector_laplacian(const QuadMesh& mesh) {
    return assemble_with(mesh, [](const Quad& x) { return element_vector_laplacian(x); }, {});
}

SparseMatrix assemble_vector_mass(const QuadMesh& mesh) {
    return assemble_with(
        mesh,
        [](const Quad& x) {
            const Eigen::Matrix4d m = element_scalar_mass(x);
            ElementMatrix K = ElementMatrix::Zero();
            for (int a = 0; a < 4; ++a) {
                for (int b = 0; b < 4; ++b) {
                    K(2 * a, 2 * b) = m(a, b);
                    K(2 * a + 1, 2 * b + 1) = m(a, b);
                }
            }
            return K;
        },
        {});
}

Vector ReducedSystem::recover(const Vector& reduced_solution) const {
    if (reduced_solution.size() != static_cast<Eigen::Index>(free_dofs.size())) {
        throw IndexError("reduced solution has wrong length");
    }
    Vector full(static_cast<Eigen::Index>(free_dofs.size() + fixed_dofs.size()));
    for (std::size_t i = 0; i < free_dofs.size(); ++i) {
        full(free_dofs[i]) = reduced_solution(static_cast<Eigen::Index>(i));
    }
    for (std::size_t i = 0; i < fixed_dofs.size(); ++i) {
        full(fixed_dofs[i]) = fixed_values(static_cast<Eigen::Index>(i));
    }
    return full;
}

ReducedSystem apply_dirichlet(const SparseMatrix& K, const Vector& f, std::span<const int> fixed_dofs,
                              std::span<const double> values) {
    const int n = static_cast<int>(K.rows());
    if (K.cols() != n || f.size() != n) {
        throw IndexError("matrix and right-hand side dimensions differ");
    }
    if (values.size() != fixed_dofs.size()) {
        throw IndexError("fixed DOF and value lists differ in length");
    }
    std::vector<int> position(n, -1); // free index, or -2 - fixed index
    for (std::size_t i = 0; i < fixed_dofs.size(); ++i) {
        const int d = fixed_dofs[i];
        if (d < 0 || d >= n) {
            throw IndexError(fmt::format("fixed DOF {} out of range [0, {})", d, n));
        }
        if (position[d] != -1) {
            throw IndexError(fmt::format("fixed DOF {} listed twice", d));
        }
        position[d] = -2 - static_cast<int>(i);
    }
    ReducedSystem out;
    out.fixed_dofs.assign(fixed_dofs.begin(), fixed_dofs.end());
    out.fixed_values = Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
    for (int d = 0; d < n; ++d) {
        if (position[d] == -1) {
            position[d] = static_cast<int>(out.free_dofs.size());
            out.free_dofs.push_back(d);
        }
    }
    const int nf = static_cast<int>(out.free_dofs.size());
    out.rhs.resize(nf);
    for (int i = 0; i < nf; ++i) {
        out.rhs(i) = f(out.free_dofs[i]);
    }
    // free positions are increasing in the original index, so columns stay sorted
    long long nnz = 0;
    for (int col = 0; col < K.outerSize(); ++col) {
        if (position[col] < 0) continue;
        for (SparseMatrix::InnerIterator it(K, col); it; ++it) {
            nnz += position[it.row()] >= 0 ? 1 : 0;
        }
    }
    out.matrix.resize(nf, nf);
    out.matrix.resizeNonZeros(nnz);
    int* outer = out.matrix.outerIndexPtr();
    int* inner = out.matrix.innerIndexPtr();
    double* vals = out.matrix.valuePtr();
    long long pos = 0;
    for (int col = 0; col < K.outerSize(); ++col) {
        const int pc = position[col];
        if (pc >= 0) {
            outer[pc] = static_cast<int>(pos);
        }
        for (SparseMatrix::InnerIterator it(K, col); it; ++it) {
            const int pr = position[it.row()];
            if (pr < 0) {
                continue;
            }
            if (pc >= 0) {
                inner[pos] = pr;
                vals[pos++] = it.value();
            } else {
                out.rhs(pr) -= it.value() * out.fixed_values(-2 - pc);
            }
        }
    }
    outer[nf] = static_cast<int>(pos);
    return out;
}

struct SpdSolver::Impl {
    Eigen::CholmodSupernodalLLT<SparseMatrix, Eigen::Lower> llt;
    SparseMatrix pattern; // structure of the last analysed matrix
    bool analysed = false;
    mutable std::mutex mutex; // the CHOLMOD workspace is shared by solves
};

SpdSolver::SpdSolver() : impl_(std::make_unique<Impl>()) {
    impl_->llt.cholmod().print = 0;
}

SpdSolver::SpdSolver(const SparseMatrix& K) : SpdSolver() { factor(K); }

SpdSolver::~SpdSolver() = default;
SpdSolver::SpdSolver(SpdSolver&&) noexcept = default;
SpdSolver& SpdSolver::operator=(SpdSolver&&) noexcept = default;

void SpdSolver::factor(const SparseMatrix& K) {
    if (K.rows() != K.cols()) {
        throw IndexError("SpdSolver needs a square matrix");
    }
    factored_ = false;
    size_ = static_cast<int>(K.rows());
    if (size_ == 0) {
        factored_ = true;
        return;
    }
    auto same_pattern = [&] {
        const SparseMatrix& p = impl_->pattern;
        if (!impl_->analysed || p.rows() != K.rows() || p.nonZeros() != K.nonZeros()) {
            return false;
        }
        return std::equal(p.outerIndexPtr(), p.outerIndexPtr() + p.outerSize() + 1, K.outerIndexPtr()) &&
               std::equal(p.innerIndexPtr(), p.innerIndexPtr() + p.nonZeros(), K.innerIndexPtr());
    };
    if (!K.isCompressed()) {
        throw IndexError("SpdSolver needs a compressed matrix");
    }
    if (!same_pattern()) {
        impl_->llt.analyzePattern(K);
        impl_->pattern = K;
        impl_->analysed = true;
    }
    impl_->llt.factorize(K);
    if (impl_->llt.info() != Eigen::Success) {
        throw NotSpdError("Cholesky factorization met a non-positive pivot");
    }
    factored_ = true;
}

Vector SpdSolver::solve(const Vector& f) const {
    if (!factored_) {
        throw StateError("SpdSolver::solve called before factor");
    }
    if (f.size() != size_) {
        throw IndexError("right-hand side has wrong length");
    }
    if (size_ == 0) {
        return Vector();
    }
    std::lock_guard lock(impl_->mutex);
    return impl_->llt.solve(f);
}

Matrix SpdSolver::solve(const Matrix& f) const {
    if (!factored_) {
        throw StateError("SpdSolver::solve called before factor");
    }
    if (f.rows() != size_) {
        throw IndexError("right-hand side has wrong row count");
    }
    if (size_ == 0) {
        return Matrix(0, f.cols());
    }
    std::lock_guard lock(impl_->mutex);
    return impl_->llt.solve(f);
}

Vector solve_spd(const SparseMatrix& K, const Vector& f) {
    if (K.isCompressed()) {
        return SpdSolver(K).solve(f);
    }
    SparseMatrix A = K;
    A.makeCompressed();
    return SpdSolver(A).solve(f);
}

Vector von_mises(const QuadMesh& mesh, const PlaneStressMaterial& mat, const Vector& displacement,
                 double stiffness_scale) {
    if (displacement.size() != mesh.dof_count()) {
        throw IndexError("displacement has wrong length");
    }
    const Eigen::Matrix3d D = mat.constitutive() * stiffness_scale;
    Vector out(mesh.element_count());
    for (int e = 0; e < mesh.element_count(); ++e) {
        const auto& el = mesh.elements[e];
        Eigen::Matrix<double, 8, 1> ue;
        for (int a = 0; a < 4; ++a) {
            ue(2 * a) = displacement(dof(el[a], 0));
            ue(2 * a + 1) = displacement(dof(el[a], 1));
        }
        const ShapeEval s = evaluate(mesh.corners(e), 0.0, 0.0);
        const Eigen::Vector3d sigma = D * (strain_operator(s) * ue);
        out(e) = std::sqrt(sigma(0) * sigma(0) - sigma(0) * sigma(1) + sigma(1) * sigma(1) + 3.0 * sigma(2) * sigma(2));
    }
    return out;
}

} // namespace cwtopo
