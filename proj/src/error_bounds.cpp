#include "cwtopo/error_bounds.hpp"

#include "cwtopo/errors.hpp"
#include "cwtopo/optimize.hpp"
#include "cwtopo/random.hpp"

#include <Eigen/Eigenvalues>
#include <fmt/format.h>

#include <cmath>
#include <functional>
#include <map>
#include <optional>

namespace cwtopo {

Vector embed_solution(const CondensedAssembler& reduced, const CondensedAssembler& full, const Vector& U_reduced) {
    const auto& topo = full.topology();
    if (&reduced.topology() != &topo && reduced.topology().global_port_count() != topo.global_port_count()) {
        throw ContractError("reduced and full systems have different topologies");
    }
    if (U_reduced.size() != reduced.size()) {
        throw ContractError("reduced solution has wrong length");
    }
    Vector out = Vector::Zero(full.size());
    for (int p = 0; p < topo.global_port_count(); ++p) {
        const int ro = reduced.dofs().offset(p);
        if (ro < 0) continue;
        const int n = reduced.dofs().port_size(p);
        if (n > full.dofs().port_size(p)) {
            throw ContractError(fmt::format("port {} has more reduced than full basis functions", p));
        }
        out.segment(full.dofs().offset(p), n) = U_reduced.segment(ro, n);
    }
    return out;
}

Vector extended_residual(const SparseMatrix& K, const Vector& F, const Vector& U_ext) {
    if (K.rows() != F.size() || K.cols() != U_ext.size()) {
        throw ContractError("residual operands have inconsistent sizes");
    }
    return F - K * U_ext;
}

namespace {

struct Ritz {
    double theta;
    double resid;
};

/// Largest Ritz pair of a symmetric operator by Lanczos with full reorthogonalization.
/// Stops at resid <= tol |theta|; after max_steps accepts resid <= accept |theta|.
std::optional<Ritz> lanczos_largest(const std::function<Vector(const Vector&)>& apply, Eigen::Index n,
                                    int max_steps, double tol, double accept) {
    Rng rng(20240917);
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.uniform(-1.0, 1.0);
    v.normalize();
    const int m = static_cast<int>(std::min<Eigen::Index>(max_steps, n));
    Matrix V(n, m);
    std::vector<double> alpha, beta;
    for (int k = 0; k < m; ++k) {
        V.col(k) = v;
        Vector w = apply(v);
        alpha.push_back(v.dot(w));
        w -= V.leftCols(k + 1) * (V.leftCols(k + 1).transpose() * w);
        w -= V.leftCols(k + 1) * (V.leftCols(k + 1).transpose() * w);
        const double b = w.norm();
        if (k >= 20 && (k + 1) % 10 != 0 && k + 1 != m && k + 1 != n && b > 1e-300) {
            beta.push_back(b);
            v = w / b;
            continue;
        }
        Vector d = Eigen::Map<Vector>(alpha.data(), k + 1);
        Vector e = Eigen::Map<Vector>(beta.data(), k);
        Eigen::SelfAdjointEigenSolver<Matrix> tri;
        tri.computeFromTridiagonal(d, e, Eigen::ComputeEigenvectors);
        const double theta = tri.eigenvalues()[k];
        const double resid = b * std::abs(tri.eigenvectors()(k, k));
        if (resid <= tol * std::abs(theta) || b <= 1e-300 || k + 1 == n) {
            return Ritz{theta, resid};
        }
        if (k + 1 == m && resid <= accept * std::abs(theta)) {
            return Ritz{theta, resid};
        }
        beta.push_back(b);
        v = w / b;
    }
    return std::nullopt;
}

} // namespace

ExtremeEigenvalues extreme_eigenvalues(const SparseMatrix& K, int dense_limit) {
    ExtremeEigenvalues out;
    const Eigen::Index n = K.rows();
    if (n == 0) {
        return out;
    }
    auto dense = [&] {
        Eigen::SelfAdjointEigenSolver<Matrix> eig(Matrix(K), Eigen::EigenvaluesOnly);
        out.min = eig.eigenvalues()[0];
        out.max = eig.eigenvalues()[n - 1];
        out.dense = true;
        return out;
    };
    if (n <= dense_limit) {
        return dense();
    }
    SparseMatrix A = K;
    A.makeCompressed();
    const SpdSolver solver(A);
    const auto hi = lanczos_largest([&](const Vector& x) -> Vector { return K * x; }, n, 400, 1e-10, 1e-6);
    const auto inv = lanczos_largest([&](const Vector& x) { return solver.solve(x); }, n, 400, 1e-10, 1e-6);
    if (!hi || !inv) {
        if (n > 8000) {
            throw NumericError("Lanczos did not converge and the matrix is too large for a dense eigensolve");
        }
        return dense();
    }
    // shifted by the Ritz residual toward the conservative side
    out.max = hi->theta + hi->resid;
    out.min = 1.0 / (inv->theta + inv->resid);
    return out;
}

BoundConstants bound_constants(const CondensedAssembler& full, const SparseMatrix& K, std::span<const double> mu,
                               const SimpParams& simp, const Vector& U_ext, int dense_limit) {
    BoundConstants c;
    const auto ev = extreme_eigenvalues(K, dense_limit);
    if (!(ev.min > 0.0)) {
        throw NotSpdError("condensed matrix is not positive definite");
    }
    c.sigma_min = ev.min;
    c.c1 = std::sqrt(ev.min);
    c.c2 = std::sqrt(ev.max);
    c.nu = U_ext.norm();
    // spectral norm of each instance block, cached by (reference, free-DOF mask)
    std::map<std::pair<int, std::vector<bool>>, double> cache;
    const auto& topo = full.topology();
    for (int i = 0; i < topo.instance_count(); ++i) {
        const int r = topo.instances[i].reference;
        const auto& idx = full.indices(i);
        std::vector<bool> mask(idx.size());
        std::vector<int> keep;
        for (std::size_t a = 0; a < idx.size(); ++a) {
            mask[a] = idx[a] >= 0;
            if (mask[a]) keep.push_back(static_cast<int>(a));
        }
        auto key = std::make_pair(r, mask);
        auto it = cache.find(key);
        if (it == cache.end()) {
            const Matrix& kbar = full.models()[r].schur.kbar;
            Matrix sub(keep.size(), keep.size());
            for (std::size_t b = 0; b < keep.size(); ++b)
                for (std::size_t a = 0; a < keep.size(); ++a) sub(a, b) = kbar(keep[a], keep[b]);
            double norm = 0.0;
            if (!keep.empty()) {
                Eigen::SelfAdjointEigenSolver<Matrix> eig(sub, Eigen::EigenvaluesOnly);
                norm = eig.eigenvalues().cwiseAbs().maxCoeff();
            }
            it = cache.emplace(std::move(key), norm).first;
        }
        c.kappa = std::max(c.kappa, simp_derivative(mu[i], simp) * it->second);
    }
    return c;
}

double solution_error_bound(const Vector& R, const BoundConstants& c) { return c.c2 / c.sigma_min * R.norm(); }

double compliance_error_bound(const Vector& R, const Vector& F, const BoundConstants& c) {
    return c.c2 * F.norm() / (c.c1 * c.sigma_min) * R.norm();
}

double sensitivity_error_bound(const Vector& R, const BoundConstants& c) {
    const double r = R.norm();
    return c.kappa * r * r / (c.sigma_min * c.sigma_min) + 2.0 * c.kappa * c.nu * r / c.sigma_min;
}

ErrorReport error_report(const CondensedAssembler& reduced, const CondensedAssembler& full,
                         std::span<const double> mu, const SimpParams& simp, int dense_limit) {
    const int n = full.topology().instance_count();
    std::vector<double> scale(n);
    for (int i = 0; i < n; ++i) scale[i] = cwtopo::simp(mu[i], simp);
    const SparseMatrix Kf = full.assemble(scale);
    const SparseMatrix Kr = reduced.assemble(scale);
    const Vector U = solve_spd(Kf, full.load());
    const Vector Ur = solve_spd(Kr, reduced.load());
    const Vector Ue = embed_solution(reduced, full, Ur);

    ErrorReport rep;
    const Vector R = extended_residual(Kf, full.load(), Ue);
    rep.residual_norm = R.norm();
    rep.constants = bound_constants(full, Kf, mu, simp, Ue, dense_limit);
    rep.solution_bound = solution_error_bound(R, rep.constants);
    rep.compliance_bound = compliance_error_bound(R, full.load(), rep.constants);
    rep.sensitivity_bound = sensitivity_error_bound(R, rep.constants);

    const Vector e = U - Ue;
    rep.solution_error = std::sqrt(std::max(0.0, e.dot(Kf * e)));
    rep.compliance_error = std::abs(full.load().dot(U) - reduced.load().dot(Ur));
    const Vector gf = compliance_sensitivity(full, U, mu, simp);
    const Vector gr = compliance_sensitivity(reduced, Ur, mu, simp);
    rep.sensitivity_error_max = (gf - gr).cwiseAbs().maxCoeff();
    rep.sensitivity_error_l2 = (gf - gr).norm();
    rep.basis_size = 0;
    for (int p = 0; p < full.topology().global_port_count(); ++p) {
        rep.basis_size = std::max(rep.basis_size, reduced.dofs().port_size(p));
    }
    return rep;
}

} // namespace cwtopo
