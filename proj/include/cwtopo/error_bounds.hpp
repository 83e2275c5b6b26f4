#pragma once

// Residual-based a posteriori error bounds for the port-reduced condensed
// model, measured against the full-basis condensed model.

#include "cwtopo/condensation.hpp"
#include "cwtopo/simp.hpp"

namespace cwtopo {

/// Zero-pads a reduced solution into the full-basis coordinates. Requires the
/// reduced port bases to be prefixes of the full ones.
Vector embed_solution(const CondensedAssembler& reduced, const CondensedAssembler& full, const Vector& U_reduced);

/// R = F - K U_ext.
Vector extended_residual(const SparseMatrix& K, const Vector& F, const Vector& U_ext);

struct ExtremeEigenvalues {
    double min = 0.0;
    double max = 0.0;
    bool dense = false;
};

/// Extreme eigenvalues of an SPD matrix: dense for n <= dense_limit, otherwise
/// Lanczos (K for the largest, K^{-1} through a factorization for the smallest)
/// with a dense fallback when Lanczos does not converge. Lanczos estimates are
/// widened by the Ritz residual (max up, min down).
ExtremeEigenvalues extreme_eigenvalues(const SparseMatrix& K, int dense_limit = 2000);

struct BoundConstants {
    double sigma_min = 0.0;
    double c1 = 0.0;
    double c2 = 0.0;
    double kappa = 0.0;
    double nu = 0.0;
};

/// kappa = max_i s'(mu_i) |Kbar^i restricted to non-Dirichlet DOFs|_2, nu = |U_ext|_2.
BoundConstants bound_constants(const CondensedAssembler& full, const SparseMatrix& K, std::span<const double> mu,
                               const SimpParams& simp, const Vector& U_ext, int dense_limit = 2000);

double solution_error_bound(const Vector& R, const BoundConstants& c);
double compliance_error_bound(const Vector& R, const Vector& F, const BoundConstants& c);
double sensitivity_error_bound(const Vector& R, const BoundConstants& c);

struct ErrorReport {
    int basis_size = 0;
    double residual_norm = 0.0;
    BoundConstants constants;
    double solution_bound = 0.0;
    double compliance_bound = 0.0;
    double sensitivity_bound = 0.0;
    double solution_error = 0.0;          // energy norm
    double compliance_error = 0.0;        // absolute
    double sensitivity_error_max = 0.0;   // max over components
    double sensitivity_error_l2 = 0.0;

    [[nodiscard]] bool dominated() const {
        return solution_bound >= solution_error && compliance_bound >= compliance_error &&
               sensitivity_bound >= sensitivity_error_max;
    }
};

/// Bounds and true errors of the reduced model against the full-basis model at mu.
ErrorReport error_report(const CondensedAssembler& reduced, const CondensedAssembler& full,
                         std::span<const double> mu, const SimpParams& simp, int dense_limit = 2000);

} // namespace cwtopo
