#pragma once

// SIMP compliance minimization over per-component densities with the method
// of moving asymptotes.

#include "cwtopo/condensation.hpp"
#include "cwtopo/simp.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cwtopo {

/// c = F^T U (+ sum_i f_i^T b_i). Throws StateError for an unsolved system.
double compliance(const CondensedSystem& system, std::span<const double> bubble_terms = {});

/// dc/dmu_i = -s'(mu_i) U_i^T Kbar^i U_i.
Vector compliance_sensitivity(const CondensedAssembler& assembler, const Vector& U, std::span<const double> mu,
                              const SimpParams& simp);

struct VolumeConstraint {
    double value = 0.0;
    Vector gradient;
};

/// g0 = sum_i mu_i v_i - v_u.
VolumeConstraint volume_constraint(std::span<const double> mu, std::span<const double> volumes, double v_u);

/// Condensed model evaluated repeatedly for different densities; the
/// symbolic factorization is reused between evaluations.
class ForwardModel {
public:
    ForwardModel(const SystemTopology& topology, std::span<const ReferenceComponent> library, const ModelSet& models,
                 const SimpParams& simp);

    struct Evaluation {
        double compliance = 0.0;
        Vector gradient;
        Vector U;
    };

    Evaluation evaluate(std::span<const double> mu, bool with_gradient = true);
    [[nodiscard]] const CondensedAssembler& assembler() const { return assembler_; }
    [[nodiscard]] const SimpParams& simp() const { return simp_; }
    [[nodiscard]] int instance_count() const { return assembler_.topology().instance_count(); }

private:
    CondensedAssembler assembler_;
    SimpParams simp_;
    SpdSolver solver_;
};

struct MmaOptions {
    double asymptote_init = 0.5;
    double asymptote_increase = 1.2;
    double asymptote_decrease = 0.7;
    double move_limit = 0.2;
    double kkt_tol = 1e-9;
    int max_retries = 5;
};

/// MMA for min f0(x) subject to one constraint g(x) <= 0 and box bounds.
class Mma {
public:
    Mma(Vector lower, Vector upper, MmaOptions options = {});

    /// Next iterate from the current point and first-order data.
    Vector step(const Vector& x, double f0, const Vector& df0, double g, const Vector& dg);
    [[nodiscard]] int iteration() const { return iteration_; }

private:
    Vector lower_, upper_;
    MmaOptions options_;
    Vector low_, upp_, xold1_, xold2_;
    int iteration_ = 0;
};

enum class InitMode { Uniform, Random };

struct OptimizationOptions {
    double volume_fraction = 0.6; // v_u / v_t
    double stop_tol = 1e-6;
    int window = 10;
    int max_iters = 500;
    double threshold = 0.7;
    InitMode init = InitMode::Uniform;
    double init_value = 0.0; // 0: the volume fraction
    std::uint64_t seed = 1;
    MmaOptions mma;
};

struct OptimizationResult {
    Vector mu;
    std::vector<double> history;    // compliance at each evaluated iterate
    std::vector<double> stop_trace; // running mean of |dmu|_2 / sqrt(n)
    int iterations = 0;
    bool converged = false;
    double initial_compliance = 0.0;
    double final_compliance = 0.0;
    double volume_violation = 0.0; // g0 / v_t at the final iterate
    Vector binary;
    double post_compliance = 0.0;
    double post_mass_fraction = 0.0;
    bool post_ok = false;
    std::vector<std::string> messages;
};

Vector initial_design(int n, const OptimizationOptions& options, const SimpParams& simp);

OptimizationResult run_optimization(ForwardModel& model, std::span<const double> volumes,
                                    const OptimizationOptions& options);

struct PostProcessResult {
    Vector binary;
    double compliance = 0.0;
    double mass_fraction = 0.0;
    bool ok = false;
    std::string message;
};

/// mu < threshold becomes mu_l, the rest 1; compliance is recomputed.
PostProcessResult post_process(ForwardModel& model, const Vector& mu, std::span<const double> volumes,
                               double threshold);

} // namespace cwtopo
