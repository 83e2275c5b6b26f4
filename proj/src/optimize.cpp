#include "cwtopo/optimize.hpp"

#include "cwtopo/errors.hpp"
#include "cwtopo/random.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cwtopo {

void SimpParams::validate() const {
    if (!(exponent >= 1.0)) {
        throw ConfigError(fmt::format("SIMP exponent must be >= 1, got {}", exponent));
    }
    if (!(min_ratio > 0.0 && min_ratio < 1.0)) {
        throw ConfigError(fmt::format("E_min / E_0 must lie in (0, 1), got {}", min_ratio));
    }
    if (!(lower_bound > 0.0 && lower_bound < 1.0)) {
        throw ConfigError(fmt::format("density lower bound must lie in (0, 1), got {}", lower_bound));
    }
}

double compliance(const CondensedSystem& system, std::span<const double> bubble_terms) {
    if (!system.solved) {
        throw StateError("compliance requested for an unsolved system");
    }
    double c = system.F.dot(system.U);
    for (double t : bubble_terms) {
        c += t;
    }
    return c;
}

Vector compliance_sensitivity(const CondensedAssembler& assembler, const Vector& U, std::span<const double> mu,
                              const SimpParams& simp) {
    const auto& topo = assembler.topology();
    Vector g(topo.instance_count());
    for (int i = 0; i < topo.instance_count(); ++i) {
        const Vector Ui = assembler.gather(i, U);
        const Matrix& kbar = assembler.models()[topo.instances[i].reference].schur.kbar;
        g[i] = -simp_derivative(mu[i], simp) * Ui.dot(kbar * Ui);
    }
    return g;
}

VolumeConstraint volume_constraint(std::span<const double> mu, std::span<const double> volumes, double v_u) {
    VolumeConstraint out;
    out.gradient = Eigen::Map<const Vector>(volumes.data(), static_cast<Eigen::Index>(volumes.size()));
    out.value = -v_u;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        out.value += mu[i] * volumes[i];
    }
    return out;
}

ForwardModel::ForwardModel(const SystemTopology& topology, std::span<const ReferenceComponent> library,
                           const ModelSet& models, const SimpParams& simp)
    : assembler_(topology, library, models), simp_(simp) {
    simp_.validate();
}

ForwardModel::Evaluation ForwardModel::evaluate(std::span<const double> mu, bool with_gradient) {
    const int n = instance_count();
    if (static_cast<int>(mu.size()) != n) {
        throw ContractError("one density per instance is required");
    }
    std::vector<double> scale(n);
    for (int i = 0; i < n; ++i) {
        scale[i] = cwtopo::simp(mu[i], simp_);
    }
    const SparseMatrix K = assembler_.assemble(scale);
    solver_.factor(K);
    Evaluation ev;
    ev.U = solver_.solve(assembler_.load());
    ev.compliance = assembler_.load().dot(ev.U);
    if (!std::isfinite(ev.compliance)) {
        throw NumericError("compliance is not finite");
    }
    if (with_gradient) {
        ev.gradient = compliance_sensitivity(assembler_, ev.U, mu, simp_);
    }
    return ev;
}

Mma::Mma(Vector lower, Vector upper, MmaOptions options)
    : lower_(std::move(lower)), upper_(std::move(upper)), options_(options) {
    if (lower_.size() != upper_.size() || ((upper_ - lower_).array() <= 0.0).any()) {
        throw ContractError("MMA bounds must satisfy lower < upper");
    }
}

Vector Mma::step(const Vector& x, double f0, const Vector& df0, double g, const Vector& dg) {
    (void)f0;
    const Eigen::Index n = x.size();
    const Vector range = upper_ - lower_;
    ++iteration_;
    if (iteration_ <= 2) {
        low_ = x - options_.asymptote_init * range;
        upp_ = x + options_.asymptote_init * range;
    } else {
        for (Eigen::Index j = 0; j < n; ++j) {
            const double sign = (x[j] - xold1_[j]) * (xold1_[j] - xold2_[j]);
            const double gamma =
                sign < 0 ? options_.asymptote_decrease : (sign > 0 ? options_.asymptote_increase : 1.0);
            low_[j] = x[j] - gamma * (xold1_[j] - low_[j]);
            upp_[j] = x[j] + gamma * (upp_[j] - xold1_[j]);
            low_[j] = std::clamp(low_[j], x[j] - 10.0 * range[j], x[j] - 0.01 * range[j]);
            upp_[j] = std::clamp(upp_[j], x[j] + 0.01 * range[j], x[j] + 10.0 * range[j]);
        }
    }

    Vector p0(n), q0(n), p1(n), q1(n);
    double r1 = g;
    for (Eigen::Index j = 0; j < n; ++j) {
        const double ux = upp_[j] - x[j];
        const double xl = x[j] - low_[j];
        const double reg = 1e-5 / range[j];
        p0[j] = ux * ux * (1.001 * std::max(df0[j], 0.0) + 0.001 * std::max(-df0[j], 0.0) + reg);
        q0[j] = xl * xl * (0.001 * std::max(df0[j], 0.0) + 1.001 * std::max(-df0[j], 0.0) + reg);
        p1[j] = ux * ux * (1.001 * std::max(dg[j], 0.0) + 0.001 * std::max(-dg[j], 0.0) + reg);
        q1[j] = xl * xl * (0.001 * std::max(dg[j], 0.0) + 1.001 * std::max(-dg[j], 0.0) + reg);
        r1 -= p1[j] / ux + q1[j] / xl;
    }

    double move = options_.move_limit;
    for (int attempt = 0; attempt <= options_.max_retries; ++attempt, move *= 0.5) {
        Vector alpha(n), beta(n);
        for (Eigen::Index j = 0; j < n; ++j) {
            alpha[j] = std::max({lower_[j], low_[j] + 0.1 * (x[j] - low_[j]), x[j] - move * range[j]});
            beta[j] = std::min({upper_[j], upp_[j] - 0.1 * (upp_[j] - x[j]), x[j] + move * range[j]});
        }
        auto primal = [&](double lambda) {
            Vector y(n);
            for (Eigen::Index j = 0; j < n; ++j) {
                const double sp = std::sqrt(p0[j] + lambda * p1[j]);
                const double sq = std::sqrt(q0[j] + lambda * q1[j]);
                y[j] = std::clamp((sp * low_[j] + sq * upp_[j]) / (sp + sq), alpha[j], beta[j]);
            }
            return y;
        };
        auto constraint = [&](const Vector& y) {
            double v = r1;
            for (Eigen::Index j = 0; j < n; ++j) {
                v += p1[j] / (upp_[j] - y[j]) + q1[j] / (y[j] - low_[j]);
            }
            return v;
        };
        const double scale = std::max(1.0, std::abs(g)) * options_.kkt_tol;
        Vector y = primal(0.0);
        if (constraint(y) <= scale) {
            xold2_ = xold1_.size() ? xold1_ : x;
            xold1_ = x;
            return y;
        }
        double hi = 1.0;
        while (constraint(primal(hi)) > 0.0 && hi < 1e12) {
            hi *= 10.0;
        }
        if (constraint(primal(hi)) > scale) {
            continue; // infeasible within these move limits
        }
        double lo = 0.0;
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            const double c = constraint(primal(mid));
            if (c > 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
            if (std::abs(c) <= scale || hi - lo <= 1e-15 * hi) break;
        }
        y = primal(hi);
        xold2_ = xold1_.size() ? xold1_ : x;
        xold1_ = x;
        return y;
    }
    throw NumericError(fmt::format("MMA subproblem infeasible after {} move-limit reductions", options_.max_retries));
}

Vector initial_design(int n, const OptimizationOptions& options, const SimpParams& simp) {
    const double mean = options.init_value > 0.0 ? options.init_value : options.volume_fraction;
    Vector mu(n);
    if (options.init == InitMode::Uniform) {
        mu.setConstant(std::clamp(mean, simp.lower_bound, 1.0));
    } else {
        Rng rng(options.seed);
        for (int i = 0; i < n; ++i) {
            mu[i] = std::clamp(mean + 0.05 * rng.normal(), simp.lower_bound, 1.0);
        }
    }
    return mu;
}

PostProcessResult post_process(ForwardModel& model, const Vector& mu, std::span<const double> volumes,
                               double threshold) {
    PostProcessResult out;
    const double lb = model.simp().lower_bound;
    out.binary = mu.unaryExpr([&](double m) { return m < threshold ? lb : 1.0; });
    double used = 0.0;
    double total = 0.0;
    for (Eigen::Index i = 0; i < mu.size(); ++i) {
        used += out.binary[i] >= 1.0 ? volumes[i] : 0.0;
        total += volumes[i];
    }
    out.mass_fraction = used / total;
    try {
        out.compliance = model.evaluate({out.binary.data(), static_cast<std::size_t>(out.binary.size())}, false).compliance;
        out.ok = true;
    } catch (const Error& e) {
        out.ok = false;
        out.message = fmt::format("thresholded design is not load-bearing ({}); keeping the unthresholded design",
                                  e.what());
        out.binary = mu;
        out.compliance = model.evaluate({mu.data(), static_cast<std::size_t>(mu.size())}, false).compliance;
    }
    return out;
}

OptimizationResult run_optimization(ForwardModel& model, std::span<const double> volumes,
                                    const OptimizationOptions& options) {
    const int n = model.instance_count();
    if (static_cast<int>(volumes.size()) != n) {
        throw ContractError("one volume per instance is required");
    }
    if (!(options.volume_fraction > 0.0 && options.volume_fraction <= 1.0)) {
        throw ConfigError(fmt::format("volume fraction must lie in (0, 1], got {}", options.volume_fraction));
    }
    const SimpParams& simp = model.simp();
    const double v_t = std::accumulate(volumes.begin(), volumes.end(), 0.0);
    const double v_u = options.volume_fraction * v_t;

    OptimizationResult res;
    Vector mu = initial_design(n, options, simp);
    Mma mma(Vector::Constant(n, simp.lower_bound), Vector::Ones(n), options.mma);
    std::vector<double> changes;
    double c0 = 0.0;
    for (int it = 0; it < options.max_iters; ++it) {
        const auto ev = model.evaluate({mu.data(), static_cast<std::size_t>(n)});
        if (it == 0) {
            c0 = ev.compliance;
            res.initial_compliance = c0;
        }
        res.history.push_back(ev.compliance);
        const auto vc = volume_constraint({mu.data(), static_cast<std::size_t>(n)}, volumes, v_u);
        const Vector next = mma.step(mu, ev.compliance / c0, ev.gradient / c0, vc.value / v_t, vc.gradient / v_t);
        changes.push_back((next - mu).norm() / std::sqrt(static_cast<double>(n)));
        mu = next;
        res.iterations = it + 1;
        const int w = std::min<int>(options.window, static_cast<int>(changes.size()));
        const double mean = std::accumulate(changes.end() - w, changes.end(), 0.0) / w;
        res.stop_trace.push_back(mean);
        if (mean < options.stop_tol) {
            res.converged = true;
            break;
        }
    }
    if (!res.converged) {
        res.messages.push_back(
            fmt::format("warning: stopping rule not met after {} iterations; returning last iterate", res.iterations));
    }
    res.mu = mu;
    res.final_compliance = model.evaluate({mu.data(), static_cast<std::size_t>(n)}, false).compliance;
    res.history.push_back(res.final_compliance);
    res.volume_violation = volume_constraint({mu.data(), static_cast<std::size_t>(n)}, volumes, v_u).value / v_t;

    const auto post = post_process(model, mu, volumes, options.threshold);
    res.binary = post.binary;
    res.post_compliance = post.compliance;
    res.post_mass_fraction = post.mass_fraction;
    res.post_ok = post.ok;
    if (!post.message.empty()) {
        res.messages.push_back(post.message);
    }
    return res;
}

} // namespace cwtopo
