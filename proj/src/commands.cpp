#include "cwtopo/commands.hpp"

#include "cwtopo/error_bounds.hpp"
#include "cwtopo/errors.hpp"
#include "cwtopo/fom.hpp"
#include "cwtopo/library_file.hpp"
#include "cwtopo/optimize.hpp"
#include "cwtopo/random.hpp"
#include "cwtopo/vtk.hpp"

#include <fmt/format.h>
#include <fmt/os.h>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

namespace cwtopo {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string out_path(const CommandOptions& o, const std::string& name) {
    std::filesystem::create_directories(o.out_dir);
    return (std::filesystem::path(o.out_dir) / name).string();
}

std::string library_path(const CommandOptions& o) {
    return o.library_path.empty() ? out_path(o, "library.cwlb") : o.library_path;
}

std::vector<double> scales(std::span<const double> mu, const SimpParams& simp) {
    std::vector<double> s(mu.size());
    for (std::size_t i = 0; i < mu.size(); ++i) s[i] = cwtopo::simp(mu[i], simp);
    return s;
}

double uniform_density(const RunConfig& c) {
    return c.online.density > 0.0 ? c.online.density : c.optimizer.volume_fraction;
}

/// One density per line, or the density column of an optimize density.csv.
std::vector<double> read_densities(const std::string& path, int n) {
    std::ifstream in(path);
    if (!in) throw ConfigError(fmt::format("cannot open density file '{}'", path));
    std::vector<double> mu;
    std::string line;
    int column = 0;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
        if (first && cells.size() > 1 && cells[0] == "component") {
            const auto it = std::find(cells.begin(), cells.end(), "density");
            if (it == cells.end()) throw ConfigError(fmt::format("density file '{}' has no density column", path));
            column = static_cast<int>(it - cells.begin());
            first = false;
            continue;
        }
        first = false;
        if (column >= static_cast<int>(cells.size())) {
            throw ConfigError(fmt::format("density file '{}' has a short row: '{}'", path, line));
        }
        try {
            std::size_t used = 0;
            mu.push_back(std::stod(cells[column], &used));
            if (cells[column].find_first_not_of(" \t\r", used) != std::string::npos) throw std::invalid_argument("");
        } catch (const std::exception&) {
            throw ConfigError(fmt::format("density file '{}' contains a non-numeric entry '{}'", path, cells[column]));
        }
    }
    if (static_cast<int>(mu.size()) != n) {
        throw ConfigError(fmt::format("density file has {} values, the lattice has {} components", mu.size(), n));
    }
    for (double m : mu) {
        if (!(m > 0.0 && m <= 1.0)) throw ConfigError(fmt::format("density {} outside (0, 1]", m));
    }
    return mu;
}

void write_fields(const CommandOptions& o, const std::string& sub, const CondensedAssembler& assembler,
                  const Vector& U, std::span<const double> mu, const SimpParams& simp,
                  std::span<const ReferenceComponent> components) {
    const auto fields = reconstruct_field(assembler, U);
    const auto pieces = field_pieces(assembler.topology(), components, fields, mu, simp);
    export_fields(out_path(o, sub), pieces);
}

} // namespace

RunConfig resolve_config(const CommandOptions& o, bool training) {
    RunConfig c = o.config_path.empty() ? RunConfig{} : load_config(o.config_path);
    if (o.seed) {
        c.training.seed = *o.seed;
        c.optimizer.seed = *o.seed;
    }
    if (o.threads) {
        if (*o.threads < 1) throw ConfigError("--threads must be positive");
        c.threads = *o.threads;
    }
    if (o.basis_size) {
        if (*o.basis_size < 1) throw ConfigError("--basis-size must be positive");
        if (training) c.pod.size = *o.basis_size;
        else c.online.basis_size = *o.basis_size;
    }
    c.training.simp = c.simp;
    c.training.threads = c.threads;
    c.validate();
    return c;
}

SystemTopology lattice_topology(const RunConfig& config, const TrainedLibrary& library) {
    SystemTopology topo = build_lattice(config.lattice, library.components);
    library.check_covers(topo);
    return topo;
}

int online_basis_size(const RunConfig& config, const TrainedLibrary& library) {
    const int n = config.online.basis_size > 0 ? config.online.basis_size : library.default_size();
    if (n > library.max_size()) {
        throw ConfigError(fmt::format("basis size {} exceeds the port dimension {}", n, library.max_size()));
    }
    return n;
}

std::vector<CompareRow> compare_models(const RunConfig& c, const TrainedLibrary& lib, bool fom_reference) {
    const SystemTopology topo = lattice_topology(c, lib);
    const std::span<const ReferenceComponent> comps(lib.components);
    const std::vector<double> mu(topo.instance_count(), uniform_density(c));
    const auto s = scales(mu, c.simp);
    const int reps = c.compare.repetitions;
    std::vector<CompareRow> rows;

    auto time_condensed = [&](const CondensedAssembler& a, Vector& U) {
        std::vector<double> t;
        for (int r = 0; r < reps; ++r) {
            const auto t0 = Clock::now();
            const SparseMatrix K = a.assemble(s);
            U = solve_spd(K, a.load());
            t.push_back(seconds_since(t0));
        }
        return median(t);
    };

    std::vector<Vector> reference;
    double t_ref = 0.0;
    if (fom_reference) {
        const FomModel fom = build_fom(topo, comps);
        std::vector<double> t;
        FomSolution sol;
        for (int r = 0; r < reps; ++r) {
            const auto t0 = Clock::now();
            sol = solve_fom(fom, topo, comps, s);
            t.push_back(seconds_since(t0));
        }
        t_ref = median(t);
        reference = restrict_to_instances(fom, topo, sol.displacement);
        rows.push_back({"FOM", 0, static_cast<int>(fom.dof_count() - fom.fixed_dofs.size()), t_ref, 1.0, 0.0});
    }

    {
        const ModelSet& full = lib.models;
        const CondensedAssembler a(topo, comps, full);
        Vector U;
        const double t = time_condensed(a, U);
        const auto fields = reconstruct_field(a, U);
        if (!fom_reference) {
            reference = fields;
            t_ref = t;
        }
        rows.push_back({"CWFOM", lib.max_size(), a.size(), t, t / t_ref,
                        relative_l2_error(topo, comps, reference, fields)});
    }
    for (int n : c.compare.basis_sizes) {
        if (n > lib.max_size()) {
            throw ConfigError(fmt::format("compare basis size {} exceeds the port dimension {}", n, lib.max_size()));
        }
        const ModelSet models = lib.models_for(n);
        const CondensedAssembler a(topo, comps, models);
        Vector U;
        const double t = time_condensed(a, U);
        const auto fields = reconstruct_field(a, U);
        rows.push_back({"CWROM", n, a.size(), t, t / t_ref, relative_l2_error(topo, comps, reference, fields)});
    }
    return rows;
}

std::string format_compare_table(const std::vector<CompareRow>& rows) {
    std::string s = fmt::format("{:<7} {:>5} {:>9} {:>12} {:>12} {:>12}\n", "model", "size", "dofs", "t [s]", "t_rel",
                                "eps_rel");
    for (const auto& r : rows) {
        s += fmt::format("{:<7} {:>5} {:>9} {:>12.4e} {:>12.4e} {:>12.4e}\n", r.model, r.size, r.dofs, r.time,
                         r.relative_time, r.error);
    }
    return s;
}

int cmd_train(const CommandOptions& o) {
    const RunConfig c = resolve_config(o, true);
    const auto t0 = Clock::now();
    const TrainedLibrary lib = train_library(c.geometry, c.material, c.training, c.pod);
    const double t_train = seconds_since(t0);
    const std::string path = library_path(o);
    write_library(lib, path);

    fmt::print("trained {} reference components, {} pair configurations x {} samples in {:.2f} s\n",
               lib.components.size(), lib.pairs.size(), c.training.samples, t_train);
    for (const auto& comp : lib.components) {
        fmt::print("  {:<10} {:>6} elements {:>7} dofs\n", comp.name, comp.mesh.element_count(), comp.mesh.dof_count());
    }
    for (const auto& [cls, space] : lib.spaces) {
        fmt::print("port class {}: dimension {}, snapshot rank {}, default size {}, POD defect {:.3e}\n", cls,
                   space.dimension(), space.rank, space.default_size, lib.pod_defect.at(cls));
        const double total = space.singular_values.squaredNorm();
        double tail = total;
        fmt::print("  {:>4} {:>12} {:>12} {:>12}\n", "k", "sigma_k", "sigma_k/s_1", "tail");
        const int shown = std::min<int>(24, static_cast<int>(space.singular_values.size()));
        for (int k = 0; k < shown; ++k) {
            const double sv = space.singular_values[k];
            tail -= sv * sv;
            fmt::print("  {:>4} {:>12.4e} {:>12.4e} {:>12.4e}\n", k + 1, sv, sv / space.singular_values[0],
                       std::max(tail, 0.0) / total);
        }
    }
    for (const auto& w : lib.warnings) fmt::print(stderr, "warning: {}\n", w);
    fmt::print("library written to {}\n", path);
    return 0;
}

int cmd_solve(const CommandOptions& o) {
    const RunConfig c = resolve_config(o, false);
    const TrainedLibrary lib = read_library(library_path(o));
    const SystemTopology topo = lattice_topology(c, lib);
    const std::span<const ReferenceComponent> comps(lib.components);
    const int n = online_basis_size(c, lib);
    const std::vector<double> mu = o.density_path.empty()
                                       ? std::vector<double>(topo.instance_count(), uniform_density(c))
                                       : read_densities(o.density_path, topo.instance_count());
    if (std::all_of(mu.begin(), mu.end(), [&](double m) { return m <= c.simp.lower_bound; })) {
        fmt::print(stderr, "warning: every density is at the lower bound; the system is nearly singular\n");
    }
    const ModelSet models = lib.models_for(n);
    const CondensedAssembler a(topo, comps, models);

    const auto t0 = Clock::now();
    CondensedSystem sys = assemble_condensed(a, scales(mu, c.simp));
    const double t_asm = seconds_since(t0);
    const auto t1 = Clock::now();
    solve_condensed(sys);
    const double t_solve = seconds_since(t1);
    const auto t2 = Clock::now();
    const auto fields = reconstruct_field(a, sys.U);
    const double t_rec = seconds_since(t2);
    const double comp = compliance(sys);

    fmt::print("components {}, basis size {}, condensed dofs {}\n", topo.instance_count(), n, a.size());
    fmt::print("compliance {:.10e} N m\n", comp);
    fmt::print("time assembly {:.4e} s, solve {:.4e} s, reconstruct {:.4e} s\n", t_asm, t_solve, t_rec);
    {
        auto f = fmt::output_file(out_path(o, "solve_summary.txt"));
        f.print("components {}\nbasis_size {}\ndofs {}\ncompliance {:.17g}\n", topo.instance_count(), n, a.size(),
                comp);
        f.print("time_assembly {:.6e}\ntime_solve {:.6e}\ntime_reconstruct {:.6e}\n", t_asm, t_solve, t_rec);
    }
    if (o.write_fields) {
        export_fields(out_path(o, "fields"), field_pieces(topo, comps, fields, mu, c.simp));
    }
    return 0;
}

int cmd_optimize(const CommandOptions& o) {
    const RunConfig c = resolve_config(o, false);
    const TrainedLibrary lib = read_library(library_path(o));
    const SystemTopology topo = lattice_topology(c, lib);
    const std::span<const ReferenceComponent> comps(lib.components);
    const int n = online_basis_size(c, lib);
    const ModelSet models = lib.models_for(n);
    ForwardModel model(topo, comps, models, c.simp);
    const auto volumes = instance_volumes(topo, comps);

    const auto t0 = Clock::now();
    const OptimizationResult res = run_optimization(model, volumes, c.optimizer);
    const double t_opt = seconds_since(t0);

    fmt::print("components {}, basis size {}, condensed dofs {}\n", topo.instance_count(), n, model.assembler().size());
    fmt::print("initial compliance   {:.6e} N m\n", res.initial_compliance);
    fmt::print("optimized compliance {:.6e} N m\n", res.final_compliance);
    fmt::print("post-processed       {:.6e} N m (mass fraction {:.4f})\n", res.post_compliance,
               res.post_mass_fraction);
    fmt::print("iterations {} ({}), volume violation {:.3e}, time {:.2f} s\n", res.iterations,
               res.converged ? "stopping rule met" : "iteration limit", res.volume_violation, t_opt);
    for (const auto& m : res.messages) fmt::print(stderr, "{}\n", m);

    {
        auto f = fmt::output_file(out_path(o, "density.csv"));
        f.print("component,density,binary\n");
        for (Eigen::Index i = 0; i < res.mu.size(); ++i) {
            f.print("{},{:.17g},{:.17g}\n", i, res.mu[i], res.binary[i]);
        }
    }
    {
        auto f = fmt::output_file(out_path(o, "history.csv"));
        f.print("iteration,compliance,stop_measure\n");
        for (std::size_t k = 0; k < res.history.size(); ++k) {
            const std::string stop = k < res.stop_trace.size() ? fmt::format("{:.17g}", res.stop_trace[k]) : "";
            f.print("{},{:.17g},{}\n", k, res.history[k], stop);
        }
    }
    {
        auto f = fmt::output_file(out_path(o, "optimize_summary.txt"));
        f.print("basis_size {}\ninitial_compliance {:.17g}\nfinal_compliance {:.17g}\npost_compliance {:.17g}\n", n,
                res.initial_compliance, res.final_compliance, res.post_compliance);
        f.print("post_mass_fraction {:.17g}\niterations {}\nconverged {}\ntime {:.6e}\n", res.post_mass_fraction,
                res.iterations, res.converged, t_opt);
    }
    if (o.write_fields) {
        const std::vector<double> mu(res.binary.data(), res.binary.data() + res.binary.size());
        const auto ev = model.evaluate(mu, false);
        write_fields(o, "fields", model.assembler(), ev.U, mu, c.simp, comps);
    }
    return 0;
}

int cmd_compare(const CommandOptions& o) {
    const RunConfig c = resolve_config(o, false);
    const TrainedLibrary lib = read_library(library_path(o));
    const bool fom = c.compare.full_order && !o.cwfom_reference;
    const auto rows = compare_models(c, lib, fom);
    fmt::print("reference: {}\n{}", fom ? "FOM" : "CWFOM", format_compare_table(rows));
    auto f = fmt::output_file(out_path(o, "compare.csv"));
    f.print("model,size,dofs,time,relative_time,relative_error\n");
    for (const auto& r : rows) {
        f.print("{},{},{},{:.6e},{:.6e},{:.6e}\n", r.model, r.size, r.dofs, r.time, r.relative_time, r.error);
    }
    return 0;
}

int cmd_verify(const CommandOptions& o) {
    const RunConfig c = resolve_config(o, false);
    const TrainedLibrary lib = read_library(library_path(o));
    const SystemTopology topo = lattice_topology(c, lib);
    const std::span<const ReferenceComponent> comps(lib.components);
    const CondensedAssembler full(topo, comps, lib.models);

    std::vector<std::vector<double>> designs;
    designs.emplace_back(topo.instance_count(), uniform_density(c));
    Rng rng(c.optimizer.seed, 7);
    for (int d = 0; d < c.verify.random_densities; ++d) {
        std::vector<double> mu(topo.instance_count());
        for (double& m : mu) m = rng.uniform(c.simp.lower_bound, 1.0);
        designs.push_back(std::move(mu));
    }

    int violations = 0;
    auto f = fmt::output_file(out_path(o, "verify.csv"));
    f.print("design,size,residual,solution_bound,solution_error,compliance_bound,compliance_error,"
            "sensitivity_bound,sensitivity_error_max,sensitivity_error_l2,dominated\n");
    fmt::print("{:>6} {:>5} {:>11} {:>11} {:>11} {:>11} {:>11} {:>11} {:>11} {:>4}\n", "design", "size", "|R|",
               "bound_u", "err_u", "bound_c", "err_c", "bound_g", "err_g", "ok");
    for (std::size_t d = 0; d < designs.size(); ++d) {
        for (int n : c.verify.basis_sizes) {
            if (n > lib.max_size()) {
                throw ConfigError(fmt::format("verify basis size {} exceeds the port dimension {}", n, lib.max_size()));
            }
            const ModelSet models = lib.models_for(n);
            const CondensedAssembler reduced(topo, comps, models);
            const auto rep = error_report(reduced, full, designs[d], c.simp, c.verify.dense_limit);
            const bool ok = rep.dominated();
            violations += ok ? 0 : 1;
            fmt::print("{:>6} {:>5} {:>11.3e} {:>11.3e} {:>11.3e} {:>11.3e} {:>11.3e} {:>11.3e} {:>11.3e} {:>4}\n", d,
                       n, rep.residual_norm, rep.solution_bound, rep.solution_error, rep.compliance_bound,
                       rep.compliance_error, rep.sensitivity_bound, rep.sensitivity_error_max, ok ? "yes" : "NO");
            f.print("{},{},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{}\n", d, n, rep.residual_norm,
                    rep.solution_bound, rep.solution_error, rep.compliance_bound, rep.compliance_error,
                    rep.sensitivity_bound, rep.sensitivity_error_max, rep.sensitivity_error_l2, ok ? 1 : 0);
        }
    }
    fmt::print("bound violations: {}\n", violations);
    return 0;
}

} // namespace cwtopo
