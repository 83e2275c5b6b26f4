#include "cwtopo/commands.hpp"
#include "cwtopo/errors.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <functional>
#include <map>

namespace {

enum ExitCode { Ok = 0, Failure = 1, ConfigFailure = 2, NumericFailure = 3 };

int run(const std::function<int()>& command) {
    try {
        return command();
    } catch (const cwtopo::ConfigError& e) {
        fmt::print(stderr, "config error: {}\n", e.what());
        return ConfigFailure;
    } catch (const cwtopo::LibraryError& e) {
        fmt::print(stderr, "library error: {}\n", e.what());
        return ConfigFailure;
    } catch (const cwtopo::TopologyError& e) {
        fmt::print(stderr, "topology error: {}\n", e.what());
        return ConfigFailure;
    } catch (const cwtopo::GeometryError& e) {
        fmt::print(stderr, "geometry error: {}\n", e.what());
        return ConfigFailure;
    } catch (const cwtopo::NotSpdError& e) {
        fmt::print(stderr, "numeric failure: {}\n", e.what());
        return NumericFailure;
    } catch (const cwtopo::NumericError& e) {
        fmt::print(stderr, "numeric failure: {}\n", e.what());
        return NumericFailure;
    } catch (const cwtopo::LiftingError& e) {
        fmt::print(stderr, "numeric failure: {}\n", e.what());
        return NumericFailure;
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return Failure;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Component-wise reduced-order topology optimization of 2D lattices"};
    app.require_subcommand(1);

    cwtopo::CommandOptions opts;
    std::uint64_t seed = 0;
    int threads = 1;
    int basis_size = 0;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", opts.config_path, "run configuration (JSON with comments)")->check(CLI::ExistingFile);
        sub->add_option("--library", opts.library_path, "trained library file (default OUT/library.cwlb)");
        sub->add_option("--out", opts.out_dir, "output directory")->capture_default_str();
        sub->add_option("--seed", seed, "overrides the training and optimizer seeds");
        sub->add_option("--threads", threads, "worker threads for per-component work");
        sub->add_option("--basis-size", basis_size, "port basis size (train: POD size; otherwise online size)");
        sub->add_flag("!--no-fields", opts.write_fields, "skip VTK field export");
    };

    std::map<std::string, std::function<int(const cwtopo::CommandOptions&)>> commands{
        {"train", cwtopo::cmd_train},     {"solve", cwtopo::cmd_solve},   {"optimize", cwtopo::cmd_optimize},
        {"compare", cwtopo::cmd_compare}, {"verify", cwtopo::cmd_verify},
    };
    std::map<std::string, std::string> help{
        {"train", "pairwise training and POD; writes the trained library"},
        {"solve", "condensed solve at a fixed density field"},
        {"optimize", "SIMP compliance minimization with MMA"},
        {"compare", "FOM vs CWFOM vs CWROM timing and error table"},
        {"verify", "a posteriori error bounds against the full-basis model"},
    };
    std::map<std::string, CLI::App*> subs;
    for (const auto& [name, fn] : commands) {
        subs[name] = app.add_subcommand(name, help[name]);
        common(subs[name]);
    }
    subs["solve"]->add_option("--density", opts.density_path, "density file, one value per component");
    subs["compare"]->add_flag("--cwfom-reference", opts.cwfom_reference,
                              "use the full-basis condensed model as the error reference");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? Ok : ConfigFailure;
    }

    for (const auto& [name, sub] : subs) {
        if (!sub->parsed()) continue;
        if (sub->count("--seed")) opts.seed = seed;
        if (sub->count("--threads")) opts.threads = threads;
        if (sub->count("--basis-size")) opts.basis_size = basis_size;
        return run([&] { return commands.at(name)(opts); });
    }
    return Failure;
}
