#include "cwtopo/config.hpp"

#include "cwtopo/errors.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace cwtopo {

using nlohmann::json;

namespace {

/// Reads fields of one JSON object and rejects keys nobody asked for.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) {
            throw ConfigError(fmt::format("'{}' must be an object", path_));
        }
    }
    ~Section() noexcept(false) {
        if (std::uncaught_exceptions() > 0) return;
        for (const auto& [key, value] : j_.items()) {
            if (!seen_.contains(key)) {
                throw ConfigError(fmt::format("unknown key '{}.{}'", path_, key));
            }
        }
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(fmt::format("'{}.{}': {}", path_, key, e.what()));
        }
    }
    bool has(const char* key) const { return j_.contains(key); }
    const json* child(const char* key) {
        seen_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }
    const std::string& path() const { return path_; }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

BoundarySelector read_selector(const json& j, const std::string& path, Vec2* traction) {
    Section s(j, path);
    std::string side = "left";
    BoundarySelector sel;
    s.get("side", side);
    s.get("index", sel.index);
    sel.side = parse_side(side);
    if (traction) {
        std::vector<double> t{0.0, 0.0};
        s.get("traction", t);
        if (t.size() != 2) {
            throw ConfigError(fmt::format("'{}.traction' needs two entries", path));
        }
        *traction = Vec2(t[0], t[1]);
    }
    return sel;
}

void read_lattice(const json& j, LatticeSpec& spec) {
    Section s(j, "lattice");
    std::string preset;
    s.get("preset", preset);
    if (!preset.empty()) {
        if (preset == "small_cantilever") spec = small_cantilever();
        else if (preset == "large_cantilever") spec = large_cantilever();
        else if (preset == "ring") spec = ring_lattice();
        else throw ConfigError(fmt::format("unknown lattice preset '{}'", preset));
    }
    s.get("columns", spec.columns);
    s.get("rows", spec.rows);
    if (const json* st = s.child("stubs")) {
        Section ss(*st, "lattice.stubs");
        ss.get("left", spec.stub_left);
        ss.get("right", spec.stub_right);
        ss.get("bottom", spec.stub_bottom);
        ss.get("top", spec.stub_top);
    }
    if (const json* d = s.child("dirichlet")) {
        if (!d->is_array()) throw ConfigError("'lattice.dirichlet' must be an array");
        spec.dirichlet.clear();
        for (std::size_t k = 0; k < d->size(); ++k) {
            spec.dirichlet.push_back(read_selector((*d)[k], fmt::format("lattice.dirichlet[{}]", k), nullptr));
        }
    }
    if (const json* l = s.child("loads")) {
        if (!l->is_array()) throw ConfigError("'lattice.loads' must be an array");
        spec.loads.clear();
        for (std::size_t k = 0; k < l->size(); ++k) {
            PortLoad load;
            load.where = read_selector((*l)[k], fmt::format("lattice.loads[{}]", k), &load.traction);
            spec.loads.push_back(load);
        }
    }
}

template <typename Fn>
void with_section(Section& parent, const char* key, Fn&& fn) {
    if (const json* c = parent.child(key)) {
        Section s(*c, key);
        fn(s);
    }
}

void require(bool ok, const std::string& message) {
    if (!ok) throw ConfigError(message);
}

} // namespace

void RunConfig::validate() const {
    geometry.validate();
    try {
        material.validate();
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    simp.validate();
    require(lattice.columns >= 1 && lattice.rows >= 1, "lattice needs at least one joint in each direction");
    for (const auto& load : lattice.loads) {
        require(load.traction.allFinite(), "tractions must be finite");
    }
    require(training.samples >= 1, "training.samples must be positive");
    require(training.eta >= 0.0, "training.eta must be non-negative");
    require(pod.size >= 0, "training.basis_size must be non-negative");
    require(pod.energy_tol > 0.0 && pod.energy_tol < 1.0, "training.energy_tol must lie in (0, 1)");
    require(optimizer.volume_fraction > 0.0 && optimizer.volume_fraction <= 1.0,
            "optimizer.volume_fraction must lie in (0, 1]");
    require(optimizer.stop_tol > 0.0, "optimizer.stop_tol must be positive");
    require(optimizer.window >= 1, "optimizer.window must be positive");
    require(optimizer.max_iters >= 1, "optimizer.max_iters must be positive");
    require(optimizer.threshold > 0.0 && optimizer.threshold <= 1.0, "optimizer.threshold must lie in (0, 1]");
    require(optimizer.init_value >= 0.0 && optimizer.init_value <= 1.0, "optimizer.init_value must lie in [0, 1]");
    require(optimizer.mma.move_limit > 0.0 && optimizer.mma.move_limit <= 1.0, "optimizer.move_limit must lie in (0, 1]");
    require(online.basis_size >= 0, "online.basis_size must be non-negative");
    require(online.density >= 0.0 && online.density <= 1.0, "online.density must lie in [0, 1]");
    require(compare.repetitions >= 1, "compare.repetitions must be positive");
    for (int n : compare.basis_sizes) require(n >= 1, "compare.basis_sizes must be positive");
    for (int n : verify.basis_sizes) require(n >= 1, "verify.basis_sizes must be positive");
    require(verify.random_densities >= 0, "verify.random_densities must be non-negative");
    require(threads >= 1, "threads must be positive");
}

RunConfig parse_config(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw ConfigError(fmt::format("config is not valid JSON: {}", e.what()));
    }
    RunConfig cfg;
    {
        Section root(doc, "config");
        with_section(root, "geometry", [&](Section& s) {
            s.get("port_length", cfg.geometry.port_length);
            s.get("strut_length", cfg.geometry.strut_length);
            s.get("port_nodes", cfg.geometry.port_nodes);
            s.get("strut_axial_elements", cfg.geometry.strut_axial_elements);
            s.get("joint_radial_elements", cfg.geometry.joint_radial_elements);
            s.get("thickness", cfg.geometry.thickness);
        });
        with_section(root, "material", [&](Section& s) {
            s.get("young_modulus", cfg.material.young_modulus);
            s.get("poisson_ratio", cfg.material.poisson_ratio);
        });
        if (const json* l = root.child("lattice")) {
            read_lattice(*l, cfg.lattice);
        }
        with_section(root, "training", [&](Section& s) {
            s.get("samples", cfg.training.samples);
            s.get("eta", cfg.training.eta);
            s.get("seed", cfg.training.seed);
            s.get("basis_size", cfg.pod.size);
            s.get("energy_tol", cfg.pod.energy_tol);
        });
        with_section(root, "simp", [&](Section& s) {
            s.get("exponent", cfg.simp.exponent);
            s.get("min_ratio", cfg.simp.min_ratio);
            s.get("lower_bound", cfg.simp.lower_bound);
        });
        with_section(root, "optimizer", [&](Section& s) {
            std::string init = "uniform";
            s.get("volume_fraction", cfg.optimizer.volume_fraction);
            s.get("stop_tol", cfg.optimizer.stop_tol);
            s.get("window", cfg.optimizer.window);
            s.get("max_iters", cfg.optimizer.max_iters);
            s.get("threshold", cfg.optimizer.threshold);
            s.get("init", init);
            s.get("init_value", cfg.optimizer.init_value);
            s.get("seed", cfg.optimizer.seed);
            s.get("move_limit", cfg.optimizer.mma.move_limit);
            if (init == "uniform") cfg.optimizer.init = InitMode::Uniform;
            else if (init == "random") cfg.optimizer.init = InitMode::Random;
            else throw ConfigError(fmt::format("optimizer.init must be 'uniform' or 'random', got '{}'", init));
        });
        with_section(root, "online", [&](Section& s) {
            s.get("basis_size", cfg.online.basis_size);
            s.get("density", cfg.online.density);
        });
        with_section(root, "compare", [&](Section& s) {
            s.get("basis_sizes", cfg.compare.basis_sizes);
            s.get("repetitions", cfg.compare.repetitions);
            s.get("full_order", cfg.compare.full_order);
        });
        with_section(root, "verify", [&](Section& s) {
            s.get("basis_sizes", cfg.verify.basis_sizes);
            s.get("random_densities", cfg.verify.random_densities);
            s.get("dense_limit", cfg.verify.dense_limit);
        });
        root.get("threads", cfg.threads);
    }
    cfg.training.simp = cfg.simp;
    cfg.training.threads = cfg.threads;
    cfg.validate();
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError(fmt::format("cannot open config '{}'", path));
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::string serialize_config(const RunConfig& c) {
    json doc;
    doc["geometry"] = {{"port_length", c.geometry.port_length},
                       {"strut_length", c.geometry.strut_length},
                       {"port_nodes", c.geometry.port_nodes},
                       {"strut_axial_elements", c.geometry.strut_axial_elements},
                       {"joint_radial_elements", c.geometry.joint_radial_elements},
                       {"thickness", c.geometry.thickness}};
    doc["material"] = {{"young_modulus", c.material.young_modulus}, {"poisson_ratio", c.material.poisson_ratio}};
    json lat;
    lat["columns"] = c.lattice.columns;
    lat["rows"] = c.lattice.rows;
    lat["stubs"] = {{"left", c.lattice.stub_left},
                    {"right", c.lattice.stub_right},
                    {"bottom", c.lattice.stub_bottom},
                    {"top", c.lattice.stub_top}};
    lat["dirichlet"] = json::array();
    for (const auto& d : c.lattice.dirichlet) {
        lat["dirichlet"].push_back({{"side", to_string(d.side)}, {"index", d.index}});
    }
    lat["loads"] = json::array();
    for (const auto& l : c.lattice.loads) {
        lat["loads"].push_back({{"side", to_string(l.where.side)},
                                {"index", l.where.index},
                                {"traction", {l.traction.x(), l.traction.y()}}});
    }
    doc["lattice"] = lat;
    doc["training"] = {{"samples", c.training.samples},
                       {"eta", c.training.eta},
                       {"seed", c.training.seed},
                       {"basis_size", c.pod.size},
                       {"energy_tol", c.pod.energy_tol}};
    doc["simp"] = {{"exponent", c.simp.exponent}, {"min_ratio", c.simp.min_ratio}, {"lower_bound", c.simp.lower_bound}};
    doc["optimizer"] = {{"volume_fraction", c.optimizer.volume_fraction},
                        {"stop_tol", c.optimizer.stop_tol},
                        {"window", c.optimizer.window},
                        {"max_iters", c.optimizer.max_iters},
                        {"threshold", c.optimizer.threshold},
                        {"init", c.optimizer.init == InitMode::Uniform ? "uniform" : "random"},
                        {"init_value", c.optimizer.init_value},
                        {"seed", c.optimizer.seed},
                        {"move_limit", c.optimizer.mma.move_limit}};
    doc["online"] = {{"basis_size", c.online.basis_size}, {"density", c.online.density}};
    doc["compare"] = {{"basis_sizes", c.compare.basis_sizes},
                      {"repetitions", c.compare.repetitions},
                      {"full_order", c.compare.full_order}};
    doc["verify"] = {{"basis_sizes", c.verify.basis_sizes},
                     {"random_densities", c.verify.random_densities},
                     {"dense_limit", c.verify.dense_limit}};
    doc["threads"] = c.threads;
    return doc.dump(2);
}

} // namespace cwtopo
