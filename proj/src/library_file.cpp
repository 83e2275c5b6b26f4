#include "cwtopo/library_file.hpp"

#include "cwtopo/errors.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

namespace cwtopo {

using nlohmann::json;

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t size) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < size; ++i) {
        h ^= data[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {

using Bytes = std::vector<std::uint8_t>;

void put_u32(Bytes& out, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

void put_u64(Bytes& out, std::uint64_t v) {
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

void put_matrix(Bytes& out, const Matrix& m) {
    put_u64(out, static_cast<std::uint64_t>(m.rows()));
    put_u64(out, static_cast<std::uint64_t>(m.cols()));
    out.reserve(out.size() + 8 * m.size());
    for (Eigen::Index k = 0; k < m.size(); ++k) {
        put_u64(out, std::bit_cast<std::uint64_t>(m.data()[k]));
    }
}

class Cursor {
public:
    Cursor(const std::uint8_t* data, std::size_t size, std::string what) : p_(data), end_(data + size), what_(std::move(what)) {}

    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(p_[b]) << (8 * b);
        p_ += 8;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(p_[b]) << (8 * b);
        p_ += 4;
        return v;
    }
    std::string text(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(p_), n);
        p_ += n;
        return s;
    }
    Matrix matrix() {
        const std::uint64_t rows = u64();
        const std::uint64_t cols = u64();
        if (cols != 0 && rows > remaining() / 8 / cols) {
            throw LibraryError(fmt::format("{}: matrix header {} x {} exceeds payload", what_, rows, cols));
        }
        Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        for (Eigen::Index k = 0; k < m.size(); ++k) {
            m.data()[k] = std::bit_cast<double>(u64());
        }
        return m;
    }
    [[nodiscard]] std::size_t remaining() const { return static_cast<std::size_t>(end_ - p_); }

private:
    void need(std::size_t n) const {
        if (remaining() < n) throw LibraryError(fmt::format("{}: truncated", what_));
    }
    const std::uint8_t* p_;
    const std::uint8_t* end_;
    std::string what_;
};

json metadata(const TrainedLibrary& lib) {
    json m;
    m["geometry"] = {{"port_length", lib.geometry.port_length},
                     {"strut_length", lib.geometry.strut_length},
                     {"port_nodes", lib.geometry.port_nodes},
                     {"strut_axial_elements", lib.geometry.strut_axial_elements},
                     {"joint_radial_elements", lib.geometry.joint_radial_elements},
                     {"thickness", lib.geometry.thickness}};
    m["material"] = {{"young_modulus", lib.material.young_modulus}, {"poisson_ratio", lib.material.poisson_ratio}};
    m["training"] = {{"samples", lib.options.samples},
                     {"eta", lib.options.eta},
                     {"seed", lib.options.seed},
                     {"simp", {lib.options.simp.exponent, lib.options.simp.min_ratio, lib.options.simp.lower_bound}}};
    m["pairs"] = json::array();
    for (const auto& p : lib.pairs) m["pairs"].push_back({p.ref_a, p.port_a, p.ref_b, p.port_b});
    m["spaces"] = json::object();
    for (const auto& [cls, space] : lib.spaces) {
        m["spaces"][cls] = {{"rank", space.rank}, {"default_size", space.default_size}};
    }
    m["pod_defect"] = lib.pod_defect;
    m["warnings"] = lib.warnings;
    m["models"] = json::array();
    for (const auto& model : lib.models) {
        m["models"].push_back({{"offsets", model.schur.offsets}, {"sizes", model.schur.sizes}});
    }
    return m;
}

TrainedLibrary decode(const Bytes& bytes);

} // namespace

Bytes encode_library(const TrainedLibrary& lib) {
    std::vector<std::pair<std::string, Bytes>> sections;
    {
        const std::string meta = metadata(lib).dump();
        sections.emplace_back("metadata", Bytes(meta.begin(), meta.end()));
    }
    for (const auto& [cls, space] : lib.spaces) {
        Bytes b;
        put_matrix(b, space.basis);
        put_matrix(b, space.singular_values);
        sections.emplace_back("space/" + cls, std::move(b));
    }
    for (std::size_t r = 0; r < lib.models.size(); ++r) {
        const auto& model = lib.models[r];
        Bytes b;
        put_matrix(b, model.schur.kbar);
        put_matrix(b, model.psi);
        put_u64(b, model.traces.size());
        for (const auto& t : model.traces) put_matrix(b, t);
        sections.emplace_back(fmt::format("model/{}", r), std::move(b));
    }

    Bytes out{'C', 'W', 'L', 'B'};
    put_u32(out, library_format_version);
    put_u32(out, static_cast<std::uint32_t>(sections.size()));
    std::size_t toc = out.size();
    for (const auto& [name, payload] : sections) toc += 4 + name.size() + 24;
    std::uint64_t offset = toc;
    for (const auto& [name, payload] : sections) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        put_u64(out, offset);
        put_u64(out, payload.size());
        put_u64(out, fnv1a64(payload.data(), payload.size()));
        offset += payload.size();
    }
    for (const auto& [name, payload] : sections) out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

TrainedLibrary decode_library(const Bytes& bytes) {
    try {
        return decode(bytes);
    } catch (const json::exception& e) {
        throw LibraryError(fmt::format("library metadata is malformed: {}", e.what()));
    }
}

namespace {

TrainedLibrary decode(const Bytes& bytes) {
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "CWLB", 4) != 0) {
        throw LibraryError("not a trained library file (bad magic)");
    }
    Cursor head(bytes.data() + 4, bytes.size() - 4, "library header");
    const std::uint32_t version = head.u32();
    if (version != library_format_version) {
        throw LibraryError(fmt::format("library format version {} is not supported (expected {})", version,
                                       library_format_version));
    }
    const std::uint32_t count = head.u32();
    std::map<std::string, std::pair<const std::uint8_t*, std::size_t>> sections;
    for (std::uint32_t s = 0; s < count; ++s) {
        const std::string name = head.text(head.u32());
        const std::uint64_t offset = head.u64();
        const std::uint64_t size = head.u64();
        const std::uint64_t checksum = head.u64();
        if (offset > bytes.size() || size > bytes.size() - offset) {
            throw LibraryError(fmt::format("section '{}' lies outside the file", name));
        }
        if (fnv1a64(bytes.data() + offset, size) != checksum) {
            throw LibraryError(fmt::format("section '{}' fails its checksum", name));
        }
        sections[name] = {bytes.data() + offset, size};
    }
    auto section = [&](const std::string& name) {
        auto it = sections.find(name);
        if (it == sections.end()) throw LibraryError(fmt::format("library has no section '{}'", name));
        return Cursor(it->second.first, it->second.second, "section '" + name + "'");
    };

    TrainedLibrary lib;
    json m;
    {
        auto c = section("metadata");
        m = json::parse(c.text(c.remaining()));
        const auto& g = m.at("geometry");
        lib.geometry.port_length = g.at("port_length");
        lib.geometry.strut_length = g.at("strut_length");
        lib.geometry.port_nodes = g.at("port_nodes");
        lib.geometry.strut_axial_elements = g.at("strut_axial_elements");
        lib.geometry.joint_radial_elements = g.at("joint_radial_elements");
        lib.geometry.thickness = g.at("thickness");
        lib.material.young_modulus = m.at("material").at("young_modulus");
        lib.material.poisson_ratio = m.at("material").at("poisson_ratio");
        const auto& t = m.at("training");
        lib.options.samples = t.at("samples");
        lib.options.eta = t.at("eta");
        lib.options.seed = t.at("seed");
        lib.options.simp.exponent = t.at("simp").at(0);
        lib.options.simp.min_ratio = t.at("simp").at(1);
        lib.options.simp.lower_bound = t.at("simp").at(2);
        for (const auto& p : m.at("pairs")) lib.pairs.push_back({p.at(0), p.at(1), p.at(2), p.at(3)});
        lib.pod_defect = m.at("pod_defect").get<std::map<std::string, double>>();
        lib.warnings = m.at("warnings").get<std::vector<std::string>>();
    }

    lib.components = make_lattice_library(lib.geometry, lib.material);
    for (const auto& [cls, info] : m.at("spaces").items()) {
        auto c = section("space/" + cls);
        TrainedPortSpace space;
        space.basis = c.matrix();
        space.singular_values = c.matrix();
        space.rank = info.at("rank");
        space.default_size = info.at("default_size");
        if (space.basis.rows() != space.basis.cols() || space.singular_values.cols() != 1) {
            throw LibraryError(fmt::format("port space '{}' has inconsistent dimensions", cls));
        }
        lib.spaces[cls] = std::move(space);
    }
    const auto& models = m.at("models");
    if (models.size() != lib.components.size()) {
        throw LibraryError("library model count does not match the reference components");
    }
    for (std::size_t r = 0; r < models.size(); ++r) {
        auto c = section(fmt::format("model/{}", r));
        ComponentModel model;
        model.schur.offsets = models[r].at("offsets").get<std::vector<int>>();
        model.schur.sizes = models[r].at("sizes").get<std::vector<int>>();
        model.schur.kbar = c.matrix();
        model.psi = c.matrix();
        const std::uint64_t nt = c.u64();
        for (std::uint64_t j = 0; j < nt; ++j) model.traces.push_back(c.matrix());
        const auto& comp = lib.components[r];
        int total = 0;
        bool ok = model.traces.size() == comp.ports.size() && model.schur.sizes.size() == comp.ports.size() &&
                  model.schur.offsets.size() == comp.ports.size();
        for (std::size_t j = 0; ok && j < comp.ports.size(); ++j) {
            ok = model.traces[j].rows() == comp.ports[j].dof_count() &&
                 model.traces[j].cols() == model.schur.sizes[j] && model.schur.offsets[j] == total;
            total += model.schur.sizes[j];
        }
        ok = ok && model.schur.kbar.rows() == total && model.schur.kbar.cols() == total &&
             model.psi.rows() == comp.mesh.dof_count() && model.psi.cols() == total;
        if (!ok) {
            throw LibraryError(fmt::format("model of component '{}' has inconsistent dimensions", comp.name));
        }
        lib.models.push_back(std::move(model));
    }
    return lib;
}

} // namespace

void write_library(const TrainedLibrary& library, const std::string& path) {
    const Bytes bytes = encode_library(library);
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw LibraryError(fmt::format("cannot write library '{}'", path));
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw LibraryError(fmt::format("write to '{}' failed", path));
    }
}

TrainedLibrary read_library(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw LibraryError(fmt::format("cannot open library '{}'", path));
    }
    const Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_library(bytes);
}

} // namespace cwtopo
