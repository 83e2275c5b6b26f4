#include "cwtopo/condensation.hpp"

#include "cwtopo/errors.hpp"

#include <fmt/format.h>

#include <algorithm>

namespace cwtopo {

SparseMatrix extract_block(const SparseMatrix& m, std::span<const int> rows, std::span<const int> cols) {
    std::vector<int> row_map(m.rows(), -1);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        row_map[rows[r]] = static_cast<int>(r);
    }
    std::vector<Eigen::Triplet<double>> trips;
    for (std::size_t c = 0; c < cols.size(); ++c) {
        for (SparseMatrix::InnerIterator it(m, cols[c]); it; ++it) {
            const int r = row_map[it.row()];
            if (r >= 0) {
                trips.emplace_back(r, static_cast<int>(c), it.value());
            }
        }
    }
    SparseMatrix out(static_cast<int>(rows.size()), static_cast<int>(cols.size()));
    out.setFromTriplets(trips.begin(), trips.end());
    return out;
}

namespace {

Matrix dense_block(const SparseMatrix& m, std::span<const int> rows, std::span<const int> cols) {
    return Matrix(extract_block(m, rows, cols));
}

} // namespace

ComponentOperator::ComponentOperator(const ReferenceComponent& component) : component_(&component) {
    stiffness_ = assemble(component.mesh, component.material, component.thickness);
    std::vector<bool> on_port(component.mesh.dof_count(), false);
    for (const auto& port : component.ports) {
        port_offset_.push_back(static_cast<int>(skeleton_dofs_.size()));
        std::vector<int> dofs;
        for (int n : port.nodes) {
            for (int c = 0; c < 2; ++c) {
                dofs.push_back(dof(n, c));
                on_port[dof(n, c)] = true;
            }
        }
        skeleton_dofs_.insert(skeleton_dofs_.end(), dofs.begin(), dofs.end());
        port_dofs_.push_back(std::move(dofs));
    }
    for (int d = 0; d < component.mesh.dof_count(); ++d) {
        if (!on_port[d]) {
            bubble_dofs_.push_back(d);
        }
    }
    const SparseMatrix kbb = extract_block(stiffness_, bubble_dofs_, bubble_dofs_);
    try {
        bubble_solver_.factor(kbb);
    } catch (const NotSpdError& e) {
        throw LiftingError(fmt::format("interior system of '{}' is singular: {}", component.name, e.what()));
    }
    coupling_ = extract_block(stiffness_, bubble_dofs_, skeleton_dofs_);
    extension_ = -bubble_solver_.solve(Matrix(coupling_));
    schur_ = dense_block(stiffness_, skeleton_dofs_, skeleton_dofs_) + Matrix(coupling_.transpose()) * extension_;
    schur_ = 0.5 * (schur_ + schur_.transpose()).eval();
}

SkeletonBasis lift_basis(const ComponentOperator& op, const std::vector<Matrix>& traces, LiftingKind kind) {
    if (static_cast<int>(traces.size()) != op.port_count()) {
        throw ContractError("one trace basis per port is required");
    }
    const auto& bubble = op.bubble_dofs();
    const int ndof = op.component().mesh.dof_count();
    SparseMatrix operator_matrix;
    SpdSolver laplace_solver;
    if (kind == LiftingKind::Laplacian) {
        operator_matrix = assemble_vector_laplacian(op.component().mesh);
        try {
            laplace_solver.factor(extract_block(operator_matrix, bubble, bubble));
        } catch (const NotSpdError& e) {
            throw LiftingError(e.what());
        }
    }
    SkeletonBasis sk;
    sk.kind = kind;
    sk.traces = traces;
    for (int j = 0; j < op.port_count(); ++j) {
        const auto& pd = op.port_dofs(j);
        const Matrix& chi = traces[j];
        if (chi.rows() != static_cast<Eigen::Index>(pd.size())) {
            throw ContractError(fmt::format("trace basis of port {} has {} rows, expected {}", j, chi.rows(), pd.size()));
        }
        Matrix rhs;
        Matrix interior;
        if (kind == LiftingKind::Elasticity) {
            const SparseMatrix kbp = extract_block(op.stiffness(), bubble, pd);
            interior = -op.bubble_solver().solve(Matrix(kbp * chi));
        } else {
            const SparseMatrix lbp = extract_block(operator_matrix, bubble, pd);
            interior = -laplace_solver.solve(Matrix(lbp * chi));
        }
        Matrix psi = Matrix::Zero(ndof, chi.cols());
        for (std::size_t r = 0; r < pd.size(); ++r) {
            psi.row(pd[r]) = chi.row(static_cast<Eigen::Index>(r));
        }
        for (std::size_t r = 0; r < bubble.size(); ++r) {
            psi.row(bubble[r]) = interior.row(static_cast<Eigen::Index>(r));
        }
        sk.psi.push_back(std::move(psi));
    }
    return sk;
}

Vector forcing_bubble(const ComponentOperator& op, double scale, const Vector& load) {
    if (load.size() != op.component().mesh.dof_count()) {
        throw ContractError("load vector size does not match the component");
    }
    for (int d : op.skeleton_dofs()) {
        if (load[d] != 0.0) {
            throw ContractError("forcing bubble load touches port DOFs; use port tractions instead");
        }
    }
    Vector b = Vector::Zero(load.size());
    Vector fb(op.bubble_dofs().size());
    for (std::size_t r = 0; r < op.bubble_dofs().size(); ++r) {
        fb[static_cast<Eigen::Index>(r)] = load[op.bubble_dofs()[r]];
    }
    if (fb.isZero(0.0)) {
        return b;
    }
    const Vector x = op.bubble_solver().solve(fb) / scale;
    for (std::size_t r = 0; r < op.bubble_dofs().size(); ++r) {
        b[op.bubble_dofs()[r]] = x[static_cast<Eigen::Index>(r)];
    }
    return b;
}

std::vector<Matrix> interface_bubble(const ComponentOperator& op, const SkeletonBasis& skeleton) {
    std::vector<Matrix> out;
    for (const auto& psi : skeleton.psi) {
        Matrix b = Matrix::Zero(psi.rows(), psi.cols());
        if (skeleton.kind == LiftingKind::Laplacian) {
            const Matrix residual = op.stiffness() * psi;
            Matrix rb(op.bubble_dofs().size(), psi.cols());
            for (std::size_t r = 0; r < op.bubble_dofs().size(); ++r) {
                rb.row(static_cast<Eigen::Index>(r)) = residual.row(op.bubble_dofs()[r]);
            }
            const Matrix x = -op.bubble_solver().solve(rb);
            for (std::size_t r = 0; r < op.bubble_dofs().size(); ++r) {
                b.row(op.bubble_dofs()[r]) = x.row(static_cast<Eigen::Index>(r));
            }
        }
        out.push_back(std::move(b));
    }
    return out;
}

LocalSchur local_schur(const ComponentOperator& op, const SkeletonBasis& skeleton) {
    LocalSchur ls;
    int total = 0;
    for (const auto& chi : skeleton.traces) {
        ls.offsets.push_back(total);
        ls.sizes.push_back(static_cast<int>(chi.cols()));
        total += static_cast<int>(chi.cols());
    }
    if (skeleton.kind == LiftingKind::Elasticity) {
        const int ns = static_cast<int>(op.skeleton_dofs().size());
        Matrix X = Matrix::Zero(ns, total);
        for (int j = 0; j < op.port_count(); ++j) {
            X.block(op.port_offset(j), ls.offsets[j], skeleton.traces[j].rows(), ls.sizes[j]) = skeleton.traces[j];
        }
        ls.kbar = X.transpose() * op.nodal_schur() * X;
    } else {
        const auto bubbles = interface_bubble(op, skeleton);
        Matrix phi(op.component().mesh.dof_count(), total);
        for (int j = 0; j < op.port_count(); ++j) {
            phi.middleCols(ls.offsets[j], ls.sizes[j]) = skeleton.psi[j] + bubbles[j];
        }
        ls.kbar = phi.transpose() * (op.stiffness() * phi);
    }
    ls.kbar = 0.5 * (ls.kbar + ls.kbar.transpose()).eval();
    return ls;
}

ComponentModel ComponentModel::truncated(std::span<const int> sizes) const {
    if (sizes.size() != traces.size()) {
        throw ContractError("one basis size per port is required");
    }
    ComponentModel out;
    std::vector<int> keep;
    int total = 0;
    for (std::size_t j = 0; j < traces.size(); ++j) {
        const int n = sizes[j];
        if (n < 0 || n > schur.sizes[j]) {
            throw ContractError(fmt::format("basis size {} exceeds the {} available on port {}", n, schur.sizes[j], j));
        }
        out.traces.push_back(traces[j].leftCols(n));
        out.schur.offsets.push_back(total);
        out.schur.sizes.push_back(n);
        total += n;
        for (int k = 0; k < n; ++k) {
            keep.push_back(schur.offsets[j] + k);
        }
    }
    out.psi.resize(psi.rows(), total);
    out.schur.kbar.resize(total, total);
    for (int b = 0; b < total; ++b) {
        out.psi.col(b) = psi.col(keep[b]);
        for (int a = 0; a < total; ++a) {
            out.schur.kbar(a, b) = schur.kbar(keep[a], keep[b]);
        }
    }
    return out;
}

ComponentModel make_model(const ComponentOperator& op, const std::vector<Matrix>& traces) {
    const SkeletonBasis sk = lift_basis(op, traces, LiftingKind::Elasticity);
    ComponentModel m;
    m.traces = traces;
    m.schur = local_schur(op, sk);
    m.psi.resize(op.component().mesh.dof_count(), m.schur.size());
    for (int j = 0; j < op.port_count(); ++j) {
        m.psi.middleCols(m.schur.offsets[j], m.schur.sizes[j]) = sk.psi[j];
    }
    return m;
}

ComponentModel nodal_model(const ComponentOperator& op) {
    ComponentModel m;
    const int ns = static_cast<int>(op.skeleton_dofs().size());
    m.psi = Matrix::Zero(op.component().mesh.dof_count(), ns);
    for (int c = 0; c < ns; ++c) {
        m.psi(op.skeleton_dofs()[c], c) = 1.0;
    }
    for (std::size_t r = 0; r < op.bubble_dofs().size(); ++r) {
        m.psi.row(op.bubble_dofs()[r]) = op.extension().row(static_cast<Eigen::Index>(r));
    }
    m.schur.kbar = op.nodal_schur();
    for (int j = 0; j < op.port_count(); ++j) {
        const int n = static_cast<int>(op.port_dofs(j).size());
        m.traces.push_back(Matrix::Identity(n, n));
        m.schur.offsets.push_back(op.port_offset(j));
        m.schur.sizes.push_back(n);
    }
    return m;
}

ModelSet truncate_models(const ModelSet& models, int n) {
    ModelSet out;
    for (const auto& m : models) {
        std::vector<int> sizes;
        for (int s : m.schur.sizes) {
            sizes.push_back(std::min(n, s));
        }
        out.push_back(m.truncated(sizes));
    }
    return out;
}

Vector port_traction_load(const Port& port, const Vec2& traction) {
    Vector f = Vector::Zero(port.dof_count());
    for (int a = 0; a + 1 < port.node_count(); ++a) {
        const double h = port.arclength[a + 1] - port.arclength[a];
        for (int c = 0; c < 2; ++c) {
            f[2 * a + c] += 0.5 * h * traction[c];
            f[2 * (a + 1) + c] += 0.5 * h * traction[c];
        }
    }
    return f;
}

CondensedAssembler::CondensedAssembler(const SystemTopology& topology, std::span<const ReferenceComponent> library,
                                       const ModelSet& models)
    : topology_(&topology), models_(&models) {
    for (const auto& inst : topology.instances) {
        if (inst.reference < 0 || inst.reference >= static_cast<int>(models.size())) {
            throw LibraryError(fmt::format("no model for reference component {}", inst.reference));
        }
        if (models[inst.reference].schur.sizes.size() != library[inst.reference].ports.size()) {
            throw LibraryError(fmt::format("model of '{}' does not match its port count", library[inst.reference].name));
        }
        reference_.push_back(inst.reference);
    }
    dofs_ = PortDofMap(topology, [&](int i, int j) { return models[reference_[i]].port_size(j); });

    const int n_inst = topology.instance_count();
    indices_.resize(n_inst);
    std::vector<Eigen::Triplet<double>> trips;
    for (int i = 0; i < n_inst; ++i) {
        const auto& m = models[reference_[i]];
        auto& idx = indices_[i];
        for (int j = 0; j < static_cast<int>(m.schur.sizes.size()); ++j) {
            for (int k = 0; k < m.schur.sizes[j]; ++k) {
                idx.push_back(dofs_.index(i, j, k));
            }
        }
        for (int b : idx) {
            if (b < 0) continue;
            for (int a : idx) {
                if (a >= 0) trips.emplace_back(a, b, 0.0);
            }
        }
    }
    pattern_.resize(dofs_.size(), dofs_.size());
    pattern_.setFromTriplets(trips.begin(), trips.end());
    pattern_.makeCompressed();
    trips.clear();
    trips.shrink_to_fit();

    positions_.resize(n_inst);
    const int* outer = pattern_.outerIndexPtr();
    const int* inner = pattern_.innerIndexPtr();
    for (int i = 0; i < n_inst; ++i) {
        const auto& idx = indices_[i];
        const int n = static_cast<int>(idx.size());
        auto& pos = positions_[i];
        pos.assign(static_cast<std::size_t>(n) * n, -1);
        for (int b = 0; b < n; ++b) {
            if (idx[b] < 0) continue;
            const int* begin = inner + outer[idx[b]];
            const int* end = inner + outer[idx[b] + 1];
            for (int a = 0; a < n; ++a) {
                if (idx[a] < 0) continue;
                pos[static_cast<std::size_t>(b) * n + a] = static_cast<int>(std::lower_bound(begin, end, idx[a]) - inner);
            }
        }
    }

    load_ = Vector::Zero(dofs_.size());
    for (int p = 0; p < topology.global_port_count(); ++p) {
        const auto& gp = topology.ports[p];
        if (!gp.traction || gp.dirichlet) continue;
        const LocalPort lp = gp.owners.front();
        const auto& inst = topology.instances[lp.instance];
        const Vec2 t_local = inst.map.rotation().transpose() * *gp.traction;
        const Vector f = port_traction_load(library[inst.reference].ports[lp.port], t_local);
        const Matrix& chi = models[inst.reference].traces[lp.port];
        load_.segment(dofs_.offset(p), chi.cols()) += chi.transpose() * f;
    }
}

SparseMatrix CondensedAssembler::assemble(std::span<const double> scale) const {
    if (static_cast<int>(scale.size()) != topology_->instance_count()) {
        throw ContractError("one scale factor per instance is required");
    }
    SparseMatrix K = pattern_;
    double* values = K.valuePtr();
    for (int i = 0; i < topology_->instance_count(); ++i) {
        const Matrix& kbar = (*models_)[reference_[i]].schur.kbar;
        const auto& pos = positions_[i];
        const double s = scale[i];
        const double* src = kbar.data();
        for (std::size_t e = 0; e < pos.size(); ++e) {
            if (pos[e] >= 0) {
                values[pos[e]] += s * src[e];
            }
        }
    }
    return K;
}

SparseMatrix CondensedAssembler::instance_matrix(int instance) const {
    SparseMatrix K = pattern_;
    const Matrix& kbar = (*models_)[reference_[instance]].schur.kbar;
    const auto& pos = positions_[instance];
    for (std::size_t e = 0; e < pos.size(); ++e) {
        if (pos[e] >= 0) {
            K.valuePtr()[pos[e]] += kbar.data()[e];
        }
    }
    return K;
}

Vector CondensedAssembler::gather(int instance, const Vector& U) const {
    const auto& idx = indices_[instance];
    Vector out(idx.size());
    for (std::size_t a = 0; a < idx.size(); ++a) {
        out[static_cast<Eigen::Index>(a)] = idx[a] >= 0 ? U[idx[a]] : 0.0;
    }
    return out;
}

CondensedSystem assemble_condensed(const CondensedAssembler& assembler, std::span<const double> scale) {
    CondensedSystem sys;
    sys.K = assembler.assemble(scale);
    sys.F = assembler.load();
    return sys;
}

const Vector& solve_condensed(CondensedSystem& system) {
    system.U = solve_spd(system.K, system.F);
    system.solved = true;
    return system.U;
}

std::vector<Vector> reconstruct_field(const CondensedAssembler& assembler, const Vector& U,
                                      std::span<const Vector> bubbles) {
    const auto& topo = assembler.topology();
    std::vector<Vector> out(topo.instance_count());
    for (int i = 0; i < topo.instance_count(); ++i) {
        const auto& m = assembler.models()[topo.instances[i].reference];
        out[i] = m.psi * assembler.gather(i, U);
        if (!bubbles.empty() && bubbles[i].size() == out[i].size()) {
            out[i] += bubbles[i];
        }
    }
    return out;
}

Vector to_global_frame(const TransformationMap& map, const Vector& local) {
    const Eigen::Matrix2d R = map.rotation();
    Vector out(local.size());
    for (Eigen::Index n = 0; n < local.size() / 2; ++n) {
        out.segment<2>(2 * n) = R * local.segment<2>(2 * n);
    }
    return out;
}

Vector to_local_frame(const TransformationMap& map, const Vector& global) {
    const Eigen::Matrix2d R = map.rotation();
    Vector out(global.size());
    for (Eigen::Index n = 0; n < global.size() / 2; ++n) {
        out.segment<2>(2 * n) = R.transpose() * global.segment<2>(2 * n);
    }
    return out;
}

} // namespace cwtopo
