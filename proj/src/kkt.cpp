#include "spc/kkt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <sstream>

#include "spc/error.hpp"
#include "spc/kernels.hpp"

namespace spc {

namespace {

std::mutex g_stats_mutex;
KktResidualStats g_stats;
double g_tolerance = 1e-8;

double column_norm(const Eigen::MatrixXd& M, Eigen::Index c) {
    return std::sqrt(kernels::sum_squares({M.col(c).data(), static_cast<std::size_t>(M.rows())}));
}

}  // namespace

KktResidualStats kkt_residual_stats() {
    std::lock_guard lock(g_stats_mutex);
    return g_stats;
}

void reset_kkt_residual_stats() {
    std::lock_guard lock(g_stats_mutex);
    g_stats = {};
}

void set_kkt_tolerance(double tol) {
    std::lock_guard lock(g_stats_mutex);
    g_tolerance = tol;
}

double kkt_tolerance() {
    std::lock_guard lock(g_stats_mutex);
    return g_tolerance;
}

void record_kkt_residual(double ratio) {
    std::lock_guard lock(g_stats_mutex);
    ++g_stats.solves;
    g_stats.worst_ratio = std::max(g_stats.worst_ratio, ratio);
}

double enforce_residual_contract(const Eigen::MatrixXd& H, Eigen::VectorXd& z,
                                 const Eigen::VectorXd& p, const SymmetricIndefiniteLdlt& f) {
    const double tol = kkt_tolerance();
    const double denom = 1.0 + std::sqrt(kernels::sum_squares({p.data(), static_cast<std::size_t>(p.size())}));
    Eigen::VectorXd r = p - H * z;
    double ratio = std::sqrt(kernels::sum_squares({r.data(), static_cast<std::size_t>(r.size())})) / denom;
    if (ratio > tol) {
        const Eigen::VectorXd dz = f.solve(r);
        kernels::axpy(1.0, {dz.data(), static_cast<std::size_t>(dz.size())},
                      {z.data(), static_cast<std::size_t>(z.size())});
        r = p - H * z;
        ratio = std::sqrt(kernels::sum_squares({r.data(), static_cast<std::size_t>(r.size())})) / denom;
    }
    record_kkt_residual(ratio);
    if (ratio > tol) {
        std::ostringstream os;
        os << "KKT residual " << ratio << " exceeds tolerance " << tol;
        throw SolverError(os.str());
    }
    return ratio;
}

// ── ScaledKkt ────────────────────────────────────────────────────────────

ScaledKkt::ScaledKkt(const ScenarioTree& tree, NodeId root, int W)
    : tree_(&tree), root_(root), dims_(tree.dims()), nodes_(subtree_nodes(tree, root, W)) {
    const Eigen::Index nx = dims_.nx, nu = dims_.nu, nz = dims_.nz();
    const std::size_t n = nodes_.size();
    parent_local_.assign(n, -1);
    scale_.resize(n);
    diag_.resize(n);
    coupling_.resize(n);
    const double pi_root = tree.pi(root);
    for (std::size_t a = 0; a < n; ++a) {
        const NodeId i = nodes_[a];
        const NodeData& d = tree.data(i);
        scale_[a] = a == 0 ? 1.0 : std::sqrt(tree.pi(i) / pi_root);

        Eigen::MatrixXd D = Eigen::MatrixXd::Zero(nz, nz);
        D.topLeftCorner(nx, nx) = d.Q;
        D.block(nx, nx, nu, nu) = d.R;
        D.block(0, nx + nu, nx, nx).setIdentity();
        D.block(nx + nu, 0, nx, nx).setIdentity();
        diag_[a] = std::move(D);

        if (a > 0) {
            const std::size_t pa = local(tree.parent(i));
            parent_local_[a] = static_cast<std::ptrdiff_t>(pa);
            const double s = std::sqrt(tree.pi(i) / tree.pi(tree.parent(i)));
            Eigen::MatrixXd G = Eigen::MatrixXd::Zero(nx, nz);
            G.leftCols(nx) = -s * d.A;
            G.middleCols(nx, nu) = -s * d.B;
            coupling_[a] = std::move(G);
        }
    }
}

std::size_t ScaledKkt::local(NodeId node) const {
    auto it = std::lower_bound(nodes_.begin(), nodes_.end(), node);
    if (it == nodes_.end() || *it != node)
        throw InputError("node " + std::to_string(node) + " is outside the subtree");
    return static_cast<std::size_t>(it - nodes_.begin());
}

bool ScaledKkt::contains(NodeId node) const {
    return std::binary_search(nodes_.begin(), nodes_.end(), node);
}

Eigen::MatrixXd ScaledKkt::dense() const {
    const Eigen::Index nz = block(), ny = dims_.nx, oy = dims_.nw();
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(rows(), rows());
    for (std::size_t a = 0; a < nodes_.size(); ++a) {
        const Eigen::Index ra = static_cast<Eigen::Index>(a) * nz;
        H.block(ra, ra, nz, nz) = diag_[a];
        if (parent_local_[a] >= 0) {
            const Eigen::Index rp = parent_local_[a] * nz;
            H.block(ra + oy, rp, ny, nz) = coupling_[a];
            H.block(rp, ra + oy, nz, ny) = coupling_[a].transpose();
        }
    }
    return H;
}

Eigen::MatrixXd ScaledKkt::multiply(const Eigen::MatrixXd& Z) const {
    const Eigen::Index nz = block(), ny = dims_.nx, oy = dims_.nw();
    Eigen::MatrixXd out(Z.rows(), Z.cols());
    for (std::size_t a = 0; a < nodes_.size(); ++a) {
        const Eigen::Index ra = static_cast<Eigen::Index>(a) * nz;
        out.middleRows(ra, nz).noalias() = diag_[a] * Z.middleRows(ra, nz);
    }
    for (std::size_t a = 1; a < nodes_.size(); ++a) {
        const Eigen::Index ra = static_cast<Eigen::Index>(a) * nz;
        const Eigen::Index rp = parent_local_[a] * nz;
        out.middleRows(ra + oy, ny).noalias() += coupling_[a] * Z.middleRows(rp, nz);
        out.middleRows(rp, nz).noalias() += coupling_[a].transpose() * Z.middleRows(ra + oy, ny);
    }
    return out;
}

Eigen::VectorXd ScaledKkt::scaled_rhs(const InitialCondition& w_prev) const {
    const Eigen::Index nz = block(), nx = dims_.nx;
    Eigen::VectorXd p(rows());
    for (std::size_t a = 0; a < nodes_.size(); ++a)
        p.segment(static_cast<Eigen::Index>(a) * nz, nz) =
            scale_[a] * tree_->data(nodes_[a]).perturbation();
    const NodeData& r = tree_->data(root_);
    p.segment(nz - nx, nx) += r.A * w_prev.x_prev + r.B * w_prev.u_prev;
    return p;
}

// ── TreeFactorization ────────────────────────────────────────────────────

TreeFactorization::TreeFactorization(const ScaledKkt& kkt) : kkt_(&kkt) {
    const std::size_t n = kkt.size();
    const Eigen::Index nz = kkt.block(), nx = kkt.dims().nx, oy = kkt.dims().nw();
    std::vector<Eigen::MatrixXd> work(n);
    for (std::size_t a = 0; a < n; ++a) work[a] = kkt.diag_block(a);
    pivots_.resize(n);
    for (std::size_t a = n; a-- > 0;) {
        try {
            pivots_[a].factor(work[a]);
        } catch (const SolverError& e) {
            throw SolverError(std::string(e.what()) + " at node " +
                              std::to_string(kkt.nodes()[a]) + " (stage " +
                              std::to_string(kkt.tree().stage(kkt.nodes()[a])) + ")");
        }
        const std::ptrdiff_t p = kkt.parent_local(a);
        if (p < 0) continue;
        Eigen::MatrixXd Ey = Eigen::MatrixXd::Zero(nz, nx);
        Ey.bottomRows(nx).setIdentity();
        const Eigen::MatrixXd Y = pivots_[a].solve(Ey);
        const Eigen::MatrixXd& G = kkt.coupling_rows(a);
        work[static_cast<std::size_t>(p)].noalias() -= G.transpose() * Y.middleRows(oy, nx) * G;
    }
}

Eigen::MatrixXd TreeFactorization::solve_raw(const Eigen::MatrixXd& P) const {
    const ScaledKkt& k = *kkt_;
    const std::size_t n = k.size();
    const Eigen::Index nz = k.block(), nx = k.dims().nx, oy = k.dims().nw();
    Eigen::MatrixXd B = P;
    for (std::size_t a = n; a-- > 1;) {
        const Eigen::Index ra = static_cast<Eigen::Index>(a) * nz;
        pivots_[a].solve_in_place(B.middleRows(ra, nz));
        const Eigen::Index rp = k.parent_local(a) * nz;
        B.middleRows(rp, nz).noalias() -= k.coupling_rows(a).transpose() * B.middleRows(ra + oy, nx);
    }
    pivots_[0].solve_in_place(B.topRows(nz));
    for (std::size_t a = 1; a < n; ++a) {
        const Eigen::Index ra = static_cast<Eigen::Index>(a) * nz;
        const Eigen::Index rp = k.parent_local(a) * nz;
        Eigen::MatrixXd t = Eigen::MatrixXd::Zero(nz, B.cols());
        t.middleRows(oy, nx).noalias() = k.coupling_rows(a) * B.middleRows(rp, nz);
        pivots_[a].solve_in_place(t);
        B.middleRows(ra, nz) -= t;
    }
    return B;
}

Eigen::MatrixXd TreeFactorization::solve(const Eigen::MatrixXd& P) const {
    const double tol = kkt_tolerance();
    Eigen::MatrixXd Z = solve_raw(P);
    Eigen::MatrixXd R = P - kkt_->multiply(Z);
    std::vector<double> denom(static_cast<std::size_t>(P.cols()));
    bool refine = false;
    for (Eigen::Index c = 0; c < P.cols(); ++c) {
        denom[static_cast<std::size_t>(c)] = 1.0 + column_norm(P, c);
        if (column_norm(R, c) / denom[static_cast<std::size_t>(c)] > tol) refine = true;
    }
    if (refine) {
        Z += solve_raw(R);
        R = P - kkt_->multiply(Z);
    }
    for (Eigen::Index c = 0; c < P.cols(); ++c) {
        const double ratio = column_norm(R, c) / denom[static_cast<std::size_t>(c)];
        record_kkt_residual(ratio);
        if (ratio > tol) {
            std::ostringstream os;
            os << "KKT residual " << ratio << " exceeds tolerance " << tol << " (subtree of node "
               << kkt_->root() << ")";
            throw SolverError(os.str());
        }
    }
    return Z;
}

// ── Solutions ────────────────────────────────────────────────────────────

std::size_t PolicySolution::local(NodeId node) const {
    auto it = std::lower_bound(nodes.begin(), nodes.end(), node);
    if (it == nodes.end() || *it != node)
        throw InputError("node " + std::to_string(node) + " is not part of the solution");
    return static_cast<std::size_t>(it - nodes.begin());
}

Eigen::VectorXd PolicySolution::w(NodeId node) const {
    const std::size_t a = local(node);
    Eigen::VectorXd out(x[a].size() + u[a].size());
    out << x[a], u[a];
    return out;
}

double stage_cost(const NodeData& d, const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
    return 0.5 * x.dot(d.Q * x) + 0.5 * u.dot(d.R * u) - d.q.dot(x) - d.r.dot(u);
}

PolicySolution solve_extensive(const ScenarioTree& tree, NodeId k, int W,
                               const InitialCondition& w_prev) {
    const Dims dims = tree.dims();
    if (w_prev.x_prev.size() != dims.nx || w_prev.u_prev.size() != dims.nu)
        throw InputError("initial condition dimension mismatch");
    const ScaledKkt kkt(tree, k, W);
    const TreeFactorization fact(kkt);
    const Eigen::VectorXd p = kkt.scaled_rhs(w_prev);
    const Eigen::VectorXd z = fact.solve(p);

    PolicySolution sol;
    sol.tree = &tree;
    sol.root = k;
    sol.W = W;
    sol.nodes = kkt.nodes();
    const std::size_t n = kkt.size();
    const Eigen::Index nz = kkt.block(), nx = dims.nx, nu = dims.nu;
    sol.x.resize(n);
    sol.u.resize(n);
    sol.y.resize(n);
    for (std::size_t a = 0; a < n; ++a) {
        const Eigen::Index ra = static_cast<Eigen::Index>(a) * nz;
        const double s = kkt.scale(a);
        sol.x[a] = z.segment(ra, nx) / s;
        sol.u[a] = z.segment(ra + nx, nu) / s;
        sol.y[a] = z.segment(ra + nx + nu, nx) / s;
        const NodeId i = sol.nodes[a];
        sol.objective += (tree.pi(i) / tree.pi(k)) * stage_cost(tree.data(i), sol.x[a], sol.u[a]);
    }
    const Eigen::VectorXd r = p - kkt.multiply(z);
    sol.kkt_residual = r.norm() / (1.0 + p.norm());
    return sol;
}

SolutionMap solution_map(const ScenarioTree& tree, NodeId k, int W) {
    const ScaledKkt kkt(tree, k, W);
    const TreeFactorization fact(kkt);
    const Eigen::MatrixXd Zt = fact.solve(Eigen::MatrixXd::Identity(kkt.rows(), kkt.rows()));
    const Eigen::Index nz = kkt.block();
    BlockMatrix omega(tree, kkt.nodes(), kkt.nodes(), nz, nz);
    for (std::size_t a = 0; a < kkt.size(); ++a)
        for (std::size_t b = 0; b < kkt.size(); ++b)
            omega.block(a, b) = (kkt.scale(b) / kkt.scale(a)) *
                                Zt.block(static_cast<Eigen::Index>(a) * nz,
                                         static_cast<Eigen::Index>(b) * nz, nz, nz);
    BlockMatrix psi = omega.row_slice(0, tree.dims().nw());
    return {kkt.nodes(), std::move(omega), std::move(psi)};
}

std::vector<DecayEntry> measure_decay(const ScenarioTree& tree, const SolutionMap& map) {
    std::vector<std::vector<NodeId>> groups;
    std::vector<int> stages;
    for (NodeId i : map.nodes) {
        if (stages.empty() || stages.back() != tree.stage(i)) {
            stages.push_back(tree.stage(i));
            groups.emplace_back();
        }
        groups.back().push_back(i);
    }
    std::vector<DecayEntry> out;
    for (std::size_t a = 0; a < groups.size(); ++a)
        for (std::size_t b = 0; b < groups.size(); ++b)
            out.push_back({stages[a], stages[b], pi_norm_mat(map.psi.restrict(groups[a], groups[b])),
                           pi_norm_mat(map.omega.restrict(groups[a], groups[b]))});
    return out;
}

RegularityReport check_uniform_regularity(const ScenarioTree& tree, NodeId k, int W,
                                          const RegularityBounds& bounds) {
    constexpr double kTol = 1e-9;
    const ScaledKkt kkt(tree, k, W);
    const Dims dims = tree.dims();
    const Eigen::Index nx = dims.nx, nu = dims.nu, nw = dims.nw();
    const Eigen::Index n = static_cast<Eigen::Index>(kkt.size());

    // Variables ordered (x, u) per node; constraints y per node.
    Eigen::MatrixXd F = Eigen::MatrixXd::Zero(n * nx, n * nw);
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(n * nw, n * nw);
    for (Eigen::Index a = 0; a < n; ++a) {
        const NodeData& d = tree.data(kkt.nodes()[static_cast<std::size_t>(a)]);
        F.block(a * nx, a * nw, nx, nx).setIdentity();
        G.block(a * nw, a * nw, nx, nx) = d.Q;
        G.block(a * nw + nx, a * nw + nx, nu, nu) = d.R;
        const std::ptrdiff_t p = kkt.parent_local(static_cast<std::size_t>(a));
        if (p >= 0) F.block(a * nx, p * nw, nx, nw) = kkt.coupling_rows(static_cast<std::size_t>(a)).leftCols(nw);
    }

    RegularityReport rep;
    rep.bounds = bounds;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> hes(kkt.dense(), Eigen::EigenvaluesOnly);
    rep.H_norm = hes.eigenvalues().cwiseAbs().maxCoeff();
    rep.FFt_min_eig = min_eigenvalue(F * F.transpose());

    Eigen::BDCSVD<Eigen::MatrixXd> svd(F, Eigen::ComputeFullV);
    const Eigen::VectorXd& sv = svd.singularValues();
    const double thresh = sv.size() ? sv(0) * static_cast<double>(F.cols()) *
                                          std::numeric_limits<double>::epsilon()
                                    : 0.0;
    Eigen::Index rank = 0;
    while (rank < sv.size() && sv(rank) > thresh) ++rank;
    rep.rank_deficient = rank < F.rows();
    const Eigen::MatrixXd Z = svd.matrixV().rightCols(F.cols() - rank);
    rep.ReH_min_eig = min_eigenvalue(Z.transpose() * G * Z);

    rep.H_pass = rep.H_norm <= bounds.L_H + kTol;
    rep.F_pass = !rep.rank_deficient && rep.FFt_min_eig >= bounds.gamma_F - kTol;
    rep.G_pass = rep.ReH_min_eig >= bounds.gamma_G - kTol;
    return rep;
}

}  // namespace spc

namespace spc {

BlockMatrix root_row_map(const ScenarioTree& tree, NodeId k, int W) {
    const ScaledKkt kkt(tree, k, W);
    const TreeFactorization fact(kkt);
    const Eigen::Index nz = kkt.block();
    Eigen::MatrixXd E = Eigen::MatrixXd::Zero(kkt.rows(), nz);
    E.topRows(nz).setIdentity();
    const Eigen::MatrixXd col = fact.solve(E);
    BlockMatrix row(tree, {k}, kkt.nodes(), nz, nz);
    for (std::size_t b = 0; b < kkt.size(); ++b)
        row.block(0, b) = kkt.scale(b) * col.middleRows(static_cast<Eigen::Index>(b) * nz, nz).transpose();
    return row;
}

}  // namespace spc
