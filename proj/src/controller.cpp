#include "spc/controller.hpp"

#include <algorithm>
#include <cmath>

#include "spc/error.hpp"
#include "spc/linalg.hpp"

namespace spc {

Eigen::VectorXd ClosedLoopTrace::w(NodeId node) const {
    Eigen::VectorXd out(x.at(node).size() + u.at(node).size());
    out << x[node], u[node];
    return out;
}

PolicySolution solve_optimal(const ScenarioTree& tree, const InitialCondition& w_prev) {
    return solve_extensive(tree, 0, tree.horizon(), w_prev);
}

SpcStep spc_step(const ScenarioTree& tree, NodeId k, const InitialCondition& w_prev_committed,
                 int W) {
    SpcStep step;
    step.plan = solve_extensive(tree, k, W, w_prev_committed);
    step.x = step.plan.x.front();
    step.u = step.plan.u.front();
    return step;
}

InitialCondition committed_parent(const ClosedLoopTrace& trace, NodeId k,
                                  const InitialCondition& w_prev) {
    if (k == 0) return w_prev;
    const NodeId p = trace.tree->parent(k);
    return {trace.x[p], trace.u[p]};
}

double tree_performance(const ScenarioTree& tree, const std::vector<Eigen::VectorXd>& x,
                        const std::vector<Eigen::VectorXd>& u) {
    double J = 0.0;
    for (NodeId i = 0; i < tree.size(); ++i) J += tree.pi(i) * stage_cost(tree.data(i), x[i], u[i]);
    return J;
}

ClosedLoopTrace run_spc(const ScenarioTree& tree, const InitialCondition& w_prev, int W) {
    if (W < 0) throw InputError("horizon W must be nonnegative");
    ClosedLoopTrace trace;
    trace.tree = &tree;
    trace.W = W;
    trace.x.resize(tree.size());
    trace.u.resize(tree.size());
    for (NodeId k = 0; k < tree.size(); ++k) {
        try {
            SpcStep step = spc_step(tree, k, committed_parent(trace, k, w_prev), W);
            trace.x[k] = std::move(step.x);
            trace.u[k] = std::move(step.u);
        } catch (const SolverError& e) {
            throw SolverError("SPC step at node " + std::to_string(k) + " (stage " +
                              std::to_string(tree.stage(k)) + "): " + e.what());
        }
    }
    trace.performance = tree_performance(tree, trace.x, trace.u);
    return trace;
}

RegretResult dynamic_regret(const ScenarioTree& tree, const InitialCondition& w_prev, int W) {
    RegretResult r;
    r.J_W = run_spc(tree, w_prev, W).performance;
    r.J_star = solve_optimal(tree, w_prev).objective;
    r.regret = r.J_W - r.J_star;
    return r;
}

HereAndNowSolution solve_here_and_now(const ScenarioTree& tree, const InitialCondition& w_prev) {
    const Dims dims = tree.dims();
    const Eigen::Index nx = dims.nx, nu = dims.nu;
    const Eigen::Index N = static_cast<Eigen::Index>(tree.size());
    const Eigen::Index T1 = tree.horizon() + 1;
    // Unknowns: scaled states per node, one control per stage, then multipliers per node.
    const Eigen::Index ox = 0, ou = N * nx, oy = ou + T1 * nu, n = oy + N * nx;
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);

    for (NodeId i = 0; i < tree.size(); ++i) {
        const NodeData& d = tree.data(i);
        const Eigen::Index ii = static_cast<Eigen::Index>(i);
        const double pi = tree.pi(i), s = std::sqrt(pi);
        const Eigen::Index t = tree.stage(i);
        const Eigen::Index xi = ox + ii * nx, ui = ou + t * nu, yi = oy + ii * nx;
        H.block(xi, xi, nx, nx) = d.Q;
        H.block(ui, ui, nu, nu) += pi * d.R;
        rhs.segment(xi, nx) = s * d.q;
        rhs.segment(ui, nu) += pi * d.r;

        H.block(yi, xi, nx, nx).setIdentity();
        rhs.segment(yi, nx) = s * d.d;
        if (i == 0) {
            rhs.segment(yi, nx) += d.A * w_prev.x_prev + d.B * w_prev.u_prev;
        } else {
            const NodeId p = tree.parent(i);
            const Eigen::Index xp = ox + static_cast<Eigen::Index>(p) * nx;
            const Eigen::Index up = ou + (t - 1) * nu;
            H.block(yi, xp, nx, nx) = -std::sqrt(pi / tree.pi(p)) * d.A;
            H.block(yi, up, nx, nu) = -s * d.B;
        }
    }
    H.topRightCorner(oy, N * nx) = H.block(oy, 0, N * nx, oy).transpose();

    const SymmetricIndefiniteLdlt f(H);
    Eigen::VectorXd z = f.solve(rhs);
    enforce_residual_contract(H, z, rhs, f);

    HereAndNowSolution sol;
    sol.u_stage.resize(static_cast<std::size_t>(T1));
    for (Eigen::Index t = 0; t < T1; ++t) sol.u_stage[static_cast<std::size_t>(t)] = z.segment(ou + t * nu, nu);
    sol.x.resize(tree.size());
    for (NodeId i = 0; i < tree.size(); ++i) {
        sol.x[i] = z.segment(ox + static_cast<Eigen::Index>(i) * nx, nx) / std::sqrt(tree.pi(i));
        sol.objective += tree.pi(i) * stage_cost(tree.data(i), sol.x[i],
                                                 sol.u_stage[static_cast<std::size_t>(tree.stage(i))]);
    }
    return sol;
}

AnticipativeSolution solve_anticipative(const ScenarioTree& tree, const InitialCondition& w_prev) {
    AnticipativeSolution sol;
    sol.leaves = tree.leaves();
    for (NodeId leaf : sol.leaves) {
        const std::vector<NodeId> path = tree.path_to(leaf);
        std::vector<NodeId> parents;
        std::vector<int> stages;
        std::vector<NodeData> data;
        for (std::size_t s = 0; s < path.size(); ++s) {
            parents.push_back(s == 0 ? kNoParent : s - 1);
            stages.push_back(static_cast<int>(s));
            data.push_back(tree.data(path[s]));
        }
        const ScenarioTree chain = build_tree_explicit(std::move(parents), std::move(stages),
                                                       std::vector<double>(path.size(), 1.0),
                                                       std::move(data));
        const double v = solve_optimal(chain, w_prev).objective;
        sol.path_values.push_back(v);
        sol.objective += tree.pi(leaf) * v;
    }
    return sol;
}

// ── Closed-loop recursion ────────────────────────────────────────────────

RecursionMatrices recursion_matrices(const ScenarioTree& tree, int W) {
    const Dims dims = tree.dims();
    const Eigen::Index nx = dims.nx, nw = dims.nw();
    RecursionMatrices rec;
    rec.W = W;
    rec.lambda.reserve(tree.size());
    rec.S.reserve(tree.size());
    rec.psi_row.reserve(tree.size());
    for (NodeId k = 0; k < tree.size(); ++k) {
        const NodeData& d = tree.data(k);
        Eigen::MatrixXd lam = Eigen::MatrixXd::Zero(dims.nz(), nw);
        lam.bottomLeftCorner(nx, nx) = d.A;
        lam.bottomRightCorner(nx, dims.nu) = d.B;
        BlockMatrix row = root_row_map(tree, k, W).row_slice(0, nw);
        rec.S.push_back(row.block(0, 0) * lam);
        rec.lambda.push_back(std::move(lam));
        rec.psi_row.push_back(std::move(row));
    }
    return rec;
}

std::vector<Eigen::VectorXd> iterate_recursion(const ScenarioTree& tree,
                                               const RecursionMatrices& rec,
                                               const InitialCondition& w_prev) {
    std::vector<Eigen::VectorXd> w(tree.size());
    for (NodeId k = 0; k < tree.size(); ++k) {
        const Eigen::VectorXd prev = k == 0 ? w_prev.stacked() : w[tree.parent(k)];
        Eigen::VectorXd v = rec.S[k] * prev;
        const BlockMatrix& row = rec.psi_row[k];
        for (std::size_t b = 0; b < row.col_nodes().size(); ++b)
            v += row.block(0, b) * tree.data(row.col_nodes()[b]).perturbation();
        w[k] = std::move(v);
    }
    return w;
}

BlockMatrix stage_S(const ScenarioTree& tree, const RecursionMatrices& rec, int t) {
    const Eigen::Index nw = tree.dims().nw();
    const auto& rows = tree.stage_nodes(t);
    const auto& cols = tree.stage_nodes(t - 1);
    BlockMatrix M(tree, rows, cols, nw, nw);
    for (std::size_t a = 0; a < rows.size(); ++a) {
        const NodeId p = tree.parent(rows[a]);
        const auto b = static_cast<std::size_t>(std::lower_bound(cols.begin(), cols.end(), p) - cols.begin());
        M.block(a, b) = rec.S[rows[a]];
    }
    return M;
}

BlockMatrix stage_psi(const ScenarioTree& tree, const RecursionMatrices& rec, int t, int tprime) {
    const Dims dims = tree.dims();
    const auto& rows = tree.stage_nodes(t);
    const auto& cols = tree.stage_nodes(tprime);
    BlockMatrix M(tree, rows, cols, dims.nw(), dims.nz());
    for (std::size_t a = 0; a < rows.size(); ++a) {
        const BlockMatrix& row = rec.psi_row[rows[a]];
        for (std::size_t b = 0; b < row.col_nodes().size(); ++b) {
            const NodeId j = row.col_nodes()[b];
            if (tree.stage(j) != tprime) continue;
            const auto c = static_cast<std::size_t>(std::lower_bound(cols.begin(), cols.end(), j) - cols.begin());
            M.block(a, c) = row.block(0, b);
        }
    }
    return M;
}

BlockMatrix stage_product(const ScenarioTree& tree, const RecursionMatrices& rec, int to, int from) {
    const Eigen::Index nw = tree.dims().nw();
    const auto& base = tree.stage_nodes(from);
    BlockMatrix P(tree, base, base, nw, nw);
    P.dense().setIdentity();
    for (int s = from + 1; s <= to; ++s) P = stage_S(tree, rec, s) * P;
    return P;
}

BlockVector expansion_commitments(const ScenarioTree& tree, const RecursionMatrices& rec,
                                  const InitialCondition& w_prev, int t) {
    const Dims dims = tree.dims();
    const int T = tree.horizon(), W = rec.W;
    const auto& Vt = tree.stage_nodes(t);
    BlockVector out(tree, Vt, dims.nw());

    // Initial-condition term: prod_{s=1}^{t} S_{V_s,V_{s-1}} S_{0,a(0)} w_prev.
    const BlockMatrix P0 = stage_product(tree, rec, t, 0);
    const Eigen::VectorXd w0 = rec.S[0] * w_prev.stacked();
    out.values() += P0.dense() * w0;

    for (int tp = 0; tp <= std::min(t + W, T); ++tp) {
        const auto& Vtp = tree.stage_nodes(tp);
        Eigen::VectorXd p(static_cast<Eigen::Index>(Vtp.size()) * dims.nz());
        for (std::size_t b = 0; b < Vtp.size(); ++b)
            p.segment(static_cast<Eigen::Index>(b) * dims.nz(), dims.nz()) = tree.data(Vtp[b]).perturbation();
        for (int tpp = std::max(tp - W, 0); tpp <= std::min(t, tp); ++tpp) {
            const BlockMatrix prod = stage_product(tree, rec, t, tpp);
            const BlockMatrix psi = stage_psi(tree, rec, tpp, tp);
            out.values() += prod.dense() * (psi.dense() * p);
        }
    }
    return out;
}

std::vector<Eigen::VectorXd> hypothetical_state(const ScenarioTree& tree,
                                                const ClosedLoopTrace& trace,
                                                const InitialCondition& w_prev) {
    std::vector<Eigen::VectorXd> out(tree.size());
    for (NodeId k = 0; k < tree.size(); ++k) {
        const PolicySolution s = solve_extensive(tree, k, tree.horizon(), committed_parent(trace, k, w_prev));
        out[k] = s.w(k);
    }
    return out;
}

double check_time_consistency(const ScenarioTree& tree, NodeId k, NodeId j,
                              const InitialCondition& w_prev) {
    if (j == k || !tree.is_ancestor(k, j))
        throw InputError("node " + std::to_string(j) + " is not a strict descendant of node " +
                         std::to_string(k));
    const PolicySolution outer = solve_extensive(tree, k, tree.horizon(), w_prev);
    const std::size_t pa = outer.local(tree.parent(j));
    const PolicySolution inner =
        solve_extensive(tree, j, tree.horizon(), {outer.x[pa], outer.u[pa]});
    double gap = 0.0;
    for (std::size_t a = 0; a < inner.nodes.size(); ++a) {
        const std::size_t b = outer.local(inner.nodes[a]);
        gap = std::max({gap, (inner.x[a] - outer.x[b]).cwiseAbs().maxCoeff(),
                        (inner.u[a] - outer.u[b]).cwiseAbs().maxCoeff()});
    }
    return gap;
}

}  // namespace spc
