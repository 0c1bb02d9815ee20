#pragma once

// Stochastic predictive control on scenario trees: receding-horizon commitments,
// the full-horizon optimum, baselines, and the closed-loop recursion objects.

#include <Eigen/Dense>

#include <vector>

#include "spc/kkt.hpp"
#include "spc/norms.hpp"
#include "spc/tree.hpp"

namespace spc {

struct ClosedLoopTrace {
    const ScenarioTree* tree = nullptr;
    int W = 0;
    std::vector<Eigen::VectorXd> x, u;  // indexed by node
    double performance = 0.0;

    [[nodiscard]] Eigen::VectorXd w(NodeId node) const;
};

[[nodiscard]] PolicySolution solve_optimal(const ScenarioTree& tree, const InitialCondition& w_prev);

struct SpcStep {
    Eigen::VectorXd x, u;
    PolicySolution plan;
};

[[nodiscard]] SpcStep spc_step(const ScenarioTree& tree, NodeId k,
                               const InitialCondition& w_prev_committed, int W);

[[nodiscard]] ClosedLoopTrace run_spc(const ScenarioTree& tree, const InitialCondition& w_prev,
                                      int W);

/// Commitment of the parent of k in a trace, or the initial condition at the root.
[[nodiscard]] InitialCondition committed_parent(const ClosedLoopTrace& trace, NodeId k,
                                                const InitialCondition& w_prev);

/// sum_i pi_i l_i(w_i) over all nodes for per-node (x, u).
[[nodiscard]] double tree_performance(const ScenarioTree& tree, const std::vector<Eigen::VectorXd>& x,
                                      const std::vector<Eigen::VectorXd>& u);

struct RegretResult {
    double J_W = 0.0;
    double J_star = 0.0;
    double regret = 0.0;
};

[[nodiscard]] RegretResult dynamic_regret(const ScenarioTree& tree, const InitialCondition& w_prev,
                                          int W);

struct HereAndNowSolution {
    double objective = 0.0;
    std::vector<Eigen::VectorXd> u_stage;  // one control per stage 0..T
    std::vector<Eigen::VectorXd> x;        // per node
};

[[nodiscard]] HereAndNowSolution solve_here_and_now(const ScenarioTree& tree,
                                                    const InitialCondition& w_prev);

struct AnticipativeSolution {
    double objective = 0.0;
    std::vector<NodeId> leaves;
    std::vector<double> path_values;
};

[[nodiscard]] AnticipativeSolution solve_anticipative(const ScenarioTree& tree,
                                                      const InitialCondition& w_prev);

struct RecursionMatrices {
    int W = 0;
    std::vector<Eigen::MatrixXd> lambda;  // per node i: Lambda_{i,a(i)}, nz by (nx+nu)
    std::vector<Eigen::MatrixXd> S;       // per node i: S_{i,a(i)} = Psi^{(i,W)}_{ii} Lambda_{i,a(i)}
    std::vector<BlockMatrix> psi_row;     // per node k: Psi^{(k,W)}_{k, V^{(k)}}
};

[[nodiscard]] RecursionMatrices recursion_matrices(const ScenarioTree& tree, int W);

/// Commitments from w_k = S_{k,a(k)} w_{a(k)} + sum_j Psi^{(k,W)}_{kj} p_j, root first.
[[nodiscard]] std::vector<Eigen::VectorXd> iterate_recursion(const ScenarioTree& tree,
                                                             const RecursionMatrices& rec,
                                                             const InitialCondition& w_prev);

/// Stage-level S^{(W)}_{V_t, V_{t-1}} for t >= 1.
[[nodiscard]] BlockMatrix stage_S(const ScenarioTree& tree, const RecursionMatrices& rec, int t);
/// Stage-level Psi^{(V_t, W)}_{V_t, V_t'}.
[[nodiscard]] BlockMatrix stage_psi(const ScenarioTree& tree, const RecursionMatrices& rec, int t,
                                    int tprime);
/// prod_{s = from+1}^{to} S_{V_s, V_{s-1}}, rows V_to, columns V_from (identity when equal).
[[nodiscard]] BlockMatrix stage_product(const ScenarioTree& tree, const RecursionMatrices& rec,
                                        int to, int from);

/// Closed-form expansion of the commitments at stage t over all perturbations,
/// plus the propagated initial-condition term; returned per node of V_t.
[[nodiscard]] BlockVector expansion_commitments(const ScenarioTree& tree,
                                                const RecursionMatrices& rec,
                                                const InitialCondition& w_prev, int t);

/// Node-k value of the full-horizon plan started from the committed parent value.
[[nodiscard]] std::vector<Eigen::VectorXd> hypothetical_state(const ScenarioTree& tree,
                                                              const ClosedLoopTrace& trace,
                                                              const InitialCondition& w_prev);

/// Max-norm gap between the restriction of the full-horizon plan from k to V^{(j)}
/// and a full-horizon re-solve from j started at the plan's value of a(j).
[[nodiscard]] double check_time_consistency(const ScenarioTree& tree, NodeId k, NodeId j,
                                            const InitialCondition& w_prev);

}  // namespace spc
