#pragma once

// Probability-scaled KKT systems of subtree QPs, their tree-structured
// factorization, solution maps and regularity measurements.
//
// Variables of node i in the subtree rooted at k are scaled by pi_{i|k}^{1/2}
// and grouped as z_i = (x_i, u_i, y_i); perturbations as p_i = (q_i, r_i, d_i).

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

#include "spc/linalg.hpp"
#include "spc/norms.hpp"
#include "spc/tree.hpp"

namespace spc {

class ScaledKkt {
public:
    ScaledKkt(const ScenarioTree& tree, NodeId root, int W);

    [[nodiscard]] const ScenarioTree& tree() const { return *tree_; }
    [[nodiscard]] NodeId root() const { return root_; }
    [[nodiscard]] const std::vector<NodeId>& nodes() const { return nodes_; }
    [[nodiscard]] std::size_t size() const { return nodes_.size(); }
    [[nodiscard]] Eigen::Index block() const { return dims_.nz(); }
    [[nodiscard]] Eigen::Index rows() const {
        return static_cast<Eigen::Index>(nodes_.size()) * dims_.nz();
    }
    [[nodiscard]] Dims dims() const { return dims_; }

    /// Position of a tree node inside nodes(); throws if absent.
    [[nodiscard]] std::size_t local(NodeId node) const;
    [[nodiscard]] bool contains(NodeId node) const;
    /// Local index of the parent, or -1 for the subtree root.
    [[nodiscard]] std::ptrdiff_t parent_local(std::size_t a) const { return parent_local_[a]; }
    /// pi_{i|k}^{1/2} for local node a.
    [[nodiscard]] double scale(std::size_t a) const { return scale_[a]; }

    [[nodiscard]] const Eigen::MatrixXd& diag_block(std::size_t a) const { return diag_[a]; }
    /// Nonzero rows of H~_{i, a(i)}: the y-rows [-A~, -B~, 0] (nx by nz).
    [[nodiscard]] const Eigen::MatrixXd& coupling_rows(std::size_t a) const { return coupling_[a]; }

    [[nodiscard]] Eigen::MatrixXd dense() const;
    /// H~ * Z for stacked columns Z.
    [[nodiscard]] Eigen::MatrixXd multiply(const Eigen::MatrixXd& Z) const;

    /// p~ for the node data, with A_k x_prev + B_k u_prev added to d_k.
    [[nodiscard]] Eigen::VectorXd scaled_rhs(const InitialCondition& w_prev) const;

private:
    const ScenarioTree* tree_;
    NodeId root_;
    Dims dims_;
    std::vector<NodeId> nodes_;
    std::vector<std::ptrdiff_t> parent_local_;
    std::vector<double> scale_;
    std::vector<Eigen::MatrixXd> diag_;
    std::vector<Eigen::MatrixXd> coupling_;
};

/// Block elimination of H~ from the leaves to the root.
class TreeFactorization {
public:
    explicit TreeFactorization(const ScaledKkt& kkt);

    /// Solves H~ Z = P column-wise, enforcing the residual contract on every column.
    [[nodiscard]] Eigen::MatrixXd solve(const Eigen::MatrixXd& P) const;

private:
    [[nodiscard]] Eigen::MatrixXd solve_raw(const Eigen::MatrixXd& P) const;

    const ScaledKkt* kkt_;
    std::vector<SymmetricIndefiniteLdlt> pivots_;
};

/// Residual contract ||H~ z~ - p~|| <= tol (1 + ||p~||), shared by every KKT solve.
struct KktResidualStats {
    std::size_t solves = 0;
    double worst_ratio = 0.0;  // max of ||H~ z~ - p~|| / (1 + ||p~||)
};
[[nodiscard]] KktResidualStats kkt_residual_stats();
void reset_kkt_residual_stats();
void set_kkt_tolerance(double tol);
[[nodiscard]] double kkt_tolerance();
/// Checks one solve against the contract, records it, and refines once if needed.
/// Returns the relative residual; throws SolverError when the contract fails.
double enforce_residual_contract(const Eigen::MatrixXd& H, Eigen::VectorXd& z,
                                 const Eigen::VectorXd& p, const SymmetricIndefiniteLdlt& f);
void record_kkt_residual(double ratio);

struct PolicySolution {
    const ScenarioTree* tree = nullptr;
    NodeId root = 0;
    int W = 0;
    std::vector<NodeId> nodes;
    std::vector<Eigen::VectorXd> x, u, y;
    double objective = 0.0;
    double kkt_residual = 0.0;  // relative, see KktResidualStats

    [[nodiscard]] std::size_t local(NodeId node) const;
    /// Stacked (x_i, u_i).
    [[nodiscard]] Eigen::VectorXd w(NodeId node) const;
};

/// Stage cost 1/2 x'Qx + 1/2 u'Ru - q'x - r'u.
[[nodiscard]] double stage_cost(const NodeData& d, const Eigen::VectorXd& x,
                                const Eigen::VectorXd& u);

[[nodiscard]] PolicySolution solve_extensive(const ScenarioTree& tree, NodeId k, int W,
                                             const InitialCondition& w_prev);

struct SolutionMap {
    std::vector<NodeId> nodes;
    BlockMatrix omega;  // z = Omega p, blocks nz by nz
    BlockMatrix psi;    // w = Psi p, blocks (nx+nu) by nz
};

[[nodiscard]] SolutionMap solution_map(const ScenarioTree& tree, NodeId k, int W);

struct DecayEntry {
    int t = 0;
    int tprime = 0;
    double psi_norm = 0.0;
    double omega_norm = 0.0;
};

[[nodiscard]] std::vector<DecayEntry> measure_decay(const ScenarioTree& tree,
                                                    const SolutionMap& map);

struct RegularityBounds {
    double L_H = 0.0;
    double gamma_F = 0.0;
    double gamma_G = 0.0;
};

struct RegularityReport {
    double H_norm = 0.0;
    double FFt_min_eig = 0.0;
    double ReH_min_eig = 0.0;
    RegularityBounds bounds;
    bool H_pass = false;
    bool F_pass = false;
    bool G_pass = false;
    bool rank_deficient = false;

    [[nodiscard]] bool pass() const { return H_pass && F_pass && G_pass; }
};

[[nodiscard]] RegularityReport check_uniform_regularity(const ScenarioTree& tree, NodeId k, int W,
                                                        const RegularityBounds& bounds);

}  // namespace spc

namespace spc {

/// Row block of the subtree root in Omega^{(k,W)}: rows {k}, columns subtree_nodes(k, W).
/// Uses the symmetry of H~, so only nz solves are needed.
[[nodiscard]] BlockMatrix root_row_map(const ScenarioTree& tree, NodeId k, int W);

}  // namespace spc
