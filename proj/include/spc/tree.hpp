#pragma once

// Finite-support scenario trees with per-node problem data.
//
// Nodes are indexed breadth-first from the root (node 0). Within a stage,
// nodes are ordered by parent index and then by outcome order, so sorting any
// subset of node indices yields a breadth-first order of that subset.

#include <Eigen/Dense>

#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace spc {

using NodeId = std::size_t;
inline constexpr NodeId kNoParent = std::numeric_limits<NodeId>::max();

struct Dims {
    Eigen::Index nx = 0;
    Eigen::Index nu = 0;

    [[nodiscard]] Eigen::Index nw() const { return nx + nu; }
    /// Size of one primal-dual block z = (x, u, y) and of one perturbation p = (q, r, d).
    [[nodiscard]] Eigen::Index nz() const { return 2 * nx + nu; }
    bool operator==(const Dims&) const = default;
};

struct NodeData {
    Eigen::MatrixXd A, B, Q, R;
    Eigen::VectorXd d, q, r;

    [[nodiscard]] Dims dims() const { return {A.rows(), B.cols()}; }
    /// Stacked perturbation p = [q; r; d].
    [[nodiscard]] Eigen::VectorXd perturbation() const;
    [[nodiscard]] static NodeData zeros(Dims dims);
};

struct InitialCondition {
    Eigen::VectorXd x_prev;
    Eigen::VectorXd u_prev;

    [[nodiscard]] static InitialCondition zeros(Dims dims);
    /// Stacked (x_prev, u_prev).
    [[nodiscard]] Eigen::VectorXd stacked() const;
};

struct Outcome {
    NodeData data;
    double prob = 1.0;
};

class ScenarioTree {
public:
    /// Assembles a tree from parallel arrays after structural checks only
    /// (lengths, parent order, dimensions). Probability and stage invariants
    /// are left to validate_tree so that broken trees can still be reported on.
    [[nodiscard]] static ScenarioTree assemble(std::vector<NodeId> parents,
                                               std::vector<int> stages,
                                               std::vector<double> probs,
                                               std::vector<NodeData> data);

    [[nodiscard]] std::size_t size() const { return parent_.size(); }
    [[nodiscard]] int horizon() const { return horizon_; }
    [[nodiscard]] Dims dims() const { return dims_; }

    [[nodiscard]] NodeId parent(NodeId i) const { return parent_.at(i); }
    [[nodiscard]] const std::vector<NodeId>& children(NodeId i) const { return children_.at(i); }
    [[nodiscard]] int stage(NodeId i) const { return stage_.at(i); }
    [[nodiscard]] double pi(NodeId i) const { return pi_.at(i); }
    [[nodiscard]] const NodeData& data(NodeId i) const { return data_.at(i); }
    [[nodiscard]] bool is_leaf(NodeId i) const { return children_.at(i).empty(); }

    /// All nodes with stage t, in index order. Empty outside [0, T].
    [[nodiscard]] const std::vector<NodeId>& stage_nodes(int t) const;
    /// True when k lies on the root path of j (every node is its own ancestor).
    [[nodiscard]] bool is_ancestor(NodeId k, NodeId j) const;
    /// Nodes from the root to j inclusive.
    [[nodiscard]] std::vector<NodeId> path_to(NodeId j) const;
    [[nodiscard]] std::vector<NodeId> leaves() const;

    /// Copy of the tree with one node's data replaced.
    [[nodiscard]] ScenarioTree with_data(NodeId i, NodeData data) const;

private:
    ScenarioTree() = default;

    std::vector<NodeId> parent_;
    std::vector<std::vector<NodeId>> children_;
    std::vector<int> stage_;
    std::vector<double> pi_;
    std::vector<NodeData> data_;
    std::vector<std::vector<NodeId>> by_stage_;
    int horizon_ = 0;
    Dims dims_;
};

[[nodiscard]] ScenarioTree build_tree_stagewise(
    const std::vector<std::vector<Outcome>>& per_stage_outcomes);

[[nodiscard]] ScenarioTree build_tree_explicit(std::vector<NodeId> parents,
                                               std::vector<int> stages,
                                               std::vector<double> probs,
                                               std::vector<NodeData> data);

/// pi_j / pi_k; throws InputError unless k is an ancestor of j.
[[nodiscard]] double conditional_prob(const ScenarioTree& tree, NodeId j, NodeId k);

/// Descendants of k (including k) within W further stages, capped at T.
[[nodiscard]] std::vector<NodeId> subtree_nodes(const ScenarioTree& tree, NodeId k, int W);

/// Descendants of k at stage t.
[[nodiscard]] std::vector<NodeId> subtree_stage_nodes(const ScenarioTree& tree, NodeId k, int t);

struct ValidationIssue {
    std::vector<NodeId> nodes;
    std::string message;
};

struct ValidationReport {
    std::vector<ValidationIssue> issues;

    [[nodiscard]] bool ok() const { return issues.empty(); }
    [[nodiscard]] std::string summary() const;
};

[[nodiscard]] ValidationReport validate_tree(const ScenarioTree& tree);

}  // namespace spc
