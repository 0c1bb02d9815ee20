#pragma once

// Probability-scaled block vectors and block matrices over scenario-tree nodes.

#include <Eigen/Dense>

#include <vector>

#include "spc/tree.hpp"

namespace spc {

class BlockVector {
public:
    BlockVector(const ScenarioTree& tree, std::vector<NodeId> nodes, Eigen::Index dim);
    BlockVector(const ScenarioTree& tree, std::vector<NodeId> nodes, Eigen::VectorXd values,
                Eigen::Index dim);

    [[nodiscard]] const ScenarioTree& tree() const { return *tree_; }
    [[nodiscard]] const std::vector<NodeId>& nodes() const { return nodes_; }
    [[nodiscard]] Eigen::Index dim() const { return dim_; }
    [[nodiscard]] const Eigen::VectorXd& values() const { return values_; }
    [[nodiscard]] Eigen::VectorXd& values() { return values_; }

    [[nodiscard]] auto block(std::size_t pos) { return values_.segment(pos * dim_, dim_); }
    [[nodiscard]] auto block(std::size_t pos) const { return values_.segment(pos * dim_, dim_); }

private:
    const ScenarioTree* tree_;
    std::vector<NodeId> nodes_;
    Eigen::Index dim_;
    Eigen::VectorXd values_;
};

/// Block matrix stored densely; block (a, b) maps column node cols[b] to row node rows[a].
class BlockMatrix {
public:
    BlockMatrix(const ScenarioTree& tree, std::vector<NodeId> rows, std::vector<NodeId> cols,
                Eigen::Index row_dim, Eigen::Index col_dim);

    [[nodiscard]] const ScenarioTree& tree() const { return *tree_; }
    [[nodiscard]] const std::vector<NodeId>& row_nodes() const { return rows_; }
    [[nodiscard]] const std::vector<NodeId>& col_nodes() const { return cols_; }
    [[nodiscard]] Eigen::Index row_dim() const { return row_dim_; }
    [[nodiscard]] Eigen::Index col_dim() const { return col_dim_; }
    [[nodiscard]] const Eigen::MatrixXd& dense() const { return data_; }
    [[nodiscard]] Eigen::MatrixXd& dense() { return data_; }

    [[nodiscard]] auto block(std::size_t a, std::size_t b) {
        return data_.block(a * row_dim_, b * col_dim_, row_dim_, col_dim_);
    }
    [[nodiscard]] auto block(std::size_t a, std::size_t b) const {
        return data_.block(a * row_dim_, b * col_dim_, row_dim_, col_dim_);
    }

    /// Restriction to a subset of row and column nodes (each must be present).
    [[nodiscard]] BlockMatrix restrict(const std::vector<NodeId>& rows,
                                       const std::vector<NodeId>& cols) const;
    /// Restriction to a contiguous range of rows inside every block.
    [[nodiscard]] BlockMatrix row_slice(Eigen::Index offset, Eigen::Index dim) const;
    [[nodiscard]] BlockMatrix transpose() const;

    [[nodiscard]] BlockVector operator*(const BlockVector& v) const;
    [[nodiscard]] BlockMatrix operator*(const BlockMatrix& other) const;
    [[nodiscard]] BlockMatrix operator-(const BlockMatrix& other) const;

private:
    const ScenarioTree* tree_;
    std::vector<NodeId> rows_, cols_;
    Eigen::Index row_dim_, col_dim_;
    Eigen::MatrixXd data_;
};

[[nodiscard]] double pi_norm_vec(const BlockVector& v);
/// Spectral norm of the matrix with blocks (pi_i / pi_j)^{1/2} M_ij.
[[nodiscard]] double pi_norm_mat(const BlockMatrix& M);
/// Spectral norm of the matrix with blocks (pi_i pi_j)^{-1/2} M_ij.
[[nodiscard]] double sigma_pi(const BlockMatrix& M);
[[nodiscard]] double spectral_norm(const Eigen::MatrixXd& M);

struct ExpectationCheck {
    double lhs = 0.0;
    double rhs = 0.0;
    double gap = 0.0;
};

/// Compares ||v_{V^{(k)}_t}||_pi with pi_k^{1/2} (E[||v_t||^2 | node k])^{1/2}; the
/// expectation is enumerated along branch probabilities from k.
[[nodiscard]] ExpectationCheck expectation_identity_check(const ScenarioTree& tree, NodeId k,
                                                          int t, const BlockVector& v);

}  // namespace spc
