#include "spc/norms.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "spc/error.hpp"
#include "spc/kernels.hpp"

namespace spc {

namespace {

std::size_t position(const std::vector<NodeId>& nodes, NodeId n) {
    auto it = std::find(nodes.begin(), nodes.end(), n);
    if (it == nodes.end()) throw InputError("node " + std::to_string(n) + " not in block set");
    return static_cast<std::size_t>(it - nodes.begin());
}

}  // namespace

BlockVector::BlockVector(const ScenarioTree& tree, std::vector<NodeId> nodes, Eigen::Index dim)
    : tree_(&tree), nodes_(std::move(nodes)), dim_(dim),
      values_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nodes_.size()) * dim)) {}

BlockVector::BlockVector(const ScenarioTree& tree, std::vector<NodeId> nodes,
                         Eigen::VectorXd values, Eigen::Index dim)
    : tree_(&tree), nodes_(std::move(nodes)), dim_(dim), values_(std::move(values)) {
    if (values_.size() != static_cast<Eigen::Index>(nodes_.size()) * dim_)
        throw InputError("block vector size does not match node set");
}

BlockMatrix::BlockMatrix(const ScenarioTree& tree, std::vector<NodeId> rows,
                         std::vector<NodeId> cols, Eigen::Index row_dim, Eigen::Index col_dim)
    : tree_(&tree), rows_(std::move(rows)), cols_(std::move(cols)), row_dim_(row_dim),
      col_dim_(col_dim),
      data_(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows_.size()) * row_dim,
                                  static_cast<Eigen::Index>(cols_.size()) * col_dim)) {}

BlockMatrix BlockMatrix::restrict(const std::vector<NodeId>& rows,
                                  const std::vector<NodeId>& cols) const {
    BlockMatrix out(*tree_, rows, cols, row_dim_, col_dim_);
    std::vector<std::size_t> cpos(cols.size());
    for (std::size_t b = 0; b < cols.size(); ++b) cpos[b] = position(cols_, cols[b]);
    for (std::size_t a = 0; a < rows.size(); ++a) {
        const std::size_t ra = position(rows_, rows[a]);
        for (std::size_t b = 0; b < cols.size(); ++b) out.block(a, b) = block(ra, cpos[b]);
    }
    return out;
}

BlockMatrix BlockMatrix::row_slice(Eigen::Index offset, Eigen::Index dim) const {
    BlockMatrix out(*tree_, rows_, cols_, dim, col_dim_);
    for (std::size_t a = 0; a < rows_.size(); ++a)
        out.data_.middleRows(static_cast<Eigen::Index>(a) * dim, dim) =
            data_.middleRows(static_cast<Eigen::Index>(a) * row_dim_ + offset, dim);
    return out;
}

BlockMatrix BlockMatrix::transpose() const {
    BlockMatrix out(*tree_, cols_, rows_, col_dim_, row_dim_);
    out.data_ = data_.transpose();
    return out;
}

BlockVector BlockMatrix::operator*(const BlockVector& v) const {
    if (v.nodes() != cols_ || v.dim() != col_dim_)
        throw InputError("block matrix-vector product: column set mismatch");
    return BlockVector(*tree_, rows_, data_ * v.values(), row_dim_);
}

BlockMatrix BlockMatrix::operator*(const BlockMatrix& other) const {
    if (other.rows_ != cols_ || other.row_dim_ != col_dim_)
        throw InputError("block matrix product: inner node set mismatch");
    BlockMatrix out(*tree_, rows_, other.cols_, row_dim_, other.col_dim_);
    out.data_.noalias() = data_ * other.data_;
    return out;
}

BlockMatrix BlockMatrix::operator-(const BlockMatrix& other) const {
    if (other.rows_ != rows_ || other.cols_ != cols_ || other.row_dim_ != row_dim_ ||
        other.col_dim_ != col_dim_)
        throw InputError("block matrix difference: shape mismatch");
    BlockMatrix out = *this;
    out.data_ -= other.data_;
    return out;
}

double spectral_norm(const Eigen::MatrixXd& M) {
    if (M.size() == 0) return 0.0;
    Eigen::BDCSVD<Eigen::MatrixXd> svd(M);
    return svd.singularValues()(0);
}

double pi_norm_vec(const BlockVector& v) {
    std::vector<double> w(v.nodes().size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = v.tree().pi(v.nodes()[i]);
    const double s = kernels::weighted_sum_squares(
        {v.values().data(), static_cast<std::size_t>(v.values().size())}, w,
        static_cast<std::size_t>(v.dim()));
    return std::sqrt(s);
}

double pi_norm_mat(const BlockMatrix& M) {
    Eigen::MatrixXd S = M.dense();
    const auto& t = M.tree();
    for (std::size_t a = 0; a < M.row_nodes().size(); ++a)
        for (std::size_t b = 0; b < M.col_nodes().size(); ++b)
            S.block(a * M.row_dim(), b * M.col_dim(), M.row_dim(), M.col_dim()) *=
                std::sqrt(t.pi(M.row_nodes()[a]) / t.pi(M.col_nodes()[b]));
    return spectral_norm(S);
}

double sigma_pi(const BlockMatrix& M) {
    Eigen::MatrixXd S = M.dense();
    const auto& t = M.tree();
    for (std::size_t a = 0; a < M.row_nodes().size(); ++a)
        for (std::size_t b = 0; b < M.col_nodes().size(); ++b)
            S.block(a * M.row_dim(), b * M.col_dim(), M.row_dim(), M.col_dim()) /=
                std::sqrt(t.pi(M.row_nodes()[a]) * t.pi(M.col_nodes()[b]));
    return spectral_norm(S);
}

ExpectationCheck expectation_identity_check(const ScenarioTree& tree, NodeId k, int t,
                                            const BlockVector& v) {
    const std::vector<NodeId> expected = subtree_stage_nodes(tree, k, t);
    if (v.nodes() != expected) throw InputError("block vector must be defined on V^(k)_t");

    // Walk down from k carrying the product of branch probabilities.
    double expectation = 0.0;
    struct Item {
        NodeId node;
        double prob;
    };
    std::vector<Item> stack{{k, 1.0}};
    while (!stack.empty()) {
        const Item it = stack.back();
        stack.pop_back();
        if (tree.stage(it.node) == t) {
            const std::size_t pos = static_cast<std::size_t>(
                std::lower_bound(expected.begin(), expected.end(), it.node) - expected.begin());
            expectation += it.prob * v.block(pos).squaredNorm();
            continue;
        }
        for (NodeId c : tree.children(it.node))
            stack.push_back({c, it.prob * (tree.pi(c) / tree.pi(it.node))});
    }
    ExpectationCheck out;
    out.lhs = pi_norm_vec(v);
    out.rhs = std::sqrt(tree.pi(k)) * std::sqrt(expectation);
    out.gap = std::abs(out.lhs - out.rhs);
    return out;
}

}  // namespace spc
