#include "spc/tree.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "spc/error.hpp"

namespace spc {

namespace {

constexpr double kProbTol = 1e-12;
constexpr double kSymTol = 1e-12;

std::string fmt_prob(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.15g", v);
    std::string s(buf);
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
}

void check_dims(const NodeData& d, Dims dims, std::size_t node) {
    const auto nx = dims.nx, nu = dims.nu;
    const bool ok = d.A.rows() == nx && d.A.cols() == nx && d.B.rows() == nx && d.B.cols() == nu &&
                    d.Q.rows() == nx && d.Q.cols() == nx && d.R.rows() == nu && d.R.cols() == nu &&
                    d.d.size() == nx && d.q.size() == nx && d.r.size() == nu;
    if (!ok) throw InputError("dimension mismatch in data of node " + std::to_string(node));
}

bool symmetric(const Eigen::MatrixXd& M) {
    const double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
    return (M - M.transpose()).cwiseAbs().maxCoeff() <= kSymTol * scale;
}

}  // namespace

Eigen::VectorXd NodeData::perturbation() const {
    Eigen::VectorXd p(q.size() + r.size() + d.size());
    p << q, r, d;
    return p;
}

NodeData NodeData::zeros(Dims dims) {
    NodeData n;
    n.A = Eigen::MatrixXd::Zero(dims.nx, dims.nx);
    n.B = Eigen::MatrixXd::Zero(dims.nx, dims.nu);
    n.Q = Eigen::MatrixXd::Zero(dims.nx, dims.nx);
    n.R = Eigen::MatrixXd::Zero(dims.nu, dims.nu);
    n.d = Eigen::VectorXd::Zero(dims.nx);
    n.q = Eigen::VectorXd::Zero(dims.nx);
    n.r = Eigen::VectorXd::Zero(dims.nu);
    return n;
}

InitialCondition InitialCondition::zeros(Dims dims) {
    return {Eigen::VectorXd::Zero(dims.nx), Eigen::VectorXd::Zero(dims.nu)};
}

Eigen::VectorXd InitialCondition::stacked() const {
    Eigen::VectorXd w(x_prev.size() + u_prev.size());
    w << x_prev, u_prev;
    return w;
}

ScenarioTree ScenarioTree::assemble(std::vector<NodeId> parents, std::vector<int> stages,
                                    std::vector<double> probs, std::vector<NodeData> data) {
    const std::size_t n = parents.size();
    if (n == 0) throw InputError("tree has no nodes");
    if (stages.size() != n || probs.size() != n || data.size() != n)
        throw InputError("parents, stages, probs and nodes must have equal lengths");
    if (parents[0] != kNoParent) throw InputError("node 0 must be the root (no parent)");

    ScenarioTree t;
    t.dims_ = data[0].dims();
    t.children_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        check_dims(data[i], t.dims_, i);
        if (stages[i] < 0) throw InputError("negative stage at node " + std::to_string(i));
        if (i > 0) {
            if (parents[i] == kNoParent || parents[i] >= i)
                throw InputError("node " + std::to_string(i) +
                                 ": parent index must precede the node (disconnected or cyclic)");
            t.children_[parents[i]].push_back(i);
        }
    }
    t.horizon_ = *std::max_element(stages.begin(), stages.end());
    t.by_stage_.resize(static_cast<std::size_t>(t.horizon_) + 1);
    for (std::size_t i = 0; i < n; ++i) t.by_stage_[static_cast<std::size_t>(stages[i])].push_back(i);

    t.parent_ = std::move(parents);
    t.stage_ = std::move(stages);
    t.pi_ = std::move(probs);
    t.data_ = std::move(data);
    return t;
}

const std::vector<NodeId>& ScenarioTree::stage_nodes(int t) const {
    static const std::vector<NodeId> empty;
    if (t < 0 || t > horizon_) return empty;
    return by_stage_[static_cast<std::size_t>(t)];
}

bool ScenarioTree::is_ancestor(NodeId k, NodeId j) const {
    if (k >= size() || j >= size()) return false;
    while (j != kNoParent && j >= k) {
        if (j == k) return true;
        j = parent_[j];
    }
    return false;
}

std::vector<NodeId> ScenarioTree::path_to(NodeId j) const {
    std::vector<NodeId> path;
    for (NodeId v = j; v != kNoParent; v = parent_.at(v)) path.push_back(v);
    std::reverse(path.begin(), path.end());
    return path;
}

std::vector<NodeId> ScenarioTree::leaves() const {
    std::vector<NodeId> out;
    for (NodeId i = 0; i < size(); ++i)
        if (is_leaf(i)) out.push_back(i);
    return out;
}

ScenarioTree ScenarioTree::with_data(NodeId i, NodeData data) const {
    check_dims(data, dims_, i);
    ScenarioTree t = *this;
    t.data_.at(i) = std::move(data);
    return t;
}

ScenarioTree build_tree_stagewise(const std::vector<std::vector<Outcome>>& per_stage_outcomes) {
    if (per_stage_outcomes.empty()) throw InputError("empty stage list");
    if (per_stage_outcomes[0].size() != 1)
        throw InputError("stage 0 must have exactly one outcome");
    const Dims dims = per_stage_outcomes[0][0].data.dims();
    for (std::size_t t = 0; t < per_stage_outcomes.size(); ++t) {
        const auto& outs = per_stage_outcomes[t];
        if (outs.empty()) throw InputError("stage " + std::to_string(t) + " has no outcomes");
        double sum = 0.0;
        for (const auto& o : outs) {
            if (!(o.prob > 0.0))
                throw InputError("stage " + std::to_string(t) + ": probabilities must be positive");
            if (o.data.dims() != dims)
                throw InputError("dimension mismatch at stage " + std::to_string(t));
            sum += o.prob;
        }
        if (std::abs(sum - 1.0) > kProbTol)
            throw InputError("stage " + std::to_string(t) + ": probabilities sum to " +
                             fmt_prob(sum) + " ≠ 1.0");
    }

    std::vector<NodeId> parents{kNoParent};
    std::vector<int> stages{0};
    std::vector<double> probs{1.0};
    std::vector<NodeData> data{per_stage_outcomes[0][0].data};
    std::size_t begin = 0, end = 1;
    for (std::size_t t = 1; t < per_stage_outcomes.size(); ++t) {
        for (std::size_t j = begin; j < end; ++j) {
            for (const auto& o : per_stage_outcomes[t]) {
                parents.push_back(j);
                stages.push_back(static_cast<int>(t));
                probs.push_back(probs[j] * o.prob);
                data.push_back(o.data);
            }
        }
        begin = end;
        end = parents.size();
    }
    return ScenarioTree::assemble(std::move(parents), std::move(stages), std::move(probs),
                                  std::move(data));
}

ScenarioTree build_tree_explicit(std::vector<NodeId> parents, std::vector<int> stages,
                                 std::vector<double> probs, std::vector<NodeData> data) {
    ScenarioTree tree = ScenarioTree::assemble(std::move(parents), std::move(stages),
                                               std::move(probs), std::move(data));
    const ValidationReport report = validate_tree(tree);
    if (!report.ok()) throw InputError(report.summary());
    return tree;
}

double conditional_prob(const ScenarioTree& tree, NodeId j, NodeId k) {
    if (!tree.is_ancestor(k, j))
        throw InputError("node " + std::to_string(k) + " is not an ancestor of node " +
                         std::to_string(j));
    if (j == k) return 1.0;
    return tree.pi(j) / tree.pi(k);
}

std::vector<NodeId> subtree_nodes(const ScenarioTree& tree, NodeId k, int W) {
    if (k >= tree.size()) throw InputError("invalid node " + std::to_string(k));
    if (W < 0) throw InputError("horizon W must be nonnegative");
    std::vector<NodeId> out{k};
    std::size_t begin = 0;
    for (int s = 0; s < W; ++s) {
        const std::size_t end = out.size();
        for (std::size_t i = begin; i < end; ++i)
            for (NodeId c : tree.children(out[i])) out.push_back(c);
        if (out.size() == end) break;
        begin = end;
    }
    return out;
}

std::vector<NodeId> subtree_stage_nodes(const ScenarioTree& tree, NodeId k, int t) {
    std::vector<NodeId> level{k};
    for (int s = tree.stage(k); s < t; ++s) {
        std::vector<NodeId> next;
        for (NodeId i : level)
            for (NodeId c : tree.children(i)) next.push_back(c);
        level = std::move(next);
    }
    if (t < tree.stage(k)) level.clear();
    return level;
}

std::string ValidationReport::summary() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < issues.size(); ++i) {
        if (i) os << "; ";
        os << issues[i].message;
    }
    return os.str();
}

ValidationReport validate_tree(const ScenarioTree& tree) {
    ValidationReport rep;
    auto add = [&rep](std::vector<NodeId> nodes, std::string msg) {
        rep.issues.push_back({std::move(nodes), std::move(msg)});
    };
    const std::size_t n = tree.size();

    if (std::abs(tree.pi(0) - 1.0) > kProbTol)
        add({0}, "root probability ≠ 1 (got " + fmt_prob(tree.pi(0)) + ")");
    if (tree.stage(0) != 0) add({0}, "root stage must be 0");

    for (NodeId i = 0; i < n; ++i) {
        const std::string at = "node " + std::to_string(i) + ": ";
        if (!(tree.pi(i) > 0.0) || tree.pi(i) > 1.0 + kProbTol)
            add({i}, at + "probability " + fmt_prob(tree.pi(i)) + " outside (0, 1]");
        if (i > 0) {
            const NodeId p = tree.parent(i);
            if (tree.stage(i) != tree.stage(p) + 1)
                add({p, i}, at + "stage " + std::to_string(tree.stage(i)) +
                                " is not parent stage + 1");
            if (tree.stage(i) < tree.stage(i - 1) ||
                (tree.stage(i) == tree.stage(i - 1) && p < tree.parent(i - 1)))
                add({i}, at + "indices not in breadth-first order");
        }
        if (tree.is_leaf(i)) {
            if (tree.stage(i) != tree.horizon())
                add({i}, at + "leaf at wrong stage " + std::to_string(tree.stage(i)) +
                             " (horizon " + std::to_string(tree.horizon()) + ")");
        } else {
            double sum = 0.0;
            for (NodeId c : tree.children(i)) sum += tree.pi(c);
            if (std::abs(sum - tree.pi(i)) > kProbTol)
                add({i}, at + "children sum " + fmt_prob(sum) + " ≠ " + fmt_prob(tree.pi(i)));
        }
        const NodeData& d = tree.data(i);
        if (!symmetric(d.Q)) add({i}, at + "Q not symmetric");
        if (!symmetric(d.R)) add({i}, at + "R not symmetric");
    }
    return rep;
}

}  // namespace spc
