#pragma once

#include <Eigen/Dense>

#include <vector>

#include "spc/experiments.hpp"
#include "spc/tree.hpp"

namespace spc::testing {

inline NodeData scalar_node(double A, double B, double Q, double R, double d = 0, double q = 0, double r = 0) {
    NodeData n;
    n.A = Eigen::MatrixXd::Constant(1, 1, A);
    n.B = Eigen::MatrixXd::Constant(1, 1, B);
    n.Q = Eigen::MatrixXd::Constant(1, 1, Q);
    n.R = Eigen::MatrixXd::Constant(1, 1, R);
    n.d = Eigen::VectorXd::Constant(1, d);
    n.q = Eigen::VectorXd::Constant(1, q);
    n.r = Eigen::VectorXd::Constant(1, r);
    return n;
}

inline ScenarioTree chain(int T, const NodeData& node) {
    std::vector<std::vector<Outcome>> stages(static_cast<std::size_t>(T + 1), {Outcome{node, 1.0}});
    return build_tree_stagewise(stages);
}

inline InitialCondition scalar_initial(double x, double u) {
    return {Eigen::VectorXd::Constant(1, x), Eigen::VectorXd::Constant(1, u)};
}

inline CertifiedInstance instance(std::uint64_t seed, int T = 4, int branching = 2, int nx = 2, int nu = 2,
                                  double noise = 1.0) {
    InstanceSpec spec;
    spec.seed = seed;
    spec.T = T;
    spec.branching = {branching};
    spec.nx = nx;
    spec.nu = nu;
    spec.noise_scale = noise;
    return generate_certified_instance(spec);
}

struct DenseSolution {
    std::vector<Eigen::VectorXd> x, u;
    double objective = 0.0;
};

// Unscaled extensive form over the whole tree: min sum pi_i l_i subject to
// x_i = A_i x_{a(i)} + B_i u_{a(i)} + d_i, solved as one dense KKT system.
inline DenseSolution dense_oracle(const ScenarioTree& tree, const InitialCondition& w0) {
    const Eigen::Index nx = tree.dims().nx, nu = tree.dims().nu, nw = nx + nu;
    const Eigen::Index N = static_cast<Eigen::Index>(tree.size());
    const Eigen::Index nv = N * nw, nc = N * nx;
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(nv + nc, nv + nc);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nv + nc);
    for (Eigen::Index i = 0; i < N; ++i) {
        const NodeData& d = tree.data(static_cast<NodeId>(i));
        const double pi = tree.pi(static_cast<NodeId>(i));
        K.block(i * nw, i * nw, nx, nx) = pi * d.Q;
        K.block(i * nw + nx, i * nw + nx, nu, nu) = pi * d.R;
        rhs.segment(i * nw, nx) = pi * d.q;
        rhs.segment(i * nw + nx, nu) = pi * d.r;
        const Eigen::Index row = nv + i * nx;
        K.block(row, i * nw, nx, nx) = Eigen::MatrixXd::Identity(nx, nx);
        rhs.segment(row, nx) = d.d;
        if (i == 0) {
            rhs.segment(row, nx) += d.A * w0.x_prev + d.B * w0.u_prev;
        } else {
            const auto a = static_cast<Eigen::Index>(tree.parent(static_cast<NodeId>(i)));
            K.block(row, a * nw, nx, nx) = -d.A;
            K.block(row, a * nw + nx, nx, nu) = -d.B;
        }
    }
    K.topRightCorner(nv, nc) = K.bottomLeftCorner(nc, nv).transpose();
    const Eigen::VectorXd sol = K.fullPivLu().solve(rhs);
    DenseSolution out;
    for (Eigen::Index i = 0; i < N; ++i) {
        const NodeData& d = tree.data(static_cast<NodeId>(i));
        const Eigen::VectorXd x = sol.segment(i * nw, nx), u = sol.segment(i * nw + nx, nu);
        out.objective += tree.pi(static_cast<NodeId>(i)) *
                         (0.5 * x.dot(d.Q * x) + 0.5 * u.dot(d.R * u) - d.q.dot(x) - d.r.dot(u));
        out.x.push_back(x);
        out.u.push_back(u);
    }
    return out;
}

inline double max_gap(const std::vector<Eigen::VectorXd>& a, const std::vector<Eigen::VectorXd>& b) {
    double g = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) g = std::max(g, (a[i] - b[i]).cwiseAbs().maxCoeff());
    return g;
}

}  // namespace spc::testing
