#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "spc/error.hpp"
#include "spc/kkt.hpp"
#include "test_util.hpp"

using namespace spc;
using spc::testing::chain;
using spc::testing::scalar_initial;
using spc::testing::scalar_node;

namespace {

ScenarioTree binary_tree(int T, std::mt19937_64& g, double scale = 1.0) {
    std::uniform_real_distribution<double> u(-1.0, 1.0), pos(0.5, 1.5);
    std::vector<std::vector<Outcome>> stages;
    for (int t = 0; t <= T; ++t) {
        std::vector<Outcome> outs;
        const int m = t == 0 ? 1 : 2;
        const double p0 = t == 0 ? 1.0 : 0.3;
        for (int o = 0; o < m; ++o) {
            NodeData n;
            n.A = scale * Eigen::MatrixXd::NullaryExpr(2, 2, [&] { return u(g); });
            n.B = scale * Eigen::MatrixXd::NullaryExpr(2, 1, [&] { return u(g); });
            const Eigen::MatrixXd C = Eigen::MatrixXd::NullaryExpr(2, 2, [&] { return u(g); });
            n.Q = C * C.transpose();
            n.R = Eigen::MatrixXd::Constant(1, 1, pos(g));
            n.d = Eigen::VectorXd::NullaryExpr(2, [&] { return u(g); });
            n.q = Eigen::VectorXd::NullaryExpr(2, [&] { return u(g); });
            n.r = Eigen::VectorXd::NullaryExpr(1, [&] { return u(g); });
            outs.push_back({n, o == 0 ? p0 : 1.0 - p0});
        }
        stages.push_back(outs);
    }
    return build_tree_stagewise(stages);
}

InitialCondition random_initial(std::mt19937_64& g, Dims d) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    return {Eigen::VectorXd::NullaryExpr(d.nx, [&] { return u(g); }),
            Eigen::VectorXd::NullaryExpr(d.nu, [&] { return u(g); })};
}

}  // namespace

TEST(ScaledKkt, SingleNodeMatrix) {
    const ScenarioTree t = chain(0, scalar_node(0, 0, 1, 1));
    const ScaledKkt kkt(t, 0, 0);
    Eigen::Matrix3d expected;
    expected << 1, 0, 1, 0, 1, 0, 1, 0, 0;
    EXPECT_EQ(kkt.dense(), Eigen::MatrixXd(expected));
}

TEST(ScaledKkt, ChildCouplingCarriesConditionalScale) {
    const NodeData n = scalar_node(1, 1, 1, 1);
    const ScenarioTree t = build_tree_stagewise({{Outcome{n, 1.0}}, {Outcome{n, 0.5}, Outcome{n, 0.5}}});
    const ScaledKkt kkt(t, 0, 1);
    const Eigen::MatrixXd H = kkt.dense();
    for (Eigen::Index c : {1, 2}) {
        EXPECT_NEAR(H(c * 3 + 2, 0), -std::sqrt(0.5), 1e-15);
        EXPECT_NEAR(H(c * 3 + 2, 1), -std::sqrt(0.5), 1e-15);
        EXPECT_EQ(H(c * 3 + 2, 2), 0.0);
    }
    EXPECT_EQ((H - H.transpose()).norm(), 0.0);
}

TEST(ScaledKkt, SymmetricOnGeneratedInstances) {
    const auto inst = spc::testing::instance(3, 3, 3);
    for (NodeId k : {NodeId{0}, NodeId{2}}) {
        const Eigen::MatrixXd H = ScaledKkt(inst.tree, k, 2).dense();
        EXPECT_EQ((H - H.transpose()).cwiseAbs().maxCoeff(), 0.0);
    }
}

TEST(SolveExtensive, ZeroData) {
    const ScenarioTree t = chain(3, scalar_node(0, 0, 1, 1));
    const PolicySolution s = solve_extensive(t, 0, 3, scalar_initial(0, 0));
    EXPECT_EQ(s.objective, 0.0);
    for (std::size_t a = 0; a < s.nodes.size(); ++a) {
        EXPECT_EQ(s.x[a].norm(), 0.0);
        EXPECT_EQ(s.u[a].norm(), 0.0);
    }
}

TEST(SolveExtensive, SingleNodeClosedForm) {
    const ScenarioTree t = chain(0, scalar_node(1, 1, 1, 1, 0, 0, 1));
    const PolicySolution s = solve_extensive(t, 0, 0, scalar_initial(0, 0));
    EXPECT_NEAR(s.x[0](0), 0.0, 1e-14);
    EXPECT_NEAR(s.u[0](0), 1.0, 1e-14);
    EXPECT_NEAR(s.objective, -0.5, 1e-14);
}

TEST(SolveExtensive, TwoNodeChain) {
    const ScenarioTree t = chain(1, scalar_node(1, 1, 1, 1));
    const InitialCondition w0 = scalar_initial(1, 0);
    const PolicySolution s = solve_extensive(t, 0, 1, w0);
    const auto oracle = spc::testing::dense_oracle(t, w0);
    EXPECT_NEAR(oracle.u[0](0), -0.5, 1e-12);
    EXPECT_NEAR(oracle.x[1](0), 0.5, 1e-12);
    EXPECT_NEAR(oracle.objective, 0.75, 1e-12);
    EXPECT_NEAR(s.u[0](0), -0.5, 1e-12);
    EXPECT_NEAR(s.x[1](0), 0.5, 1e-12);
    EXPECT_NEAR(s.objective, 0.75, 1e-12);
}

TEST(SolveExtensive, MatchesDenseOracleOnRandomTrees) {
    std::mt19937_64 g(31);
    for (int T : {2, 3, 4}) {
        const ScenarioTree t = binary_tree(T, g);
        const InitialCondition w0 = random_initial(g, t.dims());
        const PolicySolution s = solve_extensive(t, 0, T, w0);
        const auto oracle = spc::testing::dense_oracle(t, w0);
        EXPECT_LE(spc::testing::max_gap(s.x, oracle.x), 1e-8) << "T=" << T;
        EXPECT_LE(spc::testing::max_gap(s.u, oracle.u), 1e-8);
        EXPECT_NEAR(s.objective, oracle.objective, 1e-8 * (1 + std::abs(oracle.objective)));
    }
    for (std::uint64_t seed : {1u, 2u}) {
        const auto inst = spc::testing::instance(seed, 4, 2);
        const PolicySolution s = solve_extensive(inst.tree, 0, 4, inst.w_prev);
        const auto oracle = spc::testing::dense_oracle(inst.tree, inst.w_prev);
        EXPECT_LE(spc::testing::max_gap(s.x, oracle.x), 1e-8);
        EXPECT_LE(spc::testing::max_gap(s.u, oracle.u), 1e-8);
    }
}

TEST(SolveExtensive, SubtreeSolveSatisfiesDynamics) {
    const auto inst = spc::testing::instance(4, 4, 2);
    const ScenarioTree& t = inst.tree;
    const NodeId k = 2;
    const PolicySolution s = solve_extensive(t, k, 2, inst.w_prev);
    const NodeData& dk = t.data(k);
    EXPECT_LE((s.x[0] - (dk.A * inst.w_prev.x_prev + dk.B * inst.w_prev.u_prev + dk.d)).norm(), 1e-8);
    double obj = 0.0;
    for (std::size_t a = 0; a < s.nodes.size(); ++a) {
        const NodeId i = s.nodes[a];
        obj += t.pi(i) / t.pi(k) * stage_cost(t.data(i), s.x[a], s.u[a]);
        if (a == 0) continue;
        const std::size_t p = s.local(t.parent(i));
        const NodeData& d = t.data(i);
        EXPECT_LE((s.x[a] - (d.A * s.x[p] + d.B * s.u[p] + d.d)).norm(), 1e-8);
    }
    EXPECT_NEAR(obj, s.objective, 1e-10 * (1 + std::abs(obj)));
}

TEST(SolveExtensive, BitwiseDeterministic) {
    const auto inst = spc::testing::instance(5, 5, 2);
    const PolicySolution a = solve_extensive(inst.tree, 0, 5, inst.w_prev);
    const PolicySolution b = solve_extensive(inst.tree, 0, 5, inst.w_prev);
    EXPECT_EQ(a.objective, b.objective);
    for (std::size_t i = 0; i < a.x.size(); ++i) {
        EXPECT_EQ(a.x[i], b.x[i]);
        EXPECT_EQ(a.u[i], b.u[i]);
    }
}

TEST(SolveExtensive, ResidualContractHolds) {
    reset_kkt_residual_stats();
    const auto inst = spc::testing::instance(6, 4, 3);
    for (NodeId k = 0; k < 6; ++k) (void)solve_extensive(inst.tree, k, 2, inst.w_prev);
    const KktResidualStats st = kkt_residual_stats();
    EXPECT_GE(st.solves, 6u);
    EXPECT_LE(st.worst_ratio, 1e-8);
}

TEST(SolveExtensive, SingularSystemIsReported) {
    // R = 0 with B = 0 leaves the control undetermined.
    const ScenarioTree t = chain(1, scalar_node(1, 0, 1, 0));
    EXPECT_THROW((void)solve_extensive(t, 0, 1, scalar_initial(0, 0)), SolverError);
}

TEST(SolutionMap, ReproducesSolveLinearly) {
    std::mt19937_64 g(33);
    const ScenarioTree t = binary_tree(3, g);
    const Dims dm = t.dims();
    const SolutionMap map = solution_map(t, 0, 3);
    BlockVector p(t, map.nodes, dm.nz());
    for (std::size_t a = 0; a < map.nodes.size(); ++a) p.block(a) = t.data(map.nodes[a]).perturbation();
    const BlockVector w = map.psi * p;
    const PolicySolution s = solve_extensive(t, 0, 3, InitialCondition::zeros(dm));
    for (std::size_t a = 0; a < map.nodes.size(); ++a) {
        EXPECT_LE((w.block(a).head(dm.nx) - s.x[a]).norm(), 1e-8);
        EXPECT_LE((w.block(a).tail(dm.nu) - s.u[a]).norm(), 1e-8);
    }
    BlockVector p2(t, map.nodes, dm.nz());
    std::normal_distribution<double> nd;
    for (Eigen::Index i = 0; i < p2.values().size(); ++i) p2.values()(i) = nd(g);
    BlockVector sum(t, map.nodes, p.values() + p2.values(), dm.nz());
    const Eigen::VectorXd lhs = (map.psi * sum).values();
    const Eigen::VectorXd rhs = (map.psi * p).values() + (map.psi * p2).values();
    EXPECT_LE((lhs - rhs).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LE((map.omega.row_slice(0, dm.nw()).dense() - map.psi.dense()).norm(), 0.0);
}

TEST(SolutionMap, DecoupledInstance) {
    const NodeData n = scalar_node(0, 0, 1, 1);
    const ScenarioTree t = build_tree_stagewise({{Outcome{n, 1.0}}, {Outcome{n, 0.5}, Outcome{n, 0.5}}, {Outcome{n, 1.0}}});
    const SolutionMap map = solution_map(t, 0, 2);
    for (std::size_t a = 0; a < map.nodes.size(); ++a)
        for (std::size_t b = 0; b < map.nodes.size(); ++b) {
            const Eigen::MatrixXd blk = map.psi.block(a, b);  // rows (x, u), cols (q, r, d)
            if (a == b) {
                EXPECT_NEAR(blk(0, 2), 1.0, 1e-14);  // d -> x
                EXPECT_NEAR(blk(1, 1), 1.0, 1e-14);  // r -> u
                EXPECT_NEAR(blk(0, 0), 0.0, 1e-14);
                EXPECT_NEAR(blk(1, 0), 0.0, 1e-14);
            } else {
                EXPECT_NEAR(blk.norm(), 0.0, 1e-14);
            }
        }
    for (const DecayEntry& e : measure_decay(t, map))
        if (e.t != e.tprime) {
            EXPECT_NEAR(e.psi_norm, 0.0, 1e-14);
        } else {
            EXPECT_GT(e.psi_norm, 0.0);
        }
}

TEST(SolutionMap, RootRowMatchesFullMap) {
    const auto inst = spc::testing::instance(7, 3, 2);
    const SolutionMap map = solution_map(inst.tree, 1, 2);
    const BlockMatrix row = root_row_map(inst.tree, 1, 2);
    for (std::size_t b = 0; b < map.nodes.size(); ++b)
        EXPECT_LE((row.block(0, b) - map.omega.block(0, b)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Regularity, SingleNodeExample) {
    const ScenarioTree t = chain(0, scalar_node(0, 0, 1, 1));
    const RegularityReport r = check_uniform_regularity(t, 0, 0, {3.0, 1.0, 1.0});
    EXPECT_NEAR(r.FFt_min_eig, 1.0, 1e-12);
    EXPECT_NEAR(r.ReH_min_eig, 1.0, 1e-12);
    EXPECT_NEAR(r.H_norm, (1 + std::sqrt(5.0)) / 2, 1e-12);
    EXPECT_TRUE(r.pass());
    const RegularityReport tight = check_uniform_regularity(t, 0, 0, {1.5, 1.0, 1.0});
    EXPECT_FALSE(tight.H_pass);
}

TEST(Regularity, GeneratedInstancesPass) {
    const auto inst = spc::testing::instance(8, 4, 2);
    const RegularityBounds b = regularity_bounds(inst.constants);
    for (NodeId k : {NodeId{0}, NodeId{1}, NodeId{5}}) {
        const RegularityReport r = check_uniform_regularity(inst.tree, k, 3, b);
        EXPECT_TRUE(r.pass()) << r.H_norm << " " << r.FFt_min_eig << " " << r.ReH_min_eig;
    }
}
