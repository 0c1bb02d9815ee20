#include <gtest/gtest.h>

#include <cmath>

#include "spc/controller.hpp"
#include "test_util.hpp"

using namespace spc;
using spc::testing::chain;
using spc::testing::scalar_initial;
using spc::testing::scalar_node;

namespace {

ScenarioTree zero_tree() {
    const NodeData n = scalar_node(0.3, 0.7, 1, 1);
    return build_tree_stagewise({{Outcome{n, 1.0}}, {Outcome{n, 0.4}, Outcome{n, 0.6}}, {Outcome{n, 0.5}, Outcome{n, 0.5}}});
}

}  // namespace

TEST(Spc, FullHorizonEqualsOptimal) {
    const auto inst = spc::testing::instance(11, 4, 2);
    const int T = inst.tree.horizon();
    const PolicySolution opt = solve_optimal(inst.tree, inst.w_prev);
    const ClosedLoopTrace tr = run_spc(inst.tree, inst.w_prev, T);
    EXPECT_LE(spc::testing::max_gap(tr.x, opt.x), 1e-8);
    EXPECT_LE(spc::testing::max_gap(tr.u, opt.u), 1e-8);
    EXPECT_NEAR(tr.performance, opt.objective, 1e-8 * (1 + std::abs(opt.objective)));
    EXPECT_LE(std::abs(dynamic_regret(inst.tree, inst.w_prev, T).regret), 1e-8);
}

TEST(Spc, ZeroLookaheadChain) {
    const InitialCondition w0 = scalar_initial(1, 0);
    for (int T : {1, 3, 6}) {
        const ScenarioTree t = chain(T, scalar_node(1, 1, 1, 1));
        const ClosedLoopTrace tr = run_spc(t, w0, 0);
        // Forward simulation with u = 0: x_t = x_{t-1} = 1.
        double J = 0.0;
        for (NodeId i = 0; i < t.size(); ++i) {
            EXPECT_NEAR(tr.u[i](0), 0.0, 1e-14);
            EXPECT_NEAR(tr.x[i](0), 1.0, 1e-14);
            J += 0.5 * tr.x[i](0) * tr.x[i](0);
        }
        EXPECT_NEAR(tr.performance, (T + 1) / 2.0, 1e-12);
        EXPECT_NEAR(tr.performance, J, 1e-12);
    }
}

TEST(Spc, ChainRegretClosedForm) {
    const ScenarioTree t = chain(1, scalar_node(1, 1, 1, 1));
    const InitialCondition w0 = scalar_initial(1, 0);
    const auto oracle = spc::testing::dense_oracle(t, w0);
    const RegretResult r = dynamic_regret(t, w0, 0);
    EXPECT_NEAR(r.J_star, oracle.objective, 1e-12);
    EXPECT_NEAR(r.J_star, 0.75, 1e-12);
    EXPECT_NEAR(r.J_W, 1.0, 1e-12);
    EXPECT_NEAR(r.regret, 0.25, 1e-12);
}

TEST(Spc, ZeroLookaheadStepSolvesLocally) {
    const auto inst = spc::testing::instance(12, 3, 2);
    for (NodeId k : {NodeId{0}, NodeId{3}, NodeId{9}}) {
        const SpcStep s = spc_step(inst.tree, k, inst.w_prev, 0);
        const NodeData& d = inst.tree.data(k);
        EXPECT_LE((s.u - d.R.ldlt().solve(d.r)).norm(), 1e-10);
        EXPECT_LE((s.x - (d.A * inst.w_prev.x_prev + d.B * inst.w_prev.u_prev + d.d)).norm(), 1e-12);
    }
}

TEST(Spc, ZeroDataGivesZero) {
    const ScenarioTree t = zero_tree();
    const InitialCondition w0 = scalar_initial(0, 0);
    for (int W = 0; W <= 2; ++W) {
        const ClosedLoopTrace tr = run_spc(t, w0, W);
        EXPECT_EQ(tr.performance, 0.0);
        for (NodeId i = 0; i < t.size(); ++i) EXPECT_EQ(tr.u[i].norm(), 0.0);
    }
    EXPECT_EQ(solve_optimal(t, w0).objective, 0.0);
    EXPECT_EQ(solve_here_and_now(t, w0).objective, 0.0);
    EXPECT_EQ(solve_anticipative(t, w0).objective, 0.0);
    const ClosedLoopTrace tr = run_spc(t, w0, 1);
    for (const auto& v : hypothetical_state(t, tr, w0)) EXPECT_EQ(v.norm(), 0.0);
    EXPECT_EQ(check_time_consistency(t, 0, 1, w0), 0.0);
}

TEST(Spc, SingletonSupportCollapsesBaselines) {
    const ScenarioTree t = chain(4, scalar_node(0.9, 0.5, 1.0, 0.8, 0.1, 0.2, -0.3));
    const InitialCondition w0 = scalar_initial(0.5, -0.2);
    const double J = solve_optimal(t, w0).objective;
    EXPECT_NEAR(solve_here_and_now(t, w0).objective, J, 1e-9);
    EXPECT_NEAR(solve_anticipative(t, w0).objective, J, 1e-9);
    EXPECT_LE(check_time_consistency(t, 0, 2, w0), 1e-8);
}

TEST(Spc, SandwichOnRandomInstances) {
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        const auto inst = spc::testing::instance(seed, 3, 3);
        const double an = solve_anticipative(inst.tree, inst.w_prev).objective;
        const double opt = solve_optimal(inst.tree, inst.w_prev).objective;
        const double hn = solve_here_and_now(inst.tree, inst.w_prev).objective;
        EXPECT_LE(an, opt + 1e-9);
        EXPECT_LE(opt, hn + 1e-9);
    }
}

TEST(Spc, HereAndNowSharesStageControls) {
    const auto inst = spc::testing::instance(13, 3, 2);
    const HereAndNowSolution hn = solve_here_and_now(inst.tree, inst.w_prev);
    ASSERT_EQ(hn.u_stage.size(), 4u);
    std::vector<Eigen::VectorXd> u(inst.tree.size());
    for (NodeId i = 0; i < inst.tree.size(); ++i) u[i] = hn.u_stage[static_cast<std::size_t>(inst.tree.stage(i))];
    EXPECT_NEAR(tree_performance(inst.tree, hn.x, u), hn.objective, 1e-9 * (1 + std::abs(hn.objective)));
}

TEST(Spc, Nonanticipativity) {
    const auto inst = spc::testing::instance(14, 4, 2);
    const ScenarioTree& t = inst.tree;
    const NodeId k = 2;
    const int W = 1;
    const SpcStep base = spc_step(t, k, inst.w_prev, W);
    const auto inside = subtree_nodes(t, k, W);
    int mutated = 0;
    for (NodeId i = 0; i < t.size(); ++i) {
        if (std::binary_search(inside.begin(), inside.end(), i)) continue;
        NodeData d = t.data(i);
        d.q.array() += 3.0;
        d.A *= 0.5;
        d.d.array() -= 1.0;
        const ScenarioTree changed = t.with_data(i, d);
        const SpcStep s = spc_step(changed, k, inst.w_prev, W);
        EXPECT_EQ(s.x, base.x) << "node " << i;
        EXPECT_EQ(s.u, base.u) << "node " << i;
        ++mutated;
    }
    EXPECT_GT(mutated, 10);
    // A node inside the window does move the commitment.
    NodeData d = t.data(inside.back());
    d.q.array() += 3.0;
    EXPECT_NE(spc_step(t.with_data(inside.back(), d), k, inst.w_prev, W).u, base.u);
}

TEST(Spc, RegretNonnegative) {
    const auto inst = spc::testing::instance(15, 4, 2);
    for (int W = 0; W <= 4; ++W) {
        const RegretResult r = dynamic_regret(inst.tree, inst.w_prev, W);
        EXPECT_GE(r.regret, -1e-8 * (1 + std::abs(r.J_star)));
    }
}

TEST(Recursion, ReproducesClosedLoop) {
    const auto inst = spc::testing::instance(16, 4, 2);
    const ScenarioTree& t = inst.tree;
    for (int W : {0, 1, 3}) {
        const ClosedLoopTrace tr = run_spc(t, inst.w_prev, W);
        const RecursionMatrices rec = recursion_matrices(t, W);
        const auto w = iterate_recursion(t, rec, inst.w_prev);
        for (NodeId i = 0; i < t.size(); ++i) EXPECT_LE((w[i] - tr.w(i)).norm(), 1e-8) << "W=" << W;
        for (int s = 0; s <= t.horizon(); ++s) {
            const BlockVector e = expansion_commitments(t, rec, inst.w_prev, s);
            for (std::size_t a = 0; a < e.nodes().size(); ++a)
                EXPECT_LE((e.block(a) - tr.w(e.nodes()[a])).norm(), 1e-8) << "W=" << W << " t=" << s;
        }
    }
}

TEST(Recursion, DecoupledDynamicsHaveNoFeedback) {
    const NodeData n = scalar_node(0, 0, 1, 1, 0.4, 0.1, 0.2);
    const ScenarioTree t = build_tree_stagewise({{Outcome{n, 1.0}}, {Outcome{n, 0.5}, Outcome{n, 0.5}}});
    const RecursionMatrices rec = recursion_matrices(t, 1);
    for (NodeId i = 1; i < t.size(); ++i) EXPECT_NEAR(rec.S[i].norm(), 0.0, 1e-14);
}

TEST(Recursion, HypotheticalStateAtFullHorizon) {
    const auto inst = spc::testing::instance(17, 4, 2);
    const ClosedLoopTrace tr = run_spc(inst.tree, inst.w_prev, 4);
    const auto hat = hypothetical_state(inst.tree, tr, inst.w_prev);
    for (NodeId i = 0; i < inst.tree.size(); ++i) EXPECT_LE((hat[i] - tr.w(i)).norm(), 1e-8);
}

TEST(TimeConsistency, RootAndChildren) {
    const auto inst = spc::testing::instance(18, 4, 2);
    for (NodeId j : inst.tree.children(0)) EXPECT_LE(check_time_consistency(inst.tree, 0, j, inst.w_prev), 1e-8);
    const NodeId deep = inst.tree.stage_nodes(3).front();
    EXPECT_LE(check_time_consistency(inst.tree, 1, deep, inst.w_prev), 1e-8);
}
