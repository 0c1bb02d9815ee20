#include <gtest/gtest.h>

#include "spc/error.hpp"
#include "spc/problem_io.hpp"
#include "test_util.hpp"

using namespace spc;

namespace {

const char* kStagewise = R"({
  "dims": {"nx": 1, "nu": 1},
  "horizon": 1,
  "stagewise": [
    [{"prob": 1.0, "A": [[1]], "B": [[1]], "Q": [[1]], "R": [[1]], "d": [0], "q": [0], "r": [0]}],
    [{"prob": 0.25, "A": [[1]], "B": [[1]], "Q": [[1]], "R": [[1]], "d": [0], "q": [0], "r": [0]},
     {"prob": 0.75, "A": [[1]], "B": [[1]], "Q": [[1]], "R": [[2]], "d": [1], "q": [0], "r": [0]}]
  ],
  "initial": {"x_prev": [1], "u_prev": [0]},
  "constants": {"L": 2, "alpha": 0.5, "gamma": 1}
})";

std::string expect_input_error(const std::string& text) {
    try {
        (void)parse_problem(text);
    } catch (const InputError& e) {
        return e.what();
    }
    ADD_FAILURE() << "no error";
    return {};
}

}  // namespace

TEST(ProblemIo, ParsesStagewise) {
    const Problem p = parse_problem(kStagewise);
    EXPECT_EQ(p.tree.size(), 3u);
    EXPECT_DOUBLE_EQ(p.tree.pi(2), 0.75);
    EXPECT_EQ(p.tree.data(2).R(0, 0), 2.0);
    EXPECT_EQ(p.initial.x_prev(0), 1.0);
    ASSERT_TRUE(p.constants.has_value());
    EXPECT_EQ(p.constants->L, 2.0);
}

TEST(ProblemIo, ExplicitRoundTripIsExact) {
    const auto inst = spc::testing::instance(21, 3, 2);
    const Problem p{inst.tree, inst.w_prev, ConstantsSpec{1.0, inst.certified_alpha, 0.5}};
    const std::string text = dump_problem(p);
    const Problem q = parse_problem(text);
    EXPECT_EQ(dump_problem(q), text);
    for (NodeId i = 0; i < p.tree.size(); ++i) {
        EXPECT_EQ(q.tree.pi(i), p.tree.pi(i));
        EXPECT_EQ(q.tree.data(i).A, p.tree.data(i).A);
        EXPECT_EQ(q.tree.data(i).q, p.tree.data(i).q);
    }
    EXPECT_EQ(q.constants->alpha, inst.certified_alpha);
}

TEST(ProblemIo, ErrorsNameTheField) {
    std::string bad = kStagewise;
    bad.replace(bad.find("0.75"), 4, "0.85");
    EXPECT_NE(expect_input_error(bad).find("probabilities sum"), std::string::npos);

    bad = kStagewise;
    bad.replace(bad.find("\"horizon\": 1"), 12, "\"horizon\": 2");
    EXPECT_NE(expect_input_error(bad).find("horizon"), std::string::npos);

    bad = kStagewise;
    bad.replace(bad.find("\"R\": [[2]]"), 10, "\"R\": [[2, 0]]");
    EXPECT_NE(expect_input_error(bad).find("stagewise[1][1].R"), std::string::npos);

    EXPECT_NE(expect_input_error("{").find("not valid JSON"), std::string::npos);
    EXPECT_NE(expect_input_error(R"({"dims": {"nx": 1, "nu": 1}, "horizon": 0})").find("stagewise"),
              std::string::npos);
}

TEST(ProblemIo, CertificateRoundTrip) {
    const auto inst = spc::testing::instance(22, 2, 2);
    const CertificateFile c{inst.stabilizing, inst.detecting};
    const CertificateFile d = parse_certificate(dump_certificate(c));
    EXPECT_EQ(d.stabilizing.gains.size(), c.stabilizing.gains.size());
    EXPECT_EQ(d.detecting.gains.at(1), c.detecting.gains.at(1));
    EXPECT_EQ(d.stabilizing.alpha, c.stabilizing.alpha);
    EXPECT_TRUE(check_stabilizability(inst.tree, d.stabilizing, d.stabilizing.L, d.stabilizing.alpha).pass);
}

TEST(ProblemIo, TraceCsvLayout) {
    const Problem p = parse_problem(kStagewise);
    std::vector<Eigen::VectorXd> x(3, Eigen::VectorXd::Constant(1, 0.1)), u(3, Eigen::VectorXd::Constant(1, -2.0));
    const std::string csv = trace_csv(p.tree, x, u);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "node,stage,parent,pi,x0,u0");
    EXPECT_NE(csv.find("\n0,0,-1,1,0.10000000000000001,-2\n"), std::string::npos) << csv;
    EXPECT_EQ(format_double(0.1), "0.10000000000000001");
    EXPECT_EQ(std::stod(format_double(1.0 / 3.0)), 1.0 / 3.0);
}
