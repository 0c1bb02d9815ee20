#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kCli = SPC_LAB_CLI_PATH;
const std::string kFixtures = SPC_LAB_FIXTURES;

struct CliResult {
    int code = -1;
    std::string out, err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("spc_lab_cli_" + std::to_string(::getpid())) / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

CliResult run(const std::string& args, const fs::path& dir) {
    const fs::path out = dir / "stdout.txt", err = dir / "stderr.txt";
    const std::string cmd = "'" + kCli + "' " + args + " > '" + out.string() + "' 2> '" + err.string() + "'";
    const int status = std::system(cmd.c_str());
    CliResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

std::string fixture(const std::string& name) { return "'" + kFixtures + "/" + name + "'"; }

}  // namespace

TEST(Cli, HelpAndUsageErrors) {
    const fs::path d = scratch("help");
    const CliResult help = run("--help", d);
    EXPECT_EQ(help.code, 0);
    EXPECT_NE(help.out.find("regret-sweep"), std::string::npos);
    EXPECT_EQ(run("", d).code, 2);
    EXPECT_EQ(run("solve --input " + fixture("no_such_file.json") + " --out '" + d.string() + "'", d).code, 2);
    EXPECT_EQ(run("spc --W nope --input " + fixture("zero_data.json"), d).code, 2);
}

TEST(Cli, MalformedProbabilitiesExitTwo) {
    const fs::path d = scratch("bad");
    const CliResult r = run("build-tree --input " + fixture("bad_probs.json") + " --out '" + d.string() + "'", d);
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("children sum"), std::string::npos) << r.err;
}

TEST(Cli, InflatedGainExitsFour) {
    const fs::path d = scratch("cert");
    const CliResult bad = run("certify --input " + fixture("zero_data.json") + " --cert " + fixture("inflated_gain.json") +
                            " --out '" + d.string() + "'",
                        d);
    EXPECT_EQ(bad.code, 4);
    EXPECT_NE((bad.out + bad.err).find("gain bound violated"), std::string::npos);
    const CliResult good = run("certify --input " + fixture("zero_data.json") + " --cert " + fixture("valid_gain.json") +
                             " --out '" + d.string() + "'",
                         d);
    EXPECT_EQ(good.code, 0) << good.out << good.err;
}

TEST(Cli, ZeroDataSolvesToZero) {
    const fs::path d = scratch("zero");
    const CliResult r = run("solve --input " + fixture("zero_data.json") + " --out '" + d.string() + "'", d);
    ASSERT_EQ(r.code, 0) << r.err;
    const json s = json::parse(slurp(d / "summary.json"));
    EXPECT_EQ(s.at("objective").get<double>(), 0.0);
    EXPECT_TRUE(fs::exists(d / "trace.csv"));
}

TEST(Cli, SevenNodeMatchesReference) {
    const fs::path d = scratch("seven");
    const json expected = json::parse(slurp(fs::path(kFixtures) / "seven_node_expected.json"));
    const double J = expected.at("objective").get<double>();
    const CliResult r = run("solve --input " + fixture("seven_node.json") + " --out '" + d.string() + "'", d);
    ASSERT_EQ(r.code, 0) << r.err;
    const json s = json::parse(slurp(d / "summary.json"));
    EXPECT_NEAR(s.at("objective").get<double>(), J, 1e-8);

    const std::string trace = slurp(d / "trace.csv");
    const std::string row0 = trace.substr(trace.find('\n') + 1, trace.find('\n', trace.find('\n') + 1) - trace.find('\n') - 1);
    const double u0 = std::stod(row0.substr(row0.rfind(',') + 1));
    EXPECT_NEAR(u0, expected.at("u_root")[0].get<double>(), 1e-8);

    const fs::path dh = scratch("seven_hn"), da = scratch("seven_an");
    ASSERT_EQ(run("solve --policy hn --input " + fixture("seven_node.json") + " --out '" + dh.string() + "'", dh).code, 0);
    ASSERT_EQ(run("solve --policy an --input " + fixture("seven_node.json") + " --out '" + da.string() + "'", da).code, 0);
    const double hn = json::parse(slurp(dh / "summary.json")).at("objective").get<double>();
    const double an = json::parse(slurp(da / "summary.json")).at("objective").get<double>();
    EXPECT_LE(an, J + 1e-9);
    EXPECT_LE(J, hn + 1e-9);
}

TEST(Cli, SpcFullWindowHasZeroRegret) {
    const fs::path d = scratch("spc");
    const CliResult r = run("spc --W 2 --input " + fixture("seven_node.json") + " --out '" + d.string() + "'", d);
    ASSERT_EQ(r.code, 0) << r.err;
    const json s = json::parse(slurp(d / "summary.json"));
    EXPECT_LE(std::abs(s.at("regret").get<double>()), 1e-8);
}

TEST(Cli, GeneratedRunsAreByteIdentical) {
    const fs::path g = scratch("gen");
    ASSERT_EQ(run("generate --seed 5 --T 4 --out '" + g.string() + "'", g).code, 0);
    const std::string problem = "'" + (g / "problem.json").string() + "'";
    const fs::path a = scratch("sweep_a"), b = scratch("sweep_b");
    const CliResult ra = run("regret-sweep --input " + problem + " --out '" + a.string() + "'", a);
    const CliResult rb = run("regret-sweep --input " + problem + " --out '" + b.string() + "'", b);
    ASSERT_EQ(ra.code, 0) << ra.err;
    ASSERT_EQ(rb.code, 0) << rb.err;
    EXPECT_EQ(slurp(a / "regret.csv"), slurp(b / "regret.csv"));
    EXPECT_EQ(slurp(a / "run.json"), slurp(b / "run.json"));
    EXPECT_EQ(ra.out, rb.out);

    const fs::path g2 = scratch("gen2");
    ASSERT_EQ(run("generate --seed 5 --T 4 --out '" + g2.string() + "'", g2).code, 0);
    EXPECT_EQ(slurp(g / "problem.json"), slurp(g2 / "problem.json"));

    const fs::path v = scratch("verify");
    const CliResult rv = run("verify-bounds --suite all --trials 10 --input " + problem + " --cert '" +
                           (g / "certificate.json").string() + "' --out '" + v.string() + "'",
                       v);
    EXPECT_EQ(rv.code, 0) << rv.out << rv.err;
    EXPECT_EQ(rv.out.find("FAIL"), std::string::npos) << rv.out;
    EXPECT_TRUE(fs::exists(v / "report.txt"));
}

TEST(Cli, ConstantsCommand) {
    const fs::path d = scratch("consts");
    const CliResult r = run("constants --L 1 --alpha 0.5 --gamma 1", d);
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("L_H"), std::string::npos);
}
