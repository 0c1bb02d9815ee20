// spc-lab: command-line front end for scenario-tree predictive control experiments.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "spc/controller.hpp"
#include "spc/error.hpp"
#include "spc/experiments.hpp"
#include "spc/kernels.hpp"
#include "spc/kkt.hpp"
#include "spc/problem_io.hpp"
#include "spc/system_props.hpp"

#ifndef SPC_LAB_VERSION
#define SPC_LAB_VERSION "0.1.0"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace spc;

namespace {

constexpr int kOk = 0;
constexpr int kInput = 2;
constexpr int kSolver = 3;
constexpr int kVerify = 4;

struct VerificationFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Common {
    std::string input;
    std::string out = ".";
    std::string W;
    double tol_kkt = 1e-8;
    double tol_bound = 1e-9;
    std::optional<double> L, alpha, gamma;
};

void add_common(CLI::App* cmd, Common& c, bool needs_input = true) {
    auto* in = cmd->add_option("--input,-i", c.input, "Problem file (JSON)");
    if (needs_input) in->required();
    cmd->add_option("--out,-o", c.out, "Output directory")->capture_default_str();
    cmd->add_option("--tol-kkt", c.tol_kkt, "Relative KKT residual tolerance")->capture_default_str();
    cmd->add_option("--tol-bound", c.tol_bound, "Relative slack for bound checks")->capture_default_str();
}

void add_constants(CLI::App* cmd, Common& c) {
    cmd->add_option("--L", c.L, "Bound constant L (overrides the problem file)");
    cmd->add_option("--alpha", c.alpha, "Stability rate alpha (overrides the problem file)");
    cmd->add_option("--gamma", c.gamma, "Control-cost floor gamma (overrides the problem file)");
}

void apply_tolerances(const Common& c) {
    set_kkt_tolerance(c.tol_kkt);
    set_bound_tolerance(c.tol_bound);
}

std::string out_path(const Common& c, const std::string& name) {
    fs::create_directories(c.out);
    return (fs::path(c.out) / name).string();
}

int parse_int(const std::string& s, const std::string& what) {
    std::size_t pos = 0;
    int v = 0;
    try {
        v = std::stoi(s, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos == 0 || pos != s.size()) throw InputError("bad " + what + " '" + s + "'");
    return v;
}

// "4", "0..6" or "1,3,5"
std::vector<int> parse_W(const std::string& spec, int T, std::vector<int> fallback) {
    if (spec.empty()) return fallback;
    std::vector<int> out;
    std::stringstream ss(spec);
    for (std::string item; std::getline(ss, item, ',');) {
        const auto dots = item.find("..");
        if (dots == std::string::npos) {
            out.push_back(parse_int(item, "W"));
        } else {
            const int a = parse_int(item.substr(0, dots), "W");
            const int b = parse_int(item.substr(dots + 2), "W");
            if (a > b) throw InputError("empty W range '" + item + "'");
            for (int w = a; w <= b; ++w) out.push_back(w);
        }
    }
    for (int w : out)
        if (w < 0 || w > T)
            throw InputError("W = " + std::to_string(w) + " outside [0, " + std::to_string(T) + "]");
    return out;
}

int single_W(const std::string& spec, int T, int fallback) {
    const std::vector<int> ws = parse_W(spec, T, {fallback});
    if (ws.size() != 1) throw InputError("expected a single W, got '" + spec + "'");
    return ws.front();
}

ConstantsBundle constants_for(const Problem& p, const Common& c) {
    const ConstantsSpec base = p.constants.value_or(ConstantsSpec{});
    if (!p.constants && !(c.L && c.alpha && c.gamma))
        throw InputError("constants required: give L, alpha and gamma in the problem file or as flags");
    return compute_constants(c.L.value_or(base.L), c.alpha.value_or(base.alpha), c.gamma.value_or(base.gamma),
                             p.tree);
}

json constants_json(const ConstantsBundle& c) {
    json j;
    const std::pair<const char*, const Real*> fields[] = {
        {"L", &c.L},         {"alpha", &c.alpha}, {"gamma", &c.gamma}, {"L_H", &c.L_H},
        {"gamma_F", &c.gamma_F}, {"gamma_G", &c.gamma_G}, {"mu_bar", &c.mu_bar}, {"gamma_H", &c.gamma_H},
        {"rho", &c.rho},     {"c1", &c.c1},       {"W_bar", &c.W_bar}, {"c2", &c.c2},
        {"c3", &c.c3},       {"c4", &c.c4},       {"c5", &c.c5},       {"c6", &c.c6},
        {"c7", &c.c7},       {"D", &c.D}};
    for (const auto& [name, v] : fields) j[name] = format_real(*v, 30);
    j["warnings"] = c.warnings;
    return j;
}

void write_manifest(const Common& c, const std::string& command, const ConstantsBundle* k, json extra) {
    json m{{"tool", "spc-lab"}, {"version", SPC_LAB_VERSION}, {"command", command}, {"input", c.input}};
    if (k) m["constants"] = constants_json(*k);
    for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
    write_text(out_path(c, "run.json"), m.dump(1) + "\n");
}

std::string point_line(const BoundPoint& p) {
    return p.label + ": measured " + format_double(p.measured) + " > bound " + format_real(p.bound, 12);
}

struct SuiteOutcome {
    bool pass = true;
    std::string first_failure;
    std::ostringstream log;
};

void record(SuiteOutcome& out, const BoundReport& rep) {
    const BoundPoint* f = rep.first_failure(bound_tolerance());
    if (!rep.applicable) {
        out.log << "N/A  " << rep.name << " (" << rep.points.size() << " points, "
                << (rep.pass ? "holds" : "does not hold") << "): " << rep.note << '\n';
        return;
    }
    if (rep.pass) {
        out.log << "PASS " << rep.name << " (" << rep.points.size() << " points)";
        if (!rep.note.empty()) out.log << ": " << rep.note;
        out.log << '\n';
        return;
    }
    const std::string line = rep.name + " " + (f ? point_line(*f) : std::string("non-finite value"));
    out.log << "FAIL " << line << '\n';
    if (out.pass) out.first_failure = line;
    out.pass = false;
}

void record_simple(SuiteOutcome& out, const std::string& name, bool pass, const std::string& detail) {
    out.log << (pass ? "PASS " : "FAIL ") << name << (detail.empty() ? "" : ": " + detail) << '\n';
    if (!pass && out.pass) out.first_failure = name + ": " + detail;
    out.pass = out.pass && pass;
}

std::string certificate_detail(const CertificateReport& r) {
    if (!r.message.empty()) return r.message;
    std::ostringstream os;
    os << "max gain norm " << r.worst_gain_norm << ", worst stability ratio " << r.stability.worst_ratio;
    return os.str();
}

// ---- commands -------------------------------------------------------------

int cmd_build_tree(const Common& c) {
    const Problem p = load_problem(c.input);
    const ValidationReport v = validate_tree(p.tree);
    if (!v.ok()) throw InputError(v.summary());
    save_problem(out_path(c, "tree.json"), p);
    std::cout << "nodes " << p.tree.size() << "\nhorizon " << p.tree.horizon() << "\nleaves "
              << p.tree.leaves().size() << "\nnx " << p.tree.dims().nx << "\nnu " << p.tree.dims().nu << '\n';
    return kOk;
}

int cmd_solve(const Common& c, const std::string& policy) {
    const Problem p = load_problem(c.input);
    const ScenarioTree& tree = p.tree;
    double objective = 0.0;
    json summary{{"policy", policy}};
    if (policy == "optimal") {
        const PolicySolution s = solve_optimal(tree, p.initial);
        objective = s.objective;
        summary["kkt_residual"] = s.kkt_residual;
        write_text(out_path(c, "trace.csv"), trace_csv(tree, s.x, s.u));
    } else if (policy == "hn") {
        const HereAndNowSolution s = solve_here_and_now(tree, p.initial);
        objective = s.objective;
        std::vector<Eigen::VectorXd> u(tree.size());
        for (NodeId i = 0; i < tree.size(); ++i) u[i] = s.u_stage[static_cast<std::size_t>(tree.stage(i))];
        write_text(out_path(c, "trace.csv"), trace_csv(tree, s.x, u));
    } else {
        const AnticipativeSolution s = solve_anticipative(tree, p.initial);
        objective = s.objective;
        std::ostringstream os;
        os << "leaf,pi,value\n";
        for (std::size_t a = 0; a < s.leaves.size(); ++a)
            os << s.leaves[a] << ',' << format_double(tree.pi(s.leaves[a])) << ',' << format_double(s.path_values[a])
               << '\n';
        write_text(out_path(c, "paths.csv"), os.str());
    }
    summary["objective"] = objective;
    write_text(out_path(c, "summary.json"), summary.dump(1) + "\n");
    std::cout << "policy " << policy << "\nobjective " << format_double(objective) << '\n';
    return kOk;
}

int cmd_spc(const Common& c) {
    const Problem p = load_problem(c.input);
    const int W = single_W(c.W, p.tree.horizon(), p.tree.horizon());
    const ClosedLoopTrace trace = run_spc(p.tree, p.initial, W);
    const RegretResult r = dynamic_regret(p.tree, p.initial, W);
    write_text(out_path(c, "trace.csv"), trace_csv(p.tree, trace.x, trace.u));
    const json summary{{"W", W}, {"J_W", r.J_W}, {"J_star", r.J_star}, {"regret", r.regret}};
    write_text(out_path(c, "summary.json"), summary.dump(1) + "\n");
    std::cout << "W " << W << "\nJ_W " << format_double(r.J_W) << "\nJ_star " << format_double(r.J_star)
              << "\nregret " << format_double(r.regret) << '\n';
    return kOk;
}

int cmd_regret_sweep(const Common& c) {
    const Problem p = load_problem(c.input);
    const int T = p.tree.horizon();
    std::vector<int> all(static_cast<std::size_t>(T + 1));
    for (int w = 0; w <= T; ++w) all[static_cast<std::size_t>(w)] = w;
    const std::vector<int> Ws = parse_W(c.W, T, all);
    const ConstantsBundle k = constants_for(p, c);
    const RegretSweep sweep = regret_sweep(p.tree, k, p.initial, Ws);
    write_text(out_path(c, "regret.csv"), regret_csv(sweep, k));
    write_manifest(c, "regret-sweep", &k,
                   {{"W", Ws}, {"pass", sweep.report.pass}, {"slope", sweep.slope},
                    {"slope_points", sweep.slope_points}, {"log_rho", format_real(sweep.log_rho, 17)},
                    {"monotone", sweep.monotone}});
    SuiteOutcome out;
    record(out, sweep.report);
    std::cout << out.log.str() << "slope " << format_double(sweep.slope) << " over " << sweep.slope_points
              << " points (log rho " << format_real(sweep.log_rho, 6) << ")\n";
    if (!out.pass) throw VerificationFailure(out.first_failure);
    return kOk;
}

int cmd_verify(const Common& c, const std::string& suite, const std::string& cert_path, int trials,
               std::uint64_t seed) {
    const Problem p = load_problem(c.input);
    const ScenarioTree& tree = p.tree;
    const int T = tree.horizon();
    const bool all = suite == "all";
    SuiteOutcome out;
    std::optional<ConstantsBundle> k;
    auto constants = [&]() -> const ConstantsBundle& {
        if (!k) k = constants_for(p, c);
        return *k;
    };

    if (all || suite == "norms") record(out, norm_identity_suite(tree, trials, seed));
    if (all || suite == "regularity") {
        const RegularityBounds b = regularity_bounds(constants());
        for (NodeId node : std::vector<NodeId>{0}) {
            const RegularityReport r = check_uniform_regularity(tree, node, T, b);
            std::ostringstream os;
            os << "||H|| " << r.H_norm << " (<= " << b.L_H << "), min eig FF' " << r.FFt_min_eig << " (>= "
               << b.gamma_F << "), min eig ReH " << r.ReH_min_eig << " (>= " << b.gamma_G << ")";
            record_simple(out, "regularity node=" + std::to_string(node), r.pass(), os.str());
        }
    }
    if (all || suite == "stability") {
        const ConstantsBundle& kk = constants();
        const double L = kk.L.convert_to<double>(), gamma = kk.gamma.convert_to<double>();
        const DataBoundsReport db = check_data_bounds(tree, L, gamma);
        record_simple(out, "data bounds", db.pass, db.pass ? "" : db.violations.front());
        if (!cert_path.empty()) {
            const CertificateFile cert = load_certificate(cert_path);
            const CertificateReport s =
                check_stabilizability(tree, cert.stabilizing, cert.stabilizing.L, cert.stabilizing.alpha);
            record_simple(out, "stabilizability", s.pass, certificate_detail(s));
            const CertificateReport d =
                check_detectability(tree, cert.detecting, cert.detecting.L, cert.detecting.alpha);
            record_simple(out, "detectability", d.pass, certificate_detail(d));
        } else {
            out.log << "SKIP stabilizability/detectability: no --cert given\n";
        }
    }
    if (all || suite == "lemmas") {
        const int W = single_W(c.W, T, T / 2);
        for (const BoundReport& r : lemma_suite(tree, constants(), W, p.initial)) record(out, r);
        record(out, time_consistency_check(tree, p.initial));
    }
    if (all || suite == "theorems") {
        const ConstantsBundle& kk = constants();
        const int W = single_W(c.W, T, T / 2);
        std::vector<DecayRow> decay;
        std::vector<MomentRow> moments;
        record(out, decay_check(tree, kk, 0, T, &decay));
        std::vector<TauStart> starts;
        for (int t = 0; t <= std::min(1, T); ++t)
            for (NodeId n : tree.stage_nodes(t)) starts.push_back({n, p.initial});
        record(out, open_loop_bound_check(tree, kk, starts, W));
        record(out, eisse_check(tree, kk, p.initial, &moments));
        record(out, closed_loop_bound_check(tree, kk, p.initial, W, &moments));
        std::vector<int> Ws;
        for (int w = 0; w <= T; ++w) Ws.push_back(w);
        const RegretSweep sweep = regret_sweep(tree, kk, p.initial, Ws);
        record(out, sweep.report);
        const SandwichResult sw = sandwich_check(tree, p.initial);
        record(out, sw.report);
        write_text(out_path(c, "decay.csv"), decay_csv(decay));
        write_text(out_path(c, "moments.csv"), moments_csv(moments));
        write_text(out_path(c, "regret.csv"), regret_csv(sweep, kk));
    }
    if (!all && suite != "norms" && suite != "regularity" && suite != "stability" && suite != "lemmas" &&
        suite != "theorems")
        throw InputError("unknown suite '" + suite + "'");

    const KktResidualStats ks = kkt_residual_stats();
    out.log << "KKT solves " << ks.solves << ", worst relative residual " << format_double(ks.worst_ratio) << '\n';
    write_text(out_path(c, "report.txt"), out.log.str());
    write_manifest(c, "verify-bounds", k ? &*k : nullptr, {{"suite", suite}, {"pass", out.pass}});
    std::cout << out.log.str();
    if (!out.pass) throw VerificationFailure(out.first_failure);
    return kOk;
}

int cmd_certify(const Common& c, const std::string& cert_path) {
    const Problem p = load_problem(c.input);
    const CertificateFile cert = load_certificate(cert_path);
    SuiteOutcome out;
    const CertificateReport s =
        check_stabilizability(p.tree, cert.stabilizing, cert.stabilizing.L, cert.stabilizing.alpha);
    record_simple(out, "stabilizability", s.pass, certificate_detail(s));
    const CertificateReport d = check_detectability(p.tree, cert.detecting, cert.detecting.L, cert.detecting.alpha);
    record_simple(out, "detectability", d.pass, certificate_detail(d));
    if (p.constants) {
        const DataBoundsReport db = check_data_bounds(p.tree, p.constants->L, p.constants->gamma);
        record_simple(out, "data bounds", db.pass, db.pass ? "" : db.violations.front());
    }
    std::cout << out.log.str();
    if (!out.pass) throw VerificationFailure(out.first_failure);
    return kOk;
}

int cmd_constants(const Common& c, double D) {
    ConstantsBundle k;
    if (!c.input.empty()) {
        k = constants_for(load_problem(c.input), c);
    } else {
        if (!(c.L && c.alpha && c.gamma)) throw InputError("constants needs --L, --alpha and --gamma or --input");
        k = compute_constants(*c.L, *c.alpha, *c.gamma, D);
    }
    for (const std::string& w : k.warnings) std::cerr << "warning: " << w << '\n';
    const json j = constants_json(k);
    for (auto it = j.begin(); it != j.end(); ++it)
        if (it.key() != "warnings") std::cout << it.key() << ' ' << it.value().get<std::string>() << '\n';
    std::cout << "W_bar_ceil " << format_real(k.W_bar_ceil, 30) << '\n';
    return kOk;
}

int cmd_generate(const Common& c, const InstanceSpec& spec) {
    const CertifiedInstance inst = generate_certified_instance(spec);
    const Problem p{inst.tree, inst.w_prev, ConstantsSpec{spec.L, inst.certified_alpha, spec.gamma}};
    save_problem(out_path(c, "problem.json"), p);
    save_certificate(out_path(c, "certificate.json"), CertificateFile{inst.stabilizing, inst.detecting});
    std::cout << "nodes " << inst.tree.size() << "\nhorizon " << inst.tree.horizon() << "\ncertified alpha "
              << format_double(inst.certified_alpha) << "\nrho " << format_real(inst.constants.rho, 30)
              << "\nW_bar " << format_real(inst.constants.W_bar, 12) << '\n';
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"spc-lab: stochastic predictive control on scenario trees"};
    app.require_subcommand(1);
    app.set_version_flag("--version", SPC_LAB_VERSION);
    app.footer(
        "Exit codes: 0 ok, 2 invalid input, 3 solver failure, 4 verification failure.\n"
        "SPC_LAB_THREADS caps sweep parallelism; SPC_LAB_KERNELS=scalar|avx2 picks the vector kernels.\n"
        "--W accepts a single value, a range a..b, or a comma list.");

    Common c;
    std::string policy = "optimal", suite = "all", cert;
    int trials = 100;
    std::uint64_t seed = 1;
    double D = 0.0;
    InstanceSpec spec;

    auto* build = app.add_subcommand("build-tree", "Validate a problem file and write its explicit tree");
    add_common(build, c);

    auto* solve = app.add_subcommand("solve", "Solve the full-horizon problem under a policy class");
    add_common(solve, c);
    solve->add_option("--policy", policy, "optimal, hn (here-and-now) or an (anticipative)")
        ->check(CLI::IsMember({"optimal", "hn", "an"}))
        ->capture_default_str();

    auto* spc = app.add_subcommand("spc", "Run receding-horizon SPC with window W");
    add_common(spc, c);
    spc->add_option("--W", c.W, "Prediction window (default T)");

    auto* sweep = app.add_subcommand("regret-sweep", "Dynamic regret over a list of windows");
    add_common(sweep, c);
    add_constants(sweep, c);
    sweep->add_option("--W", c.W, "Windows (default 0..T)");

    auto* verify = app.add_subcommand("verify-bounds", "Run verification suites");
    add_common(verify, c);
    add_constants(verify, c);
    verify->add_option("--suite", suite, "norms, regularity, stability, lemmas, theorems or all")
        ->check(CLI::IsMember({"norms", "regularity", "stability", "lemmas", "theorems", "all"}))
        ->capture_default_str();
    verify->add_option("--W", c.W, "Window for lemma and closed-loop checks (default T/2)");
    verify->add_option("--cert", cert, "Gain certificate (JSON) for the stability suite");
    verify->add_option("--trials", trials, "Random trials for the norms suite")->capture_default_str();
    verify->add_option("--seed", seed, "Seed for the norms suite")->capture_default_str();

    auto* norms = app.add_subcommand("verify-norms", "Norm identities on random block data over the tree");
    add_common(norms, c);
    norms->add_option("--trials", trials, "Random trials")->capture_default_str();
    norms->add_option("--seed", seed, "Seed")->capture_default_str();

    auto* certify = app.add_subcommand("certify", "Check stabilizing and detecting gain certificates");
    add_common(certify, c);
    certify->add_option("--cert", cert, "Gain certificate (JSON)")->required();

    auto* consts = app.add_subcommand("constants", "Print the theory constants");
    add_common(consts, c, false);
    add_constants(consts, c);
    consts->add_option("--D", D, "Noise level when no problem file is given")->capture_default_str();

    auto* gen = app.add_subcommand("generate", "Generate a certified random instance");
    add_common(gen, c, false);
    gen->add_option("--seed", spec.seed, "Seed")->capture_default_str();
    gen->add_option("--T", spec.T, "Horizon")->capture_default_str();
    gen->add_option("--branching", spec.branching, "Outcomes per stage (one value or one per stage)");
    gen->add_option("--nx", spec.nx, "State dimension")->capture_default_str();
    gen->add_option("--nu", spec.nu, "Control dimension")->capture_default_str();
    gen->add_option("--L", spec.L, "L")->capture_default_str();
    gen->add_option("--alpha", spec.alpha, "Nominal stability rate")->capture_default_str();
    gen->add_option("--gamma", spec.gamma, "gamma")->capture_default_str();
    gen->add_option("--noise", spec.noise_scale, "Noise scale")->capture_default_str();
    gen->add_option("--initial", spec.initial_scale, "Norm of the initial pair")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kInput;
    }

    try {
        apply_tolerances(c);
        if (*build) return cmd_build_tree(c);
        if (*solve) return cmd_solve(c, policy);
        if (*spc) return cmd_spc(c);
        if (*sweep) return cmd_regret_sweep(c);
        if (*verify) return cmd_verify(c, suite, cert, trials, seed);
        if (*norms) return cmd_verify(c, "norms", "", trials, seed);
        if (*certify) return cmd_certify(c, cert);
        if (*consts) return cmd_constants(c, D);
        if (*gen) return cmd_generate(c, spec);
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kInput;
    } catch (const SolverError& e) {
        std::cerr << "solver error: " << e.what() << '\n';
        return kSolver;
    } catch (const VerificationFailure& e) {
        std::cerr << "verification failed: " << e.what() << '\n';
        return kVerify;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kInput;
    }
    return kOk;
}
