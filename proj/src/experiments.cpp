#include "spc/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include "spc/error.hpp"
#include "spc/norms.hpp"

namespace spc {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
std::atomic<double> g_bound_tol{1e-9};

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

Eigen::MatrixXd with_norm(const Eigen::MatrixXd& M, double target) {
    const double n = spectral_norm(M);
    if (n == 0.0 || target == 0.0) return Eigen::MatrixXd::Zero(M.rows(), M.cols());
    return M * (target / n);
}

Eigen::MatrixXd random_symmetric_in_ball(std::mt19937_64& gen, Eigen::Index n, double radius) {
    const Eigen::MatrixXd M = random_matrix(gen, n, n);
    const Eigen::MatrixXd S = 0.5 * (M + M.transpose());
    const double cap = radius * (1.0 - 1e-9);
    const double nrm = spectral_norm(S);
    if (radius == 0.0 || nrm == 0.0) return Eigen::MatrixXd::Zero(n, n);
    return nrm > cap ? Eigen::MatrixXd(S * (cap / nrm)) : S;
}

// (sum_{j in V^(k)_t} pi_{j|k} ||v_j||^2)^{1/2}
double conditional_moment(const ScenarioTree& tree, NodeId k, int t,
                          const std::function<Eigen::VectorXd(NodeId)>& value) {
    double s = 0.0;
    for (NodeId j : subtree_stage_nodes(tree, k, t)) s += tree.pi(j) / tree.pi(k) * value(j).squaredNorm();
    return std::sqrt(s);
}

std::vector<double> noise_moments(const ScenarioTree& tree, NodeId k) {
    return stage_moments(tree, k, [&](NodeId j) { return tree.data(j).perturbation(); });
}

}  // namespace

int InstanceSpec::branching_at(int stage) const {
    if (branching.empty()) return 1;
    if (branching.size() == 1) return branching.front();
    return branching.at(static_cast<std::size_t>(stage - 1));
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += kGolden;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::mt19937_64 SplitRng::global() const { return std::mt19937_64(splitmix64(seed_)); }

std::mt19937_64 SplitRng::stream(std::uint64_t index) const {
    return std::mt19937_64(splitmix64(seed_ + (index + 1) * kGolden));
}

double uniform01(std::mt19937_64& gen) { return static_cast<double>(gen() >> 11) * 0x1.0p-53; }

double uniform_sym(std::mt19937_64& gen) { return 2.0 * uniform01(gen) - 1.0; }

Eigen::MatrixXd random_matrix(std::mt19937_64& gen, Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd M(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) M(i, j) = uniform_sym(gen);
    return M;
}

Eigen::MatrixXd random_orthogonal(std::mt19937_64& gen, Eigen::Index n) {
    const Eigen::MatrixXd M = random_matrix(gen, n, n);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(M);
    Eigen::MatrixXd Q = qr.householderQ();
    const Eigen::MatrixXd R = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Eigen::Index i = 0; i < n; ++i)
        if (R(i, i) < 0.0) Q.col(i) *= -1.0;
    return Q;
}

Eigen::MatrixXd random_in_ball(std::mt19937_64& gen, Eigen::Index rows, Eigen::Index cols,
                               double radius) {
    const Eigen::MatrixXd M = random_matrix(gen, rows, cols) * radius;
    const double cap = radius * (1.0 - 1e-9);
    const double nrm = spectral_norm(M);
    if (radius == 0.0 || nrm == 0.0) return Eigen::MatrixXd::Zero(rows, cols);
    return nrm > cap ? Eigen::MatrixXd(M * (cap / nrm)) : M;
}

CertifiedInstance generate_certified_instance(const InstanceSpec& spec) {
    if (spec.nx < 1 || spec.nu < 1) throw InputError("dimensions must be at least 1");
    if (spec.T < 0) throw InputError("horizon must be nonnegative");
    for (int t = 1; t <= spec.T; ++t)
        if (spec.branching_at(t) < 1) throw InputError("branching must be at least 1");
    if (!(spec.L >= 1.0)) throw InputError("L must be at least 1");
    if (!(spec.alpha > 0.0 && spec.alpha < 1.0)) throw InputError("alpha must lie in (0, 1)");
    if (!(spec.gamma > 0.0 && spec.gamma <= 1.0)) throw InputError("gamma must lie in (0, 1]");
    if (!(spec.noise_scale >= 0.0)) throw InputError("noise scale must be nonnegative");
    if (!(spec.initial_scale >= 0.0)) throw InputError("initial scale must be nonnegative");

    const double L = spec.L, alpha = spec.alpha, gamma = spec.gamma;
    const double delta = perturbation_margin(L, alpha);
    const double eps = std::min(spec.noise_scale, 1.0);
    if (eps > 0.0 && !(eps * delta > 1e-14))
        throw InputError("alpha = " + fmt(alpha) + " leaves a perturbation margin of " + fmt(delta) +
                         ", which underflows the noise scale");

    const Eigen::Index nx = spec.nx, nu = spec.nu;
    const SplitRng rng(spec.seed);
    std::mt19937_64 g = rng.global();

    // Nominal (L, alpha)-stabilizable pair: A0 - B0 K0 = alpha O1.
    const Eigen::MatrixXd Phi_s = alpha * random_orthogonal(g, nx);
    const double beta_B = std::min(0.5 * L, L - delta / (2.0 * L));
    const double budget = L - alpha - delta / 2.0;
    const double beta_K = std::min(L, 0.9 * budget / beta_B);
    const Eigen::MatrixXd B0 = with_norm(random_matrix(g, nx, nu), beta_B);
    const Eigen::MatrixXd K0 = with_norm(random_matrix(g, nu, nx), beta_K);
    const Eigen::MatrixXd A0 = Phi_s + B0 * K0;

    // Nominal (L, alpha)-detectable pair (A0, c I): A0 - Kd c = theta alpha O2.
    const double c = std::sqrt(L) - delta / (2.0 * L);
    const double normA0 = spectral_norm(A0);
    if (normA0 > L * c) throw InputError("nominal dynamics too large for a bounded observer gain");
    const double theta = std::clamp((L * c - normA0) / alpha, 0.0, 1.0);
    const Eigen::MatrixXd Phi_d = theta * alpha * random_orthogonal(g, nx);
    const Eigen::MatrixXd Kd = (A0 - Phi_d) / c;

    Eigen::MatrixXd S0 = random_matrix(g, nu, nu);
    S0 = S0 * S0.transpose();
    S0 /= std::max(spectral_norm(S0), 1e-300);

    Eigen::VectorXd wbar = random_matrix(g, nx + nu, 1).col(0);
    const double wn = wbar.norm();
    wbar = wn > 0.0 ? Eigen::VectorXd(wbar * (spec.initial_scale / wn))
                    : Eigen::VectorXd::Zero(nx + nu);

    // Tree skeleton in breadth-first order.
    std::vector<NodeId> parents{kNoParent};
    std::vector<int> stages{0};
    std::vector<double> probs{1.0};
    std::vector<NodeId> frontier{0};
    for (int t = 1; t <= spec.T; ++t) {
        std::vector<NodeId> next;
        const int m = spec.branching_at(t);
        for (NodeId p : frontier) {
            std::vector<double> w(static_cast<std::size_t>(m));
            double total = 0.0;
            for (double& x : w) total += (x = 0.5 + uniform01(g));
            for (double x : w) {
                next.push_back(parents.size());
                parents.push_back(p);
                stages.push_back(t);
                probs.push_back(probs[p] * (x / total));
            }
        }
        frontier = std::move(next);
    }

    std::vector<NodeData> data;
    data.reserve(parents.size());
    for (NodeId i = 0; i < parents.size(); ++i) {
        std::mt19937_64 gi = rng.stream(i);
        NodeData d;
        d.A = A0 + random_in_ball(gi, nx, nx, eps * delta / 2.0);
        d.B = B0 + random_in_ball(gi, nx, nu, eps * delta / (2.0 * L));
        const Eigen::MatrixXd C =
            c * Eigen::MatrixXd::Identity(nx, nx) + random_symmetric_in_ball(gi, nx, eps * delta / (2.0 * L));
        d.Q = C * C;
        d.Q = 0.5 * (d.Q + d.Q.transpose());
        Eigen::MatrixXd M = random_matrix(gi, nu, nu);
        M = M * M.transpose();
        const double mn = spectral_norm(M);
        if (mn > 0.0) M /= mn;
        const double u = uniform01(gi);
        d.R = gamma * Eigen::MatrixXd::Identity(nu, nu) + (L - gamma) * ((1.0 - eps) * 0.5 * S0 + eps * u * M);
        d.R = 0.5 * (d.R + d.R.transpose());
        d.q = random_matrix(gi, nx, 1).col(0) * spec.noise_scale;
        d.r = random_matrix(gi, nu, 1).col(0) * spec.noise_scale;
        d.d = random_matrix(gi, nx, 1).col(0) * spec.noise_scale;
        data.push_back(std::move(d));
    }

    CertifiedInstance inst{build_tree_explicit(std::move(parents), std::move(stages), std::move(probs),
                                               std::move(data)),
                           InitialCondition{wbar.head(nx), wbar.tail(nu)},
                           {},
                           {},
                           {},
                           std::sqrt(alpha)};
    inst.stabilizing.L = inst.detecting.L = L;
    inst.stabilizing.alpha = inst.detecting.alpha = inst.certified_alpha;
    for (NodeId i = 0; i < inst.tree.size(); ++i) {
        const int t = inst.tree.stage(i);
        if (t < spec.T) inst.stabilizing.gains.emplace(i, K0);
        if (t >= 1) inst.detecting.gains.emplace(i, Kd);
    }
    inst.constants = compute_constants(L, inst.certified_alpha, gamma, inst.tree);
    return inst;
}

const BoundPoint* BoundReport::first_failure(double tol) const {
    for (const BoundPoint& p : points)
        if (Real(p.measured) > p.bound + Real(tol) * (1 + p.bound)) return &p;
    return nullptr;
}

void set_bound_tolerance(double tol) {
    if (!(tol > 0.0)) throw InputError("bound tolerance must be positive");
    g_bound_tol.store(tol);
}

double bound_tolerance() { return g_bound_tol.load(); }

void add_point(BoundReport& rep, std::string label, double measured, const Real& bound) {
    add_point(rep, std::move(label), measured, bound, bound_tolerance());
}

void add_point(BoundReport& rep, std::string label, double measured, const Real& bound, double tol) {
    BoundPoint p{std::move(label), measured, bound, bound - Real(measured)};
    if (!std::isfinite(measured) || Real(measured) > bound + Real(tol) * (1 + bound)) rep.pass = false;
    rep.points.push_back(std::move(p));
}

unsigned thread_cap() {
    unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("SPC_LAB_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && v >= 1) return static_cast<unsigned>(v);
    }
    return hw;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
    const std::size_t workers = std::min<std::size_t>(thread_cap(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first;
    std::mutex mu;
    auto run = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) {
            try {
                body(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(mu);
                if (!first) first = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run);
    run();
    for (auto& th : pool) th.join();
    if (first) std::rethrow_exception(first);
}

RegretSweep regret_sweep(const ScenarioTree& tree, const ConstantsBundle& c,
                         const InitialCondition& w_prev, const std::vector<int>& Ws) {
    const int T = tree.horizon();
    for (int W : Ws)
        if (W < 0 || W > T) throw InputError("W = " + std::to_string(W) + " outside [0, " + std::to_string(T) + "]");
    RegretSweep out;
    out.log_rho = c.log_rho;
    out.report.name = "regret";
    out.rows.resize(Ws.size());
    parallel_for(Ws.size(), [&](std::size_t i) {
        const RegretResult r = dynamic_regret(tree, w_prev, Ws[i]);
        out.rows[i] = RegretRow{Ws[i], r.J_W, r.J_star, r.regret, 0, c.horizon_applies(Ws[i])};
    });

    const Real wn = Real(w_prev.stacked().norm());
    const Real head = c.c5 * c.D * c.D * T + c.c6 * c.D * wn + c.c7 * wn * wn;
    bool any_applies = false;
    for (RegretRow& row : out.rows) {
        row.bound = head * c.rho_pow(Real(row.W));
        const std::string tag = "W=" + std::to_string(row.W);
        if (row.applies) {
            any_applies = true;
            add_point(out.report, tag, row.regret, row.bound);
        }
        add_point(out.report, tag + " nonnegative", -row.regret, Real(1e-8) * (1 + std::abs(row.J_star)));
        if (row.W == T) add_point(out.report, tag + " exact", row.regret, Real(1e-8));
    }
    if (!any_applies)
        out.report.note = "no sweep point has W >= Wbar = " + format_real(c.W_bar, 6) +
                          "; only exactness and sign are checked";

    std::vector<const RegretRow*> sorted;
    for (const RegretRow& r : out.rows) sorted.push_back(&r);
    std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->W < b->W; });
    for (std::size_t i = 1; i < sorted.size(); ++i)
        if (sorted[i]->regret > sorted[i - 1]->regret + 1e-12) out.monotone = false;

    std::vector<double> xs, ys;
    for (const RegretRow* r : sorted) {
        if (r->W >= T || r->regret <= 1e-12) break;
        xs.push_back(r->W);
        ys.push_back(std::log(std::max(r->regret, 1e-14)));
    }
    out.slope_points = static_cast<int>(xs.size());
    if (xs.size() >= 2) {
        const double n = static_cast<double>(xs.size());
        double mx = 0, my = 0;
        for (std::size_t i = 0; i < xs.size(); ++i) mx += xs[i] / n, my += ys[i] / n;
        double sxy = 0, sxx = 0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            sxy += (xs[i] - mx) * (ys[i] - my);
            sxx += (xs[i] - mx) * (xs[i] - mx);
        }
        out.slope = sxy / sxx;
    }
    return out;
}

std::vector<double> stage_moments(const ScenarioTree& tree, NodeId node,
                                  const std::function<Eigen::VectorXd(NodeId)>& value) {
    std::vector<double> out;
    for (int t = tree.stage(node); t <= tree.horizon(); ++t) out.push_back(conditional_moment(tree, node, t, value));
    return out;
}

BoundReport open_loop_bound_check(const ScenarioTree& tree, const ConstantsBundle& c,
                                  const std::vector<TauStart>& starts, int W) {
    BoundReport rep;
    rep.name = "open-loop";
    for (const TauStart& s : starts) {
        const PolicySolution sol = solve_extensive(tree, s.node, W, s.w_prev);
        const int tau = tree.stage(s.node);
        const int last = std::min(tau + W, tree.horizon());
        const std::vector<double> P = noise_moments(tree, s.node);
        const Real wn = Real(s.w_prev.stacked().norm());
        for (int t = tau; t <= last; ++t) {
            const double measured = conditional_moment(tree, s.node, t, [&](NodeId j) { return sol.w(j); });
            Real sum = 0;
            for (int tp = tau; tp <= last; ++tp)
                sum += c.rho_pow(Real(std::abs(t - tp))) * Real(P[static_cast<std::size_t>(tp - tau)]);
            const Real bound = c.c1 * (2 * c.L * c.rho_pow(Real(t - tau)) * wn + sum);
            add_point(rep, "node=" + std::to_string(s.node) + " t=" + std::to_string(t), measured, bound);
        }
    }
    return rep;
}

BoundReport eisse_check(const ScenarioTree& tree, const ConstantsBundle& c,
                        const InitialCondition& w_prev, std::vector<MomentRow>* rows) {
    BoundReport rep;
    rep.name = "eisse";
    const PolicySolution sol = solve_optimal(tree, w_prev);
    const std::vector<double> P = noise_moments(tree, 0);
    const Real wn = Real(w_prev.stacked().norm());
    const int T = tree.horizon();
    for (int t = 0; t <= T; ++t) {
        const double measured = conditional_moment(tree, 0, t, [&](NodeId j) { return sol.w(j); });
        Real sum = 0;
        for (int tp = 0; tp <= T; ++tp) sum += c.rho_pow(Real(std::abs(t - tp))) * Real(P[static_cast<std::size_t>(tp)]);
        const Real head = 2 * c.L * c.rho_pow(Real(t)) * wn;
        const Real optimal = c.c1 * (head + sum);
        const Real eisse = c.c1 * (head + 2 * c.D / c.one_minus_rho);
        add_point(rep, "t=" + std::to_string(t) + " optimal", measured, optimal);
        add_point(rep, "t=" + std::to_string(t) + " eisse", measured, eisse);
        if (rows) {
            rows->push_back({t, measured, optimal, "optimal"});
            rows->push_back({t, measured, eisse, "eisse"});
        }
    }
    return rep;
}

BoundReport closed_loop_bound_check(const ScenarioTree& tree, const ConstantsBundle& c,
                                    const InitialCondition& w_prev, int W,
                                    std::vector<MomentRow>* rows) {
    BoundReport rep;
    rep.name = "closed-loop";
    rep.applicable = c.horizon_applies(W);
    if (!rep.applicable)
        rep.note = "W = " + std::to_string(W) + " < Wbar = " + format_real(c.W_bar, 6);
    const ClosedLoopTrace trace = run_spc(tree, w_prev, W);
    const std::vector<double> P = noise_moments(tree, 0);
    const Real wn = Real(w_prev.stacked().norm());
    const int T = tree.horizon();
    for (int t = 0; t <= T; ++t) {
        const double measured = conditional_moment(tree, 0, t, [&](NodeId j) { return trace.w(j); });
        Real sum = 0;
        for (int tp = 0; tp <= T; ++tp)
            sum += c.rho_pow(Real(std::abs(t - tp)) / 2) * Real(P[static_cast<std::size_t>(tp)]);
        const Real bound = c.c2 * (2 * c.L * c.rho_pow(Real(t) / 2) * wn + sum);
        add_point(rep, "t=" + std::to_string(t), measured, bound);
        if (rows) rows->push_back({t, measured, bound, "closed-loop"});
    }
    return rep;
}

BoundReport decay_check(const ScenarioTree& tree, const ConstantsBundle& c, NodeId k, int W,
                        std::vector<DecayRow>* rows) {
    BoundReport rep;
    rep.name = "decay";
    const SolutionMap map = solution_map(tree, k, W);
    for (const DecayEntry& e : measure_decay(tree, map)) {
        const Real bound = c.c1 * c.rho_pow(Real(std::abs(e.t - e.tprime)));
        const std::string tag = "t=" + std::to_string(e.t) + " t'=" + std::to_string(e.tprime);
        add_point(rep, tag + " psi", e.psi_norm, bound);
        add_point(rep, tag + " omega", e.omega_norm, bound);
        if (rows) rows->push_back({e.t, e.tprime, e.psi_norm, e.omega_norm, bound});
    }
    return rep;
}

RegularityBounds regularity_bounds(const ConstantsBundle& c) {
    return {c.L_H.convert_to<double>(), c.gamma_F.convert_to<double>(), c.gamma_G.convert_to<double>()};
}

std::vector<BoundReport> lemma_suite(const ScenarioTree& tree, const ConstantsBundle& c, int W,
                                     const InitialCondition& w_prev) {
    const int T = tree.horizon();
    if (W < 0 || W > T) throw InputError("W = " + std::to_string(W) + " outside [0, " + std::to_string(T) + "]");
    const Eigen::Index nw = tree.dims().nw();
    const RecursionMatrices rec = recursion_matrices(tree, W);
    const RecursionMatrices full = W == T ? rec : recursion_matrices(tree, T);
    const ClosedLoopTrace trace = run_spc(tree, w_prev, W);
    std::vector<BoundReport> out;

    BoundReport eq;
    eq.name = "recursion";
    double scale = 0.0;
    for (NodeId i = 0; i < tree.size(); ++i) scale = std::max(scale, trace.w(i).cwiseAbs().maxCoeff());
    const Real tol = Real(1e-8) * (1 + Real(scale));
    const std::vector<Eigen::VectorXd> it = iterate_recursion(tree, rec, w_prev);
    double gap = 0.0;
    for (NodeId i = 0; i < tree.size(); ++i) gap = std::max(gap, (it[i] - trace.w(i)).cwiseAbs().maxCoeff());
    add_point(eq, "recursion", gap, tol);
    for (int t = 0; t <= T; ++t) {
        const BlockVector e = expansion_commitments(tree, rec, w_prev, t);
        double g = 0.0;
        for (std::size_t a = 0; a < e.nodes().size(); ++a)
            g = std::max(g, (e.block(a) - trace.w(e.nodes()[a])).cwiseAbs().maxCoeff());
        add_point(eq, "expansion t=" + std::to_string(t), g, tol);
    }
    out.push_back(std::move(eq));

    BoundReport prod;
    prod.name = "product-decay";
    const Real pref = 2 * c.c1 * c.L / c.rho;
    for (int from = 0; from <= T; ++from) {
        const auto& base = tree.stage_nodes(from);
        BlockMatrix P(tree, base, base, nw, nw);
        P.dense().setIdentity();
        for (int to = from; to <= T; ++to) {
            if (to > from) P = stage_S(tree, full, to) * P;
            add_point(prod, "t=" + std::to_string(to) + " t''=" + std::to_string(from), pi_norm_mat(P),
                      pref * c.rho_pow(Real(to - from)));
        }
    }
    out.push_back(std::move(prod));

    BoundReport trunc;
    trunc.name = "truncation";
    const Real c1sq = c.c1 * c.c1;
    for (int t = 0; t <= T; ++t) {
        for (int tp = t; tp <= T; ++tp) {
            const double g = pi_norm_mat(stage_psi(tree, rec, t, tp) - stage_psi(tree, full, t, tp));
            add_point(trunc, "psi t=" + std::to_string(t) + " t'=" + std::to_string(tp), g,
                      2 * c1sq * c.L * c.rho_pow(Real(2 * W - tp + t)));
        }
        const double gs = t == 0 ? spectral_norm(rec.S[0] - full.S[0])
                                 : pi_norm_mat(stage_S(tree, rec, t) - stage_S(tree, full, t));
        add_point(trunc, "S t=" + std::to_string(t), gs, 4 * c1sq * c.L * c.L * c.rho_pow(Real(2 * W)));
    }
    out.push_back(std::move(trunc));

    BoundReport hyp;
    hyp.name = "hypothetical-gap";
    hyp.applicable = c.horizon_applies(W);
    if (!hyp.applicable) hyp.note = "W = " + std::to_string(W) + " < Wbar = " + format_real(c.W_bar, 6);
    const std::vector<Eigen::VectorXd> hat = hypothetical_state(tree, trace, w_prev);
    const Real wn = Real(w_prev.stacked().norm());
    for (int t = 0; t <= T; ++t) {
        const auto& Vt = tree.stage_nodes(t);
        BlockVector diff(tree, Vt, nw);
        for (std::size_t a = 0; a < Vt.size(); ++a) diff.block(a) = trace.w(Vt[a]) - hat[Vt[a]];
        add_point(hyp, "t=" + std::to_string(t), pi_norm_vec(diff),
                  (c.c3 * c.D + c.c4 * c.rho_pow(Real(t) / 2) * wn) * c.rho_pow(Real(W)));
    }
    out.push_back(std::move(hyp));
    return out;
}

namespace {

std::vector<NodeId> random_subset(std::mt19937_64& g, const ScenarioTree& tree) {
    std::vector<NodeId> out;
    if (uniform01(g) < 0.5) {
        const int t = static_cast<int>(uniform01(g) * (tree.horizon() + 1));
        out = tree.stage_nodes(std::min(t, tree.horizon()));
    } else {
        for (NodeId i = 0; i < tree.size(); ++i)
            if (uniform01(g) < 0.5) out.push_back(i);
        if (out.empty()) out.push_back(static_cast<NodeId>(uniform01(g) * static_cast<double>(tree.size())) % tree.size());
    }
    return out;
}

BlockMatrix random_block_matrix(std::mt19937_64& g, const ScenarioTree& tree, std::vector<NodeId> rows,
                                std::vector<NodeId> cols, Eigen::Index rd, Eigen::Index cd) {
    BlockMatrix M(tree, std::move(rows), std::move(cols), rd, cd);
    M.dense() = random_matrix(g, M.dense().rows(), M.dense().cols());
    return M;
}

Eigen::VectorXd expanded_pi(const ScenarioTree& tree, const std::vector<NodeId>& nodes, Eigen::Index dim) {
    Eigen::VectorXd w(static_cast<Eigen::Index>(nodes.size()) * dim);
    for (std::size_t a = 0; a < nodes.size(); ++a)
        w.segment(static_cast<Eigen::Index>(a) * dim, dim).setConstant(tree.pi(nodes[a]));
    return w;
}

// max x'Ax / x'Bx for symmetric A and diagonal positive B.
double generalized_max(const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(A, b.asDiagonal().toDenseMatrix(),
                                                                  Eigen::EigenvaluesOnly);
    return std::max(0.0, es.eigenvalues().maxCoeff());
}

// sup ||Mv||_pi / ||v||_pi
double operator_norm_oracle(const BlockMatrix& M) {
    const Eigen::VectorXd pr = expanded_pi(M.tree(), M.row_nodes(), M.row_dim());
    const Eigen::VectorXd pc = expanded_pi(M.tree(), M.col_nodes(), M.col_dim());
    const Eigen::MatrixXd A = M.dense().transpose() * pr.asDiagonal() * M.dense();
    return std::sqrt(generalized_max(0.5 * (A + A.transpose()), pc));
}

// sup u'Mv over unit pi-balls: sup_v ||Pr^{-1} M v||_{Pr} / ||v||_pi
double bilinear_norm_oracle(const BlockMatrix& M) {
    const Eigen::VectorXd pr = expanded_pi(M.tree(), M.row_nodes(), M.row_dim());
    const Eigen::VectorXd pc = expanded_pi(M.tree(), M.col_nodes(), M.col_dim());
    const Eigen::MatrixXd A = M.dense().transpose() * pr.cwiseInverse().asDiagonal() * M.dense();
    return std::sqrt(generalized_max(0.5 * (A + A.transpose()), pc));
}

}  // namespace

BoundReport norm_identity_suite(const ScenarioTree& tree, int trials, std::uint64_t seed) {
    constexpr double kTol = 1e-10;
    BoundReport rep;
    rep.name = "norms";
    std::mt19937_64 g = SplitRng(seed).global();
    for (int k = 0; k < trials; ++k) {
        const std::string tag = "trial " + std::to_string(k) + " ";
        const Eigen::Index d1 = 1 + static_cast<Eigen::Index>(uniform01(g) * 3);
        const Eigen::Index d2 = 1 + static_cast<Eigen::Index>(uniform01(g) * 3);
        const Eigen::Index d3 = 1 + static_cast<Eigen::Index>(uniform01(g) * 3);
        const auto V1 = random_subset(g, tree), V2 = random_subset(g, tree), V3 = random_subset(g, tree);
        const BlockMatrix M = random_block_matrix(g, tree, V1, V2, d1, d2);
        const BlockMatrix M2 = random_block_matrix(g, tree, V2, V3, d2, d3);

        const double op = pi_norm_mat(M), sig = sigma_pi(M);
        add_point(rep, tag + "operator norm", std::abs(op - operator_norm_oracle(M)), Real(kTol) * (1 + op), 0.0);
        add_point(rep, tag + "bilinear norm", std::abs(sig - bilinear_norm_oracle(M)), Real(kTol) * (1 + sig), 0.0);
        add_point(rep, tag + "bilinear transpose", std::abs(sig - sigma_pi(M.transpose())), Real(kTol) * (1 + sig), 0.0);

        const BlockMatrix P = M * M2;
        const double op2 = pi_norm_mat(M2);
        add_point(rep, tag + "submultiplicative", pi_norm_mat(P), Real(op) * op2 + kTol, 0.0);
        const double mixed = std::min(sig * op2, sigma_pi(M2) * pi_norm_mat(M.transpose()));
        add_point(rep, tag + "mixed", sigma_pi(P), Real(mixed) + kTol, 0.0);

        BlockVector v(tree, V2, d2);
        v.values() = random_matrix(g, v.values().size(), 1).col(0);
        const double vn = pi_norm_vec(v);
        add_point(rep, tag + "induced", pi_norm_vec(M * v), Real(op) * vn + kTol, 0.0);
        double naive = 0.0;
        for (std::size_t a = 0; a < V2.size(); ++a) naive += tree.pi(V2[a]) * v.block(a).squaredNorm();
        add_point(rep, tag + "vector norm", std::abs(vn - std::sqrt(naive)), Real(kTol) * (1 + vn), 0.0);

        const NodeId node = static_cast<NodeId>(uniform01(g) * static_cast<double>(tree.size())) % tree.size();
        const int t = tree.stage(node) +
                      static_cast<int>(uniform01(g) * (tree.horizon() - tree.stage(node) + 1)) % (tree.horizon() - tree.stage(node) + 1);
        BlockVector w(tree, subtree_stage_nodes(tree, node, t), d1);
        w.values() = random_matrix(g, w.values().size(), 1).col(0);
        const ExpectationCheck e = expectation_identity_check(tree, node, t, w);
        add_point(rep, tag + "expectation node=" + std::to_string(node) + " t=" + std::to_string(t), e.gap,
                  Real(kTol) * (1 + e.lhs), 0.0);
    }
    return rep;
}

BoundReport time_consistency_check(const ScenarioTree& tree, const InitialCondition& w_prev) {
    BoundReport rep;
    rep.name = "time-consistency";
    for (NodeId k = 0; k < tree.size(); ++k)
        for (NodeId j : tree.children(k))
            add_point(rep, "node=" + std::to_string(k) + " child=" + std::to_string(j),
                      check_time_consistency(tree, k, j, w_prev), Real(1e-8), 0.0);
    return rep;
}

SandwichResult sandwich_check(const ScenarioTree& tree, const InitialCondition& w_prev) {
    SandwichResult out;
    out.J_an = solve_anticipative(tree, w_prev).objective;
    out.J_star = solve_optimal(tree, w_prev).objective;
    out.J_hn = solve_here_and_now(tree, w_prev).objective;
    out.strict = out.J_an < out.J_star - 1e-9 && out.J_star < out.J_hn - 1e-9;
    out.report.name = "sandwich";
    add_point(out.report, "anticipative <= optimal", out.J_an - out.J_star, Real(1e-9), 0.0);
    add_point(out.report, "optimal <= here-and-now", out.J_star - out.J_hn, Real(1e-9), 0.0);
    return out;
}

}  // namespace spc
