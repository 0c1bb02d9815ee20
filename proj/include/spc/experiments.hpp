#pragma once

// Certified random instances, horizon sweeps and bound checks.

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "spc/controller.hpp"
#include "spc/kkt.hpp"
#include "spc/system_props.hpp"
#include "spc/tree.hpp"

namespace spc {

struct InstanceSpec {
    int nx = 2;
    int nu = 2;
    int T = 6;
    std::vector<int> branching{2};  // outcomes per stage 1..T; a single entry applies to all
    double L = 1.0;
    double alpha = 0.5;  // nominal rate; instances are certified at alpha^{1/2}
    double gamma = 0.5;
    double noise_scale = 1.0;
    double initial_scale = 1.0;  // ||w_prev||
    std::uint64_t seed = 1;

    [[nodiscard]] int branching_at(int stage) const;
};

struct CertifiedInstance {
    ScenarioTree tree;
    InitialCondition w_prev;
    GainCertificate stabilizing;  // stages 0..T-1
    GainCertificate detecting;    // stages 1..T
    ConstantsBundle constants;    // at (L, alpha^{1/2}, gamma)
    double certified_alpha = 0.0;
};

/// Seeded generator. Nominal data and branch probabilities come from
/// mt19937_64(splitmix64(seed)); node i draws its data from
/// mt19937_64(splitmix64(seed + (i + 1) * 0x9E3779B97F4A7C15)). Uniform doubles
/// take the top 53 bits of each 64-bit output.
class SplitRng {
public:
    explicit SplitRng(std::uint64_t seed) : seed_(seed) {}
    [[nodiscard]] std::mt19937_64 global() const;
    [[nodiscard]] std::mt19937_64 stream(std::uint64_t index) const;

private:
    std::uint64_t seed_;
};

[[nodiscard]] std::uint64_t splitmix64(std::uint64_t x);
[[nodiscard]] double uniform01(std::mt19937_64& gen);
/// Uniform in [-1, 1].
[[nodiscard]] double uniform_sym(std::mt19937_64& gen);
[[nodiscard]] Eigen::MatrixXd random_matrix(std::mt19937_64& gen, Eigen::Index rows, Eigen::Index cols);
[[nodiscard]] Eigen::MatrixXd random_orthogonal(std::mt19937_64& gen, Eigen::Index n);
/// Random matrix scaled into the spectral-norm ball of the given radius.
[[nodiscard]] Eigen::MatrixXd random_in_ball(std::mt19937_64& gen, Eigen::Index rows,
                                             Eigen::Index cols, double radius);

[[nodiscard]] CertifiedInstance generate_certified_instance(const InstanceSpec& spec);

struct BoundPoint {
    std::string label;
    double measured = 0.0;
    Real bound = 0;
    Real slack = 0;  // bound - measured
};

struct BoundReport {
    std::string name;
    std::vector<BoundPoint> points;
    bool applicable = true;
    bool pass = true;
    std::string note;

    /// First point with measured > bound + tol (1 + bound), or nullptr.
    [[nodiscard]] const BoundPoint* first_failure(double tol = 1e-9) const;
};

void set_bound_tolerance(double tol);
[[nodiscard]] double bound_tolerance();

/// Appends a point and updates pass against measured <= bound + tol (1 + bound).
void add_point(BoundReport& rep, std::string label, double measured, const Real& bound);
void add_point(BoundReport& rep, std::string label, double measured, const Real& bound, double tol);

struct RegretRow {
    int W = 0;
    double J_W = 0.0;
    double J_star = 0.0;
    double regret = 0.0;
    Real bound = 0;
    bool applies = false;
};

struct RegretSweep {
    std::vector<RegretRow> rows;
    BoundReport report;
    double slope = 0.0;        // least-squares slope of log regret vs W
    int slope_points = 0;
    bool monotone = true;      // observed only
    Real log_rho = 0;
};

/// Runs SPC at each W. Sweep points run concurrently up to SPC_LAB_THREADS.
[[nodiscard]] RegretSweep regret_sweep(const ScenarioTree& tree, const ConstantsBundle& c,
                                       const InitialCondition& w_prev, const std::vector<int>& Ws);

/// Per-stage (E[||w_t||^2 | node])^{1/2} over the subtree of `node` for per-node values.
[[nodiscard]] std::vector<double> stage_moments(const ScenarioTree& tree, NodeId node,
                                                const std::function<Eigen::VectorXd(NodeId)>& value);

struct TauStart {
    NodeId node = 0;
    InitialCondition w_prev;
};

[[nodiscard]] BoundReport open_loop_bound_check(const ScenarioTree& tree, const ConstantsBundle& c,
                                                const std::vector<TauStart>& starts, int W);

struct MomentRow {
    int t = 0;
    double measured = 0.0;
    Real envelope = 0;
    std::string kind;
};

[[nodiscard]] BoundReport eisse_check(const ScenarioTree& tree, const ConstantsBundle& c,
                                      const InitialCondition& w_prev,
                                      std::vector<MomentRow>* rows = nullptr);

[[nodiscard]] BoundReport closed_loop_bound_check(const ScenarioTree& tree,
                                                  const ConstantsBundle& c,
                                                  const InitialCondition& w_prev, int W,
                                                  std::vector<MomentRow>* rows = nullptr);

struct DecayRow {
    int t = 0;
    int tprime = 0;
    double psi_norm = 0.0;
    double omega_norm = 0.0;
    Real bound = 0;
};

[[nodiscard]] BoundReport decay_check(const ScenarioTree& tree, const ConstantsBundle& c, NodeId k,
                                      int W, std::vector<DecayRow>* rows = nullptr);

[[nodiscard]] RegularityBounds regularity_bounds(const ConstantsBundle& c);

/// Recursion/expansion equivalence plus the product-decay, truncation-gap and
/// hypothetical-state bounds.
[[nodiscard]] std::vector<BoundReport> lemma_suite(const ScenarioTree& tree,
                                                   const ConstantsBundle& c, int W,
                                                   const InitialCondition& w_prev);

/// Probability-scaled norm identities, submultiplicativity and the conditional
/// expectation identity on random block vectors and matrices over the tree. The
/// operator norms are recomputed from their variational definitions through
/// generalized symmetric eigenproblems.
[[nodiscard]] BoundReport norm_identity_suite(const ScenarioTree& tree, int trials,
                                              std::uint64_t seed);

/// Restriction-versus-re-solve gap for every (node, child) pair; tolerance 1e-8.
[[nodiscard]] BoundReport time_consistency_check(const ScenarioTree& tree,
                                                 const InitialCondition& w_prev);

struct SandwichResult {
    double J_an = 0.0;
    double J_star = 0.0;
    double J_hn = 0.0;
    bool strict = false;  // J_an < J_star < J_hn beyond 1e-9
    BoundReport report;
};

[[nodiscard]] SandwichResult sandwich_check(const ScenarioTree& tree, const InitialCondition& w_prev);

/// Threads allowed by SPC_LAB_THREADS (default: hardware concurrency).
[[nodiscard]] unsigned thread_cap();
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace spc
