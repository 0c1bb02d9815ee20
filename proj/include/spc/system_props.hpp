#pragma once

// Stability certificates on trees, perturbation margins, and the theory constants.
//
// The constants are evaluated in 50-digit binary floating point: for every
// admissible (L, alpha, gamma) the contraction rate rho lies within ~1e-22 of 1,
// which double precision cannot represent.

#include <Eigen/Dense>
#include <boost/multiprecision/cpp_bin_float.hpp>

#include <map>
#include <string>
#include <vector>

#include "spc/tree.hpp"

namespace spc {

using Real = boost::multiprecision::cpp_bin_float_50;

struct ConstantsBundle {
    Real L, alpha, gamma;
    Real L_H, gamma_F, gamma_G, mu_bar, gamma_H, rho, c1;
    Real W_bar, W_bar_ceil, c2;
    Real c3, c4, c5, c6, c7, D;
    Real log_rho;
    Real one_minus_rho;  // kept separately: rho itself may round to 1
    std::vector<std::string> warnings;

    /// rho^e evaluated without leaving extended precision.
    [[nodiscard]] Real rho_pow(const Real& e) const;
    /// True when W >= W_bar (raw).
    [[nodiscard]] bool horizon_applies(int W) const { return Real(W) >= W_bar; }
};

/// Constants for given (L, alpha, gamma) and noise level D. L < 1 and gamma > 1
/// are normalized to 1 with a warning; other out-of-range inputs throw InputError.
[[nodiscard]] ConstantsBundle compute_constants(double L, double alpha, double gamma,
                                                double D = 0.0);
/// As above with D = max_t (E[||p_t||^2 | root])^{1/2} enumerated over the tree.
[[nodiscard]] ConstantsBundle compute_constants(double L, double alpha, double gamma,
                                                const ScenarioTree& tree);

/// max_t (sum_{i in V_t} pi_i ||p_i||^2)^{1/2}.
[[nodiscard]] double noise_level(const ScenarioTree& tree);

[[nodiscard]] std::string format_real(const Real& v, int digits = 12);

struct StabilityReport {
    bool pass = true;
    NodeId worst_ancestor = 0;
    NodeId worst_descendant = 0;
    double worst_ratio = 0.0;  // max ||prod Phi|| / (L alpha^{dt}) over strict pairs
    int fail_depth = 0;        // stage gap of the first violating pair, 0 if none
};

/// Path products Phi_j ... Phi_{c} over every (ancestor, strict descendant) pair.
/// phi is indexed by node; entries of the root are ignored.
[[nodiscard]] StabilityReport check_stability_tree(const ScenarioTree& tree,
                                                   const std::vector<Eigen::MatrixXd>& phi,
                                                   double L, double alpha);

struct GainCertificate {
    std::map<NodeId, Eigen::MatrixXd> gains;
    double L = 1.0;
    double alpha = 0.5;
};

struct CertificateReport {
    bool pass = false;
    bool gains_bounded = true;
    NodeId worst_gain_node = 0;
    double worst_gain_norm = 0.0;
    StabilityReport stability;
    std::string message;
};

/// Gains on stages 0..T-1; checks A_i - B_i K_{a(i)}.
[[nodiscard]] CertificateReport check_stabilizability(const ScenarioTree& tree,
                                                      const GainCertificate& cert, double L,
                                                      double alpha);
/// Gains on stages 1..T; checks A_i - K_i Q_{a(i)}^{1/2}.
[[nodiscard]] CertificateReport check_detectability(const ScenarioTree& tree,
                                                    const GainCertificate& cert, double L,
                                                    double alpha);

[[nodiscard]] double perturbation_margin(double L, double alpha);

enum class PerturbationStatus { kPass, kStabilityFailure, kPreconditionViolated };

struct PerturbationReport {
    PerturbationStatus status = PerturbationStatus::kPass;
    double max_deviation = 0.0;
    double margin = 0.0;
    StabilityReport stability;
    std::string message;
};

/// Checks that node matrices within the margin of an (L, alpha)-stable nominal
/// are (L, alpha^{1/2})-stable on the tree.
[[nodiscard]] PerturbationReport verify_perturbed_stability(const Eigen::MatrixXd& nominal,
                                                            const ScenarioTree& tree,
                                                            const std::vector<Eigen::MatrixXd>& phi,
                                                            double L, double alpha);

struct DataBoundsReport {
    bool pass = true;
    std::vector<std::string> violations;
};

/// L-boundedness of A, B, Q, R; Q PSD; R >= gamma I.
[[nodiscard]] DataBoundsReport check_data_bounds(const ScenarioTree& tree, double L, double gamma);

}  // namespace spc
