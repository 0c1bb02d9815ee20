#include "spc/system_props.hpp"

#include <boost/math/special_functions/log1p.hpp>

#include <cmath>
#include <sstream>

#include "spc/error.hpp"
#include "spc/linalg.hpp"
#include "spc/norms.hpp"

namespace spc {

namespace {

constexpr double kStabilityRelTol = 1e-9;
constexpr double kGainTol = 1e-10;

std::string node_str(NodeId i) { return std::to_string(i); }

}  // namespace

Real ConstantsBundle::rho_pow(const Real& e) const { return boost::multiprecision::exp(e * log_rho); }

std::string format_real(const Real& v, int digits) {
    return v.str(digits, std::ios_base::scientific);
}

ConstantsBundle compute_constants(double L_in, double alpha_in, double gamma_in, double D) {
    using boost::multiprecision::log;
    using boost::multiprecision::sqrt;
    ConstantsBundle c;
    if (!(L_in > 0.0)) throw InputError("L must be positive");
    if (!(gamma_in > 0.0)) throw InputError("gamma must be positive");
    if (!(alpha_in > 0.0 && alpha_in < 1.0)) throw InputError("alpha must lie in (0, 1)");
    if (!(D >= 0.0)) throw InputError("D must be nonnegative");
    if (L_in < 1.0) {
        c.warnings.push_back("L normalized to 1");
        L_in = 1.0;
    }
    if (gamma_in > 1.0) {
        c.warnings.push_back("gamma normalized to 1");
        gamma_in = 1.0;
    }
    const Real L = L_in, a = alpha_in, g = gamma_in, one = 1;
    c.L = L;
    c.alpha = a;
    c.gamma = g;
    c.D = D;

    c.L_H = 2 * L + 1;
    c.gamma_F = (one - a) * (one - a) / ((one + L) * (one + L) * L * L);
    c.gamma_G = g * (one - a) * (one - a) / (2 * (one + L) * (one + L) * L * L * L * L);
    const Real& LH = c.L_H;
    const Real& gF = c.gamma_F;
    const Real& gG = c.gamma_G;
    c.mu_bar = (2 * LH * LH / gG + gG + LH) / gF;
    const Real& mu = c.mu_bar;
    c.gamma_H = one / (2 / gG + (one + 4 * LH / gG + 4 * LH * LH / (gG * gG)) * LH * (one + mu * LH) / gF + mu);
    const Real& gH = c.gamma_H;
    // 1 - rho is far below double resolution and can fall below the working
    // precision too, so every difference with 1 goes through e = 1 - rho^2.
    const Real e = 2 * gH * gH / (LH * LH + gH * gH);
    c.rho = sqrt(one - e);
    c.log_rho = boost::math::log1p(-e) / 2;
    c.one_minus_rho = e / (one + c.rho);
    c.c1 = LH / (gH * gH * c.rho);

    const Real& rho = c.rho;
    const Real& c1 = c.c1;
    const Real sr = sqrt(rho);
    const Real om = c.one_minus_rho;          // 1 - rho
    const Real om_half = om / (one + sr);     // 1 - rho^{1/2}
    const Real om_3half = om + rho * om_half; // 1 - rho^{3/2}
    const Real om_sq = e;                     // 1 - rho^2
    c.W_bar = log((sqrt(a) - a) / (4 * c1 * c1 * L * L * L)) / (2 * c.log_rho);
    c.W_bar_ceil = c.W_bar > 0 ? Real(boost::multiprecision::ceil(c.W_bar)) : Real(0);
    c.c2 = 2 * c1 * c1 * L / (rho * om_3half);
    const Real& c2 = c.c2;
    c.c3 = 4 * c1 * c1 * L * (2 * c2 * L / om_half + one / om);
    const Real& c3 = c.c3;
    c.c4 = 8 * c1 * c1 * c2 * L * L * L;
    const Real& c4 = c.c4;
    c.c5 = c3 * (2 * c2 * L / om_half + c3 * L / 2 + one) +
           2 * c1 * c1 * c3 * L * L / om_sq *
               (-one + 2 * c3 * L + 4 / om + 8 * c2 * L / om_half);
    c.c6 = one / om_half *
           (2 * c2 * c4 * L / om_half + c3 * c4 * L + c4 + 2 * c2 * c3 * L * L +
            2 * c1 * c1 * L * L / om_sq *
                (-c4 + 2 * c3 * c4 * L + 4 * c4 / om + 8 * c2 * c4 * L / om_half +
                 2 * c3 * L * (4 * c2 * L + c4)));
    c.c7 = one / om *
           (c4 * (2 * c2 * L * L + c4 * L / 2) +
            4 * c1 * c1 * c4 * L * L * L * (4 * c2 * L + c4) / om_sq);
    return c;
}

double noise_level(const ScenarioTree& tree) {
    double best = 0.0;
    for (int t = 0; t <= tree.horizon(); ++t) {
        double s = 0.0;
        for (NodeId i : tree.stage_nodes(t)) s += tree.pi(i) * tree.data(i).perturbation().squaredNorm();
        best = std::max(best, std::sqrt(s));
    }
    return best;
}

ConstantsBundle compute_constants(double L, double alpha, double gamma, const ScenarioTree& tree) {
    return compute_constants(L, alpha, gamma, noise_level(tree));
}

StabilityReport check_stability_tree(const ScenarioTree& tree,
                                     const std::vector<Eigen::MatrixXd>& phi, double L,
                                     double alpha) {
    if (phi.size() != tree.size()) throw InputError("transition matrices must be given per node");
    StabilityReport rep;
    struct Item {
        NodeId node;
        Eigen::MatrixXd prod;
    };
    for (NodeId i = 0; i < tree.size(); ++i) {
        std::vector<Item> stack;
        for (NodeId c : tree.children(i)) stack.push_back({c, phi[c]});
        while (!stack.empty()) {
            Item it = std::move(stack.back());
            stack.pop_back();
            const int dt = tree.stage(it.node) - tree.stage(i);
            const double ratio = spectral_norm(it.prod) / (L * std::pow(alpha, dt));
            if (ratio > rep.worst_ratio) {
                rep.worst_ratio = ratio;
                rep.worst_ancestor = i;
                rep.worst_descendant = it.node;
            }
            if (ratio > 1.0 + kStabilityRelTol && rep.pass) {
                rep.pass = false;
                rep.fail_depth = dt;
            } else if (ratio > 1.0 + kStabilityRelTol) {
                rep.fail_depth = std::min(rep.fail_depth, dt);
            }
            for (NodeId c : tree.children(it.node)) stack.push_back({c, phi[c] * it.prod});
        }
    }
    return rep;
}

namespace {

CertificateReport finish(const ScenarioTree& tree, const GainCertificate& cert,
                         const std::vector<Eigen::MatrixXd>& phi, double L, double alpha) {
    CertificateReport rep;
    for (const auto& [node, K] : cert.gains) {
        const double nk = spectral_norm(K);
        if (nk > rep.worst_gain_norm) {
            rep.worst_gain_norm = nk;
            rep.worst_gain_node = node;
        }
    }
    rep.gains_bounded = rep.worst_gain_norm <= L + kGainTol;
    rep.stability = check_stability_tree(tree, phi, L, alpha);
    rep.pass = rep.gains_bounded && rep.stability.pass;
    std::ostringstream os;
    if (!rep.gains_bounded)
        os << "gain bound violated at node " << rep.worst_gain_node << " (||K|| = "
           << rep.worst_gain_norm << " > L = " << L << ")";
    if (!rep.stability.pass) {
        if (!rep.gains_bounded) os << "; ";
        os << "closed loop not (L, alpha)-stable: pair (" << rep.stability.worst_ancestor << ", "
           << rep.stability.worst_descendant << ") ratio " << rep.stability.worst_ratio;
    }
    rep.message = os.str();
    return rep;
}

const Eigen::MatrixXd& gain_at(const GainCertificate& cert, NodeId i) {
    auto it = cert.gains.find(i);
    if (it == cert.gains.end()) throw InputError("missing gain for node " + node_str(i));
    return it->second;
}

}  // namespace

CertificateReport check_stabilizability(const ScenarioTree& tree, const GainCertificate& cert,
                                        double L, double alpha) {
    const Dims dims = tree.dims();
    std::vector<Eigen::MatrixXd> phi(tree.size(), Eigen::MatrixXd::Zero(dims.nx, dims.nx));
    for (NodeId i = 0; i < tree.size(); ++i) {
        if (!tree.is_leaf(i)) {
            const auto& K = gain_at(cert, i);
            if (K.rows() != dims.nu || K.cols() != dims.nx)
                throw InputError("stabilizing gain of node " + node_str(i) + " must be nu x nx");
        }
        if (i == 0) continue;
        const NodeData& d = tree.data(i);
        phi[i] = d.A - d.B * gain_at(cert, tree.parent(i));
    }
    return finish(tree, cert, phi, L, alpha);
}

CertificateReport check_detectability(const ScenarioTree& tree, const GainCertificate& cert,
                                      double L, double alpha) {
    const Dims dims = tree.dims();
    std::vector<Eigen::MatrixXd> phi(tree.size(), Eigen::MatrixXd::Zero(dims.nx, dims.nx));
    std::vector<Eigen::MatrixXd> croot(tree.size());
    for (NodeId i = 0; i < tree.size(); ++i)
        if (!tree.is_leaf(i)) croot[i] = psd_sqrt(tree.data(i).Q);
    for (NodeId i = 1; i < tree.size(); ++i) {
        const auto& K = gain_at(cert, i);
        if (K.rows() != dims.nx || K.cols() != dims.nx)
            throw InputError("detecting gain of node " + node_str(i) + " must be nx x nx");
        phi[i] = tree.data(i).A - K * croot[tree.parent(i)];
    }
    return finish(tree, cert, phi, L, alpha);
}

double perturbation_margin(double L, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("alpha must lie in (0, 1)");
    if (!(L > 0.0)) throw InputError("L must be positive");
    return (std::sqrt(alpha) - alpha) / L;
}

PerturbationReport verify_perturbed_stability(const Eigen::MatrixXd& nominal,
                                              const ScenarioTree& tree,
                                              const std::vector<Eigen::MatrixXd>& phi, double L,
                                              double alpha) {
    PerturbationReport rep;
    rep.margin = perturbation_margin(L, alpha);
    if (phi.size() != tree.size()) throw InputError("transition matrices must be given per node");

    Eigen::MatrixXd power = Eigen::MatrixXd::Identity(nominal.rows(), nominal.cols());
    for (int t = 0; t <= tree.horizon(); ++t) {
        if (spectral_norm(power) > L * std::pow(alpha, t) * (1.0 + kStabilityRelTol)) {
            rep.status = PerturbationStatus::kPreconditionViolated;
            rep.message = "precondition violated: nominal matrix is not (L, alpha)-stable at power " +
                          std::to_string(t);
            return rep;
        }
        power = nominal * power;
    }
    NodeId worst = 0;
    for (NodeId i = 1; i < tree.size(); ++i) {
        const double dev = spectral_norm(phi[i] - nominal);
        if (dev > rep.max_deviation) {
            rep.max_deviation = dev;
            worst = i;
        }
    }
    if (rep.max_deviation > rep.margin * (1.0 + 1e-12)) {
        std::ostringstream os;
        os << "precondition violated: deviation " << rep.max_deviation << " at node " << worst
           << " exceeds margin " << rep.margin;
        rep.status = PerturbationStatus::kPreconditionViolated;
        rep.message = os.str();
        return rep;
    }
    rep.stability = check_stability_tree(tree, phi, L, std::sqrt(alpha));
    if (!rep.stability.pass) {
        std::ostringstream os;
        os << "perturbed products not (L, alpha^1/2)-stable: pair (" << rep.stability.worst_ancestor
           << ", " << rep.stability.worst_descendant << ") ratio " << rep.stability.worst_ratio;
        rep.status = PerturbationStatus::kStabilityFailure;
        rep.message = os.str();
    }
    return rep;
}

DataBoundsReport check_data_bounds(const ScenarioTree& tree, double L, double gamma) {
    DataBoundsReport rep;
    auto fail = [&rep](std::string msg) {
        rep.pass = false;
        rep.violations.push_back(std::move(msg));
    };
    for (NodeId i = 0; i < tree.size(); ++i) {
        const NodeData& d = tree.data(i);
        const std::string at = "node " + node_str(i) + ": ";
        if (spectral_norm(d.A) > L + kGainTol) fail(at + "||A|| exceeds L");
        if (spectral_norm(d.B) > L + kGainTol) fail(at + "||B|| exceeds L");
        if (spectral_norm(d.Q) > L + kGainTol) fail(at + "||Q|| exceeds L");
        if (spectral_norm(d.R) > L + kGainTol) fail(at + "||R|| exceeds L");
        if (min_eigenvalue(d.Q) < -1e-10) fail(at + "Q not PSD");
        if (min_eigenvalue(d.R) < gamma - 1e-10) fail(at + "R not gamma-positive definite");
    }
    return rep;
}

}  // namespace spc
