#pragma once

// Problem and certificate files (JSON) and CSV result files.

#include <optional>
#include <string>
#include <vector>

#include "spc/controller.hpp"
#include "spc/experiments.hpp"
#include "spc/system_props.hpp"
#include "spc/tree.hpp"

namespace spc {

struct ConstantsSpec {
    double L = 1.0;
    double alpha = 0.5;
    double gamma = 1.0;
};

struct Problem {
    ScenarioTree tree;
    InitialCondition initial;
    std::optional<ConstantsSpec> constants;
};

/// Parses a problem document. Structural and probability errors raise InputError
/// naming the offending field or node.
[[nodiscard]] Problem parse_problem(const std::string& text);
[[nodiscard]] Problem load_problem(const std::string& path);
/// Writes the explicit form; stagewise input is flattened.
[[nodiscard]] std::string dump_problem(const Problem& problem);
void save_problem(const std::string& path, const Problem& problem);

struct CertificateFile {
    GainCertificate stabilizing;
    GainCertificate detecting;
};

[[nodiscard]] CertificateFile parse_certificate(const std::string& text);
[[nodiscard]] CertificateFile load_certificate(const std::string& path);
[[nodiscard]] std::string dump_certificate(const CertificateFile& cert);
void save_certificate(const std::string& path, const CertificateFile& cert);

/// Round-trip decimal formatting used by every CSV writer.
[[nodiscard]] std::string format_double(double v);

/// Columns node, stage, parent, pi, x0.., u0..; the parent of the root is -1.
[[nodiscard]] std::string trace_csv(const ScenarioTree& tree, const std::vector<Eigen::VectorXd>& x,
                                    const std::vector<Eigen::VectorXd>& u);
[[nodiscard]] std::string regret_csv(const RegretSweep& sweep, const ConstantsBundle& c);
[[nodiscard]] std::string decay_csv(const std::vector<DecayRow>& rows);
[[nodiscard]] std::string moments_csv(const std::vector<MomentRow>& rows);

void write_text(const std::string& path, const std::string& text);
[[nodiscard]] std::string read_text(const std::string& path);

}  // namespace spc
