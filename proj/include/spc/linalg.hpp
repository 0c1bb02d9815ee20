#pragma once

// Dense helpers: a Bunch-Kaufman symmetric-indefinite LDL^T and a PSD square root.

#include <Eigen/Dense>

#include <vector>

namespace spc {

struct Inertia {
    int positive = 0;
    int negative = 0;
    int zero = 0;
};

/// P A P^T = L D L^T with unit lower-triangular L and 1x1/2x2 diagonal blocks D.
/// Throws SolverError when a pivot falls below kRelPivotTol relative to max|A|.
class SymmetricIndefiniteLdlt {
public:
    static constexpr double kRelPivotTol = 1e-12;

    SymmetricIndefiniteLdlt() = default;
    explicit SymmetricIndefiniteLdlt(const Eigen::MatrixXd& A) { factor(A); }

    void factor(const Eigen::MatrixXd& A);

    [[nodiscard]] Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
    [[nodiscard]] Eigen::MatrixXd solve(const Eigen::MatrixXd& B) const;
    void solve_in_place(Eigen::Ref<Eigen::MatrixXd> B) const;

    [[nodiscard]] Eigen::Index size() const { return L_.rows(); }
    [[nodiscard]] Inertia inertia() const;
    /// Smallest |pivot| (or |eigenvalue| of a 2x2 pivot) relative to max|A|.
    [[nodiscard]] double min_relative_pivot() const { return min_rel_pivot_; }

private:
    Eigen::MatrixXd L_;
    Eigen::MatrixXd D_;  // block diagonal, stored densely as tridiagonal entries
    std::vector<int> block_size_;  // 1 or 2 at the first index of each pivot block, 0 otherwise
    std::vector<Eigen::Index> perm_;
    double min_rel_pivot_ = 0.0;
};

/// Principal square root of a symmetric PSD matrix; eigenvalues in [-tol, 0) are
/// clamped to zero, smaller ones raise InputError("Q not PSD ...").
[[nodiscard]] Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& M, double tol = 1e-10);

[[nodiscard]] double min_eigenvalue(const Eigen::MatrixXd& symmetric);

}  // namespace spc
