#include "spc/linalg.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "spc/error.hpp"

namespace spc {

namespace {

void symmetric_swap(Eigen::MatrixXd& A, Eigen::Index i, Eigen::Index j) {
    if (i == j) return;
    A.row(i).swap(A.row(j));
    A.col(i).swap(A.col(j));
}

double min_abs_eig_2x2(double a, double b, double c) {
    const double mean = 0.5 * (a + c);
    const double rad = std::hypot(0.5 * (a - c), b);
    return std::min(std::abs(mean + rad), std::abs(mean - rad));
}

}  // namespace

void SymmetricIndefiniteLdlt::factor(const Eigen::MatrixXd& Ain) {
    const Eigen::Index n = Ain.rows();
    if (Ain.cols() != n) throw SolverError("LDL^T factorization of a non-square matrix");
    Eigen::MatrixXd A = Ain;
    L_ = Eigen::MatrixXd::Identity(n, n);
    D_ = Eigen::MatrixXd::Zero(n, n);
    block_size_.assign(static_cast<std::size_t>(n), 0);
    perm_.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) perm_[static_cast<std::size_t>(i)] = i;

    const double scale = n > 0 ? A.cwiseAbs().maxCoeff() : 0.0;
    const double alpha = (1.0 + std::sqrt(17.0)) / 8.0;
    min_rel_pivot_ = std::numeric_limits<double>::infinity();
    if (n > 0 && scale == 0.0) throw SolverError("singular KKT matrix (all entries zero)");

    auto do_swap = [&](Eigen::Index i, Eigen::Index j) {
        if (i == j) return;
        symmetric_swap(A, i, j);
        std::swap(perm_[static_cast<std::size_t>(i)], perm_[static_cast<std::size_t>(j)]);
        L_.block(i, 0, 1, std::min(i, j)).swap(L_.block(j, 0, 1, std::min(i, j)));
    };

    Eigen::Index k = 0;
    while (k < n) {
        const Eigen::Index rest = n - k - 1;
        double lambda = 0.0;
        Eigen::Index r = k;
        if (rest > 0) {
            Eigen::Index idx;
            lambda = A.col(k).tail(rest).cwiseAbs().maxCoeff(&idx);
            r = k + 1 + idx;
        }
        const double akk = std::abs(A(k, k));
        int step = 1;
        if (akk < alpha * lambda) {
            double sigma = 0.0;
            for (Eigen::Index j = k; j < n; ++j)
                if (j != r) sigma = std::max(sigma, std::abs(A(r, j)));
            if (akk * sigma >= alpha * lambda * lambda) {
                step = 1;
            } else if (std::abs(A(r, r)) >= alpha * sigma) {
                do_swap(k, r);
            } else {
                do_swap(k + 1, r);
                step = 2;
            }
        }

        if (step == 1) {
            const double d = A(k, k);
            const double rel = std::abs(d) / scale;
            min_rel_pivot_ = std::min(min_rel_pivot_, rel);
            if (rel < kRelPivotTol) {
                std::ostringstream os;
                os << "singular KKT matrix: smallest relative pivot " << rel;
                throw SolverError(os.str());
            }
            D_(k, k) = d;
            block_size_[static_cast<std::size_t>(k)] = 1;
            if (rest > 0) {
                Eigen::VectorXd c = A.col(k).tail(rest);
                L_.col(k).tail(rest) = c / d;
                A.bottomRightCorner(rest, rest).noalias() -= (c / d) * c.transpose();
            }
        } else {
            const Eigen::Matrix2d E = A.block<2, 2>(k, k);
            const double rel = min_abs_eig_2x2(E(0, 0), E(0, 1), E(1, 1)) / scale;
            min_rel_pivot_ = std::min(min_rel_pivot_, rel);
            if (rel < kRelPivotTol) {
                std::ostringstream os;
                os << "singular KKT matrix: smallest relative pivot " << rel;
                throw SolverError(os.str());
            }
            D_.block<2, 2>(k, k) = E;
            block_size_[static_cast<std::size_t>(k)] = 2;
            const Eigen::Index rest2 = n - k - 2;
            if (rest2 > 0) {
                const Eigen::MatrixXd C = A.block(k + 2, k, rest2, 2);
                const Eigen::MatrixXd Lc = C * E.inverse();
                L_.block(k + 2, k, rest2, 2) = Lc;
                A.bottomRightCorner(rest2, rest2).noalias() -= Lc * C.transpose();
            }
        }
        k += step;
    }
    if (n == 0) min_rel_pivot_ = 0.0;
}

void SymmetricIndefiniteLdlt::solve_in_place(Eigen::Ref<Eigen::MatrixXd> B) const {
    const Eigen::Index n = L_.rows();
    Eigen::MatrixXd Y(n, B.cols());
    for (Eigen::Index i = 0; i < n; ++i) Y.row(i) = B.row(perm_[static_cast<std::size_t>(i)]);
    L_.triangularView<Eigen::UnitLower>().solveInPlace(Y);
    for (Eigen::Index k = 0; k < n;) {
        if (block_size_[static_cast<std::size_t>(k)] == 1) {
            Y.row(k) /= D_(k, k);
            k += 1;
        } else {
            const Eigen::Matrix2d E = D_.block<2, 2>(k, k);
            Y.middleRows(k, 2) = E.inverse() * Y.middleRows(k, 2);
            k += 2;
        }
    }
    L_.transpose().triangularView<Eigen::UnitUpper>().solveInPlace(Y);
    for (Eigen::Index i = 0; i < n; ++i) B.row(perm_[static_cast<std::size_t>(i)]) = Y.row(i);
}

Eigen::VectorXd SymmetricIndefiniteLdlt::solve(const Eigen::VectorXd& b) const {
    Eigen::MatrixXd B = b;
    solve_in_place(B);
    return B.col(0);
}

Eigen::MatrixXd SymmetricIndefiniteLdlt::solve(const Eigen::MatrixXd& B) const {
    Eigen::MatrixXd X = B;
    solve_in_place(X);
    return X;
}

Inertia SymmetricIndefiniteLdlt::inertia() const {
    Inertia in;
    const Eigen::Index n = L_.rows();
    for (Eigen::Index k = 0; k < n;) {
        if (block_size_[static_cast<std::size_t>(k)] == 1) {
            (D_(k, k) > 0 ? in.positive : D_(k, k) < 0 ? in.negative : in.zero)++;
            k += 1;
        } else {
            Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(D_.block<2, 2>(k, k));
            for (int j = 0; j < 2; ++j)
                (es.eigenvalues()(j) > 0 ? in.positive : in.negative)++;
            k += 2;
        }
    }
    return in;
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& M, double tol) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
    Eigen::VectorXd ev = es.eigenvalues();
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (ev(i) < -tol) {
            std::ostringstream os;
            os << "Q not PSD (eigenvalue " << ev(i) << ")";
            throw InputError(os.str());
        }
        ev(i) = std::sqrt(std::max(ev(i), 0.0));
    }
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

double min_eigenvalue(const Eigen::MatrixXd& S) {
    if (S.size() == 0) return std::numeric_limits<double>::infinity();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S, Eigen::EigenvaluesOnly);
    return es.eigenvalues()(0);
}

}  // namespace spc
