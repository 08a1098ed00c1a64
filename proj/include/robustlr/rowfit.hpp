#pragma once

#include <cstddef>

#include "robustlr/loss.hpp"
#include "robustlr/numkit.hpp"

namespace rlr {

struct RowFitOptions {
    int max_iterations = 200;
    // A fit is reported converged when ||grad|| <= gradient_tol * (1 + ||y||).
    double gradient_tol = 1e-9;
    // Iteration continues past convergence until the gradient drops below
    // polish_tol * (1 + ||y||) or the step stalls below step_tol.
    double polish_tol = 1e-13;
    double step_tol = 1e-10;
};

struct RowFitResult {
    Vector theta;
    int iterations = 0;
    bool converged = false;
    double final_gradient_norm = 0.0;
    double objective = 0.0; // sum_j L(y_j - sum_k theta_k phi_kj)
};

// Minimizes theta -> sum_j L(y_j - (Phi theta)_j) for a fixed orthonormal
// Phi (m x r). The objective is convex, so the damped Newton / IRLS iteration
// started from the least-squares profile theta = Phi^T y finds the global
// minimum. One solver is built per Phi and reused across rows.
class RowSolver {
public:
    RowSolver(Matrix phi, LossSpec loss, RowFitOptions options = {});

    [[nodiscard]] RowFitResult fit(const Eigen::Ref<const Vector>& y) const;
    // Same minimizer, iteration started from `init` instead of Phi^T y.
    [[nodiscard]] RowFitResult fit_from(const Eigen::Ref<const Vector>& y, const Vector& init) const;

    [[nodiscard]] const Matrix& phi() const { return phi_; }
    [[nodiscard]] const LossSpec& loss() const { return loss_; }
    [[nodiscard]] std::size_t rank() const { return static_cast<std::size_t>(phi_.cols()); }

private:
    Matrix phi_;
    Matrix phi_t_; // r x m, column j holds phi_j
    LossSpec loss_;
    RowFitOptions options_;
};

// Single-row convenience wrapper (validates Phi on every call).
RowFitResult fit_row(const Eigen::Ref<const Vector>& y, const Matrix& phi, const LossSpec& loss,
                     const RowFitOptions& options = {});

// Row-wise fit of all rows of Y. Throws NumericError naming the row if any
// row fails to converge.
Matrix fit_all_rows(const Matrix& Y, const Matrix& phi, const LossSpec& loss, const RowFitOptions& options = {});

} // namespace rlr
