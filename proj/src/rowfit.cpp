#include "robustlr/rowfit.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "robustlr/error.hpp"

namespace rlr {

namespace {

// Fixed-size kernels for the ranks that dominate run time (r = 1, 2);
// everything else goes through the dynamic instantiation.
template <int R>
class Kernel {
public:
    using Vec = Eigen::Matrix<double, R, 1>;
    using Mat = Eigen::Matrix<double, R, R>;

    struct Evaluation {
        Vec gradient; // of theta -> sum_j L(y_j - phi_j^T theta)
        Mat hessian;
        Mat irls_lhs; // sum_j w_j phi_j phi_j^T with w = L'(s)/s
    };

    using PhiT = Eigen::Map<const Eigen::Matrix<double, R, Eigen::Dynamic>>;

    Kernel(const Matrix& phi_t, const LossSpec& loss, const Eigen::Ref<const Vector>& y)
        : phi_t_(phi_t.data(), phi_t.rows(), phi_t.cols()), loss_(loss), y_(y), r_(R == Eigen::Dynamic ? phi_t.rows() : R) {}

    void evaluate(const Vec& theta, Evaluation& ev) const {
        if constexpr (R != Eigen::Dynamic) {
            evaluate_fixed(theta, ev);
        } else {
            evaluate_dynamic(theta, ev);
        }
    }

    // Plain scalar accumulators; R is a compile-time constant here.
    void evaluate_fixed(const Vec& theta, Evaluation& ev) const {
        std::array<double, R> grad{};
        std::array<double, R * R> hess{};
        std::array<double, R * R> lhs{};
        const double* phi = phi_t_.data();
        for (Eigen::Index j = 0; j < y_.size(); ++j, phi += R) {
            double fitted = 0.0;
            for (int a = 0; a < R; ++a) fitted += phi[a] * theta(a);
            const double yj = y_(j);
            const LossDerivs t = loss_derivs(loss_, yj - fitted);
            for (int a = 0; a < R; ++a) {
                grad[a] -= t.d1 * phi[a];
                for (int b = 0; b <= a; ++b) {
                    const double pp = phi[a] * phi[b];
                    hess[a * R + b] += t.d2 * pp;
                    lhs[a * R + b] += t.weight * pp;
                }
            }
        }
        for (int a = 0; a < R; ++a) {
            ev.gradient(a) = grad[a];
            for (int b = 0; b <= a; ++b) {
                ev.hessian(a, b) = ev.hessian(b, a) = hess[a * R + b];
                ev.irls_lhs(a, b) = ev.irls_lhs(b, a) = lhs[a * R + b];
            }
        }
    }

    void evaluate_dynamic(const Vec& theta, Evaluation& ev) const {
        ev.gradient.setZero(r_);
        ev.hessian.setZero(r_, r_);
        ev.irls_lhs.setZero(r_, r_);
        for (Eigen::Index j = 0; j < y_.size(); ++j) {
            const auto phij = phi_t_.col(j);
            const LossDerivs t = loss_derivs(loss_, y_(j) - phij.dot(theta));
            ev.gradient.noalias() -= t.d1 * phij;
            for (Eigen::Index a = 0; a < r_; ++a)
                for (Eigen::Index b = 0; b <= a; ++b) {
                    const double pp = phij(a) * phij(b);
                    ev.hessian(a, b) += t.d2 * pp;
                    ev.irls_lhs(a, b) += t.weight * pp;
                }
        }
        for (Eigen::Index a = 0; a < r_; ++a)
            for (Eigen::Index b = 0; b < a; ++b) {
                ev.hessian(b, a) = ev.hessian(a, b);
                ev.irls_lhs(b, a) = ev.irls_lhs(a, b);
            }
    }

    [[nodiscard]] double objective(const Vec& theta) const {
        double total = 0.0;
        for (Eigen::Index j = 0; j < y_.size(); ++j) total += loss_value(loss_, y_(j) - phi_t_.col(j).dot(theta));
        return total;
    }

    // Largest t found in (lo, hi) with nonpositive directional derivative
    // h(t) = grad(theta + t d) . d, given h(lo) < 0 < h(hi). `at` receives
    // the evaluation at the returned point (untouched if that is lo).
    double bracket_root(const Vec& theta, const Vec& direction, double lo, double hi, double h_lo, double h_hi,
                        Evaluation& at) const {
        const double h0 = h_lo;
        int side = 0;
        Evaluation probe;
        for (int k = 0; k < 40; ++k) {
            double t = lo - h_lo * (hi - lo) / (h_hi - h_lo);
            if (!(t > lo && t < hi)) t = 0.5 * (lo + hi);
            evaluate(theta + t * direction, probe);
            const double h = probe.gradient.dot(direction);
            if (h <= 0.0) {
                lo = t;
                h_lo = h;
                at = probe;
                if (side == -1) h_hi *= 0.5;
                side = -1;
                if (h >= 1e-3 * h0) break;
            } else {
                hi = t;
                h_hi = h;
                if (side == 1) h_lo *= 0.5;
                side = 1;
            }
            if (hi - lo <= 1e-12 * hi) break;
        }
        return lo;
    }

    RowFitResult run(Vec theta, const RowFitOptions& options) const {
        const double ynorm = y_.norm();
        const double grad_tol = options.gradient_tol * (1.0 + ynorm);
        const double polish_tol = options.polish_tol * (1.0 + ynorm);

        Evaluation eval;
        Evaluation trial_eval;
        evaluate(theta, eval);
        double gnorm = eval.gradient.norm();

        int it = 0;
        if (loss_.family != LossFamily::LeastSquares) {
            for (; it < options.max_iterations && gnorm > polish_tol; ++it) {
                double step = 0.0;

                // Newton step, kept if the objective is still decreasing at
                // the trial point (by convexity the whole step then lowers
                // the objective) or the gradient norm at least halves.
                // Without a positive definite Hessian (Huber with fewer
                // residuals inside the kink than the rank) the Hessian is
                // blended with the IRLS matrix, whose direction alone is the
                // IRLS step; flat directions then get long steps that the
                // line search cuts back to the next breakpoint.
                Vec direction;
                bool newton = false;
                // Pivots negligible next to the IRLS matrix (logistic
                // curvature underflows far out in the tails) count as
                // singular.
                const double w_trace = eval.irls_lhs.trace();
                const Eigen::LLT<Mat> chol(eval.hessian);
                if (chol.info() == Eigen::Success &&
                    chol.matrixLLT().diagonal().array().square().minCoeff() > 1e-10 * w_trace) {
                    direction = chol.solve(-eval.gradient);
                    newton = direction.allFinite() && eval.gradient.dot(direction) < 0.0;
                }
                if (!newton) {
                    const double mu = 1e-3 * std::max(eval.hessian.trace(), w_trace) / w_trace;
                    const Eigen::LLT<Mat> blend(eval.hessian + mu * eval.irls_lhs);
                    if (blend.info() != Eigen::Success) break;
                    direction = blend.solve(-eval.gradient);
                    if (!direction.allFinite() || !(eval.gradient.dot(direction) < 0.0)) break;
                }

                evaluate(theta + direction, trial_eval);
                const double h0 = eval.gradient.dot(direction);
                double h = trial_eval.gradient.dot(direction);
                double t = 1.0;
                if (newton && (h <= 0.0 || trial_eval.gradient.norm() <= 0.5 * gnorm)) {
                    std::swap(eval, trial_eval);
                } else if (h > 0.0) {
                    // Overshoot: the derivative along the step changes sign
                    // inside (0, 1). Locate it by regula falsi, keeping the
                    // lower end so the objective drops.
                    t = bracket_root(theta, direction, 0.0, 1.0, h0, h, eval);
                } else {
                    // Still descending at the full step: expand, then bracket.
                    double t_lo = 1.0, h_lo = h;
                    std::swap(eval, trial_eval);
                    for (int k = 0; k < 60 && h < 0.0; ++k) {
                        t_lo = t;
                        h_lo = h;
                        t *= 2.0;
                        evaluate(theta + t * direction, trial_eval);
                        h = trial_eval.gradient.dot(direction);
                        if (h <= 0.0) std::swap(eval, trial_eval);
                    }
                    if (h > 0.0) t = bracket_root(theta, direction, t_lo, t, h_lo, h, eval);
                }
                if (!(t > 0.0)) break;
                step = t * direction.norm();
                theta += t * direction;

                gnorm = eval.gradient.norm();
                if (step <= options.step_tol && gnorm <= grad_tol) {
                    ++it;
                    break;
                }
            }
        }

        RowFitResult out;
        out.theta = theta;
        out.iterations = it;
        out.objective = objective(theta);
        out.final_gradient_norm = gnorm;
        out.converged = gnorm <= grad_tol;

        // Norm bound on the row effects: sum_k theta_k^2 <= 4 m^2 ||y||^2.
        const auto m = static_cast<double>(y_.size());
        if (out.theta.squaredNorm() > 4.0 * m * m * ynorm * ynorm * (1.0 + 1e-12) + 1e-300)
            throw NumericError("rowfit: row effects violate the norm bound");
        return out;
    }

private:
    PhiT phi_t_;
    const LossSpec& loss_;
    const Eigen::Ref<const Vector>& y_;
    const Eigen::Index r_;
};

template <int R>
RowFitResult run_kernel(const Matrix& phi_t, const LossSpec& loss, const Eigen::Ref<const Vector>& y,
                        const Vector& init, const RowFitOptions& options) {
    const Kernel<R> kernel(phi_t, loss, y);
    typename Kernel<R>::Vec theta = init;
    return kernel.run(theta, options);
}

} // namespace

RowSolver::RowSolver(Matrix phi, LossSpec loss, RowFitOptions options)
    : phi_(std::move(phi)), loss_(loss), options_(options) {
    require_finite(phi_, "rowfit: Phi");
    if (phi_.cols() > phi_.rows()) throw InputError("rowfit: Phi has more columns than rows");
    if (orthonormality_defect(phi_) > 1e-8) throw InputError("rowfit: Phi columns are not orthonormal");
    phi_t_ = phi_.transpose();
}

RowFitResult RowSolver::fit(const Eigen::Ref<const Vector>& y) const {
    if (y.size() != phi_.rows()) throw InputError("rowfit: row length does not match Phi");
    return fit_from(y, phi_t_ * y);
}

RowFitResult RowSolver::fit_from(const Eigen::Ref<const Vector>& y, const Vector& init) const {
    if (y.size() != phi_.rows()) throw InputError("rowfit: row length does not match Phi");
    if (init.size() != phi_.cols()) throw InputError("rowfit: initial value has wrong length");
    if (!y.allFinite() || !init.allFinite()) throw InputError("rowfit: non-finite observation");
    // Least squares: the profile solution Phi^T y is exact.
    const Vector start = loss_.family == LossFamily::LeastSquares ? Vector(phi_t_ * y) : init;
    switch (phi_.cols()) {
    case 1: return run_kernel<1>(phi_t_, loss_, y, start, options_);
    case 2: return run_kernel<2>(phi_t_, loss_, y, start, options_);
    default: return run_kernel<Eigen::Dynamic>(phi_t_, loss_, y, start, options_);
    }
}

RowFitResult fit_row(const Eigen::Ref<const Vector>& y, const Matrix& phi, const LossSpec& loss,
                     const RowFitOptions& options) {
    return RowSolver(phi, loss, options).fit(y);
}

Matrix fit_all_rows(const Matrix& Y, const Matrix& phi, const LossSpec& loss, const RowFitOptions& options) {
    require_finite(Y, "fit_all_rows");
    if (Y.cols() != phi.rows()) throw InputError("fit_all_rows: column count does not match Phi");
    const RowSolver solver(phi, loss, options);
    Matrix theta(Y.rows(), phi.cols());
    for (Eigen::Index i = 0; i < Y.rows(); ++i) {
        const RowFitResult fit = solver.fit(Y.row(i).transpose());
        if (!fit.converged)
            throw NumericError("rowfit: row " + std::to_string(i) + " did not converge (gradient norm " +
                               std::to_string(fit.final_gradient_norm) + ")");
        theta.row(i) = fit.theta.transpose();
    }
    return theta;
}

} // namespace rlr
