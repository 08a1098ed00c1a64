#include "robustlr/numkit.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "robustlr/error.hpp"

namespace rlr {

void require_finite(const Matrix& M, const char* what) {
    if (M.rows() == 0 || M.cols() == 0) throw InputError(std::string(what) + ": empty matrix");
    if (!M.allFinite()) throw InputError(std::string(what) + ": non-finite entry");
}

std::size_t ceil_count(double x) {
    if (x <= 0.0) return 0;
    const double nearest = std::round(x);
    if (std::abs(x - nearest) <= 1e-9 * std::max(1.0, std::abs(x))) return static_cast<std::size_t>(nearest);
    return static_cast<std::size_t>(std::ceil(x));
}

void canonicalize_signs(Matrix& vectors, Matrix* paired) {
    for (Eigen::Index c = 0; c < vectors.cols(); ++c) {
        Eigen::Index best = 0;
        double best_abs = -1.0;
        for (Eigen::Index r = 0; r < vectors.rows(); ++r) {
            // Strict comparison keeps the lowest index on ties. Magnitudes
            // within rounding of each other count as ties.
            const double a = std::abs(vectors(r, c));
            if (a > best_abs * (1.0 + 1e-12) + 1e-300) {
                best_abs = a;
                best = r;
            }
        }
        if (vectors(best, c) < 0.0) {
            vectors.col(c) *= -1.0;
            if (paired != nullptr) paired->col(c) *= -1.0;
        }
    }
}

SvdResult svd(const Matrix& M, std::size_t k) {
    require_finite(M, "svd");
    const auto kmax = static_cast<std::size_t>(std::min(M.rows(), M.cols()));
    if (k < 1 || k > kmax) throw InputError("svd: k must lie in [1, min(rows, cols)]");

    const Eigen::JacobiSVD<Matrix> solver(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto kk = static_cast<Eigen::Index>(k);
    SvdResult out{solver.matrixU().leftCols(kk), solver.singularValues().head(kk), solver.matrixV().leftCols(kk)};
    canonicalize_signs(out.V, &out.U);
    return out;
}

EigenPairs sym_eig_top(const Matrix& S, std::size_t k) {
    require_finite(S, "sym_eig_top");
    if (S.rows() != S.cols()) throw InputError("sym_eig_top: matrix is not square");
    if (k < 1 || k > static_cast<std::size_t>(S.rows())) throw InputError("sym_eig_top: k must lie in [1, m]");
    const double scale = std::max(1.0, S.cwiseAbs().maxCoeff());
    if ((S - S.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
        throw InputError("sym_eig_top: matrix is not symmetric");

    const Eigen::SelfAdjointEigenSolver<Matrix> solver(S);
    if (solver.info() != Eigen::Success) throw NumericError("sym_eig_top: eigensolver failed");

    // Eigen returns ascending order.
    const auto m = S.rows();
    const auto kk = static_cast<Eigen::Index>(k);
    EigenPairs out{Vector(kk), Matrix(m, kk)};
    for (Eigen::Index j = 0; j < kk; ++j) {
        out.values(j) = solver.eigenvalues()(m - 1 - j);
        out.vectors.col(j) = solver.eigenvectors().col(m - 1 - j);
    }
    canonicalize_signs(out.vectors);
    return out;
}

double sample_quantile(std::span<const double> x, double tau) {
    if (x.empty()) throw InputError("sample_quantile: empty sequence");
    if (!(tau > 0.0 && tau < 1.0)) throw InputError("sample_quantile: tau must lie in (0, 1)");
    for (double v : x)
        if (!std::isfinite(v)) throw InputError("sample_quantile: non-finite value");

    const std::size_t rank = std::max<std::size_t>(1, ceil_count(tau * static_cast<double>(x.size())));
    std::vector<double> work(x.begin(), x.end());
    auto nth = work.begin() + static_cast<std::ptrdiff_t>(rank - 1);
    std::nth_element(work.begin(), nth, work.end());
    return *nth;
}

double median(std::span<const double> x) {
    if (x.empty()) throw InputError("median: empty sequence");
    std::vector<double> work(x.begin(), x.end());
    const std::size_t half = work.size() / 2;
    std::nth_element(work.begin(), work.begin() + static_cast<std::ptrdiff_t>(half), work.end());
    const double upper = work[half];
    if (work.size() % 2 == 1) return upper;
    const double lower = *std::max_element(work.begin(), work.begin() + static_cast<std::ptrdiff_t>(half));
    return 0.5 * (lower + upper);
}

double orthonormality_defect(const Matrix& Q) {
    return (Q.transpose() * Q - Matrix::Identity(Q.cols(), Q.cols())).cwiseAbs().maxCoeff();
}

} // namespace rlr
