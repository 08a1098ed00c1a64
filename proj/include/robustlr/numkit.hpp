#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace rlr {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct SvdResult {
    Matrix U;               // n x k, orthonormal columns
    Vector singular_values; // k, descending
    Matrix V;               // m x k, orthonormal columns
};

struct EigenPairs {
    Vector values;  // k, descending
    Matrix vectors; // m x k, orthonormal columns
};

// Throws InputError unless the matrix is non-empty and every entry is finite.
void require_finite(const Matrix& M, const char* what);

// Smallest integer >= x, tolerant to representation error in products such
// as 0.7 * 20 (which must give 14, not 15).
std::size_t ceil_count(double x);

// Flip every column so that its largest-magnitude entry is positive (ties go
// to the lowest index). The same flips are applied to the paired matrix, if
// given, so that products like U diag(s) V^T are preserved.
void canonicalize_signs(Matrix& vectors, Matrix* paired = nullptr);

// Top-k singular triplets of M, 1 <= k <= min(rows, cols).
SvdResult svd(const Matrix& M, std::size_t k);

// Top-k eigenpairs of a symmetric matrix.
EigenPairs sym_eig_top(const Matrix& S, std::size_t k);

// The ceil(tau * n)-th order statistic of x (left-continuous empirical
// quantile), tau in (0, 1).
double sample_quantile(std::span<const double> x, double tau);

// Conventional median (mean of the two middle order statistics for even n).
double median(std::span<const double> x);

// Max-abs deviation of Q^T Q from the identity.
double orthonormality_defect(const Matrix& Q);

} // namespace rlr
