#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "robustlr/loss.hpp"
#include "robustlr/numkit.hpp"
#include "robustlr/rowfit.hpp"

namespace rlr {

// Everything that governs the subset search and the trimming step.
struct TrimConfig {
    double alpha_star = 0.3;     // fraction of rows left out of each random subset
    double alpha = 0.1;          // trimming level for the weights; 0 disables trimming
    std::size_t n_subsets = 100;
    std::size_t rank = 2;
    std::uint64_t seed = 0;
    LossSpec loss = LossSpec::logistic(0.1);
    // Use a single "subset" made of all rows (classical initial estimate).
    bool use_all_rows = false;

    // Throws InputError unless the config is usable for an n x m matrix.
    void validate(std::size_t n, std::size_t m) const;
    [[nodiscard]] std::size_t subset_size(std::size_t n) const;
};

struct SubsetSearch {
    Matrix phi_hat;                         // m x r
    std::vector<std::size_t> chosen_subset; // sorted row indices
    std::size_t chosen_index = 0;           // which random subset won
    double chosen_loss = 0.0;               // total robust loss over all rows
    std::size_t skipped = 0;                // rank-deficient subsets
};

// Step 0 + Step 1 output.
struct ColumnEstimate {
    SubsetSearch search;
    Vector residual_sqnorms;   // ||(I - Phi_hat Phi_hat^T) y_i||^2
    std::vector<int> weights;  // trimming indicators
    Matrix phi_tilde;          // m x r, top eigenvectors of sum_i w_i y_i y_i^T
    Vector eigenvalues;        // matching eigenvalues, descending
};

struct RobustFit {
    Matrix theta;              // n x r
    Matrix phi;                // m x r, orthonormal
    Vector singular_values;    // r, descending, of theta * phi^T
    std::vector<int> weights;
    Vector residual_sqnorms;
    std::vector<std::size_t> chosen_subset;
    Matrix phi_tilde;          // Step 1 columns before the final rotation
    std::vector<std::string> warnings;

    [[nodiscard]] Matrix approximation() const { return theta * phi.transpose(); }
};

// Random-subset initial estimate of the column space.
SubsetSearch subset_initial(const Matrix& Y, const TrimConfig& cfg, std::size_t threads = 1);

Vector residual_sqnorms(const Matrix& Y, const Matrix& phi);

// 1 iff xi_alpha < v_i <= xi_{1-alpha} (sample quantiles, ceil(tau n)-th order
// statistic). alpha == 0 keeps every row.
std::vector<int> trim_weights(std::span<const double> sqnorms, double alpha);

// Top-r eigenvectors of sum_i w_i y_i y_i^T.
Matrix weighted_column_estimate(const Matrix& Y, std::span<const int> weights, std::size_t r,
                                Vector* eigenvalues = nullptr);

// Steps 0 and 1.
ColumnEstimate estimate_columns(const Matrix& Y, const TrimConfig& cfg, std::size_t threads = 1);

// Steps 0, 1 and 2 followed by the SVD of Theta Phi^T.
RobustFit robust_svd(const Matrix& Y, const TrimConfig& cfg, std::size_t threads = 1);

} // namespace rlr
