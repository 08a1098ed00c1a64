#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "robustlr/loss.hpp"
#include "robustlr/numkit.hpp"
#include "robustlr/random.hpp"
#include "robustlr/robustfit.hpp"

namespace rlr {

// K x n matrix of target directions: rows mutually orthogonal, each with
// squared norm n.
class DirectionSet {
public:
    // Validates the invariants; sup-norm excess only produces a warning.
    explicit DirectionSet(Matrix rows);
    static DirectionSet single(const Vector& a);

    [[nodiscard]] const Matrix& matrix() const { return rows_; }
    [[nodiscard]] std::size_t count() const { return static_cast<std::size_t>(rows_.rows()); }
    [[nodiscard]] std::size_t length() const { return static_cast<std::size_t>(rows_.cols()); }
    [[nodiscard]] const std::vector<std::string>& warnings() const { return warnings_; }

private:
    Matrix rows_;
    std::vector<std::string> warnings_;
};

enum class TestKind { Z, ChiSquare };

struct TestResult {
    Vector gamma;
    double statistic = 0.0;
    double sigma_n = 0.0;
    double p_asymptotic = 1.0;
    std::optional<double> p_bootstrap;
    TestKind kind = TestKind::Z;
    std::size_t dof = 1;
    // Scores identically zero (no second dimension in the data); the
    // statistic is then 0 and every p-value 1.
    bool degenerate = false;
};

// gamma_i = sum_j L'(y_ij - f(y_i, phi1) phi1_j) phi2_j with f the rank-one
// robust row fit.
Vector score_vector(const Matrix& Y, const Vector& phi1, const Vector& phi2, const LossSpec& loss);

// sqrt(n^-1 sum gamma^2 - (n^-1 sum gamma)^2); DegenerateError if zero.
double sigma_hat(std::span<const double> gamma);
double sigma_hat(const Vector& gamma);

// n^-1/2 a^T gamma / sigma with a two-sided normal p-value.
TestResult direction_test(const Vector& gamma, const Vector& a, double sigma);

// n^-1 ||A gamma||^2 / sigma^2 referred to chi^2_K.
TestResult multi_direction_test(const Vector& gamma, const DirectionSet& A, double sigma);

// Removes the component along mu_hat and rescales to squared norm n.
Vector orthogonalize_direction(const Vector& a_raw, const Vector& mu_hat);

// Group-wise means of theta1 expanded back to an n-vector.
Vector group_mean_vector(const Vector& theta1, std::span<const std::string> labels);

// +1 for the first label in sorted order, -1 for the second; exactly two
// distinct labels are required.
Vector group_contrast(std::span<const std::string> labels);

// Orthogonalizes every raw direction (rows of raw) against mu_hat and
// against each other, then rescales to squared norm n.
DirectionSet build_directions(const Matrix& raw, const Vector& mu_hat);

// Rank-two column estimate plus rank-one robust row effects and scores.
struct ScoreFit {
    Vector phi1;
    Vector phi2;
    Vector theta1;  // f(y_i, phi1)
    Vector gamma;
    double sigma = 0.0;
    bool degenerate = false;
};

ScoreFit compute_scores(const Matrix& Y, const TrimConfig& cfg);

// Statistic used for calibration: z^2 for one direction (equivalently |z|),
// the chi-square statistic for several. Zero for degenerate scores.
double calibration_statistic(const ScoreFit& scores, const DirectionSet& A);

// Row-sign wild bootstrap under the rank-one null:
//   y*_i = theta1_i phi1 + s_i (y_i - theta1_i phi1),  s_i = +-1.
// Each replicate re-runs the whole estimation with its own RNG substreams.
class WildBootstrap {
public:
    WildBootstrap(const Matrix& Y, const ScoreFit& observed, TrimConfig cfg, std::uint64_t seed);

    [[nodiscard]] Matrix replicate_data(std::size_t b, std::size_t attempt) const;

    // Scores of replicate b; a failing replicate is redrawn up to 3 times.
    [[nodiscard]] ScoreFit replicate(std::size_t b) const;

    static constexpr std::size_t kMaxRetries = 3;

private:
    Matrix fitted_;
    Matrix residual_;
    TrimConfig cfg_;
    CounterRng base_;
};

// (1 + #{b : T*_b >= T_obs}) / (B + 1), B >= 19.
double bootstrap_pvalue(const Matrix& Y, const DirectionSet& A, const TrimConfig& cfg, std::size_t B,
                        std::uint64_t seed, std::size_t threads = 1);
double bootstrap_pvalue(const Matrix& Y, const Vector& a, const TrimConfig& cfg, std::size_t B,
                        std::uint64_t seed, std::size_t threads = 1);

// Full test on data: scores, statistic and asymptotic p-value; a bootstrap
// p-value as well when B > 0.
TestResult unidimensionality_test(const Matrix& Y, const DirectionSet& A, const TrimConfig& cfg,
                                  std::size_t B = 0, std::uint64_t bootstrap_seed = 0, std::size_t threads = 1);

} // namespace rlr
