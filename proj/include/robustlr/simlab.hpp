#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "robustlr/inference.hpp"
#include "robustlr/numkit.hpp"
#include "robustlr/robustfit.hpp"

namespace rlr {

enum class ErrorModel { NormalHalfVar, ScaledT5, ScaledChiSq1 };
enum class Hypothesis { Null, Alternative };
enum class DirectionCase { Mu2, Mixed };
enum class Calibration { Asymptotic, Bootstrap };

std::string to_string(ErrorModel e);
std::string to_string(Hypothesis h);
std::string to_string(DirectionCase d);
std::string to_string(Calibration c);
Calibration parse_calibration(const std::string& name);

// One data-generating setting of the Monte Carlo study. Row effects
// theta_k ~ N(mu_k, var_theta_k) multiply the fixed columns phi_k.
struct SimConfig {
    std::size_t n = 20;
    std::size_t m = 12;
    double mu1_value = 20.0;
    double var_theta1 = 4.0;
    double var_theta2 = 1.0;
    ErrorModel error_model = ErrorModel::NormalHalfVar;
    Hypothesis hypothesis = Hypothesis::Null;
    bool contaminated = false;
    std::size_t replicates = 1000;
    std::uint64_t seed = 0;

    // Multiplies every base error; 0 gives an exactly rank-one null data set.
    double error_scale = 1.0;
    // Use the printed (3/10)^{-1/2} t5 scale instead of (3/10)^{1/2}.
    bool t5_literal = false;
    // Contaminate whole rows (one coin per row) instead of single cells.
    bool per_row_contamination = false;
    std::size_t contaminated_rows = 2;
    double contamination_prob = 0.1;
    double contamination_var = 11.0;

    void validate() const;

    [[nodiscard]] Vector mu1() const;   // (20, ..., 20)
    [[nodiscard]] Vector mu2() const;   // sqrt(2) (1, -1, ...)
    [[nodiscard]] Vector phi1() const;  // constant, unit norm
    [[nodiscard]] Vector phi2() const;  // alternating, unit norm
};

// Draws one error cell from the configured model (without contamination).
double draw_error(const SimConfig& cfg, CounterRng& rng);

// Data set number `replicate` of the setting. The seed, error model and
// hypothesis pick the stream; contamination only overwrites cells in the
// first rows, so the remaining rows match the outlier-free data exactly.
Matrix generate_dataset(const SimConfig& cfg, std::size_t replicate);

// Target direction of the given case, rescaled to squared norm n.
Vector target_direction(DirectionCase d, std::size_t n);

struct TableCell {
    LossFamily loss = LossFamily::Logistic;
    DirectionCase direction = DirectionCase::Mu2;
    ErrorModel error_model = ErrorModel::NormalHalfVar;
    Hypothesis hypothesis = Hypothesis::Null;
    bool contaminated = false;
    std::size_t rejections = 0;
    std::size_t replicates = 0;  // successful replicates
    std::size_t failures = 0;    // replicates whose estimation failed

    [[nodiscard]] double rejection_rate() const;
    [[nodiscard]] double mc_stderr() const;
};

struct TableGrid {
    std::vector<LossFamily> losses{LossFamily::LeastSquares, LossFamily::Huber, LossFamily::Logistic};
    std::vector<DirectionCase> directions{DirectionCase::Mu2, DirectionCase::Mixed};
    std::vector<ErrorModel> error_models{ErrorModel::NormalHalfVar, ErrorModel::ScaledT5, ErrorModel::ScaledChiSq1};
    std::vector<Hypothesis> hypotheses{Hypothesis::Null, Hypothesis::Alternative};
};

struct RunOptions {
    Calibration calibration = Calibration::Bootstrap;
    std::size_t bootstrap_replicates = 199;
    double level = 0.05;
    std::size_t threads = 1;
    // Called after each finished (error model, hypothesis) block.
    std::function<void(const std::string&)> progress;
};

// Rejection decision of a bootstrap test at `level`, given the number of
// replicate statistics at or above the observed one.
bool bootstrap_rejects(std::size_t exceedances, std::size_t B, double level);

// Runs every cell of the grid. `base` supplies the generator settings
// (contamination, replicate count, seed and flags); `trim` the estimator
// settings, whose loss tuning constant is reused for each loss family.
// The loss family of `trim` is ignored. Throws NumericError if more than 1%
// of the replicates of any cell fail.
std::vector<TableCell> run_table(const SimConfig& base, const TableGrid& grid, const TrimConfig& trim,
                                 const RunOptions& options);

void write_table_csv(std::ostream& out, const std::vector<TableCell>& cells);
void write_table_text(std::ostream& out, const std::vector<TableCell>& cells);

} // namespace rlr
