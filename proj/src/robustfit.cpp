#include "robustlr/robustfit.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "robustlr/error.hpp"
#include "robustlr/parallel.hpp"
#include "robustlr/random.hpp"

namespace rlr {

namespace {

// The subset search only compares total losses, so rows are fitted to a
// looser gradient tolerance than the final Step 2 fits.
RowFitOptions screening_options() {
    RowFitOptions o;
    o.gradient_tol = 1e-7;
    o.polish_tol = 1e-7;
    return o;
}

// Numerical rank test on the top r eigenvalues of a Gram matrix
// (squared singular values).
bool has_rank(const Vector& gram_values, std::size_t r) {
    const double top = gram_values(0);
    return top > 0.0 && gram_values(static_cast<Eigen::Index>(r) - 1) > 1e-12 * top;
}

void atomic_min(std::atomic<double>& target, double value) {
    double current = target.load();
    while (value < current && !target.compare_exchange_weak(current, value)) {
    }
}

} // namespace

void TrimConfig::validate(std::size_t n, std::size_t m) const {
    if (rank < 1) throw InputError("rank must be at least 1");
    if (rank > m) throw InputError("rank exceeds the number of columns");
    if (n_subsets < 1) throw InputError("n_subsets must be at least 1");
    if (!use_all_rows && !(alpha_star >= 0.1 && alpha_star <= 0.5))
        throw InputError("alpha_star must lie in [0.1, 0.5]");
    if (!(alpha >= 0.0 && alpha < 0.5)) throw InputError("alpha must lie in [0, 0.5)");
    if (!use_all_rows && alpha > alpha_star) throw InputError("alpha must not exceed alpha_star");
    if (subset_size(n) < rank + 1) throw InputError("subset size ceil((1 - alpha_star) n) must be at least rank + 1");
    if (loss.family != LossFamily::LeastSquares && !(loss.c > 0.0)) throw InputError("loss constant must be positive");
}

std::size_t TrimConfig::subset_size(std::size_t n) const {
    return use_all_rows ? n : std::min(n, ceil_count((1.0 - alpha_star) * static_cast<double>(n)));
}

SubsetSearch subset_initial(const Matrix& Y, const TrimConfig& cfg, std::size_t threads) {
    require_finite(Y, "subset_initial");
    const auto n = static_cast<std::size_t>(Y.rows());
    const auto m = static_cast<std::size_t>(Y.cols());
    cfg.validate(n, m);

    const std::size_t size = cfg.subset_size(n);
    const std::size_t count = cfg.use_all_rows ? 1 : cfg.n_subsets;
    const CounterRng base(cfg.seed);
    const auto r = static_cast<Eigen::Index>(cfg.rank);

    // Rows are accumulated in a fixed order (largest classical residual
    // first) so that every subset's total is summed identically and a
    // partial sum can abandon a subset early.
    std::vector<Eigen::Index> order(n);
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    {
        const Eigen::SelfAdjointEigenSolver<Matrix> gram(Y.transpose() * Y);
        const Matrix top = gram.eigenvectors().rightCols(r);
        const Vector resid = residual_sqnorms(Y, top);
        std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return resid(a) > resid(b); });
    }

    constexpr double kInf = std::numeric_limits<double>::infinity();
    std::vector<double> totals(count, kInf);
    std::vector<Matrix> candidates(count);
    std::vector<std::vector<std::size_t>> subsets(count);
    std::vector<char> skipped(count, 0);
    std::atomic<double> best{kInf};
    const RowFitOptions options = screening_options();

    parallel_for(count, threads, [&](std::size_t s) {
        std::vector<std::size_t> rows;
        if (cfg.use_all_rows) {
            rows.resize(n);
            std::iota(rows.begin(), rows.end(), std::size_t{0});
        } else {
            CounterRng rng = base.substream(stream::kSubsets, s);
            rows = sample_without_replacement(rng, n, size);
        }
        Matrix sub(static_cast<Eigen::Index>(rows.size()), Y.cols());
        for (std::size_t i = 0; i < rows.size(); ++i) sub.row(static_cast<Eigen::Index>(i)) = Y.row(static_cast<Eigen::Index>(rows[i]));

        // Top right singular vectors of the subset, from its Gram matrix.
        Matrix gram = Matrix::Zero(Y.cols(), Y.cols());
        gram.selfadjointView<Eigen::Lower>().rankUpdate(sub.transpose());
        gram = gram.selfadjointView<Eigen::Lower>();
        EigenPairs dec = sym_eig_top(gram, cfg.rank);
        subsets[s] = std::move(rows);
        if (!has_rank(dec.values, cfg.rank)) {
            skipped[s] = 1;
            return;
        }

        const RowSolver solver(dec.vectors, cfg.loss, options);
        double total = 0.0;
        for (const Eigen::Index i : order) {
            total += solver.fit(Y.row(i).transpose()).objective;
            // Strictly worse than a finished subset: cannot be the minimum.
            if (total > best.load(std::memory_order_relaxed)) return;
        }
        totals[s] = total;
        candidates[s] = std::move(dec.vectors);
        atomic_min(best, total);
    });

    SubsetSearch out;
    out.skipped = static_cast<std::size_t>(std::count(skipped.begin(), skipped.end(), 1));
    std::size_t winner = count;
    for (std::size_t s = 0; s < count; ++s)
        if (!skipped[s] && totals[s] < kInf && (winner == count || totals[s] < totals[winner])) winner = s;
    if (winner == count) throw DegenerateError("subset_initial: every subset has rank below r");

    out.phi_hat = std::move(candidates[winner]);
    out.chosen_subset = std::move(subsets[winner]);
    out.chosen_index = winner;
    out.chosen_loss = totals[winner];
    return out;
}

Vector residual_sqnorms(const Matrix& Y, const Matrix& phi) {
    if (Y.cols() != phi.rows()) throw InputError("residual_sqnorms: column count does not match Phi");
    const Matrix resid = Y - (Y * phi) * phi.transpose();
    return resid.rowwise().squaredNorm();
}

std::vector<int> trim_weights(std::span<const double> sqnorms, double alpha) {
    if (sqnorms.empty()) throw InputError("trim_weights: no rows");
    if (!(alpha >= 0.0 && alpha < 0.5)) throw InputError("trim_weights: alpha must lie in [0, 0.5)");
    std::vector<int> w(sqnorms.size(), 1);
    if (alpha == 0.0) return w;
    const double lo = sample_quantile(sqnorms, alpha);
    const double hi = sample_quantile(sqnorms, 1.0 - alpha);
    for (std::size_t i = 0; i < sqnorms.size(); ++i) w[i] = (lo < sqnorms[i] && sqnorms[i] <= hi) ? 1 : 0;
    return w;
}

Matrix weighted_column_estimate(const Matrix& Y, std::span<const int> weights, std::size_t r, Vector* eigenvalues) {
    require_finite(Y, "weighted_column_estimate");
    if (weights.size() != static_cast<std::size_t>(Y.rows())) throw InputError("weighted_column_estimate: weight count does not match rows");
    const auto retained = static_cast<std::size_t>(std::count_if(weights.begin(), weights.end(), [](int w) { return w != 0; }));
    if (retained < r) throw DegenerateError("weighted_column_estimate: fewer retained rows than the rank");

    Matrix moment = Matrix::Zero(Y.cols(), Y.cols());
    for (Eigen::Index i = 0; i < Y.rows(); ++i)
        if (weights[static_cast<std::size_t>(i)] != 0) moment.selfadjointView<Eigen::Lower>().rankUpdate(Y.row(i).transpose());
    moment = moment.selfadjointView<Eigen::Lower>();

    EigenPairs top = sym_eig_top(moment, r);
    const double lead = top.values(0);
    if (!(lead > 0.0) || top.values(static_cast<Eigen::Index>(r) - 1) <= 1e-12 * lead)
        throw DegenerateError("weighted_column_estimate: weighted moment matrix has rank below r");
    if (eigenvalues != nullptr) *eigenvalues = top.values;
    return top.vectors;
}

ColumnEstimate estimate_columns(const Matrix& Y, const TrimConfig& cfg, std::size_t threads) {
    ColumnEstimate out;
    out.search = subset_initial(Y, cfg, threads);
    out.residual_sqnorms = residual_sqnorms(Y, out.search.phi_hat);
    out.weights = trim_weights(std::span<const double>(out.residual_sqnorms.data(), static_cast<std::size_t>(out.residual_sqnorms.size())), cfg.alpha);
    out.phi_tilde = weighted_column_estimate(Y, out.weights, cfg.rank, &out.eigenvalues);
    return out;
}

RobustFit robust_svd(const Matrix& Y, const TrimConfig& cfg, std::size_t threads) {
    ColumnEstimate cols = estimate_columns(Y, cfg, threads);

    RobustFit fit;
    if (Y.rows() <= Y.cols()) fit.warnings.emplace_back("n <= m: more rows than columns are recommended");
    const Matrix theta = fit_all_rows(Y, cols.phi_tilde, cfg.loss);

    // Theta Phi~^T = U S (Phi~ W)^T with Theta = U S W^T; Phi~ W stays
    // orthonormal because W is orthogonal.
    const Eigen::JacobiSVD<Matrix> dec(theta, Eigen::ComputeThinU | Eigen::ComputeThinV);
    Matrix u = dec.matrixU();
    fit.phi = cols.phi_tilde * dec.matrixV();
    canonicalize_signs(fit.phi, &u);
    fit.singular_values = dec.singularValues();
    fit.theta = u * fit.singular_values.asDiagonal();

    fit.weights = std::move(cols.weights);
    fit.residual_sqnorms = std::move(cols.residual_sqnorms);
    fit.chosen_subset = std::move(cols.search.chosen_subset);
    fit.phi_tilde = std::move(cols.phi_tilde);
    return fit;
}

} // namespace rlr
