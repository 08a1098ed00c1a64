#include "robustlr/inference.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>

#include <boost/math/distributions/chi_squared.hpp>

#include "robustlr/error.hpp"
#include "robustlr/parallel.hpp"
#include "robustlr/rowfit.hpp"

namespace rlr {

namespace {

constexpr std::uint64_t kSignTag = 0x5349474e53ULL;
constexpr std::uint64_t kSubsetTag = 0x5355425345ULL;

double normal_two_sided(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

double chi_square_survival(double x, std::size_t dof) {
    if (!(x > 0.0)) return 1.0;
    const boost::math::chi_squared dist(static_cast<double>(dof));
    return boost::math::cdf(boost::math::complement(dist, x));
}

bool all_zero(const Vector& v) { return v.size() == 0 || v.cwiseAbs().maxCoeff() == 0.0; }

void require_unit_orthogonal(const Vector& phi1, const Vector& phi2) {
    if (std::abs(phi1.norm() - 1.0) > 1e-8 || std::abs(phi2.norm() - 1.0) > 1e-8)
        throw InputError("score_vector: phi1 and phi2 must have unit norm");
    if (std::abs(phi1.dot(phi2)) > 1e-8) throw InputError("score_vector: phi1 and phi2 must be orthogonal");
}

double bootstrap_from(const Matrix& Y, const ScoreFit& observed, const DirectionSet& A, const TrimConfig& cfg,
                      std::size_t B, std::uint64_t seed, std::size_t threads) {
    if (B < 19) throw InputError("bootstrap replicate count must be at least 19");
    const double t_obs = calibration_statistic(observed, A);
    // Every replicate statistic is >= 0.
    if (t_obs == 0.0) return 1.0;

    const WildBootstrap boot(Y, observed, cfg, seed);
    std::vector<char> exceed(B, 0);
    parallel_for(B, threads, [&](std::size_t b) { exceed[b] = calibration_statistic(boot.replicate(b), A) >= t_obs ? 1 : 0; });
    const auto count = static_cast<double>(std::count(exceed.begin(), exceed.end(), 1));
    return (1.0 + count) / (static_cast<double>(B) + 1.0);
}

} // namespace

DirectionSet::DirectionSet(Matrix rows) : rows_(std::move(rows)) {
    require_finite(rows_, "DirectionSet");
    const auto n = static_cast<double>(rows_.cols());
    for (Eigen::Index l = 0; l < rows_.rows(); ++l) {
        if (std::abs(rows_.row(l).squaredNorm() - n) > 1e-8 * n)
            throw InputError("DirectionSet: direction " + std::to_string(l) + " must have squared norm n");
        for (Eigen::Index k = 0; k < l; ++k)
            if (std::abs(rows_.row(l).dot(rows_.row(k))) > 1e-8 * n)
                throw InputError("DirectionSet: directions " + std::to_string(k) + " and " + std::to_string(l) +
                                 " are not orthogonal");
        const double mean_abs = rows_.row(l).cwiseAbs().mean();
        if (rows_.row(l).cwiseAbs().maxCoeff() > 10.0 * mean_abs)
            warnings_.push_back("direction " + std::to_string(l) + " has entries above 10x its mean magnitude");
    }
}

DirectionSet DirectionSet::single(const Vector& a) { return DirectionSet(Matrix(a.transpose())); }

Vector score_vector(const Matrix& Y, const Vector& phi1, const Vector& phi2, const LossSpec& loss) {
    require_finite(Y, "score_vector");
    if (phi1.size() != Y.cols() || phi2.size() != Y.cols()) throw InputError("score_vector: direction length does not match columns");
    require_unit_orthogonal(phi1, phi2);

    const RowSolver solver(Matrix(phi1), loss);
    Vector gamma(Y.rows());
    for (Eigen::Index i = 0; i < Y.rows(); ++i) {
        const Vector y = Y.row(i).transpose();
        const RowFitResult fit = solver.fit(y);
        if (!fit.converged) throw NumericError("score_vector: row fit did not converge for row " + std::to_string(i));
        double g = 0.0;
        for (Eigen::Index j = 0; j < y.size(); ++j) g += loss_deriv(loss, y(j) - fit.theta(0) * phi1(j)) * phi2(j);
        gamma(i) = g;
    }
    return gamma;
}

double sigma_hat(std::span<const double> gamma) {
    if (gamma.size() < 2) throw InputError("sigma_hat: need at least two scores");
    // Centered two-pass form of n^-1 sum g^2 - (n^-1 sum g)^2.
    const auto n = static_cast<double>(gamma.size());
    const double mean = std::accumulate(gamma.begin(), gamma.end(), 0.0) / n;
    double ss = 0.0;
    for (double g : gamma) ss += (g - mean) * (g - mean);
    const double var = ss / n;
    const double scale = std::max(std::abs(mean), std::sqrt(std::inner_product(gamma.begin(), gamma.end(), gamma.begin(), 0.0) / n));
    if (!(var > 0.0) || std::sqrt(var) <= 1e-14 * scale) throw DegenerateError("sigma_hat: scores have zero variance");
    return std::sqrt(var);
}

double sigma_hat(const Vector& gamma) { return sigma_hat(std::span<const double>(gamma.data(), static_cast<std::size_t>(gamma.size()))); }

TestResult direction_test(const Vector& gamma, const Vector& a, double sigma) {
    if (a.size() != gamma.size()) throw InputError("direction_test: direction length does not match scores");
    const auto n = static_cast<double>(gamma.size());
    if (std::abs(a.squaredNorm() - n) > 1e-6 * n) throw InputError("direction_test: direction must have squared norm n");

    TestResult out;
    out.gamma = gamma;
    out.kind = TestKind::Z;
    out.dof = 1;
    out.sigma_n = sigma;
    if (all_zero(gamma)) {
        out.degenerate = true;
        return out;
    }
    if (!(sigma > 0.0)) throw DegenerateError("direction_test: sigma must be positive");
    out.statistic = a.dot(gamma) / (std::sqrt(n) * sigma);
    out.p_asymptotic = normal_two_sided(out.statistic);
    return out;
}

TestResult multi_direction_test(const Vector& gamma, const DirectionSet& A, double sigma) {
    if (A.length() != static_cast<std::size_t>(gamma.size())) throw InputError("multi_direction_test: direction length does not match scores");
    const auto n = static_cast<double>(gamma.size());

    TestResult out;
    out.gamma = gamma;
    out.kind = TestKind::ChiSquare;
    out.dof = A.count();
    out.sigma_n = sigma;
    if (all_zero(gamma)) {
        out.degenerate = true;
        return out;
    }
    if (!(sigma > 0.0)) throw DegenerateError("multi_direction_test: sigma must be positive");
    out.statistic = (A.matrix() * gamma).squaredNorm() / (n * sigma * sigma);
    out.p_asymptotic = chi_square_survival(out.statistic, out.dof);
    return out;
}

Vector orthogonalize_direction(const Vector& a_raw, const Vector& mu_hat) {
    if (a_raw.size() != mu_hat.size()) throw InputError("orthogonalize_direction: length mismatch");
    if (!a_raw.allFinite() || !mu_hat.allFinite()) throw InputError("orthogonalize_direction: non-finite input");
    const double raw_norm = a_raw.norm();
    if (!(raw_norm > 0.0)) throw DegenerateError("orthogonalize_direction: zero direction");
    Vector a = a_raw;
    const double mu_sq = mu_hat.squaredNorm();
    if (mu_sq > 0.0) a -= (a.dot(mu_hat) / mu_sq) * mu_hat;
    const double norm = a.norm();
    if (norm <= 1e-8 * raw_norm) throw DegenerateError("orthogonalize_direction: direction is parallel to the estimated mean");
    return a * (std::sqrt(static_cast<double>(a.size())) / norm);
}

Vector group_mean_vector(const Vector& theta1, std::span<const std::string> labels) {
    if (labels.size() != static_cast<std::size_t>(theta1.size())) throw InputError("group labels: count does not match rows");
    std::map<std::string, std::pair<double, std::size_t>> sums;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto& [sum, count] = sums[labels[i]];
        sum += theta1(static_cast<Eigen::Index>(i));
        ++count;
    }
    Vector out(theta1.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto& [sum, count] = sums.at(labels[i]);
        out(static_cast<Eigen::Index>(i)) = sum / static_cast<double>(count);
    }
    return out;
}

Vector group_contrast(std::span<const std::string> labels) {
    std::vector<std::string> distinct(labels.begin(), labels.end());
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() != 2) throw InputError("group contrast needs exactly two distinct labels, got " + std::to_string(distinct.size()));
    Vector out(static_cast<Eigen::Index>(labels.size()));
    for (std::size_t i = 0; i < labels.size(); ++i) out(static_cast<Eigen::Index>(i)) = labels[i] == distinct[0] ? 1.0 : -1.0;
    return out;
}

DirectionSet build_directions(const Matrix& raw, const Vector& mu_hat) {
    if (raw.cols() != mu_hat.size()) throw InputError("build_directions: length mismatch");
    const auto n = static_cast<double>(raw.cols());
    Matrix rows(raw.rows(), raw.cols());
    for (Eigen::Index l = 0; l < raw.rows(); ++l) {
        Vector a = raw.row(l).transpose();
        const double raw_norm = a.norm();
        for (Eigen::Index k = 0; k < l; ++k) a -= (a.dot(rows.row(k).transpose()) / n) * rows.row(k).transpose();
        if (a.norm() <= 1e-8 * raw_norm) throw DegenerateError("build_directions: direction " + std::to_string(l) + " is linearly dependent on earlier ones");
        a = orthogonalize_direction(a, mu_hat);
        // Re-orthogonalize against earlier rows after removing the mean component.
        for (Eigen::Index k = 0; k < l; ++k) a -= (a.dot(rows.row(k).transpose()) / n) * rows.row(k).transpose();
        rows.row(l) = (a * (std::sqrt(n) / a.norm())).transpose();
    }
    return DirectionSet(std::move(rows));
}

ScoreFit compute_scores(const Matrix& Y, const TrimConfig& cfg) {
    require_finite(Y, "compute_scores");
    if (Y.rows() < 2 || Y.cols() < 2) throw InputError("compute_scores: need at least two rows and two columns");

    ScoreFit out;
    const SvdResult classical = svd(Y, 2);
    if (classical.singular_values(1) <= 1e-12 * classical.singular_values(0)) {
        // Numerically rank one: no second dimension to score.
        out.phi1 = classical.V.col(0);
        out.phi2 = classical.V.col(1);
        out.theta1 = Y * out.phi1;
        out.gamma = Vector::Zero(Y.rows());
        out.degenerate = true;
        return out;
    }

    TrimConfig two = cfg;
    two.rank = 2;
    const ColumnEstimate cols = estimate_columns(Y, two);
    out.phi1 = cols.phi_tilde.col(0);
    out.phi2 = cols.phi_tilde.col(1);

    const RowSolver solver(Matrix(out.phi1), cfg.loss);
    out.theta1.resize(Y.rows());
    out.gamma.resize(Y.rows());
    for (Eigen::Index i = 0; i < Y.rows(); ++i) {
        const Vector y = Y.row(i).transpose();
        const RowFitResult fit = solver.fit(y);
        if (!fit.converged) throw NumericError("compute_scores: row fit did not converge for row " + std::to_string(i));
        double g = 0.0;
        for (Eigen::Index j = 0; j < y.size(); ++j) g += loss_deriv(cfg.loss, y(j) - fit.theta(0) * out.phi1(j)) * out.phi2(j);
        out.theta1(i) = fit.theta(0);
        out.gamma(i) = g;
    }
    if (all_zero(out.gamma)) {
        out.degenerate = true;
        return out;
    }
    out.sigma = sigma_hat(out.gamma);
    return out;
}

double calibration_statistic(const ScoreFit& scores, const DirectionSet& A) {
    if (scores.degenerate) return 0.0;
    const auto n = static_cast<double>(scores.gamma.size());
    return (A.matrix() * scores.gamma).squaredNorm() / (n * scores.sigma * scores.sigma);
}

WildBootstrap::WildBootstrap(const Matrix& Y, const ScoreFit& observed, TrimConfig cfg, std::uint64_t seed)
    : cfg_(std::move(cfg)), base_(CounterRng(seed).substream(stream::kBootstrap)) {
    if (observed.theta1.size() != Y.rows() || observed.phi1.size() != Y.cols())
        throw InputError("WildBootstrap: observed fit does not match data");
    fitted_ = observed.theta1 * observed.phi1.transpose();
    residual_ = Y - fitted_;
}

Matrix WildBootstrap::replicate_data(std::size_t b, std::size_t attempt) const {
    CounterRng signs = base_.substream(b, attempt).substream(kSignTag);
    Matrix out = fitted_;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        const double s = (signs() >> 63) != 0 ? -1.0 : 1.0;
        out.row(i) += s * residual_.row(i);
    }
    return out;
}

ScoreFit WildBootstrap::replicate(std::size_t b) const {
    for (std::size_t attempt = 0;; ++attempt) {
        TrimConfig cfg = cfg_;
        cfg.seed = base_.substream(b, attempt).substream(kSubsetTag).key();
        try {
            return compute_scores(replicate_data(b, attempt), cfg);
        } catch (const Error&) {
            if (attempt >= kMaxRetries) throw;
        }
    }
}

double bootstrap_pvalue(const Matrix& Y, const DirectionSet& A, const TrimConfig& cfg, std::size_t B,
                        std::uint64_t seed, std::size_t threads) {
    if (A.length() != static_cast<std::size_t>(Y.rows())) throw InputError("bootstrap_pvalue: direction length does not match rows");
    if (B < 19) throw InputError("bootstrap replicate count must be at least 19");
    return bootstrap_from(Y, compute_scores(Y, cfg), A, cfg, B, seed, threads);
}

double bootstrap_pvalue(const Matrix& Y, const Vector& a, const TrimConfig& cfg, std::size_t B, std::uint64_t seed,
                        std::size_t threads) {
    return bootstrap_pvalue(Y, DirectionSet::single(a), cfg, B, seed, threads);
}

TestResult unidimensionality_test(const Matrix& Y, const DirectionSet& A, const TrimConfig& cfg, std::size_t B,
                                  std::uint64_t bootstrap_seed, std::size_t threads) {
    if (A.length() != static_cast<std::size_t>(Y.rows())) throw InputError("unidimensionality_test: direction length does not match rows");
    const ScoreFit scores = compute_scores(Y, cfg);
    TestResult out = A.count() == 1 ? direction_test(scores.gamma, A.matrix().row(0).transpose(), scores.sigma)
                                    : multi_direction_test(scores.gamma, A, scores.sigma);
    if (B > 0) out.p_bootstrap = bootstrap_from(Y, scores, A, cfg, B, bootstrap_seed, threads);
    return out;
}

} // namespace rlr
