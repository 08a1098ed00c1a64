#include "robustlr/simlab.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>

#include <boost/math/special_functions/erf.hpp>

#include "robustlr/error.hpp"
#include "robustlr/parallel.hpp"

namespace rlr {

namespace {

constexpr std::uint64_t kThetaTag = 1;
constexpr std::uint64_t kErrorTag = 2;
constexpr std::uint64_t kContaminationTag = 3;

std::uint64_t setting_tag(ErrorModel e, Hypothesis h) {
    return static_cast<std::uint64_t>(e) * 2 + static_cast<std::uint64_t>(h);
}

Vector alternating(std::size_t n) {
    Vector v(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = i % 2 == 0 ? 1.0 : -1.0;
    return v;
}

std::string format_fixed(double x, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, x);
    return buf;
}

// Per-replicate outcome for one (loss, direction) cell.
enum Outcome : char { kAccept = 0, kReject = 1, kFailed = 2 };

} // namespace

std::string to_string(ErrorModel e) {
    switch (e) {
    case ErrorModel::NormalHalfVar: return "normal";
    case ErrorModel::ScaledT5: return "t5";
    case ErrorModel::ScaledChiSq1: return "chisq1";
    }
    return "unknown";
}

std::string to_string(Hypothesis h) { return h == Hypothesis::Null ? "null" : "alternative"; }

std::string to_string(DirectionCase d) { return d == DirectionCase::Mu2 ? "mu2" : "mixed"; }

std::string to_string(Calibration c) { return c == Calibration::Asymptotic ? "asymptotic" : "bootstrap"; }

Calibration parse_calibration(const std::string& name) {
    if (name == "asymptotic") return Calibration::Asymptotic;
    if (name == "bootstrap") return Calibration::Bootstrap;
    throw InputError("unknown calibration '" + name + "' (expected asymptotic or bootstrap)");
}

void SimConfig::validate() const {
    if (n < 4 || n % 2 != 0) throw InputError("simulation: n must be even and at least 4");
    if (m < 2 || m % 2 != 0) throw InputError("simulation: m must be even and at least 2");
    if (!(var_theta1 >= 0.0) || !(var_theta2 >= 0.0)) throw InputError("simulation: variances must be non-negative");
    if (!(error_scale >= 0.0)) throw InputError("simulation: error scale must be non-negative");
    if (contaminated_rows > n) throw InputError("simulation: more contaminated rows than rows");
    if (!(contamination_prob >= 0.0 && contamination_prob <= 1.0)) throw InputError("simulation: contamination probability outside [0, 1]");
    if (!(contamination_var >= 0.0)) throw InputError("simulation: contamination variance must be non-negative");
}

Vector SimConfig::mu1() const { return Vector::Constant(static_cast<Eigen::Index>(n), mu1_value); }

Vector SimConfig::mu2() const { return std::sqrt(2.0) * alternating(n); }

Vector SimConfig::phi1() const {
    return Vector::Constant(static_cast<Eigen::Index>(m), 1.0 / std::sqrt(static_cast<double>(m)));
}

Vector SimConfig::phi2() const { return alternating(m) / std::sqrt(static_cast<double>(m)); }

double draw_error(const SimConfig& cfg, CounterRng& rng) {
    switch (cfg.error_model) {
    case ErrorModel::NormalHalfVar:
        return rng.normal() / std::sqrt(2.0);
    case ErrorModel::ScaledT5: {
        const double z = rng.normal();
        double chi = 0.0;
        for (int k = 0; k < 5; ++k) {
            const double u = rng.normal();
            chi += u * u;
        }
        const double t = z / std::sqrt(chi / 5.0);
        return (cfg.t5_literal ? 1.0 / std::sqrt(0.3) : std::sqrt(0.3)) * t;
    }
    case ErrorModel::ScaledChiSq1: {
        const double z = rng.normal();
        return 0.5 * (z * z - 1.0);
    }
    }
    throw InputError("unknown error model");
}

Matrix generate_dataset(const SimConfig& cfg, std::size_t replicate) {
    cfg.validate();
    const CounterRng root =
        CounterRng(cfg.seed).substream(stream::kData, replicate).substream(setting_tag(cfg.error_model, cfg.hypothesis));
    CounterRng theta_rng = root.substream(kThetaTag);
    CounterRng error_rng = root.substream(kErrorTag);
    CounterRng cont_rng = root.substream(kContaminationTag);

    const auto n = static_cast<Eigen::Index>(cfg.n);
    const auto m = static_cast<Eigen::Index>(cfg.m);
    const Vector mu1 = cfg.mu1();
    const Vector mu2 = cfg.mu2();
    Vector theta1(n), theta2(n);
    for (Eigen::Index i = 0; i < n; ++i) theta1(i) = mu1(i) + std::sqrt(cfg.var_theta1) * theta_rng.normal();
    for (Eigen::Index i = 0; i < n; ++i) theta2(i) = mu2(i) + std::sqrt(cfg.var_theta2) * theta_rng.normal();

    Matrix E(n, m);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < m; ++j) E(i, j) = cfg.error_scale * draw_error(cfg, error_rng);

    if (cfg.contaminated) {
        const double sd = std::sqrt(cfg.contamination_var);
        const auto rows = static_cast<Eigen::Index>(cfg.contaminated_rows);
        for (Eigen::Index i = 0; i < rows; ++i) {
            const bool whole_row = cont_rng.uniform() < cfg.contamination_prob;
            for (Eigen::Index j = 0; j < m; ++j) {
                // Both draws are always taken so stream positions stay fixed.
                const bool hit = cont_rng.uniform() < cfg.contamination_prob;
                const double outlier = sd * cont_rng.normal();
                if (cfg.per_row_contamination ? whole_row : hit) E(i, j) = outlier;
            }
        }
    }

    Matrix Y = theta1 * cfg.phi1().transpose() + E;
    if (cfg.hypothesis == Hypothesis::Alternative) Y += theta2 * cfg.phi2().transpose();
    return Y;
}

Vector target_direction(DirectionCase d, std::size_t n) {
    if (n < 2 || n % 2 != 0) throw InputError("target_direction: n must be even");
    Vector a = alternating(n);
    if (d == DirectionCase::Mixed) {
        Vector halves(static_cast<Eigen::Index>(n));
        for (Eigen::Index i = 0; i < halves.size(); ++i) halves(i) = i < halves.size() / 2 ? 1.0 : -1.0;
        a = std::sqrt(1.5) * a + halves;
    }
    return a * (std::sqrt(static_cast<double>(n)) / a.norm());
}

double TableCell::rejection_rate() const {
    return replicates == 0 ? 0.0 : static_cast<double>(rejections) / static_cast<double>(replicates);
}

double TableCell::mc_stderr() const {
    if (replicates == 0) return 0.0;
    const double p = rejection_rate();
    return std::sqrt(p * (1.0 - p) / static_cast<double>(replicates));
}

bool bootstrap_rejects(std::size_t exceedances, std::size_t B, double level) {
    // (1 + count) / (B + 1) <= level, compared without rounding trouble.
    return static_cast<double>(exceedances + 1) <= level * static_cast<double>(B + 1) * (1.0 + 1e-12);
}

std::vector<TableCell> run_table(const SimConfig& base, const TableGrid& grid, const TrimConfig& trim,
                                 const RunOptions& options) {
    base.validate();
    if (base.replicates == 0) throw InputError("simulation: replicate count must be positive");
    if (options.calibration == Calibration::Bootstrap && options.bootstrap_replicates < 19)
        throw InputError("simulation: bootstrap replicate count must be at least 19");
    if (!(options.level > 0.0 && options.level < 1.0)) throw InputError("simulation: level must lie in (0, 1)");
    if (grid.losses.empty() || grid.directions.empty() || grid.error_models.empty() || grid.hypotheses.empty())
        throw InputError("simulation: empty grid");
    trim.validate(base.n, base.m);

    std::vector<LossSpec> losses;
    for (LossFamily f : grid.losses) losses.push_back(LossSpec::make(f, trim.loss.c));
    std::vector<DirectionSet> directions;
    for (DirectionCase d : grid.directions) directions.push_back(DirectionSet::single(target_direction(d, base.n)));

    const std::size_t L = losses.size();
    const std::size_t D = directions.size();
    const std::size_t R = base.replicates;
    const std::size_t B = options.bootstrap_replicates;
    const double z_crit = std::sqrt(2.0) * boost::math::erfc_inv(options.level);

    std::vector<TableCell> cells;
    for (ErrorModel e : grid.error_models) {
        for (Hypothesis h : grid.hypotheses) {
            SimConfig cfg = base;
            cfg.error_model = e;
            cfg.hypothesis = h;
            const CounterRng fit_root = CounterRng(base.seed).substream(stream::kSubsets).substream(setting_tag(e, h));
            const CounterRng boot_root = CounterRng(base.seed).substream(stream::kBootstrap).substream(setting_tag(e, h));

            std::vector<char> outcome(R * L * D, kAccept);
            parallel_for(R, options.threads, [&](std::size_t r) {
                const Matrix Y = generate_dataset(cfg, r);
                for (std::size_t l = 0; l < L; ++l) {
                    char* slot = &outcome[(r * L + l) * D];
                    try {
                        TrimConfig tc = trim;
                        tc.loss = losses[l];
                        tc.seed = fit_root.substream(r).key();
                        const ScoreFit observed = compute_scores(Y, tc);
                        if (options.calibration == Calibration::Asymptotic) {
                            for (std::size_t d = 0; d < D; ++d) {
                                const double t = calibration_statistic(observed, directions[d]);
                                slot[d] = std::sqrt(t) > z_crit ? kReject : kAccept;
                            }
                            continue;
                        }
                        std::vector<double> t_obs(D, 0.0);
                        std::vector<std::size_t> exceed(D, 0);
                        std::size_t open = 0;
                        for (std::size_t d = 0; d < D; ++d) {
                            t_obs[d] = calibration_statistic(observed, directions[d]);
                            if (t_obs[d] > 0.0) ++open;
                            else exceed[d] = B;
                        }
                        const WildBootstrap boot(Y, observed, tc, boot_root.substream(r).key());
                        // Stop once no direction can still reach rejection; the
                        // decision equals the one from all B replicates.
                        for (std::size_t b = 0; b < B && open > 0; ++b) {
                            const ScoreFit star = boot.replicate(b);
                            for (std::size_t d = 0; d < D; ++d) {
                                if (!bootstrap_rejects(exceed[d], B, options.level)) continue;
                                if (calibration_statistic(star, directions[d]) >= t_obs[d]) {
                                    ++exceed[d];
                                    if (!bootstrap_rejects(exceed[d], B, options.level)) --open;
                                }
                            }
                        }
                        for (std::size_t d = 0; d < D; ++d) slot[d] = bootstrap_rejects(exceed[d], B, options.level) ? kReject : kAccept;
                    } catch (const Error&) {
                        for (std::size_t d = 0; d < D; ++d) slot[d] = kFailed;
                    }
                }
            });

            for (std::size_t l = 0; l < L; ++l) {
                for (std::size_t d = 0; d < D; ++d) {
                    TableCell cell;
                    cell.loss = grid.losses[l];
                    cell.direction = grid.directions[d];
                    cell.error_model = e;
                    cell.hypothesis = h;
                    cell.contaminated = base.contaminated;
                    for (std::size_t r = 0; r < R; ++r) {
                        const char o = outcome[(r * L + l) * D + d];
                        if (o == kFailed) ++cell.failures;
                        else {
                            ++cell.replicates;
                            if (o == kReject) ++cell.rejections;
                        }
                    }
                    cells.push_back(cell);
                }
            }
            if (options.progress) options.progress("finished " + to_string(e) + "/" + to_string(h));
        }
    }

    for (const TableCell& c : cells)
        if (static_cast<double>(c.failures) > 0.01 * static_cast<double>(R))
            throw NumericError("simulation: " + std::to_string(c.failures) + " of " + std::to_string(R) + " replicates failed for " +
                               std::string(to_string(c.loss)) + "/" + to_string(c.error_model) + "/" + to_string(c.hypothesis));
    return cells;
}

void write_table_csv(std::ostream& out, const std::vector<TableCell>& cells) {
    out << "loss,direction_case,error_model,hypothesis,contaminated,rejection_rate,mc_stderr,replicates\n";
    for (const TableCell& c : cells)
        out << to_string(c.loss) << ',' << to_string(c.direction) << ',' << to_string(c.error_model) << ','
            << to_string(c.hypothesis) << ',' << (c.contaminated ? "true" : "false") << ',' << format_fixed(c.rejection_rate(), 4)
            << ',' << format_fixed(c.mc_stderr(), 4) << ',' << c.replicates << '\n';
}

void write_table_text(std::ostream& out, const std::vector<TableCell>& cells) {
    char line[160];
    std::snprintf(line, sizeof line, "%-13s %-6s %-7s %-11s %-5s %9s %7s %6s %5s\n", "loss", "dir", "error", "hypothesis",
                  "cont", "rejection", "se", "reps", "fail");
    out << line;
    for (const TableCell& c : cells) {
        std::snprintf(line, sizeof line, "%-13s %-6s %-7s %-11s %-5s %9.4f %7.4f %6zu %5zu\n", std::string(to_string(c.loss)).c_str(),
                      to_string(c.direction).c_str(), to_string(c.error_model).c_str(), to_string(c.hypothesis).c_str(),
                      c.contaminated ? "yes" : "no", c.rejection_rate(), c.mc_stderr(), c.replicates, c.failures);
        out << line;
    }
}

} // namespace rlr
