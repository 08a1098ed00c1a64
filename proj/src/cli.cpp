#include "robustlr/cli.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "robustlr/error.hpp"
#include "robustlr/inference.hpp"
#include "robustlr/loss.hpp"
#include "robustlr/parallel.hpp"
#include "robustlr/robustfit.hpp"
#include "robustlr/simlab.hpp"

namespace rlr::cli {

namespace {

using nlohmann::ordered_json;

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::optional<double> parse_number(std::string_view text) {
    text = trim(text);
    if (text.empty()) return std::nullopt;
    if (text.front() == '+') text.remove_prefix(1);
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(value)) return std::nullopt;
    return value;
}

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    for (;;) {
        const auto comma = line.find(',', start);
        cells.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) return cells;
        start = comma + 1;
    }
}

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path + "' for reading");
    return in;
}

std::size_t resolve_threads(std::size_t requested) { return requested > 0 ? requested : default_thread_count(); }

std::uint64_t resolve_seed(const RunConfig& config) {
    if (config.seed) return *config.seed;
    std::random_device device;
    return (static_cast<std::uint64_t>(device()) << 32) ^ device();
}

ordered_json matrix_json(const Matrix& M) {
    ordered_json rows = ordered_json::array();
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
        ordered_json row = ordered_json::array();
        for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

ordered_json vector_json(const Vector& v) {
    ordered_json out = ordered_json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

ordered_json header(const char* command) {
    ordered_json j;
    j["schema"] = 1;
    j["tool"] = {{"name", kToolName}, {"version", kToolVersion}};
    j["command"] = command;
    return j;
}

void emit(const RunConfig& config, const std::string& text, std::ostream& out) {
    if (config.output.empty()) {
        out << text;
        return;
    }
    std::ofstream file(config.output, std::ios::binary);
    if (!file) throw InputError("cannot open '" + config.output + "' for writing");
    file << text;
    if (!file) throw InputError("failed writing '" + config.output + "'");
}

// Estimation settings shared by fit and test. An adaptive c is taken from
// the residuals of the classical rank-`pilot_rank` fit.
TrimConfig make_trim(const RunConfig& config, const Matrix& Y, std::size_t pilot_rank, std::uint64_t seed) {
    TrimConfig cfg;
    cfg.rank = config.rank;
    cfg.alpha = config.alpha;
    cfg.alpha_star = config.alpha_star;
    cfg.n_subsets = config.n_subsets;
    cfg.use_all_rows = config.subset_all;
    cfg.seed = seed;
    const LossFamily family = parse_loss_family(config.loss);
    double c = 1.0;
    if (config.c == "adaptive") {
        if (family != LossFamily::LeastSquares) {
            const std::size_t k = std::min<std::size_t>(pilot_rank, static_cast<std::size_t>(std::min(Y.rows(), Y.cols())));
            const SvdResult s = svd(Y, k);
            const Matrix residual = Y - Y * s.V * s.V.transpose();
            c = scale_adaptive_c(std::span<const double>(residual.data(), static_cast<std::size_t>(residual.size())),
                                 config.c_multiplier);
        }
    } else {
        const auto parsed = parse_number(config.c);
        if (!parsed) throw InputError("--c must be a positive number or 'adaptive', got '" + config.c + "'");
        c = *parsed;
    }
    cfg.loss = LossSpec::make(family, c);
    return cfg;
}

ordered_json trim_json(const TrimConfig& cfg, const RunConfig& config) {
    ordered_json j;
    j["rank"] = cfg.rank;
    j["alpha"] = cfg.alpha;
    j["alpha_star"] = cfg.alpha_star;
    j["n_subsets"] = cfg.n_subsets;
    j["subset_all"] = cfg.use_all_rows;
    j["loss"] = std::string(to_string(cfg.loss.family));
    j["c"] = cfg.loss.c;
    j["c_mode"] = config.c == "adaptive" ? "adaptive" : "fixed";
    if (config.c == "adaptive") j["c_multiplier"] = config.c_multiplier;
    return j;
}

template <typename Body>
int guarded(std::ostream& err, Body&& body) {
    try {
        return body();
    } catch (const InputError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 3;
    }
}

} // namespace

Matrix read_csv_matrix(std::istream& in, const std::string& source) {
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    std::size_t width = 0;
    bool first = true;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto cells = split_commas(line);
        std::vector<double> values;
        values.reserve(cells.size());
        std::size_t bad = cells.size();
        for (std::size_t c = 0; c < cells.size(); ++c) {
            const auto v = parse_number(cells[c]);
            if (!v) {
                if (bad == cells.size()) bad = c;
                continue;
            }
            values.push_back(*v);
        }
        if (first) {
            first = false;
            width = cells.size();
            // A first line with no numeric cell at all is a header.
            if (values.empty()) continue;
        }
        if (bad != cells.size())
            throw InputError(source + ": line " + std::to_string(line_no) + ", column " + std::to_string(bad + 1) +
                             ": cannot parse '" + std::string(trim(cells[bad])) + "' as a number");
        if (cells.size() != width)
            throw InputError(source + ": line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                             " columns, expected " + std::to_string(width));
        rows.push_back(std::move(values));
    }
    if (rows.empty()) throw InputError(source + ": no data rows");
    Matrix Y(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < width; ++j) Y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return Y;
}

Matrix read_csv_matrix_file(const std::string& path) {
    std::ifstream in = open_input(path);
    return read_csv_matrix(in, path);
}

Matrix read_direction_file(const std::string& path) {
    std::ifstream in = open_input(path);
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        std::vector<double> values;
        const auto cells = split_commas(line);
        for (std::size_t c = 0; c < cells.size(); ++c) {
            const auto v = parse_number(cells[c]);
            if (!v)
                throw InputError(path + ": line " + std::to_string(line_no) + ", column " + std::to_string(c + 1) +
                                 ": cannot parse '" + std::string(trim(cells[c])) + "' as a number");
            values.push_back(*v);
        }
        if (!rows.empty() && values.size() != rows.front().size())
            throw InputError(path + ": line " + std::to_string(line_no) + " has a different number of values");
        rows.push_back(std::move(values));
    }
    if (rows.empty()) throw InputError(path + ": no direction values");
    // Stored as K x n: one direction per row.
    Matrix A(static_cast<Eigen::Index>(rows.front().size()), static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t k = 0; k < rows[i].size(); ++k) A(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) = rows[i][k];
    return A;
}

std::vector<std::string> read_label_file(const std::string& path) {
    std::ifstream in = open_input(path);
    std::vector<std::string> labels;
    std::string line;
    while (std::getline(in, line)) {
        const auto t = trim(line);
        if (!t.empty()) labels.emplace_back(t);
    }
    if (labels.empty()) throw InputError(path + ": no labels");
    return labels;
}

int cmd_fit(const RunConfig& config, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const Matrix Y = read_csv_matrix_file(config.input);
        const std::uint64_t seed = resolve_seed(config);
        const TrimConfig cfg = make_trim(config, Y, config.rank, seed);
        const RobustFit fit = robust_svd(Y, cfg, resolve_threads(config.threads));

        ordered_json j = header("fit");
        j["input"] = {{"path", config.input}, {"rows", Y.rows()}, {"cols", Y.cols()}};
        j["seed"] = seed;
        j["config"] = trim_json(cfg, config);
        j["Theta"] = matrix_json(fit.theta);
        j["Phi"] = matrix_json(fit.phi);
        j["singular_values"] = vector_json(fit.singular_values);
        j["weights"] = fit.weights;
        j["residual_sqnorms"] = vector_json(fit.residual_sqnorms);
        j["chosen_subset"] = fit.chosen_subset;
        j["warnings"] = fit.warnings;
        for (const auto& w : fit.warnings) err << "warning: " << w << '\n';
        emit(config, j.dump(2) + "\n", out);
        return 0;
    });
}

int cmd_test(const RunConfig& config, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const Matrix Y = read_csv_matrix_file(config.input);
        if (config.direction_path.empty() && config.group_path.empty())
            throw InputError("test needs --direction or --groups");
        const Calibration calibration = parse_calibration(config.calibration);
        const std::uint64_t seed = resolve_seed(config);
        const std::size_t threads = resolve_threads(config.threads);
        RunConfig rank_two = config;
        rank_two.rank = 2;
        const TrimConfig cfg = make_trim(rank_two, Y, 1, seed);

        const ScoreFit scores = compute_scores(Y, cfg);
        std::vector<std::string> labels;
        if (!config.group_path.empty()) {
            labels = read_label_file(config.group_path);
            if (labels.size() != static_cast<std::size_t>(Y.rows()))
                throw InputError("group file has " + std::to_string(labels.size()) + " labels for " + std::to_string(Y.rows()) + " rows");
        }
        // mu_hat: group means of the rank-one row effects, or their overall mean.
        const Vector mu_hat = labels.empty() ? Vector(Vector::Constant(Y.rows(), scores.theta1.mean()))
                                             : group_mean_vector(scores.theta1, labels);
        Matrix raw;
        if (!config.direction_path.empty()) {
            raw = read_direction_file(config.direction_path);
            if (raw.cols() != Y.rows())
                throw InputError("direction file has " + std::to_string(raw.cols()) + " entries for " + std::to_string(Y.rows()) + " rows");
        } else {
            raw = group_contrast(labels).transpose();
        }
        const DirectionSet A = build_directions(raw, mu_hat);
        for (const auto& w : A.warnings()) err << "warning: " << w << '\n';

        TestResult result = A.count() == 1 ? direction_test(scores.gamma, A.matrix().row(0).transpose(), scores.sigma)
                                           : multi_direction_test(scores.gamma, A, scores.sigma);
        if (calibration == Calibration::Bootstrap)
            result.p_bootstrap = bootstrap_pvalue(Y, A, cfg, config.bootstrap, seed, threads);

        // Exact rank-one data has no rank-two robust fit; report the
        // classical singular values instead.
        Vector singular_values;
        std::vector<std::string> fit_warnings;
        if (scores.degenerate) {
            singular_values = svd(Y, 2).singular_values;
        } else {
            RobustFit fit = robust_svd(Y, cfg, threads);
            singular_values = std::move(fit.singular_values);
            fit_warnings = std::move(fit.warnings);
        }

        ordered_json j = header("test");
        j["input"] = {{"path", config.input}, {"rows", Y.rows()}, {"cols", Y.cols()}};
        j["seed"] = seed;
        j["config"] = trim_json(cfg, config);
        j["config"]["calibration"] = to_string(calibration);
        if (calibration == Calibration::Bootstrap) j["config"]["bootstrap_replicates"] = config.bootstrap;
        j["test"] = result.kind == TestKind::Z ? "z" : "chi_square";
        j["dof"] = result.dof;
        j["statistic"] = result.statistic;
        j["sigma_n"] = result.sigma_n;
        j["p_asymptotic"] = result.p_asymptotic;
        if (result.p_bootstrap) j["p_bootstrap"] = *result.p_bootstrap;
        j["degenerate"] = result.degenerate;
        j["gamma"] = vector_json(result.gamma);
        j["directions"] = matrix_json(A.matrix());
        j["theta1"] = vector_json(scores.theta1);
        j["singular_values"] = vector_json(singular_values);
        std::vector<std::string> warnings = A.warnings();
        warnings.insert(warnings.end(), fit_warnings.begin(), fit_warnings.end());
        j["warnings"] = warnings;
        emit(config, j.dump(2) + "\n", out);
        return 0;
    });
}

int cmd_simulate(const RunConfig& config, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        if (config.table != 1 && config.table != 2) throw InputError("--table must be 1 or 2");
        const std::uint64_t seed = resolve_seed(config);
        SimConfig sim;
        sim.contaminated = config.table == 2;
        sim.replicates = config.replicates;
        sim.seed = seed;
        sim.t5_literal = config.t5_literal;
        sim.per_row_contamination = config.per_row_contamination;

        TrimConfig trim;
        trim.alpha = config.alpha;
        trim.alpha_star = config.alpha_star;
        trim.n_subsets = config.n_subsets;
        trim.use_all_rows = config.subset_all;
        const auto c = parse_number(config.c);
        if (!c) throw InputError("simulate needs a numeric --c");
        trim.loss = LossSpec::logistic(*c);

        RunOptions options;
        options.calibration = parse_calibration(config.calibration);
        options.bootstrap_replicates = config.bootstrap;
        options.threads = resolve_threads(config.threads);
        if (config.verbose) options.progress = [&err](const std::string& msg) { err << msg << '\n'; };

        const std::vector<TableCell> cells = run_table(sim, TableGrid{}, trim, options);

        std::ostringstream csv;
        write_table_csv(csv, cells);
        std::ostringstream text;
        text << "# table " << config.table << (sim.contaminated ? " (contaminated)" : " (outlier-free)") << ", seed " << seed
             << ", replicates " << sim.replicates << ", calibration " << to_string(options.calibration);
        if (options.calibration == Calibration::Bootstrap) text << " B=" << options.bootstrap_replicates;
        text << ", c " << *c << (sim.t5_literal ? ", literal t5 scale" : "")
             << (sim.per_row_contamination ? ", per-row contamination" : "") << '\n';
        write_table_text(text, cells);

        if (config.output.empty()) {
            out << csv.str();
            err << text.str();
        } else {
            emit(config, csv.str(), out);
            std::string text_path = config.output;
            const auto dot = text_path.rfind('.');
            const auto slash = text_path.rfind('/');
            if (dot != std::string::npos && (slash == std::string::npos || dot > slash)) text_path.erase(dot);
            text_path += ".txt";
            std::ofstream file(text_path, std::ios::binary);
            if (!file) throw InputError("cannot open '" + text_path + "' for writing");
            file << text.str();
        }
        return 0;
    });
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Robust low-rank approximation and unidimensionality tests", kToolName};
    app.set_version_flag("--version", kToolVersion);
    app.require_subcommand(1);

    RunConfig config;
    std::optional<std::uint64_t> seed;

    const auto add_estimation = [&](CLI::App* sub) {
        sub->add_option("--alpha", config.alpha, "trimming level")->capture_default_str();
        sub->add_option("--alpha-star", config.alpha_star, "fraction of rows left out of each subset")->capture_default_str();
        sub->add_option("--n-subsets", config.n_subsets, "number of random subsets")->capture_default_str();
        sub->add_flag("--subset-all", config.subset_all, "use all rows as the only subset");
        sub->add_option("--seed", seed, "random seed (drawn from entropy and recorded when omitted)");
        sub->add_option("--threads", config.threads, "worker threads (default: ROBUSTLOWRANK_THREADS or all cores)");
        sub->add_option("-o,--output", config.output, "output file (default: standard output)");
    };

    CLI::App* fit = app.add_subcommand("fit", "robust rank-r approximation of a CSV matrix");
    fit->add_option("-i,--input", config.input, "CSV matrix, observations in rows")->required();
    fit->add_option("-r,--rank", config.rank, "approximation rank")->capture_default_str();
    fit->add_option("--loss", config.loss, "leastsquares, huber or logistic")->capture_default_str();
    fit->add_option("--c", config.c, "loss tuning constant or 'adaptive'")->capture_default_str();
    fit->add_option("--c-multiplier", config.c_multiplier, "multiplier of the residual scale for adaptive c")->capture_default_str();
    add_estimation(fit);

    CLI::App* test = app.add_subcommand("test", "score test of unidimensionality");
    test->add_option("-i,--input", config.input, "CSV matrix, observations in rows")->required();
    test->add_option("--direction", config.direction_path, "target direction file, one value per row");
    test->add_option("--groups", config.group_path, "group label file, one label per row");
    test->add_option("--loss", config.loss, "leastsquares, huber or logistic")->capture_default_str();
    test->add_option("--c", config.c, "loss tuning constant or 'adaptive'")->capture_default_str();
    test->add_option("--c-multiplier", config.c_multiplier, "multiplier of the residual scale for adaptive c")->capture_default_str();
    test->add_option("--calibration", config.calibration, "asymptotic or bootstrap")->capture_default_str();
    test->add_option("-B,--bootstrap", config.bootstrap, "bootstrap replicates")->capture_default_str();
    add_estimation(test);

    CLI::App* simulate = app.add_subcommand("simulate", "Monte Carlo rejection-rate tables");
    simulate->add_option("--table", config.table, "1: outlier-free, 2: contaminated")->capture_default_str();
    simulate->add_option("--replicates", config.replicates, "data sets per cell")->capture_default_str();
    simulate->add_option("--c", config.c, "tuning constant of the robust losses")->capture_default_str();
    simulate->add_option("--calibration", config.calibration, "asymptotic or bootstrap")->capture_default_str();
    simulate->add_option("-B,--bootstrap", config.bootstrap, "bootstrap replicates")->capture_default_str();
    simulate->add_flag("--t5-literal", config.t5_literal, "scale t5 errors by (3/10)^(-1/2) as printed");
    simulate->add_flag("--per-row-contamination", config.per_row_contamination, "contaminate whole rows");
    simulate->add_flag("-v,--verbose", config.verbose, "report progress on standard error");
    add_estimation(simulate);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForVersion&) {
        out << kToolVersion << '\n';
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    }
    config.seed = seed;

    if (fit->parsed()) {
        config.command = Command::Fit;
        return cmd_fit(config, out, err);
    }
    if (test->parsed()) {
        config.command = Command::Test;
        return cmd_test(config, out, err);
    }
    config.command = Command::Simulate;
    return cmd_simulate(config, out, err);
}

} // namespace rlr::cli
