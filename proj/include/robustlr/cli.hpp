#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "robustlr/numkit.hpp"

namespace rlr::cli {

inline constexpr const char* kToolName = "robustlr";
inline constexpr const char* kToolVersion = "0.1.0";

enum class Command { Fit, Test, Simulate };

struct RunConfig {
    Command command = Command::Fit;
    std::string input;
    std::string output;  // empty: standard output
    std::size_t rank = 2;
    double alpha = 0.1;
    double alpha_star = 0.3;
    std::size_t n_subsets = 100;
    bool subset_all = false;
    std::string loss = "logistic";
    std::string c = "0.1";        // a number or "adaptive"
    double c_multiplier = 1.205;  // used when c == "adaptive"
    std::string direction_path;
    std::string group_path;
    std::string calibration = "asymptotic";
    std::size_t bootstrap = 199;
    std::optional<std::uint64_t> seed;
    std::size_t threads = 0;  // 0: ROBUSTLOWRANK_THREADS or all cores

    // simulate
    int table = 1;
    std::size_t replicates = 1000;
    bool t5_literal = false;
    bool per_row_contamination = false;
    bool verbose = false;
};

// CSV with observations in rows; an optional first row is treated as a header
// when any of its cells is not a number. Errors name the offending cell.
Matrix read_csv_matrix(std::istream& in, const std::string& source = "input");
Matrix read_csv_matrix_file(const std::string& path);

// One line per row effect; several comma-separated values on a line give
// several directions (one per column).
Matrix read_direction_file(const std::string& path);
std::vector<std::string> read_label_file(const std::string& path);

// Each returns the process exit code: 0 ok, 2 input error, 3 numeric error.
int cmd_fit(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_test(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_simulate(const RunConfig& config, std::ostream& out, std::ostream& err);

// Parses arguments (argv[0] excluded) and dispatches.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace rlr::cli
