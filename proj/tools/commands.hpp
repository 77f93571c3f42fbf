// chainscan - sequential malware detection pipeline
// Subcommand implementations behind the chainscan binary. Each returns the
// process exit code: 0 success, 1 usage or configuration error, 2 when some
// samples could not be processed.

#ifndef CHAINSCAN_TOOLS_COMMANDS_HPP
#define CHAINSCAN_TOOLS_COMMANDS_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace chainscan::cli {

inline constexpr int exit_ok = 0;
inline constexpr int exit_usage = 1;
inline constexpr int exit_partial = 2;

struct io_streams {
    std::ostream& out;
    std::ostream& err;
};

struct scan_options {
    std::vector<std::filesystem::path> files;
    std::optional<std::filesystem::path> manifest;
    std::filesystem::path config;
    std::filesystem::path output;  // JSON-lines verdicts
    std::optional<std::size_t> jobs;
};

struct evaluate_options {
    std::filesystem::path manifest;
    std::filesystem::path config;
    std::filesystem::path output_dir;
    std::optional<std::size_t> jobs;
};

struct calibrate_options {
    std::filesystem::path manifest;
    std::filesystem::path config;
    std::filesystem::path output_dir;
    std::optional<double> split_fraction;
    std::optional<std::uint64_t> seed;
    bool write_grid = false;
    std::optional<std::size_t> jobs;
};

struct attack_options {
    std::vector<std::filesystem::path> samples;
    std::optional<std::filesystem::path> manifest;  // malware rows are attacked
    std::filesystem::path config;
    std::filesystem::path output_dir;
    std::optional<std::string> mode;
    std::optional<double> lambda;
    std::optional<std::size_t> budget;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> target;
    std::optional<std::filesystem::path> pool_dir;
    std::optional<std::size_t> jobs;
};

struct fixtures_options {
    std::filesystem::path output_dir;
    std::uint64_t seed = 7;
    std::size_t benign = 40;
    std::size_t malware = 40;
};

struct rules_lint_options {
    std::filesystem::path rules_dir;
};

struct features_dump_options {
    std::filesystem::path input;
    std::optional<std::filesystem::path> config;
    std::optional<std::filesystem::path> output;
    bool lenient = false;
};

int run_scan(const scan_options& o, io_streams io);
int run_evaluate(const evaluate_options& o, io_streams io);
int run_calibrate(const calibrate_options& o, io_streams io);
int run_attack(const attack_options& o, io_streams io);
int run_fixtures(const fixtures_options& o, io_streams io);
int run_rules_lint(const rules_lint_options& o, io_streams io);
int run_features_dump(const features_dump_options& o, io_streams io);

}  // namespace chainscan::cli

#endif  // CHAINSCAN_TOOLS_COMMANDS_HPP
