// chainscan - sequential malware detection pipeline
// Metrics under both error policies, stratified validation/test splitting,
// score caching and exhaustive threshold calibration by cache replay.

#ifndef CHAINSCAN_EVALUATION_HPP
#define CHAINSCAN_EVALUATION_HPP

#include "chainscan/dataset.hpp"
#include "chainscan/pipeline.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace chainscan::eval {

enum class evaluation_error_kind { missing_label, empty_subset, incomplete_cache, invalid_argument };

class evaluation_error : public std::runtime_error {
public:
    evaluation_error(evaluation_error_kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    evaluation_error_kind kind() const noexcept { return kind_; }

private:
    evaluation_error_kind kind_;
};

struct confusion {
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t tn = 0;
    std::uint64_t fn = 0;
    std::uint64_t errors = 0;  // samples with had_error
    std::uint64_t total() const noexcept { return tp + fp + tn + fn; }
};

/// Rates are absent when their denominator is zero.
std::optional<double> tpr(const confusion& c);
std::optional<double> fpr(const confusion& c);
std::optional<double> f1(const confusion& c);

struct metric_input {
    ground_truth truth = ground_truth::benign;
    std::string family;
    label predicted = label::benign;  // stored verdict label, before the policy
    bool had_error = false;
};

struct metrics_report {
    error_policy policy = error_policy::errors_as_benign;
    confusion counts;
    std::optional<double> tpr;
    std::optional<double> fpr;
    std::optional<double> f1;
    double er = 0.0;
    std::map<std::string, std::optional<double>> per_family_tpr;  // malware families only
};

metrics_report compute_metrics(std::span<const metric_input> inputs, error_policy policy);

/// verdicts[i] belongs to samples[i]; throws missing_label when the counts
/// differ or a verdict's sample id disagrees with its label row.
metrics_report compute_metrics(std::span<const pipeline_verdict> verdicts, std::span<const labeled_sample> samples,
                               error_policy policy);

nlohmann::json to_json(const metrics_report& m);

/// Fixed-width text table, one row per report.
std::string format_metrics_table(std::span<const metrics_report> reports);

struct time_summary {
    double mean = 0.0;
    double stddev = 0.0;  // population
    std::size_t count = 0;
};

/// Throws empty_subset for an empty input.
time_summary mean_detection_time(std::span<const double> seconds);

/// total_elapsed of the verdicts whose sample has ground truth `subset`.
time_summary mean_detection_time(std::span<const pipeline_verdict> verdicts, std::span<const labeled_sample> samples,
                                 ground_truth subset);

/// Fraction of verdicts labeled malicious under `policy`; throws empty_subset.
double adversarial_detection_rate(std::span<const pipeline_verdict> verdicts, error_policy policy);

struct split_result {
    std::vector<std::size_t> validation;  // ascending sample indices
    std::vector<std::size_t> test;
    /// Groups that went wholly to one side.
    std::vector<std::string> notes;
};

/// Groups by (label, family), shuffles each group with a seeded
/// Fisher-Yates and sends round(fraction * n) members to validation.
split_result stratified_split(std::span<const labeled_sample> samples, double fraction, std::uint64_t seed);

struct cache_entry {
    std::optional<double> score;
    std::optional<error_kind> error;
    double elapsed = 0.0;
};

/// Every enabled detector scored on every sample, with halting disabled.
struct score_cache {
    std::vector<std::string> detector_ids;
    std::vector<std::string> sample_ids;
    std::vector<std::vector<cache_entry>> rows;  // rows[sample][detector]

    /// Throws incomplete_cache when a row is short or an entry holds neither a score nor an error.
    void validate() const;
};

nlohmann::json to_json(const score_cache& c, bool include_timing = true);

score_cache build_score_cache(const pipeline& p, const std::vector<sample_input>& samples, std::size_t jobs = 1);
/// Load failures are cached as error(io) for every detector.
score_cache build_score_cache(const pipeline& p, std::size_t count, const sample_loader& load,
                              const std::function<std::string(std::size_t)>& id_of, std::size_t jobs = 1);

struct replay_result {
    label final_label = label::benign;
    std::string decided_by;
    bool had_error = false;
    std::size_t invoked = 0;
};

/// Halting semantics applied to one cached row; thresholds align with detector_ids.
replay_result replay(const score_cache& cache, std::size_t row, std::span<const double> thresholds);

/// {0.44, 0.46, ..., 0.98}
std::vector<double> default_research_space();

struct calibration_options {
    std::vector<double> research_space = default_research_space();
    /// Detector id -> threshold for stages that are not calibrated.
    std::map<std::string, double> fixed;
    error_policy objective_policy = error_policy::errors_as_benign;
    bool keep_grid = false;
    std::size_t jobs = 1;
};

struct grid_point {
    std::vector<double> thresholds;
    confusion counts;
    std::optional<double> f1;
    std::optional<double> tpr;
    std::optional<double> fpr;
};

struct calibration_result {
    std::vector<std::string> detector_ids;
    std::vector<double> best_thresholds;
    grid_point best;
    std::size_t combinations = 0;
    std::vector<grid_point> grid;  // enumeration order, when kept
    double split_fraction = 0.0;
};

/// Exhaustive search over research_space^k for the non-fixed detectors.
/// Best = highest F1 (compared exactly on counts), then lowest FPR, then
/// lexicographically smallest threshold vector. Undefined F1 ranks as 0.
calibration_result grid_search(const score_cache& cache, std::span<const ground_truth> truth,
                               const calibration_options& options);

nlohmann::json to_json(const calibration_result& r);
void write_grid_csv(const std::filesystem::path& path, const calibration_result& r);

}  // namespace chainscan::eval

#endif  // CHAINSCAN_EVALUATION_HPP
