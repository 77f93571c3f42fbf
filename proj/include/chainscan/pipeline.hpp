// chainscan - sequential malware detection pipeline
// Ordered detector chain with first-detection halting, error forwarding and
// terminal benign fallback.

#ifndef CHAINSCAN_PIPELINE_HPP
#define CHAINSCAN_PIPELINE_HPP

#include "chainscan/detectors.hpp"

#include <json.hpp>

#include <atomic>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace chainscan {

inline constexpr int verdict_schema_version = 1;
inline constexpr const char* fallback_decider = "fallback";

enum class label { benign, malicious };
enum class error_policy { errors_as_benign, errors_as_malware };

const char* to_string(label l);
const char* to_string(error_policy p);
/// Throws std::invalid_argument for unknown names.
error_policy error_policy_from_string(std::string_view s);

class config_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct stage {
    detector_ptr det;
    double threshold = 0.5;
    bool enabled = true;
};

struct pipeline_verdict {
    std::string sample_id;
    std::string sha256;
    label final_label = label::benign;
    std::string decided_by;
    std::vector<detector_outcome> module_outcomes;
    /// Some invoked module errored and none returned malicious.
    bool had_error = false;
    /// The sample could not be loaded; every enabled stage is recorded as error(io).
    bool io_error = false;
    double total_elapsed = 0.0;

    /// Label after applying the metric-time error policy.
    label label_under(error_policy policy) const noexcept {
        if (had_error && policy == error_policy::errors_as_malware) return label::malicious;
        return final_label;
    }
};

nlohmann::json to_json(const pipeline_verdict& v, bool include_timing = true);

/// Per-stage invocation counters, indexed like the pipeline's enabled stages.
class invocation_probe {
public:
    explicit invocation_probe(std::size_t stages) : counts_(stages) {}
    std::vector<std::uint64_t> counts() const;
    void reset() noexcept;
    void record(std::size_t stage) noexcept { counts_[stage].fetch_add(1, std::memory_order_relaxed); }

private:
    std::vector<std::atomic<std::uint64_t>> counts_;
};

/// Produces the sample at an index or throws to signal an I/O failure.
using sample_loader = std::function<sample_input(std::size_t)>;

class pipeline {
public:
    /// Throws config_error when no stage is enabled, ids repeat, or a
    /// threshold lies outside [0,1].
    explicit pipeline(std::vector<stage> stages, bool timing_enabled = false);

    /// Enabled stages, in invocation order.
    const std::vector<stage>& stages() const noexcept { return stages_; }
    std::vector<std::string> stage_ids() const;
    bool timing_enabled() const noexcept { return timing_enabled_; }

    pipeline_verdict analyze(const sample_input& sample) const;

    /// Synthetic verdict for a sample that failed to load.
    pipeline_verdict io_failure(std::string sample_id) const;

    /// Results follow input order. `jobs` is forced to 1 when timing is enabled.
    std::vector<pipeline_verdict> analyze_batch(const std::vector<sample_input>& samples, std::size_t jobs = 1) const;
    std::vector<pipeline_verdict> analyze_batch(std::size_t count, const sample_loader& load,
                                                const std::function<std::string(std::size_t)>& id_of,
                                                std::size_t jobs = 1) const;

    invocation_probe& probe() const noexcept { return *probe_; }

private:
    std::vector<stage> stages_;
    bool timing_enabled_;
    std::shared_ptr<invocation_probe> probe_;
};

/// Runs `work(i)` for i in [0, count) on up to `jobs` threads.
void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& work);

}  // namespace chainscan

#endif  // CHAINSCAN_PIPELINE_HPP
