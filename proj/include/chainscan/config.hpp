// chainscan - sequential malware detection pipeline
// Pipeline configuration file: detector chain, thresholds, model paths,
// error policy, calibration and attack settings.
//
//   {
//     "schema_version": 1,
//     "features": { feature_config fields },
//     "normalization": { "max_tokens": 4096 },
//     "detectors": [
//       { "id": "signatures",    "type": "signature",      "rules_dir": "rules" },
//       { "id": "byte_window",   "type": "byte_window",    "model_path": "...", "threshold": 0.5 },
//       { "id": "feature_model", "type": "feature_model",  "model_path": "...", "threshold": 0.82 },
//       { "id": "report_model",  "type": "report_model",   "model_path": "...", "threshold": 0.97 },
//       { "id": "scores",        "type": "external_score", "manifest_path": "...", "enabled": false }
//     ],
//     "error_policy": "errors_as_benign",
//     "timing_enabled": false,
//     "jobs": 1,
//     "calibration": { "research_space": [..] | {"start","stop","step"},
//                      "split_fraction": 0.5, "seed": 0 },
//     "attack": { "mode", "lambda", "query_budget", "population_size",
//                 "mutation_rate", "mutation_sigma", "elitism",
//                 "target_threshold", "seed", "pool_size", "pool_dir",
//                 "target": "<detector id>" | "marker:<byte>" },
//     "variants": { "name": ["detector id", ...] }
//   }
//
// Relative paths resolve against the directory holding the config file.

#ifndef CHAINSCAN_CONFIG_HPP
#define CHAINSCAN_CONFIG_HPP

#include "chainscan/adversarial.hpp"
#include "chainscan/behavior.hpp"
#include "chainscan/features.hpp"
#include "chainscan/pipeline.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace chainscan {

inline constexpr int config_schema_version = 1;

struct detector_config {
    std::string id;
    std::string type;  // signature | byte_window | feature_model | report_model | external_score
    double threshold = 0.5;
    bool enabled = true;
    std::optional<std::filesystem::path> model_path;
    std::optional<std::filesystem::path> rules_dir;
    std::optional<std::filesystem::path> manifest_path;
};

struct calibration_settings {
    std::vector<double> research_space;
    double split_fraction = 0.5;
    std::uint64_t seed = 0;
};

struct attack_settings {
    adv::attack_mode mode = adv::attack_mode::section_injection;
    double lambda = 1e-6;
    std::size_t query_budget = 100;
    std::size_t population_size = 10;
    double mutation_rate = 0.2;
    double mutation_sigma = 0.15;
    std::size_t elitism = 2;
    double target_threshold = 0.5;
    std::uint64_t seed = 0;
    std::size_t pool_size = 75;
    std::optional<std::filesystem::path> pool_dir;
    std::string target = "feature_model";
};

struct pipeline_config {
    std::filesystem::path base_dir;
    features::feature_config features;
    behavior::normalize_config normalization;
    std::vector<detector_config> detectors;
    error_policy policy = error_policy::errors_as_benign;
    bool timing_enabled = false;
    std::size_t jobs = 1;
    calibration_settings calibration;
    attack_settings attack;
    std::map<std::string, std::vector<std::string>> variants;

    /// Variants from the file, or full / no_dynamic / no_signature derived
    /// from detector types when none are declared.
    std::map<std::string, std::vector<std::string>> effective_variants() const;
};

/// Throws config_error on schema problems.
pipeline_config parse_pipeline_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
pipeline_config load_pipeline_config(const std::filesystem::path& path);

/// Paths are written relative to `base_dir` where possible.
nlohmann::json to_json(const pipeline_config& c, const std::filesystem::path& base_dir);

/// Loads rules and models. Throws config_error (wrapping model and rule errors).
std::vector<stage> build_stages(const pipeline_config& c);

/// Only the listed detector ids, in configured order, all enabled.
pipeline build_pipeline(const pipeline_config& c, const std::vector<std::string>& only = {});

/// Rule sets / models are loaded once and shared between variants.
struct loaded_chain {
    std::vector<stage> stages;
    pipeline full;
    std::map<std::string, pipeline> variants;
};

loaded_chain load_chain(const pipeline_config& c);

}  // namespace chainscan

#endif  // CHAINSCAN_CONFIG_HPP
