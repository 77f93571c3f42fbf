// chainscan - sequential malware detection pipeline
// Detector contract and the reference detectors: signatures, byte window,
// feature model, report model, and externally supplied scores.

#ifndef CHAINSCAN_DETECTORS_HPP
#define CHAINSCAN_DETECTORS_HPP

#include "chainscan/behavior.hpp"
#include "chainscan/bytes.hpp"
#include "chainscan/features.hpp"
#include "chainscan/models.hpp"
#include "chainscan/signature.hpp"

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>

namespace chainscan {

enum class outcome_kind { malicious, benign, error };
enum class error_kind { parse, feature, report_unavailable, model, io };

const char* to_string(outcome_kind kind);
const char* to_string(error_kind kind);
std::optional<error_kind> error_kind_from_string(std::string_view s);

/// One sample as seen by detectors. `report_text` takes precedence over
/// `report_path` when both are present.
struct sample_input {
    std::string id;
    std::string sha256;
    byte_vector bytes;
    std::optional<std::filesystem::path> report_path;
    std::optional<std::string> report_text;
};

/// Either a score in [0,1] or an error kind.
struct raw_score {
    std::optional<double> score;
    std::optional<error_kind> error;

    static raw_score of(double s) { return {s, std::nullopt}; }
    static raw_score failure(error_kind e) { return {std::nullopt, e}; }
    bool ok() const noexcept { return score.has_value(); }
};

struct detector_outcome {
    std::string detector_id;
    outcome_kind kind = outcome_kind::benign;
    std::optional<double> score;
    std::optional<error_kind> error;
    double elapsed = 0.0;  // seconds
};

/// malicious iff score >= threshold.
detector_outcome apply_threshold(const std::string& detector_id, const raw_score& s, double threshold, double elapsed);

class detector {
public:
    explicit detector(std::string id) : id_(std::move(id)) {}
    virtual ~detector() = default;
    detector(const detector&) = delete;
    detector& operator=(const detector&) = delete;

    const std::string& id() const noexcept { return id_; }
    virtual const char* type() const noexcept = 0;

    /// Raw score with no threshold applied. Never throws: failures come back
    /// as error kinds, and non-finite or out-of-range scores as error(model).
    raw_score score(const sample_input& sample) const noexcept;

    /// Timed score() followed by apply_threshold.
    detector_outcome analyze(const sample_input& sample, double threshold) const;

protected:
    virtual raw_score compute(const sample_input& sample) const = 0;

private:
    std::string id_;
};

using detector_ptr = std::shared_ptr<const detector>;

class signature_detector final : public detector {
public:
    signature_detector(std::string id, sig::rule_set rules) : detector(std::move(id)), rules_(std::move(rules)) {}
    const char* type() const noexcept override { return "signature"; }
    const sig::rule_set& rules() const noexcept { return rules_; }

protected:
    raw_score compute(const sample_input& sample) const override;

private:
    sig::rule_set rules_;
};

class byte_window_detector final : public detector {
public:
    byte_window_detector(std::string id, models::byte_histogram_model model)
        : detector(std::move(id)), model_(model) {}
    const char* type() const noexcept override { return "byte_window"; }

    /// 257 symbol counts over the first 1 MiB, padding symbol included,
    /// each divided by the window size.
    static std::vector<double> window_histogram(byte_view data);

protected:
    raw_score compute(const sample_input& sample) const override;

private:
    models::byte_histogram_model model_;
};

class feature_model_detector final : public detector {
public:
    feature_model_detector(std::string id, models::feature_model model, features::feature_config config);
    const char* type() const noexcept override { return "feature_model"; }

protected:
    raw_score compute(const sample_input& sample) const override;

private:
    models::feature_model model_;
    features::feature_config config_;
};

class report_model_detector final : public detector {
public:
    report_model_detector(std::string id, models::report_model model, behavior::normalize_config config = {})
        : detector(std::move(id)), model_(std::move(model)), config_(std::move(config)) {}
    const char* type() const noexcept override { return "report_model"; }

protected:
    raw_score compute(const sample_input& sample) const override;

private:
    models::report_model model_;
    behavior::normalize_config config_;
};

/// Precomputed scores keyed by lowercase sha256; missing hashes and "ERR"
/// entries are error(model).
class external_score_detector final : public detector {
public:
    external_score_detector(std::string id, std::unordered_map<std::string, std::optional<double>> scores)
        : detector(std::move(id)), scores_(std::move(scores)) {}
    const char* type() const noexcept override { return "external_score"; }

    /// CSV rows `sha256,score_or_ERR`; an optional header row starting with "sha256" is skipped.
    static std::unordered_map<std::string, std::optional<double>> load_manifest(const std::filesystem::path& path);

protected:
    raw_score compute(const sample_input& sample) const override;

private:
    std::unordered_map<std::string, std::optional<double>> scores_;
};

/// Returns a fixed raw_score per sample id; for pipeline tests.
class scripted_detector final : public detector {
public:
    scripted_detector(std::string id, std::unordered_map<std::string, raw_score> script, raw_score fallback)
        : detector(std::move(id)), script_(std::move(script)), fallback_(fallback) {}
    const char* type() const noexcept override { return "scripted"; }

protected:
    raw_score compute(const sample_input& sample) const override;

private:
    std::unordered_map<std::string, raw_score> script_;
    raw_score fallback_;
};

/// Wraps another detector and sleeps before delegating; for timing tests.
class delayed_detector final : public detector {
public:
    delayed_detector(detector_ptr inner, std::chrono::microseconds delay)
        : detector(inner->id()), inner_(std::move(inner)), delay_(delay) {}
    const char* type() const noexcept override { return "delayed"; }

protected:
    raw_score compute(const sample_input& sample) const override;

private:
    detector_ptr inner_;
    std::chrono::microseconds delay_;
};

}  // namespace chainscan

#endif  // CHAINSCAN_DETECTORS_HPP
