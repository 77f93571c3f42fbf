#include "chainscan/detectors.hpp"

#include <cmath>
#include <sstream>
#include <thread>

namespace chainscan {

const char* to_string(outcome_kind kind) {
    switch (kind) {
        case outcome_kind::malicious: return "malicious";
        case outcome_kind::benign: return "benign";
        case outcome_kind::error: return "error";
    }
    return "unknown";
}

const char* to_string(error_kind kind) {
    switch (kind) {
        case error_kind::parse: return "parse";
        case error_kind::feature: return "feature";
        case error_kind::report_unavailable: return "report_unavailable";
        case error_kind::model: return "model";
        case error_kind::io: return "io";
    }
    return "unknown";
}

std::optional<error_kind> error_kind_from_string(std::string_view s) {
    for (auto k : {error_kind::parse, error_kind::feature, error_kind::report_unavailable, error_kind::model,
                   error_kind::io}) {
        if (s == to_string(k)) return k;
    }
    return std::nullopt;
}

detector_outcome apply_threshold(const std::string& detector_id, const raw_score& s, double threshold, double elapsed) {
    detector_outcome out;
    out.detector_id = detector_id;
    out.elapsed = elapsed;
    if (!s.ok()) {
        out.kind = outcome_kind::error;
        out.error = s.error.value_or(error_kind::model);
        return out;
    }
    out.score = s.score;
    out.kind = *s.score >= threshold ? outcome_kind::malicious : outcome_kind::benign;
    return out;
}

raw_score detector::score(const sample_input& sample) const noexcept {
    raw_score r;
    try {
        r = compute(sample);
    } catch (const pe::pe_error&) {
        return raw_score::failure(error_kind::parse);
    } catch (const features::feature_extraction_error&) {
        return raw_score::failure(error_kind::feature);
    } catch (const behavior::report_unavailable&) {
        return raw_score::failure(error_kind::report_unavailable);
    } catch (const behavior::malformed_report&) {
        return raw_score::failure(error_kind::parse);
    } catch (...) {
        return raw_score::failure(error_kind::model);
    }
    if (r.ok() && (!std::isfinite(*r.score) || *r.score < 0.0 || *r.score > 1.0)) {
        return raw_score::failure(error_kind::model);
    }
    return r;
}

detector_outcome detector::analyze(const sample_input& sample, double threshold) const {
    const auto t0 = std::chrono::steady_clock::now();
    raw_score r = score(sample);
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return apply_threshold(id(), r, threshold, elapsed);
}

raw_score signature_detector::compute(const sample_input& sample) const {
    return raw_score::of(sig::match_rules(rules_, sample.bytes).any_fired() ? 1.0 : 0.0);
}

std::vector<double> byte_window_detector::window_histogram(byte_view data) {
    std::vector<double> counts(models::byte_symbols, 0.0);
    const std::size_t n = std::min(data.size(), models::byte_window_size);
    std::array<std::uint64_t, 256> c{};
    for (std::size_t i = 0; i < n; ++i) ++c[data[i]];
    const auto window = static_cast<double>(models::byte_window_size);
    for (std::size_t i = 0; i < 256; ++i) counts[i] = static_cast<double>(c[i]) / window;
    counts[models::padding_symbol] = static_cast<double>(models::byte_window_size - n) / window;
    return counts;
}

raw_score byte_window_detector::compute(const sample_input& sample) const {
    return raw_score::of(model_.score(window_histogram(sample.bytes)));
}

feature_model_detector::feature_model_detector(std::string id, models::feature_model model,
                                               features::feature_config config)
    : detector(std::move(id)), model_(std::move(model)), config_(config) {
    if (model_.feature_dimension != config_.dimension()) {
        throw models::model_error(models::model_error_kind::dimension_mismatch,
                                  "feature model dimension does not match feature config");
    }
}

raw_score feature_model_detector::compute(const sample_input& sample) const {
    features::feature_vector v;
    try {
        v = features::extract_features(sample.bytes, config_);
    } catch (const features::feature_extraction_error& e) {
        // not recognizably a PE at all -> parse; a PE whose structure breaks extraction -> feature
        switch (e.cause()) {
            case pe::pe_error_kind::bad_dos_magic:
            case pe::pe_error_kind::truncated_headers:
            case pe::pe_error_kind::bad_pe_signature: return raw_score::failure(error_kind::parse);
            default: return raw_score::failure(error_kind::feature);
        }
    }
    return raw_score::of(model_.score(v.values));
}

raw_score report_model_detector::compute(const sample_input& sample) const {
    behavior::behavior_report report;
    if (sample.report_text) {
        report = behavior::load_report(*sample.report_text);
    } else if (sample.report_path) {
        report = behavior::load_report_file(*sample.report_path);
    } else {
        return raw_score::failure(error_kind::report_unavailable);
    }
    return raw_score::of(behavior::report_score(behavior::normalize_report(report, config_), model_));
}

std::unordered_map<std::string, std::optional<double>> external_score_detector::load_manifest(
    const std::filesystem::path& path) {
    std::unordered_map<std::string, std::optional<double>> out;
    std::istringstream in(read_text_file(path));
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) {
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": expected sha256,score");
        }
        std::string sha = ascii_lower(line.substr(0, comma));
        std::string value = line.substr(comma + 1);
        if (line_no == 1 && sha == "sha256") continue;
        if (value == "ERR") {
            out[sha] = std::nullopt;
            continue;
        }
        try {
            std::size_t used = 0;
            double v = std::stod(value, &used);
            if (used != value.size()) throw std::invalid_argument(value);
            out[sha] = v;
        } catch (const std::exception&) {
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": bad score '" + value + "'");
        }
    }
    return out;
}

raw_score external_score_detector::compute(const sample_input& sample) const {
    auto it = scores_.find(ascii_lower(sample.sha256));
    if (it == scores_.end() || !it->second) return raw_score::failure(error_kind::model);
    return raw_score::of(*it->second);
}

raw_score scripted_detector::compute(const sample_input& sample) const {
    auto it = script_.find(sample.id);
    return it == script_.end() ? fallback_ : it->second;
}

raw_score delayed_detector::compute(const sample_input& sample) const {
    std::this_thread::sleep_for(delay_);
    return inner_->score(sample);
}

}  // namespace chainscan
