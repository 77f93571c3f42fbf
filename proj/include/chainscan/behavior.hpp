// chainscan - sequential malware detection pipeline
// Emulation-style behavioral reports: loading, normalization into token
// sequences, and hashed bag-of-tokens scoring.
//
// Report schema (version 1, unknown fields ignored):
//   {
//     "schema_version": 1,
//     "emulation_status": "ok" | "failed",      default "ok"
//     "reason": "...",                           required when failed
//     "entry_points": [ { "apis": [ { "api_name": "CreateFileW",
//                                     "args": ["..." | number, ...],
//                                     "ret_val": "..." | number } ] } ],
//     "file_events": [ "..." | {..string fields..} ],
//     "registry_events": [ ... ],
//     "network_events": [ ... ]
//   }

#ifndef CHAINSCAN_BEHAVIOR_HPP
#define CHAINSCAN_BEHAVIOR_HPP

#include "chainscan/models.hpp"

#include <filesystem>
#include <regex>
#include <stdexcept>
#include <string>
#include <vector>

namespace chainscan::behavior {

struct api_call {
    std::string name;
    std::vector<std::string> args;
    std::string ret;
};

struct entry_point {
    std::vector<api_call> apis;
};

enum class emulation_status { ok, failed };

struct behavior_report {
    int schema_version = 1;
    emulation_status status = emulation_status::ok;
    std::string reason;
    std::vector<entry_point> entry_points;
    std::vector<std::string> file_events;
    std::vector<std::string> registry_events;
    std::vector<std::string> network_events;

    std::size_t api_count() const noexcept;
};

class malformed_report : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Missing report file or failed emulation.
class report_unavailable : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

behavior_report load_report(std::string_view json_text);

/// Throws report_unavailable when the file does not exist or cannot be read.
behavior_report load_report_file(const std::filesystem::path& path);

nlohmann::json to_json(const behavior_report& report);

struct extra_filter {
    std::string pattern;  // ECMAScript regex, applied to the lowercased token
    std::string placeholder;
};

struct normalize_config {
    std::size_t max_tokens = 4096;
    std::vector<extra_filter> extra_filters;
};

struct token_sequence {
    std::vector<std::string> tokens;
    bool truncated = false;
    std::size_t original_count = 0;
};

/// Lowercases and applies the redundancy filters until nothing changes:
///   maximal alphanumeric words that are bare hex of length 32, 40 or 64 -> "<hash>"
///   "0x" followed by at least 6 hex digits                             -> "<addr>"
///   runs of at least 6 decimal digits                                  -> "<num>"
std::string normalize_token(std::string_view token, const std::vector<std::regex>& extra = {},
                            const std::vector<std::string>& placeholders = {});

/// True when `token` still contains something the built-in filters would rewrite.
bool matches_filters(std::string_view token);

/// Tokens in report order: per api its name, args and return value, then
/// file, registry and network events. Empty strings are skipped.
/// Throws report_unavailable when emulation failed.
token_sequence normalize_report(const behavior_report& report, const normalize_config& config = {});

/// logistic(w . counts + b) over hashed token counts.
/// Throws models::model_error(dimension_mismatch) when weights and buckets disagree.
double report_score(const token_sequence& tokens, const models::report_model& model);

}  // namespace chainscan::behavior

#endif  // CHAINSCAN_BEHAVIOR_HPP
