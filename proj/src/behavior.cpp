#include "chainscan/behavior.hpp"

#include "chainscan/bytes.hpp"

#include <cctype>

namespace chainscan::behavior {

namespace {

bool is_hex(char c) { return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'); }
bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_word(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

std::string scalar_text(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_null()) return {};
    return v.dump();
}

std::string replace_hashes(const std::string& s) {
    std::string out;
    std::size_t i = 0;
    while (i < s.size()) {
        if (!is_word(s[i])) {
            out += s[i++];
            continue;
        }
        std::size_t j = i;
        while (j < s.size() && is_word(s[j])) ++j;
        const std::size_t len = j - i;
        bool hex = std::all_of(s.begin() + static_cast<long>(i), s.begin() + static_cast<long>(j), is_hex);
        if (hex && (len == 32 || len == 40 || len == 64)) {
            out += "<hash>";
        } else {
            out.append(s, i, len);
        }
        i = j;
    }
    return out;
}

std::string replace_addresses(const std::string& s) {
    std::string out;
    std::size_t i = 0;
    while (i < s.size()) {
        if (s[i] == '0' && i + 1 < s.size() && s[i + 1] == 'x') {
            std::size_t j = i + 2;
            while (j < s.size() && is_hex(s[j])) ++j;
            if (j - i - 2 >= 6) {
                out += "<addr>";
                i = j;
                continue;
            }
        }
        out += s[i++];
    }
    return out;
}

std::string replace_numbers(const std::string& s) {
    std::string out;
    std::size_t i = 0;
    while (i < s.size()) {
        if (!is_digit(s[i])) {
            out += s[i++];
            continue;
        }
        std::size_t j = i;
        while (j < s.size() && is_digit(s[j])) ++j;
        if (j - i >= 6) {
            out += "<num>";
        } else {
            out.append(s, i, j - i);
        }
        i = j;
    }
    return out;
}

std::vector<std::string> event_list(const nlohmann::json& j, const char* key) {
    std::vector<std::string> out;
    if (!j.contains(key)) return out;
    const auto& arr = j[key];
    if (!arr.is_array()) throw malformed_report(std::string("\"") + key + "\" must be an array");
    for (const auto& ev : arr) {
        if (ev.is_string()) {
            out.push_back(ev.get<std::string>());
        } else if (ev.is_object()) {
            for (const auto& [k, v] : ev.items()) {
                if (v.is_string()) out.push_back(v.get<std::string>());
            }
        } else {
            throw malformed_report(std::string("\"") + key + "\" entries must be strings or objects");
        }
    }
    return out;
}

}  // namespace

std::size_t behavior_report::api_count() const noexcept {
    std::size_t n = 0;
    for (const auto& ep : entry_points) n += ep.apis.size();
    return n;
}

behavior_report load_report(std::string_view json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw malformed_report(std::string("invalid report JSON: ") + e.what());
    }
    if (!j.is_object()) throw malformed_report("report must be a JSON object");

    behavior_report r;
    if (j.contains("schema_version")) {
        if (!j["schema_version"].is_number_integer()) throw malformed_report("\"schema_version\" must be an integer");
        r.schema_version = j["schema_version"].get<int>();
        if (r.schema_version != 1) throw malformed_report("unsupported report schema_version");
    }
    const std::string status = j.contains("emulation_status") ? scalar_text(j["emulation_status"]) : "ok";
    if (status == "failed") {
        r.status = emulation_status::failed;
        if (!j.contains("reason") || !j["reason"].is_string() || j["reason"].get<std::string>().empty()) {
            throw malformed_report("failed emulation must carry a reason");
        }
        r.reason = j["reason"].get<std::string>();
    } else if (status != "ok") {
        throw malformed_report("\"emulation_status\" must be \"ok\" or \"failed\"");
    }

    if (j.contains("entry_points")) {
        if (!j["entry_points"].is_array()) throw malformed_report("\"entry_points\" must be an array");
        for (const auto& ep : j["entry_points"]) {
            if (!ep.is_object()) throw malformed_report("entry point must be an object");
            entry_point out;
            if (ep.contains("apis")) {
                if (!ep["apis"].is_array()) throw malformed_report("\"apis\" must be an array");
                for (const auto& api : ep["apis"]) {
                    if (!api.is_object() || !api.contains("api_name") || !api["api_name"].is_string() ||
                        api["api_name"].get<std::string>().empty()) {
                        throw malformed_report("api call needs a non-empty \"api_name\"");
                    }
                    api_call call;
                    call.name = api["api_name"].get<std::string>();
                    if (api.contains("args")) {
                        if (!api["args"].is_array()) throw malformed_report("\"args\" must be an array");
                        for (const auto& a : api["args"]) call.args.push_back(scalar_text(a));
                    }
                    if (api.contains("ret_val")) call.ret = scalar_text(api["ret_val"]);
                    out.apis.push_back(std::move(call));
                }
            }
            r.entry_points.push_back(std::move(out));
        }
    }
    r.file_events = event_list(j, "file_events");
    r.registry_events = event_list(j, "registry_events");
    r.network_events = event_list(j, "network_events");
    return r;
}

behavior_report load_report_file(const std::filesystem::path& path) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(path, ec)) throw report_unavailable("report not found: " + path.string());
    std::string text;
    try {
        text = read_text_file(path);
    } catch (const std::exception& e) {
        throw report_unavailable(e.what());
    }
    return load_report(text);
}

nlohmann::json to_json(const behavior_report& report) {
    nlohmann::json j{{"schema_version", report.schema_version},
                     {"emulation_status", report.status == emulation_status::ok ? "ok" : "failed"}};
    if (report.status == emulation_status::failed) j["reason"] = report.reason;
    j["entry_points"] = nlohmann::json::array();
    for (const auto& ep : report.entry_points) {
        nlohmann::json apis = nlohmann::json::array();
        for (const auto& a : ep.apis) apis.push_back({{"api_name", a.name}, {"args", a.args}, {"ret_val", a.ret}});
        j["entry_points"].push_back({{"apis", apis}});
    }
    j["file_events"] = report.file_events;
    j["registry_events"] = report.registry_events;
    j["network_events"] = report.network_events;
    return j;
}

std::string normalize_token(std::string_view token, const std::vector<std::regex>& extra,
                            const std::vector<std::string>& placeholders) {
    std::string cur = ascii_lower(token);
    // a replacement can split a word and expose a new match, so iterate
    for (;;) {
        std::string next = replace_numbers(replace_addresses(replace_hashes(cur)));
        for (std::size_t i = 0; i < extra.size(); ++i) next = std::regex_replace(next, extra[i], placeholders[i]);
        if (next == cur) return cur;
        cur = std::move(next);
    }
}

bool matches_filters(std::string_view token) {
    const std::string s(token);
    return replace_numbers(replace_addresses(replace_hashes(s))) != s;
}

token_sequence normalize_report(const behavior_report& report, const normalize_config& config) {
    if (report.status == emulation_status::failed) {
        throw report_unavailable("emulation failed: " + report.reason);
    }
    std::vector<std::regex> extra;
    std::vector<std::string> placeholders;
    for (const auto& f : config.extra_filters) {
        extra.emplace_back(f.pattern, std::regex::ECMAScript);
        placeholders.push_back(f.placeholder);
    }

    token_sequence out;
    auto push = [&](const std::string& raw) {
        if (raw.empty()) return;
        ++out.original_count;
        if (out.tokens.size() < config.max_tokens) {
            out.tokens.push_back(normalize_token(raw, extra, placeholders));
        } else {
            out.truncated = true;
        }
    };
    for (const auto& ep : report.entry_points) {
        for (const auto& api : ep.apis) {
            push(api.name);
            for (const auto& a : api.args) push(a);
            push(api.ret);
        }
    }
    for (const auto* events : {&report.file_events, &report.registry_events, &report.network_events}) {
        for (const auto& e : *events) push(e);
    }
    return out;
}

double report_score(const token_sequence& tokens, const models::report_model& model) {
    if (model.weights.size() != model.buckets || model.buckets == 0) {
        throw models::model_error(models::model_error_kind::dimension_mismatch,
                                  "report model weights do not match its bucket count");
    }
    double z = model.bias;
    for (const auto& t : tokens.tokens) z += model.weights[model.bucket_of(t)];
    return models::logistic(z);
}

}  // namespace chainscan::behavior
