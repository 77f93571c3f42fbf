#include "chainscan/config.hpp"

#include "chainscan/evaluation.hpp"
#include "chainscan/models.hpp"
#include "chainscan/signature.hpp"

#include <cmath>
#include <set>

namespace chainscan {

namespace {

const std::set<std::string> detector_types{"signature", "byte_window", "feature_model", "report_model",
                                           "external_score"};

[[noreturn]] void fail(const std::string& what) { throw config_error("config: " + what); }

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

std::string portable(const std::filesystem::path& base, const std::filesystem::path& p) {
    std::error_code ec;
    auto rel = std::filesystem::relative(p, base, ec);
    if (ec || rel.empty()) return p.generic_string();
    return rel.generic_string();
}

template <typename T>
T get(const nlohmann::json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        fail(std::string("bad value for \"") + key + "\"");
    }
}

std::optional<std::filesystem::path> path_field(const nlohmann::json& j, const char* key,
                                                const std::filesystem::path& base) {
    if (!j.contains(key)) return std::nullopt;
    if (!j[key].is_string()) fail(std::string("\"") + key + "\" must be a string");
    return resolve(base, j[key].get<std::string>());
}

std::vector<double> parse_space(const nlohmann::json& j) {
    std::vector<double> out;
    if (j.is_array()) {
        for (const auto& v : j) {
            if (!v.is_number()) fail("research_space entries must be numbers");
            out.push_back(v.get<double>());
        }
    } else if (j.is_object()) {
        const double start = get(j, "start", 0.44), stop = get(j, "stop", 0.98), step = get(j, "step", 0.02);
        if (!(step > 0) || stop < start) fail("research_space needs start <= stop and step > 0");
        const auto n = static_cast<long>(std::llround((stop - start) / step)) + 1;
        for (long i = 0; i < n; ++i) out.push_back(std::round((start + static_cast<double>(i) * step) * 1e9) / 1e9);
    } else {
        fail("research_space must be a list or {start, stop, step}");
    }
    for (double v : out) {
        if (!(v >= 0.0 && v <= 1.0)) fail("research_space values must lie in [0,1]");
    }
    return out;
}

}  // namespace

std::map<std::string, std::vector<std::string>> pipeline_config::effective_variants() const {
    if (!variants.empty()) return variants;
    std::map<std::string, std::vector<std::string>> out;
    auto& full = out["full"];
    auto& no_dynamic = out["no_dynamic"];
    auto& no_signature = out["no_signature"];
    for (const auto& d : detectors) {
        if (!d.enabled) continue;
        full.push_back(d.id);
        if (d.type != "report_model") no_dynamic.push_back(d.id);
        if (d.type != "signature") no_signature.push_back(d.id);
    }
    return out;
}

pipeline_config parse_pipeline_config(const nlohmann::json& j, const std::filesystem::path& base_dir) {
    if (!j.is_object()) fail("top level must be an object");
    if (get(j, "schema_version", 0) != config_schema_version) fail("unsupported schema_version (expected 1)");
    pipeline_config c;
    c.base_dir = base_dir;
    if (j.contains("features")) {
        try {
            c.features = j["features"].get<features::feature_config>();
        } catch (const std::exception& e) {
            fail(std::string("features: ") + e.what());
        }
    }
    if (j.contains("normalization")) {
        const auto& n = j["normalization"];
        c.normalization.max_tokens = get<std::size_t>(n, "max_tokens", c.normalization.max_tokens);
        if (n.contains("extra_filters")) {
            for (const auto& f : n["extra_filters"]) {
                c.normalization.extra_filters.push_back(
                    {get<std::string>(f, "pattern", ""), get<std::string>(f, "placeholder", "")});
            }
        }
    }
    if (!j.contains("detectors") || !j["detectors"].is_array()) fail("\"detectors\" must be a list");
    std::set<std::string> ids;
    for (const auto& d : j["detectors"]) {
        detector_config dc;
        dc.id = get<std::string>(d, "id", "");
        dc.type = get<std::string>(d, "type", "");
        if (dc.id.empty()) fail("detector without id");
        if (!ids.insert(dc.id).second) fail("duplicate detector id '" + dc.id + "'");
        if (!detector_types.count(dc.type)) fail("detector '" + dc.id + "' has unknown type '" + dc.type + "'");
        dc.threshold = get(d, "threshold", 0.5);
        if (!(dc.threshold >= 0.0 && dc.threshold <= 1.0)) fail("threshold of '" + dc.id + "' must lie in [0,1]");
        dc.enabled = get(d, "enabled", true);
        dc.model_path = path_field(d, "model_path", base_dir);
        dc.rules_dir = path_field(d, "rules_dir", base_dir);
        dc.manifest_path = path_field(d, "manifest_path", base_dir);
        c.detectors.push_back(std::move(dc));
    }
    try {
        c.policy = error_policy_from_string(get<std::string>(j, "error_policy", "errors_as_benign"));
    } catch (const std::invalid_argument& e) {
        fail(e.what());
    }
    c.timing_enabled = get(j, "timing_enabled", false);
    c.jobs = std::max<std::size_t>(1, get<std::size_t>(j, "jobs", 1));

    c.calibration.research_space = eval::default_research_space();
    if (j.contains("calibration")) {
        const auto& cal = j["calibration"];
        if (cal.contains("research_space")) c.calibration.research_space = parse_space(cal["research_space"]);
        c.calibration.split_fraction = get(cal, "split_fraction", 0.5);
        c.calibration.seed = get<std::uint64_t>(cal, "seed", 0);
        if (!(c.calibration.split_fraction > 0.0 && c.calibration.split_fraction < 1.0)) {
            fail("split_fraction must lie in (0,1)");
        }
    }
    if (j.contains("attack")) {
        const auto& a = j["attack"];
        auto& s = c.attack;
        try {
            s.mode = adv::attack_mode_from_string(get<std::string>(a, "mode", "section_injection"));
        } catch (const std::invalid_argument& e) {
            fail(e.what());
        }
        s.lambda = get(a, "lambda", s.lambda);
        s.query_budget = get(a, "query_budget", s.query_budget);
        s.population_size = get(a, "population_size", s.population_size);
        s.mutation_rate = get(a, "mutation_rate", s.mutation_rate);
        s.mutation_sigma = get(a, "mutation_sigma", s.mutation_sigma);
        s.elitism = get(a, "elitism", s.elitism);
        s.target_threshold = get(a, "target_threshold", s.target_threshold);
        s.seed = get(a, "seed", s.seed);
        s.pool_size = get(a, "pool_size", s.pool_size);
        s.pool_dir = path_field(a, "pool_dir", base_dir);
        s.target = get(a, "target", s.target);
    }
    if (j.contains("variants")) {
        if (!j["variants"].is_object()) fail("\"variants\" must be an object");
        for (const auto& [name, list] : j["variants"].items()) {
            std::vector<std::string> members;
            for (const auto& id : list) {
                if (!id.is_string() || !ids.count(id.get<std::string>())) {
                    fail("variant '" + name + "' names an unknown detector");
                }
                members.push_back(id.get<std::string>());
            }
            c.variants[name] = std::move(members);
        }
    }
    return c;
}

pipeline_config load_pipeline_config(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const std::exception& e) {
        fail(path.string() + ": " + e.what());
    }
    return parse_pipeline_config(j, path.parent_path());
}

nlohmann::json to_json(const pipeline_config& c, const std::filesystem::path& base_dir) {
    nlohmann::json dets = nlohmann::json::array();
    for (const auto& d : c.detectors) {
        nlohmann::json j{{"id", d.id}, {"type", d.type}, {"threshold", d.threshold}, {"enabled", d.enabled}};
        if (d.model_path) j["model_path"] = portable(base_dir, *d.model_path);
        if (d.rules_dir) j["rules_dir"] = portable(base_dir, *d.rules_dir);
        if (d.manifest_path) j["manifest_path"] = portable(base_dir, *d.manifest_path);
        dets.push_back(std::move(j));
    }
    nlohmann::json filters = nlohmann::json::array();
    for (const auto& f : c.normalization.extra_filters) {
        filters.push_back({{"pattern", f.pattern}, {"placeholder", f.placeholder}});
    }
    const auto& a = c.attack;
    nlohmann::json attack{{"mode", adv::to_string(a.mode)},
                          {"lambda", a.lambda},
                          {"query_budget", a.query_budget},
                          {"population_size", a.population_size},
                          {"mutation_rate", a.mutation_rate},
                          {"mutation_sigma", a.mutation_sigma},
                          {"elitism", a.elitism},
                          {"target_threshold", a.target_threshold},
                          {"seed", a.seed},
                          {"pool_size", a.pool_size},
                          {"target", a.target}};
    if (a.pool_dir) attack["pool_dir"] = portable(base_dir, *a.pool_dir);
    nlohmann::json j{{"schema_version", config_schema_version},
                     {"features", c.features},
                     {"normalization", {{"max_tokens", c.normalization.max_tokens}, {"extra_filters", filters}}},
                     {"detectors", dets},
                     {"error_policy", to_string(c.policy)},
                     {"timing_enabled", c.timing_enabled},
                     {"jobs", c.jobs},
                     {"calibration",
                      {{"research_space", c.calibration.research_space},
                       {"split_fraction", c.calibration.split_fraction},
                       {"seed", c.calibration.seed}}},
                     {"attack", attack}};
    if (!c.variants.empty()) j["variants"] = c.variants;
    return j;
}

std::vector<stage> build_stages(const pipeline_config& c) {
    std::vector<stage> out;
    for (const auto& d : c.detectors) {
        if (!d.enabled) continue;
        auto need = [&](const std::optional<std::filesystem::path>& p, const char* key) -> const std::filesystem::path& {
            if (!p) fail("detector '" + d.id + "' needs \"" + key + "\"");
            return *p;
        };
        detector_ptr det;
        try {
            if (d.type == "signature") {
                det = std::make_shared<signature_detector>(d.id, sig::load_rules_directory(need(d.rules_dir, "rules_dir")));
            } else if (d.type == "byte_window") {
                det = std::make_shared<byte_window_detector>(d.id, models::load_byte_model(need(d.model_path, "model_path")));
            } else if (d.type == "feature_model") {
                det = std::make_shared<feature_model_detector>(
                    d.id, models::load_feature_model(need(d.model_path, "model_path"), c.features), c.features);
            } else if (d.type == "report_model") {
                det = std::make_shared<report_model_detector>(
                    d.id, models::load_report_model(need(d.model_path, "model_path")), c.normalization);
            } else {
                det = std::make_shared<external_score_detector>(
                    d.id, external_score_detector::load_manifest(need(d.manifest_path, "manifest_path")));
            }
        } catch (const config_error&) {
            throw;
        } catch (const std::exception& e) {
            fail("detector '" + d.id + "': " + e.what());
        }
        out.push_back(stage{det, d.threshold, true});
    }
    return out;
}

pipeline build_pipeline(const pipeline_config& c, const std::vector<std::string>& only) {
    auto stages = build_stages(c);
    if (only.empty()) return pipeline(std::move(stages), c.timing_enabled);
    std::vector<stage> picked;
    for (auto& s : stages) {
        if (std::find(only.begin(), only.end(), s.det->id()) != only.end()) picked.push_back(s);
    }
    return pipeline(std::move(picked), c.timing_enabled);
}

loaded_chain load_chain(const pipeline_config& c) {
    auto stages = build_stages(c);
    loaded_chain out{stages, pipeline(stages, c.timing_enabled), {}};
    for (const auto& [name, ids] : c.effective_variants()) {
        std::vector<stage> picked;
        for (const auto& s : stages) {
            if (std::find(ids.begin(), ids.end(), s.det->id()) != ids.end()) picked.push_back(s);
        }
        if (picked.empty()) continue;
        out.variants.emplace(name, pipeline(std::move(picked), c.timing_enabled));
    }
    return out;
}

}  // namespace chainscan
