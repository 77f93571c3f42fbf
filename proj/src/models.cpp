#include "chainscan/models.hpp"

#include "chainscan/bytes.hpp"

#include <cmath>

namespace chainscan::models {

namespace {

[[noreturn]] void schema_fail(const std::string& what) { throw model_error(model_error_kind::schema, what); }

// nlohmann stores literal ints as signed, so accept any non-negative integer
bool is_count(const nlohmann::json& v) {
    return v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0);
}

void check_header(const nlohmann::json& j, std::string_view kind) {
    if (!j.is_object()) schema_fail("model file must hold a JSON object");
    if (j.value("schema_version", 0) != model_schema_version) {
        schema_fail("unsupported model schema_version (expected 1)");
    }
    if (kind.empty()) return;
    if (!j.contains("kind") || !j["kind"].is_string() || j["kind"].get<std::string>() != kind) {
        schema_fail("model kind must be \"" + std::string(kind) + "\"");
    }
}

double number(const nlohmann::json& j, const char* key, double fallback) {
    if (!j.contains(key)) return fallback;
    if (!j[key].is_number()) schema_fail(std::string("\"") + key + "\" must be a number");
    double v = j[key].get<double>();
    if (!std::isfinite(v)) schema_fail(std::string("\"") + key + "\" must be finite");
    return v;
}

std::vector<double> number_array(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || !j[key].is_array()) schema_fail(std::string("\"") + key + "\" must be an array");
    std::vector<double> out;
    out.reserve(j[key].size());
    for (const auto& v : j[key]) {
        if (!v.is_number()) schema_fail(std::string("\"") + key + "\" must contain numbers");
        out.push_back(v.get<double>());
        if (!std::isfinite(out.back())) schema_fail(std::string("\"") + key + "\" must contain finite numbers");
    }
    return out;
}

decision_tree parse_tree(const nlohmann::json& j, std::size_t dimension) {
    if (!j.contains("nodes") || !j["nodes"].is_array() || j["nodes"].empty()) {
        schema_fail("every tree needs a non-empty \"nodes\" array");
    }
    decision_tree t;
    const auto n = static_cast<int>(j["nodes"].size());
    for (int i = 0; i < n; ++i) {
        const auto& node = j["nodes"][static_cast<std::size_t>(i)];
        tree_node out;
        if (node.contains("leaf_value")) {
            out.leaf_value = number(node, "leaf_value", 0.0);
        } else {
            if (!node.contains("feature_index") || !node["feature_index"].is_number_integer()) {
                schema_fail("inner tree node needs an integer \"feature_index\"");
            }
            auto fi = node["feature_index"].get<long long>();
            if (fi < 0 || static_cast<std::size_t>(fi) >= dimension) {
                schema_fail("tree feature_index out of range");
            }
            out.feature_index = static_cast<int>(fi);
            out.threshold = number(node, "threshold", 0.0);
            out.left = node.value("left", -1);
            out.right = node.value("right", -1);
            // children after their parent keeps every tree acyclic
            if (out.left <= i || out.left >= n || out.right <= i || out.right >= n) {
                schema_fail("tree child indices must point forward within the node list");
            }
        }
        t.nodes.push_back(out);
    }
    return t;
}

}  // namespace

const char* to_string(model_error_kind kind) {
    switch (kind) {
        case model_error_kind::schema: return "schema";
        case model_error_kind::dimension_mismatch: return "dimension_mismatch";
        case model_error_kind::fingerprint_mismatch: return "fingerprint_mismatch";
        case model_error_kind::io: return "io";
    }
    return "unknown";
}

double logistic(double z) noexcept {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    double e = std::exp(z);
    return e / (1.0 + e);
}

double linear_model::score(std::span<const double> x) const {
    if (x.size() != weights.size()) throw model_error(model_error_kind::dimension_mismatch, "input dimension mismatch");
    double z = bias;
    for (std::size_t i = 0; i < x.size(); ++i) z += weights[i] * x[i];
    return logistic(z);
}

double decision_tree::evaluate(std::span<const double> x) const {
    std::size_t i = 0;
    while (!nodes[i].is_leaf()) {
        const auto& n = nodes[i];
        i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature_index)] <= n.threshold ? n.left : n.right);
    }
    return nodes[i].leaf_value;
}

double tree_ensemble::score(std::span<const double> x) const {
    double z = bias;
    for (const auto& t : trees) z += t.evaluate(x);
    return logistic(z);
}

double feature_model::score(std::span<const double> x) const {
    if (x.size() != feature_dimension) {
        throw model_error(model_error_kind::dimension_mismatch, "feature vector dimension does not match model");
    }
    return std::visit([&](const auto& m) { return m.score(x); }, model);
}

double byte_histogram_model::score(std::span<const double> normalized_counts) const {
    if (normalized_counts.size() != byte_symbols) {
        throw model_error(model_error_kind::dimension_mismatch, "byte histogram must have 257 symbols");
    }
    double z = bias;
    for (std::size_t i = 0; i < byte_symbols; ++i) z += weights[i] * normalized_counts[i];
    return logistic(z);
}

nlohmann::json load_json_file(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_text_file(path);
    } catch (const std::exception& e) {
        throw model_error(model_error_kind::io, e.what());
    }
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw model_error(model_error_kind::schema, path.string() + ": " + e.what());
    }
}

feature_model parse_feature_model(const nlohmann::json& j, const features::feature_config& config) {
    check_header(j, "");
    feature_model out;
    if (!j.contains("feature_dimension") || !is_count(j["feature_dimension"])) {
        schema_fail("feature model needs \"feature_dimension\"");
    }
    out.feature_dimension = j["feature_dimension"].get<std::size_t>();
    if (out.feature_dimension != config.dimension()) {
        throw model_error(model_error_kind::dimension_mismatch,
                          "model declares dimension " + std::to_string(out.feature_dimension) + ", config gives " +
                              std::to_string(config.dimension()));
    }
    if (!j.contains("feature_fingerprint") || !j["feature_fingerprint"].is_string()) {
        schema_fail("feature model needs \"feature_fingerprint\"");
    }
    out.feature_fingerprint = j["feature_fingerprint"].get<std::string>();
    if (out.feature_fingerprint != config.fingerprint()) {
        throw model_error(model_error_kind::fingerprint_mismatch,
                          "model fingerprint " + out.feature_fingerprint + " does not match config " +
                              config.fingerprint());
    }

    const std::string kind = j.value("kind", "");
    if (kind == "linear") {
        linear_model m;
        m.weights = number_array(j, "weights");
        m.bias = number(j, "bias", 0.0);
        if (m.weights.size() != out.feature_dimension) {
            throw model_error(model_error_kind::dimension_mismatch, "weights length differs from feature_dimension");
        }
        out.model = std::move(m);
    } else if (kind == "tree_ensemble") {
        tree_ensemble m;
        m.bias = number(j, "bias", 0.0);
        if (!j.contains("trees") || !j["trees"].is_array()) schema_fail("tree ensemble needs a \"trees\" array");
        for (const auto& t : j["trees"]) m.trees.push_back(parse_tree(t, out.feature_dimension));
        out.model = std::move(m);
    } else {
        schema_fail("feature model kind must be \"linear\" or \"tree_ensemble\"");
    }
    return out;
}

feature_model load_feature_model(const std::filesystem::path& path, const features::feature_config& config) {
    return parse_feature_model(load_json_file(path), config);
}

nlohmann::json to_json(const feature_model& m) {
    nlohmann::json j{{"schema_version", model_schema_version},
                     {"feature_dimension", m.feature_dimension},
                     {"feature_fingerprint", m.feature_fingerprint}};
    if (const auto* lin = std::get_if<linear_model>(&m.model)) {
        j["kind"] = "linear";
        j["weights"] = lin->weights;
        j["bias"] = lin->bias;
    } else {
        const auto& ens = std::get<tree_ensemble>(m.model);
        j["kind"] = "tree_ensemble";
        j["bias"] = ens.bias;
        j["trees"] = nlohmann::json::array();
        for (const auto& t : ens.trees) {
            nlohmann::json nodes = nlohmann::json::array();
            for (const auto& n : t.nodes) {
                if (n.is_leaf()) {
                    nodes.push_back({{"leaf_value", n.leaf_value}});
                } else {
                    nodes.push_back({{"feature_index", n.feature_index},
                                     {"threshold", n.threshold},
                                     {"left", n.left},
                                     {"right", n.right}});
                }
            }
            j["trees"].push_back({{"nodes", nodes}});
        }
    }
    return j;
}

byte_histogram_model parse_byte_model(const nlohmann::json& j) {
    check_header(j, "byte_histogram_linear");
    byte_histogram_model m;
    auto w = number_array(j, "weights");
    if (w.size() != byte_symbols) {
        throw model_error(model_error_kind::dimension_mismatch, "byte model needs exactly 257 weights");
    }
    std::copy(w.begin(), w.end(), m.weights.begin());
    m.bias = number(j, "bias", 0.0);
    return m;
}

byte_histogram_model load_byte_model(const std::filesystem::path& path) { return parse_byte_model(load_json_file(path)); }

nlohmann::json to_json(const byte_histogram_model& m) {
    return nlohmann::json{{"schema_version", model_schema_version},
                          {"kind", "byte_histogram_linear"},
                          {"weights", m.weights},
                          {"bias", m.bias}};
}

report_model parse_report_model(const nlohmann::json& j) {
    check_header(j, "report_linear");
    report_model m;
    if (!j.contains("buckets") || !is_count(j["buckets"]) || j["buckets"].get<std::size_t>() == 0) {
        schema_fail("report model needs a positive \"buckets\"");
    }
    m.buckets = j["buckets"].get<std::size_t>();
    if (j.contains("hash_seed")) {
        if (!is_count(j["hash_seed"])) schema_fail("\"hash_seed\" must be an unsigned integer");
        m.hash_seed = j["hash_seed"].get<std::uint64_t>();
    }
    if (j.contains("weights")) {
        m.weights = number_array(j, "weights");
        if (m.weights.size() != m.buckets) {
            throw model_error(model_error_kind::dimension_mismatch, "report weights length differs from buckets");
        }
    } else {
        m.weights.assign(m.buckets, 0.0);
    }
    if (j.contains("token_weights")) {
        if (!j["token_weights"].is_object()) schema_fail("\"token_weights\" must be an object");
        for (const auto& [token, w] : j["token_weights"].items()) {
            if (!w.is_number()) schema_fail("token weight must be a number");
            m.weights[m.bucket_of(token)] += w.get<double>();
        }
    }
    m.bias = number(j, "bias", 0.0);
    return m;
}

report_model load_report_model(const std::filesystem::path& path) { return parse_report_model(load_json_file(path)); }

nlohmann::json to_json(const report_model& m) {
    return nlohmann::json{{"schema_version", model_schema_version},
                          {"kind", "report_linear"},
                          {"buckets", m.buckets},
                          {"hash_seed", m.hash_seed},
                          {"weights", m.weights},
                          {"bias", m.bias}};
}

}  // namespace chainscan::models
