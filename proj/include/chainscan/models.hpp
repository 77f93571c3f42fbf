// chainscan - sequential malware detection pipeline
// Serialized scoring models: linear-logistic and tree-ensemble models over
// feature vectors, the byte-histogram model of the byte-window stage, and the
// hashed bag-of-tokens model of the report stage.
//
// Every model file is a JSON object with "schema_version": 1 and a "kind".
// Feature models also declare "feature_dimension" and "feature_fingerprint",
// which must agree with the active feature_config at load time.

#ifndef CHAINSCAN_MODELS_HPP
#define CHAINSCAN_MODELS_HPP

#include "chainscan/features.hpp"
#include "chainscan/hashing.hpp"

#include <json.hpp>

#include <array>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace chainscan::models {

inline constexpr int model_schema_version = 1;

enum class model_error_kind { schema, dimension_mismatch, fingerprint_mismatch, io };

const char* to_string(model_error_kind kind);

class model_error : public std::runtime_error {
public:
    model_error(model_error_kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    model_error_kind kind() const noexcept { return kind_; }

private:
    model_error_kind kind_;
};

/// 1 / (1 + e^-z), evaluated without overflow for large |z|.
double logistic(double z) noexcept;

struct linear_model {
    std::vector<double> weights;
    double bias = 0.0;

    double score(std::span<const double> x) const;
};

struct tree_node {
    /// -1 marks a leaf.
    int feature_index = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double leaf_value = 0.0;

    bool is_leaf() const noexcept { return feature_index < 0; }
};

/// Node 0 is the root. Inner nodes go left when x[feature_index] <= threshold.
struct decision_tree {
    std::vector<tree_node> nodes;

    double evaluate(std::span<const double> x) const;
};

struct tree_ensemble {
    std::vector<decision_tree> trees;
    double bias = 0.0;

    /// logistic(bias + sum of leaf values)
    double score(std::span<const double> x) const;
};

struct feature_model {
    std::variant<linear_model, tree_ensemble> model;
    std::size_t feature_dimension = 0;
    std::string feature_fingerprint;

    double score(std::span<const double> x) const;
};

inline constexpr std::size_t byte_window_size = 1u << 20;
inline constexpr std::size_t byte_symbols = 257;  // 256 byte values + padding symbol
inline constexpr std::size_t padding_symbol = 256;

struct byte_histogram_model {
    std::array<double, byte_symbols> weights{};
    double bias = 0.0;

    /// `normalized_counts` are symbol counts over the window divided by its size.
    double score(std::span<const double> normalized_counts) const;
};

struct report_model {
    std::size_t buckets = 1024;
    std::uint64_t hash_seed = fnv1a64_offset_basis;
    std::vector<double> weights;
    double bias = 0.0;

    std::size_t bucket_of(std::string_view token) const { return hash_bucket(token, buckets, hash_seed); }
};

nlohmann::json load_json_file(const std::filesystem::path& path);

/// kind "linear" or "tree_ensemble". Throws model_error on schema problems
/// or when dimension/fingerprint disagree with `config`.
feature_model parse_feature_model(const nlohmann::json& j, const features::feature_config& config);
feature_model load_feature_model(const std::filesystem::path& path, const features::feature_config& config);
nlohmann::json to_json(const feature_model& m);

/// kind "byte_histogram_linear", 257 weights.
byte_histogram_model parse_byte_model(const nlohmann::json& j);
byte_histogram_model load_byte_model(const std::filesystem::path& path);
nlohmann::json to_json(const byte_histogram_model& m);

/// kind "report_linear": "buckets", "hash_seed", optional dense "weights",
/// optional "token_weights" {token: weight} folded into the token's bucket.
report_model parse_report_model(const nlohmann::json& j);
report_model load_report_model(const std::filesystem::path& path);
nlohmann::json to_json(const report_model& m);

}  // namespace chainscan::models

#endif  // CHAINSCAN_MODELS_HPP
