// chainscan - sequential malware detection pipeline
// Eight-group static feature vector for PE files: three format-agnostic
// groups (byte histogram, byte-entropy histogram, printable strings) and
// five parsed groups (general, header, sections, imports, exports).

#ifndef CHAINSCAN_FEATURES_HPP
#define CHAINSCAN_FEATURES_HPP

#include "chainscan/bytes.hpp"
#include "chainscan/hashing.hpp"
#include "chainscan/pe_format.hpp"

#include <json.hpp>

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace chainscan::features {

inline constexpr std::size_t histogram_dim = 256;
inline constexpr std::size_t entropy_histogram_dim = 256;
inline constexpr std::size_t string_dim = 104;
inline constexpr std::size_t general_dim = 10;
inline constexpr std::size_t header_dim = 64;
inline constexpr std::size_t section_totals_dim = 5;
inline constexpr std::size_t section_properties = 4;

struct feature_config {
    std::size_t entropy_window = 2048;
    std::size_t entropy_step = 1024;
    std::size_t min_string_length = 5;
    std::size_t import_library_buckets = 256;
    std::size_t import_function_buckets = 1024;
    std::size_t export_buckets = 128;
    std::size_t section_buckets = 50;
    std::uint64_t hash_seed = fnv1a64_offset_basis;
    /// Compute the format-agnostic groups (parsed groups zeroed) when the
    /// PE cannot be parsed instead of failing the whole extraction.
    bool lenient = false;

    std::size_t sections_dim() const noexcept { return section_totals_dim + section_properties * section_buckets; }
    std::size_t imports_dim() const noexcept { return import_library_buckets + import_function_buckets; }
    std::size_t dimension() const noexcept;
    /// Stable identifier of everything that changes vector layout or hashing.
    std::string fingerprint() const;

    /// Throws std::invalid_argument for zero window/step/bucket counts.
    void validate() const;
};

void to_json(nlohmann::json& j, const feature_config& c);
void from_json(const nlohmann::json& j, feature_config& c);

struct feature_span {
    std::string name;
    std::size_t offset = 0;
    std::size_t length = 0;
};

struct feature_vector {
    std::vector<double> values;
    std::vector<feature_span> groups;

    std::size_t dimension() const noexcept { return values.size(); }
    /// Throws std::out_of_range for an unknown group.
    std::span<const double> group(std::string_view name) const;
};

class feature_extraction_error : public std::runtime_error {
public:
    feature_extraction_error(pe::pe_error_kind cause, const std::string& what)
        : std::runtime_error(what), cause_(cause) {}
    pe::pe_error_kind cause() const noexcept { return cause_; }

private:
    pe::pe_error_kind cause_;
};

/// count(i) / len; all zeros for empty input.
std::vector<double> byte_histogram(byte_view data);

/// Joint (entropy bin, byte-value bin) histogram over sliding windows.
/// Windows start at 0, step, 2*step, ... below the data size and stop after
/// the first window that reaches the end of the data, so a short tail is
/// covered by a final partial window. Entropy (bits, over the 256-value distribution) is
/// quantized into 16 half-bit bins, byte values into 16 bins of width 16.
/// Index = entropy_bin * 16 + value_bin. Normalized to total mass 1.
std::vector<double> byte_entropy_histogram(byte_view data, std::size_t window = 2048, std::size_t step = 1024);

/// Quantization used by byte_entropy_histogram; exposed for tests.
std::size_t entropy_bin(double entropy_bits);

double shannon_entropy(byte_view data);

/// [count, mean length, 96-bin printable distribution, distribution entropy,
///  "c:\" (case-insensitive), "http://", "https://", "HKEY_", "MZ"].
/// Strings are maximal runs of 0x20..0x7E of at least `min_length` bytes;
/// the five pattern counts are taken over the raw data.
std::vector<double> string_features(byte_view data, std::size_t min_length = 5);

struct parsed_groups {
    std::vector<double> general;
    std::vector<double> header;
    std::vector<double> sections;
    std::vector<double> imports;
    std::vector<double> exports;
};

parsed_groups parsed_features(const pe::pe_file& pe, const feature_config& config = {});

/// Throws feature_extraction_error in strict mode when the PE does not parse.
feature_vector extract_features(byte_view data, const feature_config& config = {});

/// JSON object of named spans, for golden files and the features-dump command.
nlohmann::json to_json(const feature_vector& v, const feature_config& config);

}  // namespace chainscan::features

#endif  // CHAINSCAN_FEATURES_HPP
