// chainscan - sequential malware detection pipeline
// Deterministic synthetic corpus: PE samples, behavior reports, rules,
// reference models, a pipeline config and a labeled manifest.

#ifndef CHAINSCAN_FIXTURES_HPP
#define CHAINSCAN_FIXTURES_HPP

#include "chainscan/bytes.hpp"
#include "chainscan/pe_format.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

namespace chainscan::fixtures {

/// Byte that the reference models and the marker target treat as suspicious.
inline constexpr std::uint8_t demo_marker = 0xCC;
inline constexpr const char* demo_signature_text = "DROPPER_STAGE_2";

enum class sample_kind { benign, malware, malware_with_signature };

/// A PE whose .text carries marker bytes at `marker_density`.
byte_vector make_sample(std::mt19937_64& rng, sample_kind kind, double marker_density);

/// A benign PE with `data_sections` non-executable sections free of marker bytes.
byte_vector make_pool_file(std::mt19937_64& rng, std::size_t data_sections);

/// Behavior report JSON for a sample of the given kind.
nlohmann::json make_report(std::mt19937_64& rng, sample_kind kind);

struct demo_options {
    std::size_t benign = 40;
    std::size_t malware = 40;
    std::size_t corrupt = 4;
    std::size_t pool_files = 8;
    std::uint64_t seed = 7;
};

struct demo_layout {
    std::filesystem::path root;
    std::filesystem::path config;
    std::filesystem::path manifest;
    std::filesystem::path rules_dir;
    std::filesystem::path models_dir;
    std::filesystem::path samples_dir;
    std::filesystem::path pool_dir;
};

/// Writes the whole corpus below `dir` (created if needed).
demo_layout write_demo_corpus(const std::filesystem::path& dir, const demo_options& options = {});

}  // namespace chainscan::fixtures

#endif  // CHAINSCAN_FIXTURES_HPP
