// chainscan - sequential malware detection pipeline
// Black-box genetic evasion through functionality-preserving manipulation:
// benign section injection or overlay padding, with a size regularizer and
// a hard query budget.

#ifndef CHAINSCAN_ADVERSARIAL_HPP
#define CHAINSCAN_ADVERSARIAL_HPP

#include "chainscan/bytes.hpp"
#include "chainscan/evaluation.hpp"
#include "chainscan/pe_format.hpp"
#include "chainscan/pipeline.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace chainscan::adv {

enum class attack_mode { section_injection, padding };

const char* to_string(attack_mode m);
/// Throws std::invalid_argument for unknown names.
attack_mode attack_mode_from_string(std::string_view s);

struct pool_section {
    std::string name;  // provenance only; injected sections are renamed
    byte_vector payload;
};

struct attack_config {
    attack_mode mode = attack_mode::section_injection;
    double lambda = 1e-6;
    std::size_t query_budget = 100;
    std::size_t population_size = 10;
    double mutation_rate = 0.2;
    double mutation_sigma = 0.15;
    std::size_t elitism = 2;
    std::vector<pool_section> pool;
    double target_threshold = 0.5;
    std::uint64_t seed = 0;

    /// Throws std::invalid_argument when lambda < 0, budget < population,
    /// the pool is empty, population < 2, or elitism >= population.
    void validate() const;
};

class invalid_starting_point : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class manipulation_failed : public std::runtime_error {
public:
    manipulation_failed(pe::pe_error_kind cause, const std::string& what) : std::runtime_error(what), cause_(cause) {}
    pe::pe_error_kind cause() const noexcept { return cause_; }

private:
    pe::pe_error_kind cause_;
};

class insufficient_sections : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using score_function = std::function<double(byte_view)>;

struct query_record {
    double score = 0.0;
    std::size_t size = 0;
    std::size_t injected_bytes = 0;
    double fitness = 0.0;
};

struct attack_result {
    bool evaded = false;
    byte_vector best_candidate;
    double best_score = 0.0;
    double best_fitness = 0.0;
    std::size_t queries_used = 0;
    std::size_t injected_bytes = 0;
    std::vector<double> best_genome;
    std::vector<query_record> trace;  // one entry per query, the original first
    /// Best fitness seen so far, after the original and after each generation.
    std::vector<double> generation_best;
};

nlohmann::json to_json(const attack_result& r);

/// score + lambda * injected_bytes
double fitness(double score, std::size_t injected_bytes, double lambda) noexcept;

struct candidate {
    byte_vector bytes;
    std::size_t injected_bytes = 0;
};

/// Gene i selects round(s_i * |pool_i|) leading bytes of pool section i.
/// Section mode injects one section per non-empty selection, padding mode
/// appends them to the overlay. Throws manipulation_failed.
candidate build_candidate(byte_view original, std::span<const double> genome, const attack_config& config);

/// The original sample counts as the first query. Throws
/// invalid_starting_point when it already scores below the threshold.
attack_result gamma_attack(byte_view malware, const score_function& target, const attack_config& config);

/// Non-executable sections with payload, largest first then by name (then
/// file order), truncated to `count`. Files that do not parse are skipped.
/// Throws insufficient_sections when fewer than `count` exist.
std::vector<pool_section> harvest_benign_sections(const std::vector<byte_vector>& benign_files, std::size_t count);

struct transfer_report {
    std::string variant;
    std::size_t samples = 0;
    std::size_t detected_errors_as_benign = 0;
    std::size_t detected_errors_as_malware = 0;
    double adr_errors_as_benign = 0.0;
    double adr_errors_as_malware = 0.0;
};

nlohmann::json to_json(const transfer_report& r);

struct pipeline_variant {
    std::string name;
    const pipeline* chain = nullptr;
};

std::vector<transfer_report> evaluate_transfer(const std::vector<sample_input>& adversarial,
                                               const std::vector<pipeline_variant>& variants, std::size_t jobs = 1);

/// Fraction of bytes equal to `marker`; a transparent target for tests and demos.
double marker_density(byte_view data, std::uint8_t marker) noexcept;

}  // namespace chainscan::adv

#endif  // CHAINSCAN_ADVERSARIAL_HPP
