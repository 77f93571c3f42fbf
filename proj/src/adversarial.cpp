#include "chainscan/adversarial.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace chainscan::adv {

namespace {

class rng_stream {
public:
    explicit rng_stream(std::uint64_t seed) : engine_(seed) {}

    /// [0, 1) with 53 random bits.
    double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double gaussian() {
        const double u1 = 1.0 - unit();
        const double u2 = unit();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    std::size_t below(std::size_t bound) { return std::min(bound - 1, static_cast<std::size_t>(unit() * bound)); }

private:
    std::mt19937_64 engine_;
};

struct individual {
    std::vector<double> genome;
    double score = 0.0;
    double fit = 0.0;
};

}  // namespace

const char* to_string(attack_mode m) { return m == attack_mode::padding ? "padding" : "section_injection"; }

attack_mode attack_mode_from_string(std::string_view s) {
    if (s == "section_injection") return attack_mode::section_injection;
    if (s == "padding") return attack_mode::padding;
    throw std::invalid_argument("unknown attack mode '" + std::string(s) + "'");
}

void attack_config::validate() const {
    if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
    if (population_size < 2) throw std::invalid_argument("population_size must be >= 2");
    if (query_budget < population_size) throw std::invalid_argument("query_budget must be >= population_size");
    if (elitism >= population_size) throw std::invalid_argument("elitism must be < population_size");
    if (pool.empty()) throw std::invalid_argument("benign section pool is empty");
    if (!(mutation_rate >= 0.0 && mutation_rate <= 1.0)) throw std::invalid_argument("mutation_rate must lie in [0,1]");
    if (!(mutation_sigma >= 0.0)) throw std::invalid_argument("mutation_sigma must be >= 0");
}

double fitness(double score, std::size_t injected_bytes, double lambda) noexcept {
    return score + lambda * static_cast<double>(injected_bytes);
}

nlohmann::json to_json(const attack_result& r) {
    nlohmann::json trace = nlohmann::json::array();
    for (const auto& q : r.trace) {
        trace.push_back(
            {{"score", q.score}, {"size", q.size}, {"injected_bytes", q.injected_bytes}, {"fitness", q.fitness}});
    }
    nlohmann::json j{{"evaded", r.evaded},
                     {"best_score", r.best_score},
                     {"best_fitness", r.best_fitness},
                     {"queries_used", r.queries_used},
                     {"injected_bytes", r.injected_bytes},
                     {"best_size", r.best_candidate.size()},
                     {"best_sha256", sha256_hex(r.best_candidate)},
                     {"best_genome", r.best_genome},
                     {"generation_best", r.generation_best},
                     {"trace", trace}};
    return j;
}

candidate build_candidate(byte_view original, std::span<const double> genome, const attack_config& config) {
    if (genome.size() != config.pool.size()) throw std::invalid_argument("genome length must equal pool size");
    candidate c;
    c.bytes.assign(original.begin(), original.end());
    try {
        byte_vector padding;
        for (std::size_t i = 0; i < genome.size(); ++i) {
            const auto& payload = config.pool[i].payload;
            const double g = std::clamp(genome[i], 0.0, 1.0);
            const auto n = static_cast<std::size_t>(std::llround(g * static_cast<double>(payload.size())));
            if (n == 0) continue;
            byte_view chunk = byte_view(payload).first(n);
            c.injected_bytes += n;
            if (config.mode == attack_mode::section_injection) {
                c.bytes = pe::inject_section(c.bytes, ".gm" + std::to_string(i), chunk);
            } else {
                padding.insert(padding.end(), chunk.begin(), chunk.end());
            }
        }
        if (config.mode == attack_mode::padding) c.bytes = pe::append_padding(c.bytes, padding);
        (void)pe::parse_pe(c.bytes);
    } catch (const pe::pe_error& e) {
        throw manipulation_failed(e.kind(), std::string("manipulation failed: ") + e.what());
    }
    return c;
}

attack_result gamma_attack(byte_view malware, const score_function& target, const attack_config& config) {
    config.validate();
    try {
        (void)pe::parse_pe(malware);
    } catch (const pe::pe_error& e) {
        throw invalid_starting_point(std::string("sample does not parse: ") + e.what());
    }

    attack_result result;
    double running_min = 0.0;
    auto record = [&](double score, std::size_t size, std::size_t injected) {
        const double f = fitness(score, injected, config.lambda);
        result.trace.push_back({score, size, injected, f});
        ++result.queries_used;
        running_min = result.trace.size() == 1 ? f : std::min(running_min, f);
        return f;
    };

    const double s0 = target(malware);
    record(s0, malware.size(), 0);
    if (s0 < config.target_threshold) {
        throw invalid_starting_point("sample already scores below the target threshold");
    }
    result.best_candidate.assign(malware.begin(), malware.end());
    result.best_score = s0;
    result.best_fitness = s0;
    result.best_genome.assign(config.pool.size(), 0.0);
    result.generation_best.push_back(running_min);

    rng_stream rng(config.seed);
    const std::size_t genes = config.pool.size();

    // returns false once the budget is spent or the target is evaded
    auto evaluate = [&](individual& ind) {
        candidate c = build_candidate(malware, ind.genome, config);
        ind.score = target(c.bytes);
        ind.fit = record(ind.score, c.bytes.size(), c.injected_bytes);
        const bool evades = ind.score < config.target_threshold;
        if (evades || ind.fit < result.best_fitness) {
            result.best_candidate = std::move(c.bytes);
            result.best_score = ind.score;
            result.best_fitness = ind.fit;
            result.best_genome = ind.genome;
            result.injected_bytes = c.injected_bytes;
        }
        if (evades) result.evaded = true;
        return !evades && result.queries_used < config.query_budget;
    };

    std::vector<individual> population;
    bool running = true;
    for (std::size_t p = 0; p < config.population_size && running; ++p) {
        individual ind;
        ind.genome.resize(genes);
        for (auto& g : ind.genome) g = rng.unit();
        running = evaluate(ind);
        population.push_back(std::move(ind));
    }
    result.generation_best.push_back(running_min);

    while (running) {
        std::stable_sort(population.begin(), population.end(),
                         [](const individual& a, const individual& b) { return a.fit < b.fit; });
        const std::size_t parents = std::max<std::size_t>(2, population.size() / 2);
        std::vector<individual> next(population.begin(), population.begin() + static_cast<long>(config.elitism));
        while (next.size() < config.population_size && running) {
            const auto& a = population[rng.below(parents)];
            const auto& b = population[rng.below(parents)];
            individual child;
            child.genome.resize(genes);
            for (std::size_t g = 0; g < genes; ++g) {
                double v = rng.unit() < 0.5 ? a.genome[g] : b.genome[g];
                if (rng.unit() < config.mutation_rate) v += config.mutation_sigma * rng.gaussian();
                child.genome[g] = std::clamp(v, 0.0, 1.0);
            }
            running = evaluate(child);
            next.push_back(std::move(child));
        }
        population = std::move(next);
        result.generation_best.push_back(running_min);
    }
    return result;
}

std::vector<pool_section> harvest_benign_sections(const std::vector<byte_vector>& benign_files, std::size_t count) {
    struct ranked {
        pool_section section;
        std::size_t file;
        std::size_t index;
    };
    std::vector<ranked> all;
    for (std::size_t f = 0; f < benign_files.size(); ++f) {
        pe::pe_file pe;
        try {
            pe = pe::parse_pe(benign_files[f]);
        } catch (const pe::pe_error&) {
            continue;
        }
        for (std::size_t i = 0; i < pe.sections().size(); ++i) {
            const auto& s = pe.sections()[i];
            if (s.is_executable() || s.raw_size == 0) continue;
            auto payload = pe.section_payload(s);
            all.push_back({{s.name_string(), byte_vector(payload.begin(), payload.end())}, f, i});
        }
    }
    if (all.size() < count) {
        throw insufficient_sections("requested " + std::to_string(count) + " sections, only " +
                                    std::to_string(all.size()) + " available");
    }
    std::stable_sort(all.begin(), all.end(), [](const ranked& a, const ranked& b) {
        if (a.section.payload.size() != b.section.payload.size()) {
            return a.section.payload.size() > b.section.payload.size();
        }
        if (a.section.name != b.section.name) return a.section.name < b.section.name;
        return std::tie(a.file, a.index) < std::tie(b.file, b.index);
    });
    std::vector<pool_section> out;
    for (std::size_t i = 0; i < count; ++i) out.push_back(std::move(all[i].section));
    return out;
}

nlohmann::json to_json(const transfer_report& r) {
    return nlohmann::json{{"variant", r.variant},
                          {"samples", r.samples},
                          {"detected_errors_as_benign", r.detected_errors_as_benign},
                          {"detected_errors_as_malware", r.detected_errors_as_malware},
                          {"adr_errors_as_benign", r.adr_errors_as_benign},
                          {"adr_errors_as_malware", r.adr_errors_as_malware}};
}

std::vector<transfer_report> evaluate_transfer(const std::vector<sample_input>& adversarial,
                                               const std::vector<pipeline_variant>& variants, std::size_t jobs) {
    std::vector<transfer_report> out;
    for (const auto& v : variants) {
        auto verdicts = v.chain->analyze_batch(adversarial, jobs);
        transfer_report r;
        r.variant = v.name;
        r.samples = verdicts.size();
        for (const auto& verdict : verdicts) {
            r.detected_errors_as_benign += verdict.label_under(error_policy::errors_as_benign) == label::malicious;
            r.detected_errors_as_malware += verdict.label_under(error_policy::errors_as_malware) == label::malicious;
        }
        if (!verdicts.empty()) {
            r.adr_errors_as_benign = eval::adversarial_detection_rate(verdicts, error_policy::errors_as_benign);
            r.adr_errors_as_malware = eval::adversarial_detection_rate(verdicts, error_policy::errors_as_malware);
        }
        out.push_back(std::move(r));
    }
    return out;
}

double marker_density(byte_view data, std::uint8_t marker) noexcept {
    if (data.empty()) return 0.0;
    const auto n = std::count(data.begin(), data.end(), marker);
    return static_cast<double>(n) / static_cast<double>(data.size());
}

}  // namespace chainscan::adv
