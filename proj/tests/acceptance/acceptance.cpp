// chainscan - sequential malware detection pipeline
// Acceptance run: one PASS/FAIL line per criterion, exit status 1 on any FAIL.

#include "chainscan/adversarial.hpp"
#include "chainscan/config.hpp"
#include "chainscan/dataset.hpp"
#include "chainscan/evaluation.hpp"
#include "chainscan/features.hpp"
#include "chainscan/fixtures.hpp"
#include "chainscan/pe_format.hpp"
#include "chainscan/pipeline.hpp"
#include "chainscan/signature.hpp"
#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace chainscan;
namespace fs = std::filesystem;

namespace {

using clock_type = std::chrono::steady_clock;

double seconds_since(clock_type::time_point t0) {
    return std::chrono::duration<double>(clock_type::now() - t0).count();
}

struct check_log {
    bool ok = true;
    std::string first_failure;
    void expect(bool cond, const std::string& what) {
        if (!cond && ok) first_failure = what;
        ok = ok && cond;
    }
};

std::string fmt(const char* f, double a = 0, double b = 0, double c = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

byte_vector random_bytes(std::mt19937_64& rng, std::size_t n) {
    byte_vector v(n);
    for (auto& b : v) b = static_cast<std::uint8_t>(rng());
    return v;
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("chainscan_acceptance_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

using script = std::unordered_map<std::string, raw_score>;

detector_ptr scripted(const std::string& id, script s) {
    return std::make_shared<scripted_detector>(id, std::move(s), raw_score::failure(error_kind::model));
}

sample_input named(const std::string& id) {
    sample_input s;
    s.id = id;
    return s;
}

labeled_sample truth_row(const std::string& id, ground_truth t) {
    labeled_sample s;
    s.path = id;
    s.truth = t;
    return s;
}

// ---------------------------------------------------------------------------

check_log criterion_1() {
    check_log log;
    constexpr std::size_t n = 1000, k = 4;
    std::mt19937_64 rng(101);
    std::vector<script> scripts(k);
    std::vector<std::vector<outcome_kind>> planned(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto id = "s" + std::to_string(i);
        for (std::size_t d = 0; d < k; ++d) {
            const auto r = rng() % 10;
            if (r < 2) {
                scripts[d][id] = raw_score::of(0.9);
                planned[i].push_back(outcome_kind::malicious);
            } else if (r < 4) {
                scripts[d][id] = raw_score::failure(error_kind::parse);
                planned[i].push_back(outcome_kind::error);
            } else {
                scripts[d][id] = raw_score::of(0.1);
                planned[i].push_back(outcome_kind::benign);
            }
        }
    }
    std::vector<stage> stages;
    for (std::size_t d = 0; d < k; ++d) stages.push_back({scripted("d" + std::to_string(d), scripts[d])});
    const pipeline p(std::move(stages));
    std::vector<sample_input> batch;
    for (std::size_t i = 0; i < n; ++i) batch.push_back(named("s" + std::to_string(i)));

    const auto t0 = clock_type::now();
    const auto verdicts = p.analyze_batch(batch);
    const double elapsed = seconds_since(t0);
    const auto counts = p.probe().counts();

    // expected invocations from the script alone; detections and errors from the verdict log
    std::vector<std::uint64_t> expected(k, 0), detections(k, 0), errors(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t d = 0; d < k; ++d) {
            ++expected[d];
            if (planned[i][d] == outcome_kind::malicious) break;
        }
        for (std::size_t d = 0; d < verdicts[i].module_outcomes.size(); ++d) {
            detections[d] += verdicts[i].module_outcomes[d].kind == outcome_kind::malicious;
            errors[d] += verdicts[i].module_outcomes[d].kind == outcome_kind::error;
        }
    }
    log.expect(counts == expected, "probe counts differ from the scripted recount");
    log.expect(counts[0] == n, "first detector not invoked on every sample");
    for (std::size_t d = 0; d + 1 < k; ++d) {
        log.expect(counts[d + 1] == counts[d] - detections[d], "halting law broken at detector " + std::to_string(d));
    }
    std::uint64_t total_errors = std::accumulate(errors.begin(), errors.end(), std::uint64_t{0});
    log.expect(total_errors > 0, "scripted batch produced no errors to forward");
    log.expect(elapsed < 5.0, fmt("runtime %.3f s", elapsed));
    if (log.ok) {
        log.first_failure = "counts " + std::to_string(counts[0]) + "/" + std::to_string(counts[1]) + "/" +
                            std::to_string(counts[2]) + "/" + std::to_string(counts[3]) + fmt(", %.3f s", elapsed);
    }
    return log;
}

check_log criterion_2() {
    check_log log;
    constexpr std::size_t benign = 1000, malware = 1000;
    constexpr std::size_t benign_errors = 100, malware_errors = 20, false_positives = 30, misses = 50;
    script first, second;
    std::vector<labeled_sample> samples;
    std::vector<sample_input> batch;
    for (std::size_t i = 0; i < benign + malware; ++i) {
        const bool mal = i >= benign;
        const std::size_t j = mal ? i - benign : i;
        const auto id = std::string(mal ? "m" : "b") + std::to_string(j);
        raw_score a = raw_score::of(0.1), b = raw_score::of(0.1);
        if (j < (mal ? malware_errors : benign_errors)) {
            a = b = raw_score::failure(error_kind::feature);
        } else if (mal && j >= malware_errors + misses) {
            b = raw_score::of(0.9);
        } else if (!mal && j >= benign - false_positives) {
            b = raw_score::of(0.9);
        }
        first[id] = a;
        second[id] = b;
        samples.push_back(truth_row(id, mal ? ground_truth::malware : ground_truth::benign));
        batch.push_back(named(id));
    }
    const pipeline p({{scripted("a", first)}, {scripted("b", second)}});
    const auto verdicts = p.analyze_batch(batch);
    const auto mb = eval::compute_metrics(verdicts, samples, error_policy::errors_as_benign);
    const auto mm = eval::compute_metrics(verdicts, samples, error_policy::errors_as_malware);

    // closed forms
    const double fpr_b = static_cast<double>(false_positives) / benign;
    const double fpr_m = static_cast<double>(false_positives + benign_errors) / benign;
    const double tpr_b = static_cast<double>(malware - malware_errors - misses) / malware;
    const double tpr_m = static_cast<double>(malware - misses) / malware;
    log.expect(mb.fpr == fpr_b && mm.fpr == fpr_m, "FPR differs from closed form");
    log.expect(mb.tpr == tpr_b && mm.tpr == tpr_m, "TPR differs from closed form");
    // the differences, in exact rational form: flipped samples over the class size
    const double fpr_gap = static_cast<double>(mm.counts.fp - mb.counts.fp) / benign;
    const double tpr_gap = static_cast<double>(mm.counts.tp - mb.counts.tp) / malware;
    log.expect(fpr_gap == 0.10, fmt("FPR gap %.17g", fpr_gap));
    log.expect(tpr_gap == 0.02, fmt("TPR gap %.17g", tpr_gap));
    log.expect(*mm.fpr > *mb.fpr, "errors-as-benign does not lower FPR");
    log.expect(mb.er == mm.er && mb.er == static_cast<double>(benign_errors + malware_errors) / (benign + malware),
               "ER differs from closed form");
    if (log.ok) {
        log.first_failure = fmt("FPR %.2f vs %.2f, TPR %.2f", *mb.fpr, *mm.fpr, *mb.tpr) + fmt(" vs %.2f", *mm.tpr);
    }
    return log;
}

// Independent full scan for criterion 3: its own halting replay, its own
// confusion counts and an exact F1 comparison by cross-multiplication.
struct scan_best {
    std::vector<double> thresholds;
    std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

scan_best full_scan(const eval::score_cache& c, const std::vector<ground_truth>& truth, const std::vector<double>& r,
                    std::size_t fixed_index, double fixed_value) {
    scan_best best;
    bool have = false;
    const std::size_t k = c.detector_ids.size();
    std::vector<std::size_t> axes;
    for (std::size_t d = 0; d < k; ++d)
        if (d != fixed_index) axes.push_back(d);
    std::vector<double> th(k, fixed_value);
    std::vector<std::size_t> pos(axes.size(), 0);
    while (true) {
        for (std::size_t a = 0; a < axes.size(); ++a) th[axes[a]] = r[pos[a]];
        std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
        for (std::size_t i = 0; i < c.rows.size(); ++i) {
            bool hit = false;
            for (std::size_t d = 0; d < k && !hit; ++d) hit = c.rows[i][d].score && *c.rows[i][d].score >= th[d];
            if (truth[i] == ground_truth::malware)
                (hit ? tp : fn)++;
            else
                (hit ? fp : tn)++;
        }
        bool better = !have;
        if (have) {
            // 2tp/(2tp+fp+fn) vs 2btp/(2btp+bfp+bfn), undefined counted as 0
            const std::uint64_t lhs = 2 * tp * (2 * best.tp + best.fp + best.fn);
            const std::uint64_t rhs = 2 * best.tp * (2 * tp + fp + fn);
            better = lhs > rhs || (lhs == rhs && fp < best.fp);
        }
        if (better) {
            best = {th, tp, fp, fn, tn};
            have = true;
        }
        std::size_t a = axes.size();
        while (a > 0) {
            --a;
            if (++pos[a] < r.size()) break;
            pos[a] = 0;
            if (a == 0) return best;
        }
        if (axes.empty()) return best;
    }
}

check_log criterion_3() {
    check_log log;
    // part 1: 500 cached synthetic samples, three calibrated axes plus a fixed signature stage
    constexpr std::size_t n = 500;
    std::mt19937_64 rng(303);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<script> scripts(4);
    std::vector<sample_input> batch;
    std::vector<ground_truth> truth;
    for (std::size_t i = 0; i < n; ++i) {
        const auto id = "c" + std::to_string(i);
        const bool mal = i % 2 == 0;
        truth.push_back(mal ? ground_truth::malware : ground_truth::benign);
        scripts[0][id] = raw_score::of(mal && u(rng) < 0.3 ? 1.0 : 0.0);
        for (std::size_t d = 1; d < 4; ++d) {
            const double base = mal ? 0.35 + 0.1 * d : 0.0;
            scripts[d][id] = u(rng) < 0.04 ? raw_score::failure(error_kind::feature)
                                           : raw_score::of(std::min(1.0, base + (mal ? 0.65 - 0.1 * d : 0.9) * u(rng)));
        }
        batch.push_back(named(id));
    }
    const pipeline p({{scripted("signatures", scripts[0])},
                      {scripted("byte_window", scripts[1])},
                      {scripted("feature_model", scripts[2])},
                      {scripted("report_model", scripts[3])}});
    const auto cache = eval::build_score_cache(p, batch);
    eval::calibration_options o;
    o.fixed["signatures"] = 0.5;
    const auto t0 = clock_type::now();
    const auto result = eval::grid_search(cache, truth, o);
    const double elapsed = seconds_since(t0);
    log.expect(result.combinations == 21952, "combination count " + std::to_string(result.combinations));
    log.expect(elapsed < 60.0, fmt("grid search took %.2f s", elapsed));
    const auto oracle = full_scan(cache, truth, eval::default_research_space(), 0, 0.5);
    log.expect(result.best_thresholds == oracle.thresholds, "argmax thresholds differ from the full scan");
    log.expect(result.best.counts.tp == oracle.tp && result.best.counts.fp == oracle.fp &&
                   result.best.counts.fn == oracle.fn && result.best.counts.tn == oracle.tn,
               "argmax counts differ from the full scan");
    const double oracle_f1 = 2.0 * oracle.tp / (2.0 * oracle.tp + oracle.fp + oracle.fn);
    log.expect(result.best.f1 && *result.best.f1 == oracle_f1, "argmax F1 not bit-identical");

    // part 2: cache replay against a live run of the real detectors on 50 corpus samples
    const auto dir = scratch("c3");
    fixtures::demo_options demo;
    demo.benign = 23;
    demo.malware = 23;
    demo.corrupt = 4;
    demo.seed = 33;
    const auto layout = fixtures::write_demo_corpus(dir, demo);
    auto cfg = load_pipeline_config(layout.config);
    const auto samples = load_manifest(layout.manifest);
    log.expect(samples.size() == 50, "corpus size " + std::to_string(samples.size()));
    const auto chain = build_pipeline(cfg);
    const auto live_cache = eval::build_score_cache(
        chain, samples.size(), [&](std::size_t i) { return load_sample(samples[i]); },
        [&](std::size_t i) { return samples[i].id(); });
    std::vector<ground_truth> live_truth;
    for (const auto& s : samples) live_truth.push_back(s.truth);
    eval::calibration_options lo;
    lo.fixed["signatures"] = 0.5;
    const auto calibrated = eval::grid_search(live_cache, live_truth, lo);
    for (auto& d : cfg.detectors) {
        for (std::size_t j = 0; j < calibrated.detector_ids.size(); ++j)
            if (calibrated.detector_ids[j] == d.id) d.threshold = calibrated.best_thresholds[j];
    }
    const auto tuned = build_pipeline(cfg);
    std::size_t mismatches = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto live = tuned.analyze(load_sample(samples[i]));
        const auto replayed = eval::replay(live_cache, i, calibrated.best_thresholds);
        mismatches += live.final_label != replayed.final_label || live.decided_by != replayed.decided_by ||
                      live.had_error != replayed.had_error;
    }
    log.expect(mismatches == 0, std::to_string(mismatches) + " replay/live mismatches");
    fs::remove_all(dir);
    if (log.ok) log.first_failure = fmt("21952 combos in %.2f s, best F1 %.4f, 50/50 replay matches", elapsed, oracle_f1);
    return log;
}

// Two-pass reference for criterion 4, written from the histogram definition.
std::vector<double> reference_entropy_histogram(const byte_vector& data, std::size_t window, std::size_t step) {
    std::vector<double> mass(256, 0.0);
    if (data.empty()) return mass;
    double total = 0.0;
    for (std::size_t start = 0; start < data.size(); start += step) {
        const std::size_t end = std::min(start + window, data.size());
        std::vector<double> counts(256, 0.0);
        for (std::size_t i = start; i < end; ++i) counts[data[i]] += 1.0;
        const double len = static_cast<double>(end - start);
        double h = 0.0;
        for (double c : counts)
            if (c > 0) h -= (c / len) * std::log2(c / len);
        const auto bin = static_cast<std::size_t>(std::min(15.0, std::max(0.0, std::floor(h * 2 + 1e-9))));
        for (std::size_t v = 0; v < 256; ++v) mass[bin * 16 + v / 16] += counts[v];
        total += len;
        if (end == data.size()) break;
    }
    for (auto& m : mass) m /= total;
    return mass;
}

check_log criterion_4() {
    check_log log;
    std::mt19937_64 rng(404);
    double worst_sum = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const auto data = random_bytes(rng, 1 + rng() % 20000);
        const auto h = features::byte_histogram(data);
        worst_sum = std::max(worst_sum, std::abs(std::accumulate(h.begin(), h.end(), 0.0) - 1.0));
    }
    log.expect(worst_sum <= 1e-9, fmt("histogram sum off by %.3g", worst_sum));

    double worst_diff = 0.0;
    for (int i = 0; i < 100; ++i) {
        byte_vector data;
        const std::size_t n = 1 + rng() % 40000;
        while (data.size() < n) {
            const std::size_t run = 1 + rng() % 3000;
            const unsigned span = 1u << (rng() % 9);
            for (std::size_t j = 0; j < run && data.size() < n; ++j) data.push_back(static_cast<std::uint8_t>(rng() % span));
        }
        const auto got = features::byte_entropy_histogram(data, 2048, 1024);
        const auto want = reference_entropy_histogram(data, 2048, 1024);
        for (std::size_t j = 0; j < 256; ++j) worst_diff = std::max(worst_diff, std::abs(got[j] - want[j]));
    }
    log.expect(worst_diff <= 1e-12, fmt("entropy histogram off by %.3g", worst_diff));

    const auto zeros = features::byte_entropy_histogram(byte_vector(4096, 0), 2048, 1024);
    log.expect(zeros[0] == 1.0 && std::accumulate(zeros.begin() + 1, zeros.end(), 0.0) == 0.0, "all-zero case");
    byte_vector uniform;
    for (int rep = 0; rep < 8; ++rep)
        for (int v = 0; v < 256; ++v) uniform.push_back(static_cast<std::uint8_t>(v));
    const auto top = features::byte_entropy_histogram(uniform, 2048, 1024);
    bool exact = std::accumulate(top.begin(), top.begin() + 240, 0.0) == 0.0;
    for (std::size_t v = 0; v < 16; ++v) exact = exact && top[240 + v] == 1.0 / 16;
    log.expect(exact, "uniform-byte case");
    const auto flat = features::byte_histogram(uniform);
    log.expect(std::all_of(flat.begin(), flat.end(), [](double x) { return x == 1.0 / 256; }), "uniform histogram");
    if (log.ok) log.first_failure = fmt("max sum error %.2g, max reference diff %.2g", worst_sum, worst_diff);
    return log;
}

check_log criterion_5() {
    check_log log;
    std::mt19937_64 rng(505);
    std::size_t injections = 0, paddings = 0;
    for (int f = 0; f < 200; ++f) {
        pe::pe_spec spec;
        const std::size_t sections = rng() % 6;
        for (std::size_t s = 0; s < sections; ++s) {
            const std::size_t size = rng() % 5 == 0 ? 0 : 1 + rng() % 3000;
            spec.sections.push_back({".s" + std::to_string(s), random_bytes(rng, size), std::nullopt});
        }
        spec.file_alignment = rng() % 2 ? 0x200 : 0x1000;
        spec.section_alignment = 0x1000;
        spec.pe32_plus = rng() % 2;
        spec.spare_section_slots = static_cast<std::uint32_t>(rng() % 3);
        if (rng() % 3 == 0) spec.imports.push_back({"kernel32.dll", {"ExitProcess"}});
        if (rng() % 3 == 0) spec.overlay = random_bytes(rng, rng() % 500);
        const auto original = pe::build_minimal_pe(spec);
        const auto before = pe::parse_pe(original);
        const auto check_preserved = [&](const byte_vector& out, const char* what) {
            try {
                const auto after = pe::parse_pe(out);
                log.expect(after.nt().entry_point_rva == before.nt().entry_point_rva,
                           std::string(what) + ": entry point moved");
                log.expect(after.sections().size() >= before.sections().size(), std::string(what) + ": lost sections");
                for (std::size_t s = 0; s < before.sections().size(); ++s) {
                    auto a = before.section_payload(before.sections()[s]);
                    auto b = after.section_payload(after.sections()[s]);
                    log.expect(std::equal(a.begin(), a.end(), b.begin(), b.end()),
                               std::string(what) + ": payload changed in fixture " + std::to_string(f));
                }
            } catch (const pe::pe_error& e) {
                log.expect(false, std::string(what) + " output does not parse: " + e.what());
            }
        };
        const auto content = random_bytes(rng, 1 + rng() % 4000);
        check_preserved(pe::inject_section(original, ".inj" + std::to_string(f % 1000), content), "inject");
        ++injections;
        const auto padded = pe::append_padding(original, random_bytes(rng, 1 + rng() % 4000));
        check_preserved(padded, "padding");
        log.expect(std::equal(original.begin(), original.end(), padded.begin()), "padding rewrote existing bytes");
        log.expect(pe::append_padding(original, {}) == original, "empty padding is not the identity");
        ++paddings;
    }
    if (log.ok) {
        log.first_failure =
            std::to_string(injections) + " injections and " + std::to_string(paddings) + " paddings verified";
    }
    return log;
}

std::string hex_rule(const std::string& name, byte_view pattern, const std::string& extra_condition = {}) {
    std::string s = "rule " + name + " { strings: $p = {";
    char buf[4];
    for (auto b : pattern) {
        std::snprintf(buf, sizeof buf, " %02X", b);
        s += buf;
    }
    return s + " } condition: " + (extra_condition.empty() ? "$p" : extra_condition + " and $p") + " }";
}

check_log criterion_6() {
    check_log log;
    std::mt19937_64 rng(606);
    std::vector<byte_vector> pool_files;
    for (int i = 0; i < 8; ++i) pool_files.push_back(fixtures::make_pool_file(rng, 10));
    adv::attack_config cfg;
    cfg.pool = adv::harvest_benign_sections(pool_files, 75);
    const auto malware = fixtures::make_sample(rng, fixtures::sample_kind::malware, 0.3);

    // (a) a 16-byte pattern that only the pool carries
    const auto& donor = cfg.pool[3].payload;
    const byte_view pattern(donor.data() + 8, 16);
    const auto rule_a = sig::parse_rules(hex_rule("pool_marker", pattern));
    std::vector<double> genome(cfg.pool.size(), 0.0);
    genome[3] = 1.0;
    const auto injected = adv::build_candidate(malware, genome, cfg);
    const bool before_a = sig::match_rules(rule_a, malware).any_fired();
    const bool after_a = sig::match_rules(rule_a, injected.bytes).any_fired();
    log.expect(!before_a, "pool rule fired before injection");
    log.expect(after_a, "pool rule did not fire after injection");

    // (b) a size-gated rule on the embedded signature string
    const auto dropper = fixtures::make_sample(rng, fixtures::sample_kind::malware_with_signature, 0.3);
    const auto rule_b = sig::parse_rules(
        hex_rule("small_dropper", as_bytes(fixtures::demo_signature_text), "filesize < 64KB"));
    cfg.mode = adv::attack_mode::padding;
    std::fill(genome.begin(), genome.end(), 1.0);
    const auto padded = adv::build_candidate(dropper, genome, cfg);
    const bool before_b = sig::match_rules(rule_b, dropper).any_fired();
    const auto after = sig::match_rules(rule_b, padded.bytes);
    log.expect(dropper.size() < 64 * 1024, "dropper fixture is not below the size gate");
    log.expect(before_b, "filesize rule did not fire before padding");
    log.expect(!after.any_fired(), "filesize rule still fires after padding");
    log.expect(!after.per_rule_string_hits.at("small_dropper").at("$p").empty(),
               "signature string vanished; the bypass must come from filesize alone");
    // determinism: a second evaluation gives the same answers
    log.expect(sig::match_rules(rule_a, injected.bytes).fired_rules == std::vector<std::string>{"pool_marker"} &&
                   sig::match_rules(rule_b, padded.bytes).fired_rules.empty(),
               "rerun disagrees");
    if (log.ok) {
        log.first_failure = "pool rule fires only after injection; filesize rule stops after padding to " +
                            std::to_string(padded.bytes.size()) + " bytes";
    }
    return log;
}

check_log criterion_7() {
    check_log log;
    std::mt19937_64 rng(707);
    std::vector<byte_vector> pool_files;
    for (int i = 0; i < 8; ++i) pool_files.push_back(fixtures::make_pool_file(rng, 10));
    const auto pool = adv::harvest_benign_sections(pool_files, 75);

    constexpr int runs = 50;
    int evaded = 0;
    std::size_t total_queries = 0;
    for (int run = 0; run < runs; ++run) {
        pe::pe_spec spec;
        const std::size_t text = 16384 + rng() % 49152;
        const double density = 0.55 + 0.4 * std::uniform_real_distribution<double>(0, 1)(rng);
        byte_vector body(text, 0x90);
        for (std::size_t i = 0; i < text; ++i)
            if (std::uniform_real_distribution<double>(0, 1)(rng) < density) body[i] = fixtures::demo_marker;
        spec.sections.push_back({".text", body, std::nullopt});
        const auto sample = pe::build_minimal_pe(spec);
        const auto markers = static_cast<std::size_t>(std::count(sample.begin(), sample.end(), fixtures::demo_marker));
        const auto text_markers = static_cast<std::size_t>(std::count(body.begin(), body.end(), fixtures::demo_marker));
        if (2 * markers <= sample.size()) {
            log.expect(false, "fixture starts below the threshold");
            continue;
        }

        adv::attack_config cfg;
        cfg.pool = pool;
        cfg.seed = static_cast<std::uint64_t>(run);
        cfg.target_threshold = 0.5;
        std::size_t calls = 0;
        const auto r = adv::gamma_attack(
            sample,
            [&](byte_view b) {
                ++calls;
                return adv::marker_density(b, fixtures::demo_marker);
            },
            cfg);
        total_queries += r.queries_used;
        log.expect(calls == r.queries_used && r.trace.size() == r.queries_used && r.queries_used <= cfg.query_budget,
                   "query accounting off in run " + std::to_string(run));
        for (std::size_t g = 1; g < r.generation_best.size(); ++g)
            log.expect(r.generation_best[g] <= r.generation_best[g - 1],
                       "best fitness increased in run " + std::to_string(run));
        if (r.evaded) {
            ++evaded;
            // pool sections carry no marker bytes, so the section payloads keep exactly the
            // original .text markers; rewritten header fields may still hold the marker value
            const auto cand = pe::parse_pe(r.best_candidate);
            std::size_t payload_markers = 0;
            for (const auto& s : cand.sections()) {
                const auto p = cand.section_payload(s);
                payload_markers += static_cast<std::size_t>(std::count(p.begin(), p.end(), fixtures::demo_marker));
            }
            log.expect(payload_markers == text_markers, "manipulation changed the section marker count");
            // closed form: density < 0.5 exactly when size > 2 * markers
            const auto m = static_cast<std::size_t>(
                std::count(r.best_candidate.begin(), r.best_candidate.end(), fixtures::demo_marker));
            log.expect(r.best_candidate.size() > 2 * m, "evasion claimed below the closed-form crossing size");
            log.expect(r.best_score == static_cast<double>(m) / static_cast<double>(r.best_candidate.size()),
                       "reported score differs from the closed form");
        }
    }
    log.expect(evaded * 100 >= runs * 95, std::to_string(evaded) + "/50 runs evaded");
    if (log.ok) {
        log.first_failure = std::to_string(evaded) + "/50 runs evaded, " +
                            fmt("mean %.1f queries", static_cast<double>(total_queries) / runs);
    }
    return log;
}

check_log criterion_8() {
    check_log log;
    std::vector<eval::metric_input> in;
    auto add = [&](int count, ground_truth t, label l, bool err) {
        for (int i = 0; i < count; ++i) in.push_back({t, "fam", l, err});
    };
    add(9, ground_truth::malware, label::malicious, false);
    add(1, ground_truth::malware, label::benign, false);
    add(1, ground_truth::benign, label::malicious, false);
    add(7, ground_truth::benign, label::benign, false);
    add(2, ground_truth::benign, label::benign, true);
    const auto b = eval::compute_metrics(in, error_policy::errors_as_benign);
    log.expect(b.tpr == 0.9 && b.fpr == 0.1 && b.f1 == 0.9, "tp=9 fp=1 fn=1 tn=9 table");
    log.expect(b.er == 0.1, "ER 2/20");
    const auto m = eval::compute_metrics(in, error_policy::errors_as_malware);
    // tp 9, fp 3, fn 1, tn 7: F1 = 18/22
    log.expect(m.fpr == 0.3 && m.tpr == 0.9 && m.f1 == 18.0 / 22.0, "errors-as-malware table");

    std::vector<pipeline_verdict> v(388);
    for (std::size_t i = 0; i < 334; ++i) v[i].final_label = label::malicious;
    log.expect(eval::adversarial_detection_rate(v, error_policy::errors_as_benign) == 334.0 / 388, "ADR 334/388");
    log.expect(std::abs(334.0 / 388 - 0.8608) < 5e-5, "ADR rounding");

    const auto t1 = eval::mean_detection_time(std::vector<double>{1, 1, 1});
    const auto t2 = eval::mean_detection_time(std::vector<double>{1, 3});
    const auto t3 = eval::mean_detection_time(std::vector<double>{0.5, 0.25, 0.75, 0.5});
    log.expect(t1.mean == 1 && t1.stddev == 0 && t2.mean == 2 && t2.stddev == 1, "MDT closed forms");
    log.expect(t3.mean == 0.5 && t3.stddev == std::sqrt(0.03125), "MDT quarter values");

    eval::confusion perfect{5, 0, 5, 0, 0};
    log.expect(eval::tpr(perfect) == 1.0 && eval::fpr(perfect) == 0.0 && eval::f1(perfect) == 1.0, "perfect table");
    log.expect(!eval::tpr(eval::confusion{0, 1, 1, 0, 0}) && !eval::f1(eval::confusion{}), "undefined rates");
    if (log.ok) log.first_failure = "TPR/FPR/F1/ER/ADR/MDT closed forms exact";
    return log;
}

check_log criterion_9() {
    check_log log;
    constexpr std::size_t malware = 100, benign = 100;
    std::vector<script> scripts(4);
    std::vector<sample_input> batch;
    std::vector<labeled_sample> samples;
    for (std::size_t i = 0; i < malware + benign; ++i) {
        const bool mal = i < malware;
        const auto id = "t" + std::to_string(i);
        // the signature stage catches 80% of malware; byte window takes the rest
        scripts[0][id] = raw_score::of(mal && i % 5 != 0 ? 1.0 : 0.0);
        scripts[1][id] = raw_score::of(mal ? 0.9 : 0.1);
        scripts[2][id] = raw_score::of(0.1);
        scripts[3][id] = raw_score::of(0.1);
        batch.push_back(named(id));
        samples.push_back(truth_row(id, mal ? ground_truth::malware : ground_truth::benign));
    }
    // fastest to slowest, as in the default chain
    const std::vector<std::pair<std::string, int>> delays{
        {"signatures", 50}, {"byte_window", 500}, {"feature_model", 2000}, {"report_model", 10000}};
    std::vector<stage> stages;
    for (std::size_t d = 0; d < 4; ++d) {
        stages.push_back({std::make_shared<delayed_detector>(scripted(delays[d].first, scripts[d]),
                                                             std::chrono::microseconds(delays[d].second))});
    }
    const pipeline p(std::move(stages), true);
    const auto verdicts = p.analyze_batch(batch, 4);
    const auto mdt_m = eval::mean_detection_time(verdicts, samples, ground_truth::malware);
    const auto mdt_g = eval::mean_detection_time(verdicts, samples, ground_truth::benign);
    std::size_t by_signature = 0;
    for (std::size_t i = 0; i < malware; ++i) by_signature += verdicts[i].decided_by == "signatures";
    log.expect(by_signature == 80, "signature stage detected " + std::to_string(by_signature) + "%");
    log.expect(mdt_m.mean < mdt_g.mean, "malware is not faster");
    log.expect(mdt_g.mean >= 10.0 * mdt_m.mean, fmt("MDT_g/MDT_m = %.1f", mdt_g.mean / mdt_m.mean));
    if (log.ok) {
        log.first_failure = fmt("MDT_m %.3f ms, MDT_g %.3f ms, ratio %.1f", mdt_m.mean * 1e3, mdt_g.mean * 1e3,
                                mdt_g.mean / mdt_m.mean);
    }
    return log;
}

// Drops timing fields from JSON so reruns can be compared.
void strip_timing(nlohmann::json& j) {
    if (j.is_object()) {
        for (const char* key : {"elapsed", "total_elapsed", "timestamp"}) j.erase(key);
        for (auto& [k, v] : j.items()) strip_timing(v);
    } else if (j.is_array()) {
        for (auto& v : j) strip_timing(v);
    }
}

std::string normalized(const fs::path& p) {
    const auto text = read_text_file(p);
    const auto ext = p.extension().string();
    if (ext == ".json") {
        auto j = nlohmann::json::parse(text);
        strip_timing(j);
        return j.dump(1);
    }
    if (ext == ".jsonl") {
        std::istringstream in(text);
        std::string out;
        for (std::string line; std::getline(in, line);) {
            auto j = nlohmann::json::parse(line);
            strip_timing(j);
            out += j.dump() + "\n";
        }
        return out;
    }
    return text;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file() || e.path().filename() == "timing.json") continue;
        files[fs::relative(e.path(), dir).string()] = normalized(e.path());
    }
    return files;
}

check_log criterion_10() {
    check_log log;
    const auto root = scratch("c10");
    std::ostringstream sink;
    cli::io_streams io{sink, sink};
    cli::fixtures_options fo;
    fo.output_dir = root / "corpus";
    log.expect(cli::run_fixtures(fo, io) == cli::exit_ok, "fixtures failed");
    const auto manifest = root / "corpus" / "manifest.csv";
    const auto config = root / "corpus" / "config.json";

    const auto run_all = [&](const fs::path& out) {
        cli::scan_options s;
        s.manifest = manifest;
        s.config = config;
        s.output = out / "scan" / "verdicts.jsonl";
        s.jobs = 2;
        cli::run_scan(s, io);
        cli::evaluate_options e{manifest, config, out / "evaluate", 2};
        cli::run_evaluate(e, io);
        cli::calibrate_options c;
        c.manifest = manifest;
        c.config = config;
        c.output_dir = out / "calibrate";
        c.write_grid = true;
        c.seed = 5;
        c.jobs = 2;
        cli::run_calibrate(c, io);
        cli::attack_options a;
        a.manifest = manifest;
        a.config = config;
        a.output_dir = out / "attack";
        a.seed = 9;
        a.budget = 40;
        a.jobs = 2;
        cli::run_attack(a, io);
    };
    // both runs write to the same path so recorded output paths agree
    const auto out = root / "out";
    run_all(out);
    const auto first = snapshot(out);
    fs::rename(out, root / "out_first");
    run_all(out);
    const auto second = snapshot(out);

    log.expect(first.size() > 10, "too few result files: " + std::to_string(first.size()));
    for (const char* must : {"scan/verdicts.jsonl", "evaluate/metrics.json", "calibrate/calibration.json",
                             "calibrate/grid.csv", "attack/attack.json"}) {
        log.expect(first.count(must) == 1, std::string("missing ") + must);
    }
    log.expect(first.size() == second.size(), "file sets differ");
    for (const auto& [name, body] : first) {
        const auto it = second.find(name);
        log.expect(it != second.end() && it->second == body, "rerun differs: " + name);
    }
    if (log.ok) log.first_failure = std::to_string(first.size()) + " files identical across reruns";
    fs::remove_all(root);
    return log;
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<check_log()>>> criteria{
        {"halting invariant on 1000 scripted samples", criterion_1},
        {"error-policy ordering", criterion_2},
        {"calibration oracle", criterion_3},
        {"feature extraction", criterion_4},
        {"PE manipulation safety", criterion_5},
        {"signature findings", criterion_6},
        {"GAMMA dynamics", criterion_7},
        {"metrics correctness", criterion_8},
        {"pipeline timing", criterion_9},
        {"determinism", criterion_10},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        check_log r;
        const auto t0 = clock_type::now();
        try {
            r = criteria[i].second();
        } catch (const std::exception& e) {
            r.ok = false;
            r.first_failure = std::string("exception: ") + e.what();
        }
        failures += !r.ok;
        std::printf("%s criterion %zu: %s (%s) [%.2f s]\n", r.ok ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                    r.first_failure.c_str(), seconds_since(t0));
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
