#include "commands.hpp"

#include "chainscan/adversarial.hpp"
#include "chainscan/config.hpp"
#include "chainscan/dataset.hpp"
#include "chainscan/evaluation.hpp"
#include "chainscan/features.hpp"
#include "chainscan/fixtures.hpp"
#include "chainscan/signature.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <ctime>

namespace chainscan::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string timestamp_utc() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_file(path, as_bytes(text));
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

void write_run_manifest(const fs::path& path, const std::string& command, const fs::path& config,
                        const std::vector<std::string>& inputs, const fs::path& output, std::optional<std::uint64_t> seed,
                        json options = json::object()) {
    json j{{"schema_version", 1},
           {"command", command},
           {"config", config.generic_string()},
           {"inputs", inputs},
           {"output", output.generic_string()},
           {"seed", seed ? json(*seed) : json(nullptr)},
           {"options", std::move(options)},
           {"timestamp", timestamp_utc()}};
    write_json(path, j);
}

labeled_sample unlabeled(const fs::path& p) {
    labeled_sample s;
    s.path = p;
    auto sidecar = p;
    sidecar += ".report.json";
    std::error_code ec;
    if (fs::exists(sidecar, ec)) s.report_path = sidecar;
    return s;
}

std::vector<pipeline_verdict> run_batch(const pipeline& chain, const std::vector<labeled_sample>& samples,
                                        std::size_t jobs) {
    return chain.analyze_batch(
        samples.size(), [&](std::size_t i) { return load_sample(samples[i]); },
        [&](std::size_t i) { return samples[i].id(); }, jobs);
}

std::string jsonl(const std::vector<pipeline_verdict>& verdicts) {
    std::string out;
    for (const auto& v : verdicts) out += to_json(v).dump() + "\n";
    return out;
}

json time_json(const std::vector<pipeline_verdict>& verdicts, const std::vector<labeled_sample>& samples,
               ground_truth subset) {
    try {
        auto t = eval::mean_detection_time(verdicts, samples, subset);
        return json{{"mean", t.mean}, {"stddev", t.stddev}, {"count", t.count}};
    } catch (const eval::evaluation_error&) {
        return nullptr;
    }
}

/// Every escaping exception is a usage or configuration problem.
template <typename F>
int guarded(io_streams io, F&& body) {
    try {
        return body();
    } catch (const std::exception& e) {
        io.err << "error: " << e.what() << "\n";
    }
    return exit_usage;
}

}  // namespace

int run_scan(const scan_options& o, io_streams io) {
    return guarded(io, [&] {
        const auto cfg = load_pipeline_config(o.config);
        const auto chain = build_pipeline(cfg);
        std::vector<labeled_sample> samples;
        std::vector<std::string> inputs;
        if (o.manifest) {
            samples = load_manifest(*o.manifest);
            inputs.push_back(o.manifest->generic_string());
        }
        for (const auto& f : o.files) {
            samples.push_back(unlabeled(f));
            inputs.push_back(f.generic_string());
        }
        if (samples.empty()) {
            io.err << "error: scan needs input files or --manifest\n";
            return exit_usage;
        }
        const auto verdicts = run_batch(chain, samples, o.jobs.value_or(cfg.jobs));
        const auto text = jsonl(verdicts);
        if (o.output.empty()) {
            io.out << text;
        } else {
            write_text(o.output, text);
            auto manifest_path = o.output;
            manifest_path += ".run.json";
            write_run_manifest(manifest_path, "scan", o.config, inputs, o.output, std::nullopt);
        }
        const bool any_io = std::any_of(verdicts.begin(), verdicts.end(), [](const auto& v) { return v.io_error; });
        return any_io ? exit_partial : exit_ok;
    });
}

int run_evaluate(const evaluate_options& o, io_streams io) {
    return guarded(io, [&] {
        const auto cfg = load_pipeline_config(o.config);
        const auto chain = build_pipeline(cfg);
        const auto samples = load_manifest(o.manifest);
        const auto verdicts = run_batch(chain, samples, o.jobs.value_or(cfg.jobs));

        fs::create_directories(o.output_dir);
        write_text(o.output_dir / "verdicts.jsonl", jsonl(verdicts));
        std::vector<eval::metrics_report> reports;
        json policies = json::array();
        for (auto p : {error_policy::errors_as_benign, error_policy::errors_as_malware}) {
            reports.push_back(eval::compute_metrics(verdicts, samples, p));
            policies.push_back(eval::to_json(reports.back()));
        }
        write_json(o.output_dir / "metrics.json",
                   json{{"schema_version", 1},
                        {"pipeline", chain.stage_ids()},
                        {"samples", samples.size()},
                        {"stored_policy", to_string(cfg.policy)},
                        {"metrics", policies}});
        const auto table = eval::format_metrics_table(reports);
        write_text(o.output_dir / "metrics.txt", table);
        write_json(o.output_dir / "timing.json",
                   json{{"mdt_malware", time_json(verdicts, samples, ground_truth::malware)},
                        {"mdt_benign", time_json(verdicts, samples, ground_truth::benign)}});
        write_run_manifest(o.output_dir / "evaluate.run.json", "evaluate", o.config, {o.manifest.generic_string()},
                           o.output_dir, std::nullopt);
        io.out << table;
        const bool any_io = std::any_of(verdicts.begin(), verdicts.end(), [](const auto& v) { return v.io_error; });
        return any_io ? exit_partial : exit_ok;
    });
}

int run_calibrate(const calibrate_options& o, io_streams io) {
    return guarded(io, [&] {
        auto cfg = load_pipeline_config(o.config);
        const auto chain = build_pipeline(cfg);
        const auto samples = load_manifest(o.manifest);
        const double fraction = o.split_fraction.value_or(cfg.calibration.split_fraction);
        const std::uint64_t seed = o.seed.value_or(cfg.calibration.seed);
        const std::size_t jobs = o.jobs.value_or(cfg.jobs);
        const auto split = eval::stratified_split(samples, fraction, seed);
        for (const auto& note : split.notes) io.err << "note: " << note << "\n";

        auto cache_of = [&](const std::vector<std::size_t>& idx) {
            return eval::build_score_cache(
                chain, idx.size(), [&](std::size_t i) { return load_sample(samples[idx[i]]); },
                [&](std::size_t i) { return samples[idx[i]].id(); }, jobs);
        };
        auto truth_of = [&](const std::vector<std::size_t>& idx) {
            std::vector<ground_truth> t;
            for (auto i : idx) t.push_back(samples[i].truth);
            return t;
        };
        const auto validation_cache = cache_of(split.validation);
        const auto validation_truth = truth_of(split.validation);

        eval::calibration_options opts;
        opts.research_space = cfg.calibration.research_space;
        opts.keep_grid = o.write_grid;
        opts.jobs = jobs;
        for (const auto& d : cfg.detectors) {
            if (d.enabled && d.type == "signature") opts.fixed[d.id] = d.threshold;
        }
        auto result = eval::grid_search(validation_cache, validation_truth, opts);
        result.split_fraction = fraction;

        // held-out check by replaying the best combination
        const auto test_cache = cache_of(split.test);
        std::vector<eval::metric_input> test_inputs;
        for (std::size_t r = 0; r < split.test.size(); ++r) {
            const auto rep = eval::replay(test_cache, r, result.best_thresholds);
            const auto& s = samples[split.test[r]];
            test_inputs.push_back({s.truth, s.family, rep.final_label, rep.had_error});
        }
        json test_metrics = json::array();
        for (auto p : {error_policy::errors_as_benign, error_policy::errors_as_malware}) {
            test_metrics.push_back(eval::to_json(eval::compute_metrics(test_inputs, p)));
        }

        fs::create_directories(o.output_dir);
        json ids_validation = json::array(), ids_test = json::array();
        for (auto i : split.validation) ids_validation.push_back(samples[i].id());
        for (auto i : split.test) ids_test.push_back(samples[i].id());
        json out = eval::to_json(result);
        out["schema_version"] = 1;
        out["seed"] = seed;
        out["validation_size"] = split.validation.size();
        out["test_size"] = split.test.size();
        out["split_notes"] = split.notes;
        out["test_metrics"] = test_metrics;
        write_json(o.output_dir / "calibration.json", out);
        write_json(o.output_dir / "split.json", json{{"validation", ids_validation}, {"test", ids_test}});
        if (o.write_grid) eval::write_grid_csv(o.output_dir / "grid.csv", result);

        for (auto& d : cfg.detectors) {
            auto it = std::find(result.detector_ids.begin(), result.detector_ids.end(), d.id);
            if (it != result.detector_ids.end()) {
                d.threshold = result.best_thresholds[static_cast<std::size_t>(it - result.detector_ids.begin())];
            }
        }
        cfg.calibration.split_fraction = fraction;
        cfg.calibration.seed = seed;
        write_json(o.output_dir / "config.calibrated.json", to_json(cfg, o.output_dir));
        write_run_manifest(o.output_dir / "calibrate.run.json", "calibrate", o.config, {o.manifest.generic_string()},
                           o.output_dir, seed, json{{"split_fraction", fraction}, {"write_grid", o.write_grid}});

        io.out << "combinations: " << result.combinations << "\n";
        for (std::size_t d = 0; d < result.detector_ids.size(); ++d) {
            io.out << "  " << result.detector_ids[d] << " = " << result.best_thresholds[d] << "\n";
        }
        io.out << "validation F1: " << (result.best.f1 ? std::to_string(*result.best.f1) : "n/a") << "\n";

        bool any_io = false;
        for (const auto* cache : {&validation_cache, &test_cache}) {
            for (const auto& row : cache->rows) {
                any_io |= std::any_of(row.begin(), row.end(),
                                      [](const auto& e) { return e.error == error_kind::io; });
            }
        }
        return any_io ? exit_partial : exit_ok;
    });
}

int run_attack(const attack_options& o, io_streams io) {
    return guarded(io, [&] {
        auto cfg = load_pipeline_config(o.config);
        auto& s = cfg.attack;
        if (o.mode) s.mode = adv::attack_mode_from_string(*o.mode);
        if (o.lambda) s.lambda = *o.lambda;
        if (o.budget) s.query_budget = *o.budget;
        if (o.seed) s.seed = *o.seed;
        if (o.target) s.target = *o.target;
        if (o.pool_dir) s.pool_dir = *o.pool_dir;
        if (!s.pool_dir) throw config_error("attack needs a pool directory");

        std::vector<fs::path> pool_files;
        for (const auto& e : fs::directory_iterator(*s.pool_dir)) {
            if (e.is_regular_file()) pool_files.push_back(e.path());
        }
        std::sort(pool_files.begin(), pool_files.end());
        std::vector<byte_vector> pool_bytes;
        for (const auto& p : pool_files) pool_bytes.push_back(read_file(p));

        adv::attack_config ac;
        ac.mode = s.mode;
        ac.lambda = s.lambda;
        ac.query_budget = s.query_budget;
        ac.population_size = s.population_size;
        ac.mutation_rate = s.mutation_rate;
        ac.mutation_sigma = s.mutation_sigma;
        ac.elitism = s.elitism;
        ac.target_threshold = s.target_threshold;
        ac.seed = s.seed;
        ac.pool = adv::harvest_benign_sections(pool_bytes, s.pool_size);
        ac.validate();

        const auto chain = load_chain(cfg);
        adv::score_function target;
        if (s.target.rfind("marker:", 0) == 0) {
            const auto marker = static_cast<std::uint8_t>(std::stoul(s.target.substr(7), nullptr, 0) & 0xFF);
            target = [marker](byte_view b) { return adv::marker_density(b, marker); };
        } else {
            auto it = std::find_if(chain.stages.begin(), chain.stages.end(),
                                   [&](const stage& st) { return st.det->id() == s.target; });
            if (it == chain.stages.end()) throw config_error("attack target '" + s.target + "' is not an enabled detector");
            const std::string type = it->det->type();
            if (type == "report_model" || type == "external_score") {
                throw config_error("attack target '" + s.target + "' cannot score manipulated bytes (" + type + ")");
            }
            auto det = it->det;
            target = [det](byte_view b) {
                sample_input in;
                in.bytes.assign(b.begin(), b.end());
                auto r = det->score(in);
                // an unscorable candidate counts as detected
                return r.score.value_or(1.0);
            };
        }

        std::vector<labeled_sample> victims;
        std::vector<std::string> inputs;
        if (o.manifest) {
            for (auto& v : load_manifest(*o.manifest)) {
                if (v.truth == ground_truth::malware) victims.push_back(std::move(v));
            }
            inputs.push_back(o.manifest->generic_string());
        }
        for (const auto& f : o.samples) {
            victims.push_back(unlabeled(f));
            inputs.push_back(f.generic_string());
        }
        if (victims.empty()) {
            io.err << "error: attack needs samples or --manifest\n";
            return exit_usage;
        }

        struct outcome {
            std::optional<adv::attack_result> result;
            std::string failure;
        };
        std::vector<outcome> outcomes(victims.size());
        parallel_for(victims.size(), o.jobs.value_or(cfg.jobs), [&](std::size_t i) {
            try {
                const auto bytes = read_file(victims[i].path);
                outcomes[i].result = adv::gamma_attack(bytes, target, ac);
            } catch (const std::exception& e) {
                outcomes[i].failure = e.what();
            }
        });

        fs::create_directories(o.output_dir);
        json per_sample = json::array();
        std::vector<sample_input> adversarial;
        bool any_failed = false;
        for (std::size_t i = 0; i < victims.size(); ++i) {
            const std::string id = victims[i].id();
            if (!outcomes[i].result) {
                any_failed = true;
                per_sample.push_back({{"sample", id}, {"error", outcomes[i].failure}});
                continue;
            }
            const auto& r = *outcomes[i].result;
            const std::string adv_name = id + ".adv";
            write_file(o.output_dir / adv_name, r.best_candidate);
            write_json(o.output_dir / (id + ".trace.json"), adv::to_json(r));
            per_sample.push_back({{"sample", id},
                                  {"adversarial", adv_name},
                                  {"evaded", r.evaded},
                                  {"queries_used", r.queries_used},
                                  {"best_score", r.best_score},
                                  {"injected_bytes", r.injected_bytes}});
            sample_input in;
            in.id = adv_name;
            in.bytes = r.best_candidate;
            in.sha256 = sha256_hex(in.bytes);
            adversarial.push_back(std::move(in));
        }

        json transfer = json::array();
        if (!adversarial.empty()) {
            std::vector<adv::pipeline_variant> variants;
            for (const auto& [name, p] : chain.variants) variants.push_back({name, &p});
            for (const auto& t : adv::evaluate_transfer(adversarial, variants, o.jobs.value_or(cfg.jobs))) {
                transfer.push_back(adv::to_json(t));
            }
        }
        write_json(o.output_dir / "attack.json",
                   json{{"schema_version", 1},
                        {"mode", adv::to_string(ac.mode)},
                        {"lambda", ac.lambda},
                        {"query_budget", ac.query_budget},
                        {"target", s.target},
                        {"target_threshold", ac.target_threshold},
                        {"pool_size", ac.pool.size()},
                        {"samples", per_sample},
                        {"transfer", transfer}});
        write_run_manifest(o.output_dir / "attack.run.json", "attack", o.config, inputs, o.output_dir, ac.seed,
                           json{{"mode", adv::to_string(ac.mode)}, {"lambda", ac.lambda}, {"budget", ac.query_budget}});

        std::size_t evaded = 0;
        for (const auto& oc : outcomes) evaded += oc.result && oc.result->evaded;
        io.out << "attacked " << victims.size() << " sample(s), evaded " << evaded << "\n";
        return any_failed ? exit_partial : exit_ok;
    });
}

int run_fixtures(const fixtures_options& o, io_streams io) {
    return guarded(io, [&] {
        fixtures::demo_options d;
        d.seed = o.seed;
        d.benign = o.benign;
        d.malware = o.malware;
        const auto layout = fixtures::write_demo_corpus(o.output_dir, d);
        write_run_manifest(o.output_dir / "fixtures.run.json", "fixtures", {}, {}, o.output_dir, o.seed,
                           json{{"benign", o.benign}, {"malware", o.malware}});
        io.out << "config:   " << layout.config.generic_string() << "\n"
               << "manifest: " << layout.manifest.generic_string() << "\n"
               << "rules:    " << layout.rules_dir.generic_string() << "\n"
               << "models:   " << layout.models_dir.generic_string() << "\n"
               << "pool:     " << layout.pool_dir.generic_string() << "\n";
        return exit_ok;
    });
}

int run_rules_lint(const rules_lint_options& o, io_streams io) {
    return guarded(io, [&] {
        if (!fs::is_directory(o.rules_dir)) {
            io.err << "error: not a directory: " << o.rules_dir.generic_string() << "\n";
            return exit_usage;
        }
        std::size_t total = 0, failures = 0;
        for (const auto& file : sig::rule_files(o.rules_dir)) {
            try {
                const auto set = sig::parse_rules(read_text_file(file), file.generic_string());
                std::size_t filesize_rules = 0;
                for (const auto& r : set.rules) filesize_rules += r.cond && r.cond->uses_filesize();
                io.out << file.generic_string() << ": " << set.size() << " rule(s)";
                if (filesize_rules) io.out << ", " << filesize_rules << " with filesize conditions";
                io.out << "\n";
                total += set.size();
            } catch (const sig::rule_error& e) {
                ++failures;
                io.err << e.what() << " [" << sig::to_string(e.kind()) << "]\n";
            }
        }
        if (failures == 0) {
            try {
                (void)sig::load_rules_directory(o.rules_dir);
            } catch (const sig::rule_error& e) {
                ++failures;
                io.err << e.what() << " [" << sig::to_string(e.kind()) << "]\n";
            }
        }
        io.out << "total: " << total << " rule(s), " << failures << " problem(s)\n";
        return failures ? exit_usage : exit_ok;
    });
}

int run_features_dump(const features_dump_options& o, io_streams io) {
    return guarded(io, [&] {
        features::feature_config fc;
        if (o.config) fc = load_pipeline_config(*o.config).features;
        if (o.lenient) fc.lenient = true;
        const auto bytes = read_file(o.input);
        json j;
        try {
            j = features::to_json(features::extract_features(bytes, fc), fc);
        } catch (const features::feature_extraction_error& e) {
            io.err << "error: " << e.what() << "\n";
            return exit_partial;
        }
        j["input"] = o.input.filename().generic_string();
        j["sha256"] = sha256_hex(bytes);
        const auto text = j.dump(2) + "\n";
        if (o.output) {
            write_text(*o.output, text);
        } else {
            io.out << text;
        }
        return exit_ok;
    });
}

}  // namespace chainscan::cli
