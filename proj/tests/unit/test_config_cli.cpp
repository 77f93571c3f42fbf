#include "chainscan/config.hpp"
#include "chainscan/dataset.hpp"
#include "chainscan/fixtures.hpp"
#include "commands.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace chainscan;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::vector<std::string> lines_of(const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::string> out;
    for (std::string line; std::getline(in, line);) out.push_back(line);
    return out;
}

}  // namespace

TEST_SUITE("config_and_cli") {

TEST_CASE("demo config loads into the default chain") {
    const auto dir = fresh_dir("chainscan_cfg_demo");
    const auto layout = fixtures::write_demo_corpus(dir);
    const auto c = load_pipeline_config(layout.config);
    const auto chain = load_chain(c);
    CHECK(chain.full.stage_ids() ==
          std::vector<std::string>{"signatures", "byte_window", "feature_model", "report_model"});
    const auto variants = c.effective_variants();
    CHECK(variants.count("full") == 1);
    CHECK(variants.at("no_dynamic") == std::vector<std::string>{"signatures", "byte_window", "feature_model"});
    CHECK(variants.at("no_signature") == std::vector<std::string>{"byte_window", "feature_model", "report_model"});
    CHECK(chain.variants.size() == 3);

    const auto round = parse_pipeline_config(to_json(c, dir), dir);
    CHECK(round.detectors.size() == c.detectors.size());
    CHECK(round.detectors[2].model_path == c.detectors[2].model_path);
    CHECK(round.calibration.research_space == c.calibration.research_space);
    fs::remove_all(dir);
}

TEST_CASE("config errors") {
    const fs::path base = "/tmp";
    CHECK_THROWS_AS(parse_pipeline_config(nlohmann::json{{"schema_version", 2}}, base), config_error);
    CHECK_THROWS_AS(parse_pipeline_config(nlohmann::json{{"schema_version", 1}, {"detectors", {{{"id", "x"}, {"type", "magic"}}}}}, base),
                    config_error);
    auto missing_model = nlohmann::json{{"schema_version", 1},
                                        {"detectors", {{{"id", "f"}, {"type", "feature_model"}, {"model_path", "nope.json"}}}}};
    CHECK_THROWS_AS(build_stages(parse_pipeline_config(missing_model, base)), config_error);
    auto range = nlohmann::json{{"schema_version", 1},
                                {"detectors", {{{"id", "s"}, {"type", "signature"}, {"rules_dir", "."}}}},
                                {"calibration", {{"research_space", {{"start", 0.44}, {"stop", 0.98}, {"step", 0.02}}}}}};
    const auto c = parse_pipeline_config(range, base);
    CHECK(c.calibration.research_space == eval::default_research_space());
}

TEST_CASE("scan reports io failures with exit code 2") {
    const auto dir = fresh_dir("chainscan_cli_scan");
    const auto layout = fixtures::write_demo_corpus(dir);
    std::ostringstream out, err;
    cli::scan_options o;
    o.config = layout.config;
    o.files = {dir / "samples" / "does_not_exist.exe"};
    o.output = dir / "v.jsonl";
    CHECK(cli::run_scan(o, {out, err}) == cli::exit_partial);
    const auto rows = lines_of(o.output);
    REQUIRE(rows.size() == 1);
    const auto v = nlohmann::json::parse(rows[0]);
    CHECK(v["io_error"] == true);
    CHECK(v["final_label"] == "benign");

    // a benign fixture traverses every module; a signature fixture stops at the first
    std::mt19937_64 rng(1);
    write_file(dir / "benign.exe", fixtures::make_sample(rng, fixtures::sample_kind::benign, 0.0));
    write_file(dir / "dropper.exe", fixtures::make_sample(rng, fixtures::sample_kind::malware_with_signature, 0.0));
    o.files = {dir / "benign.exe", dir / "dropper.exe"};
    CHECK(cli::run_scan(o, {out, err}) == cli::exit_ok);
    const auto two = lines_of(o.output);
    REQUIRE(two.size() == 2);
    const auto b = nlohmann::json::parse(two[0]);
    const auto d = nlohmann::json::parse(two[1]);
    CHECK(d["final_label"] == "malicious");
    CHECK(d["decided_by"] == "signatures");
    CHECK(d["modules"].size() == 1);
    CHECK(b["modules"].size() == 4);
    fs::remove_all(dir);
}

TEST_CASE("rules-lint flags broken files") {
    const auto dir = fresh_dir("chainscan_cli_lint");
    std::ofstream(dir / "ok.yar") << "rule a { condition: filesize < 10KB }";
    std::ofstream(dir / "bad.yar") << "rule b { condition: $x }";
    std::ostringstream out, err;
    CHECK(cli::run_rules_lint({dir}, {out, err}) == cli::exit_usage);
    CHECK(out.str().find("1 with filesize") != std::string::npos);
    CHECK(err.str().find("undeclared_identifier") != std::string::npos);
    fs::remove(dir / "bad.yar");
    std::ostringstream out2, err2;
    CHECK(cli::run_rules_lint({dir}, {out2, err2}) == cli::exit_ok);
    fs::remove_all(dir);
}

TEST_CASE("evaluate and calibrate write their artifacts") {
    const auto dir = fresh_dir("chainscan_cli_eval");
    const auto layout = fixtures::write_demo_corpus(dir / "demo");
    std::ostringstream out, err;
    cli::evaluate_options e;
    e.manifest = layout.manifest;
    e.config = layout.config;
    e.output_dir = dir / "eval";
    CHECK(cli::run_evaluate(e, {out, err}) == cli::exit_ok);
    const auto metrics = nlohmann::json::parse(read_text_file(dir / "eval" / "metrics.json"));
    CHECK(metrics.is_object());
    CHECK(fs::exists(dir / "eval" / "verdicts.jsonl"));
    CHECK(fs::exists(dir / "eval" / "timing.json"));

    cli::calibrate_options c;
    c.manifest = layout.manifest;
    c.config = layout.config;
    c.output_dir = dir / "cal";
    c.write_grid = true;
    CHECK(cli::run_calibrate(c, {out, err}) == cli::exit_ok);
    const auto cal = nlohmann::json::parse(read_text_file(dir / "cal" / "calibration.json"));
    CHECK(cal["combinations"] == 21952);
    CHECK(lines_of(dir / "cal" / "grid.csv").size() == 21953);
    // the emitted config loads and scans
    const auto calibrated = load_pipeline_config(dir / "cal" / "config.calibrated.json");
    const auto p = build_pipeline(calibrated);
    const auto samples = load_manifest(layout.manifest);
    CHECK(p.analyze(load_sample(samples[0])).module_outcomes.size() >= 1);
    fs::remove_all(dir);
}

TEST_CASE("features-dump rejects corrupt input unless lenient") {
    const auto dir = fresh_dir("chainscan_cli_dump");
    std::ofstream(dir / "junk.bin") << "no headers here";
    std::ostringstream out, err;
    cli::features_dump_options o;
    o.input = dir / "junk.bin";
    CHECK(cli::run_features_dump(o, {out, err}) == cli::exit_partial);
    o.lenient = true;
    std::ostringstream out2;
    CHECK(cli::run_features_dump(o, {out2, err}) == cli::exit_ok);
    CHECK(nlohmann::json::parse(out2.str())["dimension"] == 2303);
    fs::remove_all(dir);
}

}
