// chainscan - sequential malware detection pipeline
// Command-line entry point.

#include "commands.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

template <typename T>
void optional_flag(CLI::App* app, const std::string& name, std::optional<T>& target, const std::string& help) {
    app->add_option_function<T>(name, [&target](const T& v) { target = v; }, help);
}

}  // namespace

int main(int argc, char** argv) {
    using namespace chainscan::cli;
    CLI::App app{"chainscan: sequential malware detection pipeline"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "chainscan 1.0.0");
    // help_all_flag lists every subcommand's options at once
    app.set_help_all_flag("--help-all", "Expand help for all subcommands");

    scan_options scan;
    std::filesystem::path scan_manifest;
    auto* scan_cmd = app.add_subcommand("scan", "Run the pipeline over files or a manifest; JSON-lines verdicts");
    scan_cmd->add_option("files", scan.files, "Sample files");
    scan_cmd->add_option("-m,--manifest", scan_manifest, "Dataset manifest CSV");
    scan_cmd->add_option("-c,--config", scan.config, "Pipeline config")->required();
    scan_cmd->add_option("-o,--output", scan.output, "Verdicts file (stdout when omitted)");
    optional_flag(scan_cmd, "-j,--jobs", scan.jobs, "Worker threads");

    evaluate_options evaluate;
    auto* eval_cmd = app.add_subcommand("evaluate", "Metrics under both error policies for a labeled manifest");
    eval_cmd->add_option("-m,--manifest", evaluate.manifest, "Dataset manifest CSV")->required();
    eval_cmd->add_option("-c,--config", evaluate.config, "Pipeline config")->required();
    eval_cmd->add_option("-o,--output-dir", evaluate.output_dir, "Output directory")->required();
    optional_flag(eval_cmd, "-j,--jobs", evaluate.jobs, "Worker threads");

    calibrate_options calibrate;
    auto* cal_cmd = app.add_subcommand("calibrate", "Grid-search detector thresholds on a validation split");
    cal_cmd->add_option("-m,--manifest", calibrate.manifest, "Dataset manifest CSV")->required();
    cal_cmd->add_option("-c,--config", calibrate.config, "Pipeline config")->required();
    cal_cmd->add_option("-o,--output-dir", calibrate.output_dir, "Output directory")->required();
    optional_flag(cal_cmd, "--split", calibrate.split_fraction, "Validation fraction (overrides config)");
    optional_flag(cal_cmd, "--seed", calibrate.seed, "Split seed (overrides config)");
    cal_cmd->add_flag("--write-grid", calibrate.write_grid, "Persist every grid point to grid.csv");
    optional_flag(cal_cmd, "-j,--jobs", calibrate.jobs, "Worker threads");

    attack_options attack;
    std::filesystem::path attack_manifest;
    auto* attack_cmd = app.add_subcommand("attack", "Genetic evasion attack with benign section injection or padding");
    attack_cmd->add_option("samples", attack.samples, "Malware samples");
    attack_cmd->add_option("-m,--manifest", attack_manifest, "Attack every malware row of a manifest");
    attack_cmd->add_option("-c,--config", attack.config, "Pipeline config")->required();
    attack_cmd->add_option("-o,--output-dir", attack.output_dir, "Output directory")->required();
    optional_flag(attack_cmd, "--mode", attack.mode, "section_injection or padding");
    optional_flag(attack_cmd, "--lambda", attack.lambda, "Size regularization per injected byte");
    optional_flag(attack_cmd, "--budget", attack.budget, "Query budget");
    optional_flag(attack_cmd, "--seed", attack.seed, "Attack seed");
    optional_flag(attack_cmd, "--target", attack.target, "Detector id or marker:<byte>");
    optional_flag(attack_cmd, "--pool-dir", attack.pool_dir, "Benign files to harvest sections from");
    optional_flag(attack_cmd, "-j,--jobs", attack.jobs, "Worker threads");

    fixtures_options fixtures;
    auto* fix_cmd = app.add_subcommand("fixtures", "Write the deterministic demo corpus");
    fix_cmd->add_option("-o,--output-dir", fixtures.output_dir, "Output directory")->required();
    fix_cmd->add_flag("--demo", "Demo corpus (the only corpus kind)");
    fix_cmd->add_option("--seed", fixtures.seed, "Generator seed");
    fix_cmd->add_option("--benign", fixtures.benign, "Benign samples");
    fix_cmd->add_option("--malware", fixtures.malware, "Malware samples");

    rules_lint_options lint;
    auto* lint_cmd = app.add_subcommand("rules-lint", "Parse a rules directory and report counts and problems");
    lint_cmd->add_option("rules_dir", lint.rules_dir, "Rules directory")->required();

    features_dump_options dump;
    auto* dump_cmd = app.add_subcommand("features-dump", "Print the named feature spans of one file as JSON");
    dump_cmd->add_option("input", dump.input, "Input file")->required();
    optional_flag(dump_cmd, "-c,--config", dump.config, "Pipeline config (feature settings)");
    optional_flag(dump_cmd, "-o,--output", dump.output, "Output file (stdout when omitted)");
    dump_cmd->add_flag("--lenient", dump.lenient, "Zero the parsed groups instead of failing");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_usage;
    }

    io_streams io{std::cout, std::cerr};
    if (*scan_cmd) {
        if (!scan_manifest.empty()) scan.manifest = scan_manifest;
        return run_scan(scan, io);
    }
    if (*eval_cmd) return run_evaluate(evaluate, io);
    if (*cal_cmd) return run_calibrate(calibrate, io);
    if (*attack_cmd) {
        if (!attack_manifest.empty()) attack.manifest = attack_manifest;
        return run_attack(attack, io);
    }
    if (*fix_cmd) return run_fixtures(fixtures, io);
    if (*lint_cmd) return run_rules_lint(lint, io);
    return run_features_dump(dump, io);
}
