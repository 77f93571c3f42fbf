#include "chainscan/fixtures.hpp"

#include "chainscan/features.hpp"
#include "chainscan/models.hpp"

#include <array>
#include <cstdio>
#include <sstream>

namespace chainscan::fixtures {

namespace {

double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::size_t below(std::mt19937_64& rng, std::size_t n) {
    return std::min(n - 1, static_cast<std::size_t>(unit(rng) * static_cast<double>(n)));
}

constexpr std::array<std::uint8_t, 12> code_alphabet{0x55, 0x8B, 0xEC, 0x83, 0xC4, 0x89,
                                                     0x45, 0xFC, 0xE8, 0x90, 0xC3, 0x33};

byte_vector code_bytes(std::mt19937_64& rng, std::size_t n, double marker_density) {
    byte_vector out(n);
    for (auto& b : out) {
        b = unit(rng) < marker_density ? demo_marker : code_alphabet[below(rng, code_alphabet.size())];
    }
    return out;
}

byte_vector text_blob(std::mt19937_64& rng, const std::vector<std::string>& strings, std::size_t n) {
    byte_vector out;
    while (out.size() < n) {
        const auto& s = strings[below(rng, strings.size())];
        out.insert(out.end(), s.begin(), s.end());
        out.push_back(0);
    }
    out.resize(n);
    return out;
}

byte_vector data_bytes(std::mt19937_64& rng, std::size_t n) {
    byte_vector out(n);
    for (auto& b : out) {
        auto v = static_cast<std::uint8_t>(rng() & 0xFF);
        b = v == demo_marker ? 0 : v;
    }
    return out;
}

std::string hex_word(std::mt19937_64& rng, std::size_t digits) {
    static constexpr char hex[] = "0123456789abcdef";
    std::string s;
    for (std::size_t i = 0; i < digits; ++i) s += hex[rng() & 0xF];
    return s;
}

nlohmann::json api(const std::string& name, std::vector<std::string> args, const std::string& ret) {
    return nlohmann::json{{"api_name", name}, {"args", std::move(args)}, {"ret_val", ret}};
}

const std::vector<std::string> benign_strings{"Copyright (c) Example Corp", "https://update.example.com/check",
                                              "Settings saved successfully", "C:\\Program Files\\Example\\app.ini",
                                              "Unable to open document"};
const std::vector<std::string> malware_strings{"http://203.0.113.7/gate.php",
                                               "HKEY_LOCAL_MACHINE\\Software\\Microsoft\\Windows\\Run",
                                               "cmd.exe /c del %s", "http://198.51.100.2/payload.bin",
                                               "C:\\Windows\\Temp\\svc.exe"};

}  // namespace

byte_vector make_sample(std::mt19937_64& rng, sample_kind kind, double marker_density) {
    const bool malicious = kind != sample_kind::benign;
    pe::pe_spec spec;
    spec.sections.push_back({".text", code_bytes(rng, 2048 + 512 * below(rng, 12), marker_density), std::nullopt});
    auto rdata = text_blob(rng, malicious ? malware_strings : benign_strings, 512 + 256 * below(rng, 4));
    if (kind == sample_kind::malware_with_signature) {
        std::string sig(demo_signature_text);
        std::copy(sig.begin(), sig.end(), rdata.begin() + 16);
    }
    spec.sections.push_back({".rdata", std::move(rdata), std::nullopt});
    spec.sections.push_back({".data", data_bytes(rng, 256 + 256 * below(rng, 4)), std::nullopt});
    if (malicious) {
        spec.imports = {{"KERNEL32.dll", {"VirtualAllocEx", "WriteProcessMemory", "CreateRemoteThread"}},
                        {"ADVAPI32.dll", {"RegSetValueExA"}}};
    } else {
        spec.imports = {{"KERNEL32.dll", {"GetModuleHandleA", "ExitProcess"}}, {"USER32.dll", {"MessageBoxA"}}};
    }
    spec.spare_section_slots = static_cast<std::uint32_t>(below(rng, 3));
    return pe::build_minimal_pe(spec);
}

byte_vector make_pool_file(std::mt19937_64& rng, std::size_t data_sections) {
    pe::pe_spec spec;
    spec.sections.push_back({".text", code_bytes(rng, 1024, 0.0), std::nullopt});
    for (std::size_t i = 0; i < data_sections; ++i) {
        char name[9];
        std::snprintf(name, sizeof name, ".d%02u", static_cast<unsigned>(i % 100));
        spec.sections.push_back({name, data_bytes(rng, 512 + 256 * below(rng, 10)), std::nullopt});
    }
    return pe::build_minimal_pe(spec);
}

nlohmann::json make_report(std::mt19937_64& rng, sample_kind kind) {
    nlohmann::json apis = nlohmann::json::array();
    auto addr = [&] { return "0x" + hex_word(rng, 8); };
    apis.push_back(api("GetModuleHandleA", {"kernel32.dll"}, addr()));
    // emulation noise that differs between runs of the same sample
    apis.push_back(api("GetCurrentThreadId", {}, std::to_string(1000 + below(rng, 9000))));
    apis.push_back(api("GetSystemTimeAsFileTime", {addr()}, "0"));
    nlohmann::json j{{"schema_version", 1}, {"emulation_status", "ok"}};
    if (kind == sample_kind::benign) {
        apis.push_back(api("MessageBoxA", {"0", "Settings saved successfully", "Example", "0"}, "1"));
        apis.push_back(api("CreateFileW", {"C:\\Users\\demo\\Documents\\report.docx", "0x80000000"}, addr()));
        j["file_events"] = {"C:\\Users\\demo\\Documents\\report.docx"};
        j["registry_events"] = nlohmann::json::array();
        j["network_events"] = nlohmann::json::array();
    } else {
        apis.push_back(api("VirtualAllocEx", {addr(), "0", "4096", "0x3000", "0x40"}, addr()));
        apis.push_back(api("WriteProcessMemory", {addr(), addr(), "4096"}, "1"));
        apis.push_back(api("CreateRemoteThread", {addr(), "0", "0", addr()}, addr()));
        j["file_events"] = {"C:\\Windows\\Temp\\svc.exe", hex_word(rng, 64) + ".bin"};
        j["registry_events"] = {{{"key", "HKEY_LOCAL_MACHINE\\Software\\Microsoft\\Windows\\Run"}, {"value", "svc"}}};
        j["network_events"] = {"203.0.113.7:443"};
    }
    j["entry_points"] = {{{"apis", apis}}};
    return j;
}

demo_layout write_demo_corpus(const std::filesystem::path& dir, const demo_options& options) {
    namespace fs = std::filesystem;
    demo_layout l;
    l.root = dir;
    l.samples_dir = dir / "samples";
    l.rules_dir = dir / "rules";
    l.models_dir = dir / "models";
    l.pool_dir = dir / "pool";
    l.config = dir / "config.json";
    l.manifest = dir / "manifest.csv";
    for (const auto& d : {l.samples_dir, l.rules_dir, l.models_dir, l.pool_dir}) fs::create_directories(d);

    std::mt19937_64 rng(options.seed);
    std::ostringstream manifest;
    manifest << "path,sha256,label,family,report_path\n";
    auto emit = [&](const std::string& name, const byte_vector& bytes, const char* label, const std::string& family,
                    const nlohmann::json* report) {
        write_file(l.samples_dir / name, bytes);
        std::string report_rel;
        if (report) {
            report_rel = "samples/" + name + ".report.json";
            const auto text = report->dump(2);
            write_file(dir / report_rel, as_bytes(text));
        }
        manifest << "samples/" << name << ',' << sha256_hex(bytes) << ',' << label << ',' << family << ','
                 << report_rel << '\n';
    };
    const nlohmann::json failed_report{{"schema_version", 1},
                                       {"emulation_status", "failed"},
                                       {"reason", "unsupported api"}};

    for (std::size_t i = 0; i < options.benign; ++i) {
        auto bytes = make_sample(rng, sample_kind::benign, 0.35 * unit(rng));
        auto report = make_report(rng, sample_kind::benign);
        const std::size_t r = below(rng, 20);
        const nlohmann::json* rep = r == 0 ? nullptr : (r == 1 ? &failed_report : &report);
        char name[32];
        std::snprintf(name, sizeof name, "benign_%03zu.exe", i);
        emit(name, bytes, "benign", "", rep);
    }
    static const std::array<const char*, 3> families{"alpha", "beta", "gamma"};
    for (std::size_t i = 0; i < options.malware; ++i) {
        const auto kind = below(rng, 10) < 3 ? sample_kind::malware_with_signature : sample_kind::malware;
        auto bytes = make_sample(rng, kind, 0.25 + 0.65 * unit(rng));
        auto report = make_report(rng, kind);
        const std::size_t r = below(rng, 20);
        const nlohmann::json* rep = r == 0 ? nullptr : (r == 1 ? &failed_report : &report);
        char name[32];
        std::snprintf(name, sizeof name, "malware_%03zu.exe", i);
        emit(name, bytes, "malware", families[i % families.size()], rep);
    }
    for (std::size_t i = 0; i < options.corrupt; ++i) {
        // truncated or overwritten headers: the feature stage cannot parse these
        auto bytes = make_sample(rng, i % 2 ? sample_kind::malware : sample_kind::benign, 0.3);
        if (i % 2 == 0) {
            bytes[0] = 'X';
        } else {
            bytes.resize(200);
        }
        char name[32];
        std::snprintf(name, sizeof name, "corrupt_%03zu.exe", i);
        auto report = make_report(rng, i % 2 ? sample_kind::malware : sample_kind::benign);
        emit(name, bytes, i % 2 ? "malware" : "benign", i % 2 ? "alpha" : "", &report);
    }
    const auto manifest_text = manifest.str();
    write_file(l.manifest, as_bytes(manifest_text));

    for (std::size_t i = 0; i < options.pool_files; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "pool_%02zu.exe", i);
        write_file(l.pool_dir / name, make_pool_file(rng, 10));
    }

    const std::string dropper = std::string("rule demo_dropper : dropper\n{\n    meta:\n        description = "
                                            "\"second-stage dropper marker\"\n    strings:\n        $a = \"") +
                                demo_signature_text + "\"\n    condition:\n        $a\n}\n";
    const std::string packer =
        "rule demo_small_packed\n{\n    strings:\n        $stub = { 60 E8 00 00 00 00 5D }\n"
        "    condition:\n        $stub and filesize < 64KB\n}\n";
    write_file(l.rules_dir / "dropper.yar", as_bytes(dropper));
    write_file(l.rules_dir / "packer.yar", as_bytes(packer));

    models::byte_histogram_model byte_model;
    byte_model.weights[demo_marker] = 1500.0;
    byte_model.bias = -3.0;
    const auto byte_text = models::to_json(byte_model).dump(2);
    write_file(l.models_dir / "byte_window.json", as_bytes(byte_text));

    const features::feature_config fc;
    const std::size_t http_index = features::histogram_dim + features::entropy_histogram_dim + 100;
    models::tree_ensemble ens;
    ens.bias = -0.5;
    models::decision_tree marker_tree;
    marker_tree.nodes = {{demo_marker, 0.15, 1, 2, 0.0}, {-1, 0, -1, -1, -1.5},
                         {demo_marker, 0.3, 3, 4, 0.0},  {-1, 0, -1, -1, 0.5},
                         {-1, 0, -1, -1, 2.0}};
    models::decision_tree url_tree;
    url_tree.nodes = {{static_cast<int>(http_index), 0.5, 1, 2, 0.0}, {-1, 0, -1, -1, -0.5}, {-1, 0, -1, -1, 1.0}};
    ens.trees = {marker_tree, url_tree};
    models::feature_model fm{ens, fc.dimension(), fc.fingerprint()};
    const auto feature_text = models::to_json(fm).dump(2);
    write_file(l.models_dir / "feature_model.json", as_bytes(feature_text));

    nlohmann::json report_model{{"schema_version", 1},
                                {"kind", "report_linear"},
                                {"buckets", 1024},
                                {"hash_seed", fnv1a64_offset_basis},
                                {"token_weights",
                                 {{"writeprocessmemory", 2.5},
                                  {"createremotethread", 2.5},
                                  {"virtualallocex", 1.5},
                                  {"messageboxa", -1.0},
                                  {"<hash>.bin", 0.5}}},
                                {"bias", -2.0}};
    const auto report_text = report_model.dump(2);
    write_file(l.models_dir / "report_model.json", as_bytes(report_text));

    nlohmann::json config{
        {"schema_version", 1},
        {"features", fc},
        {"normalization", {{"max_tokens", 4096}}},
        {"detectors",
         {{{"id", "signatures"}, {"type", "signature"}, {"rules_dir", "rules"}, {"threshold", 0.5}},
          {{"id", "byte_window"}, {"type", "byte_window"}, {"model_path", "models/byte_window.json"}, {"threshold", 0.5}},
          {{"id", "feature_model"},
           {"type", "feature_model"},
           {"model_path", "models/feature_model.json"},
           {"threshold", 0.82}},
          {{"id", "report_model"},
           {"type", "report_model"},
           {"model_path", "models/report_model.json"},
           {"threshold", 0.97}}}},
        {"error_policy", "errors_as_benign"},
        {"timing_enabled", false},
        {"jobs", 1},
        {"calibration", {{"research_space", {{"start", 0.44}, {"stop", 0.98}, {"step", 0.02}}},
                         {"split_fraction", 0.5},
                         {"seed", 0}}},
        {"attack",
         {{"mode", "section_injection"},
          {"lambda", 1e-6},
          {"query_budget", 100},
          {"population_size", 10},
          {"mutation_rate", 0.2},
          {"mutation_sigma", 0.15},
          {"elitism", 2},
          {"target_threshold", 0.5},
          {"seed", 0},
          {"pool_size", 75},
          {"pool_dir", "pool"},
          {"target", "feature_model"}}}};
    const auto config_text = config.dump(2);
    write_file(l.config, as_bytes(config_text));
    return l;
}

}  // namespace chainscan::fixtures
