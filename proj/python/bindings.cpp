// chainscan - sequential malware detection pipeline
// Python bindings: PE building and manipulation, features, signatures,
// pipeline scanning from a config file, and metrics.

#include "chainscan/adversarial.hpp"
#include "chainscan/config.hpp"
#include "chainscan/dataset.hpp"
#include "chainscan/evaluation.hpp"
#include "chainscan/features.hpp"
#include "chainscan/fixtures.hpp"
#include "chainscan/pe_format.hpp"
#include "chainscan/signature.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <memory>
#include <string>

namespace py = pybind11;
using namespace chainscan;

namespace {

byte_vector to_vec(const py::bytes& b) {
    std::string s = b;
    return to_bytes(s);
}

py::bytes to_py(byte_view v) {
    return py::bytes(reinterpret_cast<const char*>(v.data()), v.size());
}

// JSON crosses the boundary as text; the Python side decodes it.
py::object json_to_py(const nlohmann::json& j) {
    return py::module_::import("json").attr("loads")(j.dump());
}

// A loaded pipeline plus the config it came from.
struct scanner {
    pipeline_config config;
    std::shared_ptr<pipeline> chain;
};

}  // namespace

PYBIND11_MODULE(_chainscan, m) {
    m.doc() = "Sequential malware detection pipeline";

    py::register_exception<pe::pe_error>(m, "PEError", PyExc_ValueError);
    py::register_exception<sig::rule_error>(m, "RuleError", PyExc_ValueError);
    py::register_exception<config_error>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<features::feature_extraction_error>(m, "FeatureError", PyExc_ValueError);

    m.def("sha256", [](const py::bytes& b) { return sha256_hex(to_vec(b)); });

    m.def(
        "build_pe",
        [](const std::vector<std::pair<std::string, py::bytes>>& sections, const py::bytes& overlay, bool pe32_plus) {
            pe::pe_spec spec;
            for (const auto& [name, content] : sections) spec.sections.push_back({name, to_vec(content), std::nullopt});
            spec.overlay = to_vec(overlay);
            spec.pe32_plus = pe32_plus;
            return to_py(pe::build_minimal_pe(spec));
        },
        py::arg("sections"), py::arg("overlay") = py::bytes(), py::arg("pe32_plus") = false);

    m.def(
        "parse_pe",
        [](const py::bytes& b) {
            auto pe = pe::parse_pe(to_vec(b));
            py::list sections;
            for (const auto& s : pe.sections()) {
                py::dict d;
                d["name"] = s.name_string();
                d["virtual_address"] = s.virtual_address;
                d["virtual_size"] = s.virtual_size;
                d["raw_offset"] = s.raw_offset;
                d["raw_size"] = s.raw_size;
                d["characteristics"] = s.characteristics;
                d["payload"] = to_py(pe.section_payload(s));
                sections.append(d);
            }
            py::dict out;
            out["machine"] = pe.nt().machine;
            out["pe32_plus"] = pe.nt().is_pe32_plus();
            out["entry_point"] = pe.nt().entry_point_rva;
            out["size_of_image"] = pe.nt().size_of_image;
            out["sections"] = sections;
            out["overlay"] = to_py(pe.overlay());
            return out;
        },
        py::arg("data"));

    m.def(
        "inject_section",
        [](const py::bytes& b, const std::string& name, const py::bytes& content) {
            return to_py(pe::inject_section(to_vec(b), name, to_vec(content)));
        },
        py::arg("data"), py::arg("name"), py::arg("content"));

    m.def(
        "append_padding",
        [](const py::bytes& b, const py::bytes& content) { return to_py(pe::append_padding(to_vec(b), to_vec(content))); },
        py::arg("data"), py::arg("content"));

    m.def("byte_histogram", [](const py::bytes& b) { return features::byte_histogram(to_vec(b)); });
    m.def(
        "byte_entropy_histogram",
        [](const py::bytes& b, std::size_t window, std::size_t step) {
            return features::byte_entropy_histogram(to_vec(b), window, step);
        },
        py::arg("data"), py::arg("window") = 2048, py::arg("step") = 1024);

    m.def(
        "extract_features",
        [](const py::bytes& b, bool lenient) {
            features::feature_config c;
            c.lenient = lenient;
            return features::extract_features(to_vec(b), c).values;
        },
        py::arg("data"), py::arg("lenient") = false);
    m.def("feature_dimension", [] { return features::feature_config{}.dimension(); });

    m.def(
        "match_rules",
        [](const std::string& source, const py::bytes& b) {
            auto rules = sig::parse_rules(source);
            return sig::match_rules(rules, to_vec(b)).fired_rules;
        },
        py::arg("rules"), py::arg("data"));

    py::class_<scanner>(m, "Scanner")
        .def(py::init([](const std::filesystem::path& config_path) {
                 auto c = load_pipeline_config(config_path);
                 auto p = std::make_shared<pipeline>(build_pipeline(c));
                 return scanner{std::move(c), std::move(p)};
             }),
             py::arg("config"))
        .def_property_readonly("stages", [](const scanner& s) { return s.chain->stage_ids(); })
        .def(
            "scan",
            [](const scanner& s, const py::bytes& b, const std::string& sample_id, std::optional<std::string> report) {
                sample_input in;
                in.id = sample_id;
                in.bytes = to_vec(b);
                in.sha256 = sha256_hex(in.bytes);
                in.report_text = std::move(report);
                pipeline_verdict v;
                {
                    py::gil_scoped_release release;
                    v = s.chain->analyze(in);
                }
                return json_to_py(to_json(v));
            },
            py::arg("data"), py::arg("sample_id") = "sample", py::arg("report") = std::nullopt)
        .def(
            "evaluate",
            [](const scanner& s, const std::filesystem::path& manifest) {
                auto samples = load_manifest(manifest);
                std::vector<pipeline_verdict> verdicts;
                {
                    py::gil_scoped_release release;
                    verdicts = s.chain->analyze_batch(
                        samples.size(), [&](std::size_t i) { return load_sample(samples[i]); },
                        [&](std::size_t i) { return samples[i].id(); }, s.config.jobs);
                }
                py::dict out;
                for (auto policy : {error_policy::errors_as_benign, error_policy::errors_as_malware})
                    out[to_string(policy)] = json_to_py(eval::to_json(eval::compute_metrics(verdicts, samples, policy)));
                return out;
            },
            py::arg("manifest"));

    m.def(
        "metrics",
        [](std::uint64_t tp, std::uint64_t fp, std::uint64_t tn, std::uint64_t fn) {
            eval::confusion c{tp, fp, tn, fn, 0};
            py::dict out;
            out["tpr"] = eval::tpr(c);
            out["fpr"] = eval::fpr(c);
            out["f1"] = eval::f1(c);
            return out;
        },
        py::arg("tp"), py::arg("fp"), py::arg("tn"), py::arg("fn"));

    m.def(
        "write_demo_corpus",
        [](const std::filesystem::path& dir, std::uint64_t seed) {
            fixtures::demo_options o;
            o.seed = seed;
            auto layout = fixtures::write_demo_corpus(dir, o);
            py::dict out;
            out["config"] = layout.config;
            out["manifest"] = layout.manifest;
            out["rules_dir"] = layout.rules_dir;
            out["pool_dir"] = layout.pool_dir;
            return out;
        },
        py::arg("dir"), py::arg("seed") = 7);

    m.def("marker_density", [](const py::bytes& b, std::uint8_t marker) {
        auto v = to_vec(b);
        return adv::marker_density(v, marker);
    });
}
