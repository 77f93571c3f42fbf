#include "chainscan/detectors.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace chainscan;

namespace {

sample_input sample(byte_vector bytes, std::string id = "s") {
    sample_input s;
    s.id = std::move(id);
    s.sha256 = sha256_hex(bytes);
    s.bytes = std::move(bytes);
    return s;
}

byte_vector valid_pe(std::uint8_t fill = 0x90) {
    pe::pe_spec spec;
    spec.sections.push_back({".text", byte_vector(512, fill), std::nullopt});
    return pe::build_minimal_pe(spec);
}

models::feature_model stump(const features::feature_config& c, int feature, double threshold, double left, double right) {
    models::tree_ensemble e;
    models::decision_tree t;
    t.nodes = {{feature, threshold, 1, 2, 0.0}, {-1, 0, -1, -1, left}, {-1, 0, -1, -1, right}};
    e.trees.push_back(t);
    return {e, c.dimension(), c.fingerprint()};
}

}  // namespace

TEST_SUITE("detectors") {

TEST_CASE("sha256 of known vectors") {
    CHECK(sha256_hex({}) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex(as_bytes("abc")) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("threshold is inclusive") {
    CHECK(apply_threshold("d", raw_score::of(0.5), 0.5, 0).kind == outcome_kind::malicious);
    CHECK(apply_threshold("d", raw_score::of(0.4999), 0.5, 0).kind == outcome_kind::benign);
    const auto e = apply_threshold("d", raw_score::failure(error_kind::io), 0.5, 0);
    CHECK(e.kind == outcome_kind::error);
    CHECK(e.error == error_kind::io);
    CHECK(error_kind_from_string("report_unavailable") == error_kind::report_unavailable);
    CHECK(!error_kind_from_string("bogus"));
}

TEST_CASE("signature detector is binary and never errors") {
    signature_detector d("sig", sig::parse_rules(R"(rule r { strings: $a = "evil" condition: $a })"));
    CHECK(d.score(sample(to_bytes("so evil"))).score == 1.0);
    CHECK(d.score(sample(to_bytes("fine"))).score == 0.0);
    CHECK(d.score(sample({})).score == 0.0);
    signature_detector empty("sig", {});
    CHECK(empty.score(sample(to_bytes("evil"))).score == 0.0);
    CHECK(d.analyze(sample(to_bytes("evil")), 0.5).kind == outcome_kind::malicious);
}

TEST_CASE("byte window looks only at the first MiB") {
    const auto h = byte_window_detector::window_histogram(byte_vector(1000, 7));
    CHECK(h.size() == 257);
    CHECK(h[7] == 1000.0 / (1 << 20));
    CHECK(h[256] == static_cast<double>((1 << 20) - 1000) / (1 << 20));

    models::byte_histogram_model m;
    m.weights[0x41] = 2.0;
    m.bias = -1.0;
    byte_window_detector d("bw", m);
    byte_vector big(2u << 20, 0x41);
    const auto before = d.score(sample(big));
    big[(1u << 20) + 1] = 0x00;
    CHECK(d.score(sample(big)).score == before.score);
    big[10] = 0x00;
    CHECK(d.score(sample(big)).score != before.score);

    byte_window_detector zero("bw", models::byte_histogram_model{});
    CHECK(zero.score(sample(to_bytes("anything"))).score == 0.5);
    CHECK(zero.score(sample({})).ok());
}

TEST_CASE("feature model detector") {
    features::feature_config c;
    feature_model_detector d("fm", stump(c, 0, 0.5, -2.0, 2.0), c);
    pe::pe_spec spec;
    spec.sections.push_back({".text", byte_vector(4096, 0x00), std::nullopt});
    const auto zeros = pe::build_minimal_pe(spec);
    // histogram[0] is the fraction of zero bytes; well above 0.5 here
    CHECK(std::abs(*d.score(sample(zeros)).score - 0.8807970779778823) < 1e-15);
    CHECK(d.score(sample(to_bytes("garbage"))).error == error_kind::parse);

    auto broken = valid_pe();
    broken.resize(broken.size() - 100);  // section payload now runs past the end of the file
    CHECK(d.score(sample(broken)).error == error_kind::feature);

    models::feature_model empty{models::tree_ensemble{}, c.dimension(), c.fingerprint()};
    feature_model_detector e("fm", empty, c);
    CHECK(e.score(sample(valid_pe())).score == 0.5);

    features::feature_config other;
    other.export_buckets = 64;
    CHECK_THROWS_AS(feature_model_detector("fm", stump(c, 0, 0.5, 0, 0), other), models::model_error);
}

TEST_CASE("report model detector") {
    models::report_model m;
    m.buckets = 16;
    m.weights.assign(16, 0.0);
    report_model_detector zero("rm", m);
    auto s = sample(valid_pe());
    CHECK(zero.score(s).error == error_kind::report_unavailable);
    s.report_text = R"({"entry_points":[{"apis":[{"api_name":"CreateFileW"}]}]})";
    CHECK(zero.score(s).score == 0.5);
    CHECK(zero.analyze(s, 0.70).kind == outcome_kind::benign);

    m.weights[m.bucket_of("createfilew")] = 20.0;
    report_model_detector hot("rm", m);
    CHECK(hot.analyze(s, 0.70).kind == outcome_kind::malicious);

    s.report_text = R"({"emulation_status":"failed","reason":"unsupported api"})";
    CHECK(hot.score(s).error == error_kind::report_unavailable);
    s.report_text = R"({"entry_points": [)";
    CHECK(hot.score(s).error == error_kind::parse);
    s.report_text.reset();
    s.report_path = "/nonexistent/r.report.json";
    CHECK(hot.score(s).error == error_kind::report_unavailable);
}

TEST_CASE("external scores") {
    const auto path = std::filesystem::temp_directory_path() / "chainscan_external.csv";
    std::ofstream(path) << "sha256,score\nAAAA,0.9\nbbbb,ERR\ncccc,1.5\n";
    auto scores = external_score_detector::load_manifest(path);
    std::filesystem::remove(path);
    external_score_detector d("ext", scores);
    sample_input s;
    s.sha256 = "aaaa";
    CHECK(d.score(s).score == 0.9);
    CHECK(d.analyze(s, 0.95).kind == outcome_kind::benign);
    s.sha256 = "bbbb";
    CHECK(d.score(s).error == error_kind::model);
    s.sha256 = "dddd";
    CHECK(d.score(s).error == error_kind::model);
    s.sha256 = "cccc";  // out of range
    CHECK(d.score(s).error == error_kind::model);
}

TEST_CASE("scripted and delayed detectors") {
    auto inner = std::make_shared<scripted_detector>(
        "x", std::unordered_map<std::string, raw_score>{{"a", raw_score::of(0.9)}}, raw_score::of(0.1));
    delayed_detector d(inner, std::chrono::microseconds(2000));
    sample_input s;
    s.id = "a";
    const auto o = d.analyze(s, 0.5);
    CHECK(o.kind == outcome_kind::malicious);
    CHECK(o.detector_id == "x");
    CHECK(o.elapsed >= 0.002);
    s.id = "b";
    CHECK(d.score(s).score == 0.1);
}

}
