#include "chainscan/behavior.hpp"

#include <doctest.h>

#include <cmath>

using namespace chainscan;
using namespace chainscan::behavior;

namespace {

models::report_model zero_model(std::size_t buckets = 32) {
    models::report_model m;
    m.buckets = buckets;
    m.weights.assign(buckets, 0.0);
    return m;
}

token_sequence tokens(std::vector<std::string> t) {
    token_sequence s;
    s.original_count = t.size();
    s.tokens = std::move(t);
    return s;
}

}  // namespace

TEST_SUITE("behavior_reports") {

TEST_CASE("loading reports") {
    const auto r = load_report(R"({"schema_version":1,"entry_points":[{"apis":[
        {"api_name":"CreateFileW","args":["C:\\x.txt", 3],"ret_val":"0x1c8"}]}],
        "file_events":["open C:\\x.txt", {"path":"C:\\y"}], "unknown_field": 1})");
    CHECK(r.api_count() == 1);
    CHECK(r.entry_points[0].apis[0].name == "CreateFileW");
    CHECK(r.entry_points[0].apis[0].args == std::vector<std::string>{"C:\\x.txt", "3"});
    CHECK(r.file_events.size() == 2);
    CHECK(r.status == emulation_status::ok);

    const auto failed = load_report(R"({"emulation_status":"failed","reason":"unsupported api"})");
    CHECK(failed.status == emulation_status::failed);
    CHECK(failed.reason == "unsupported api");
    CHECK_THROWS_AS(normalize_report(failed), report_unavailable);

    CHECK_THROWS_AS(load_report(R"({"entry_points":[{"apis":[)"), malformed_report);
    CHECK_THROWS_AS(load_report(R"({"emulation_status":"exploded"})"), malformed_report);
    CHECK_THROWS_AS(load_report(R"([1,2])"), malformed_report);
    CHECK_THROWS_AS(load_report_file("/nonexistent/x.report.json"), report_unavailable);
}

TEST_CASE("token normalization") {
    CHECK(normalize_token("0x7ffe0300") == "<addr>");
    CHECK(normalize_token("d41d8cd98f00b204e9800998ecf8427e") == "<hash>");
    CHECK(normalize_token("CreateFileW") == "createfilew");
    CHECK(normalize_token("0x1c8") == "0x1c8");
    CHECK(normalize_token("pid 1234567 at 0xDEADBEEF") == "pid <num> at <addr>");
    CHECK(normalize_token("sha1 da39a3ee5e6b4b0d3255bfef95601890afd80709") == "sha1 <hash>");
    CHECK(!matches_filters(normalize_token("0x7ffe0300 d41d8cd98f00b204e9800998ecf8427e 99999999")));
    CHECK(matches_filters("12345678"));
    CHECK(!matches_filters("12345"));

    const std::vector<std::regex> extra = {std::regex("c:\\\\users\\\\[a-z]+")};
    CHECK(normalize_token("C:\\Users\\Alice\\doc", extra, {"<user>"}) == "<user>\\doc");
}

TEST_CASE("report normalization order and cap") {
    const auto r = load_report(R"({"entry_points":[{"apis":[{"api_name":"A","args":["x",""],"ret_val":"1"}]},
        {"apis":[{"api_name":"B"}]}],"file_events":["f"],"registry_events":["r"],"network_events":["n"]})");
    const auto t = normalize_report(r);
    CHECK(t.tokens == std::vector<std::string>{"a", "x", "1", "b", "f", "r", "n"});
    CHECK(!t.truncated);
    normalize_config capped;
    capped.max_tokens = 3;
    const auto c = normalize_report(r, capped);
    CHECK(c.tokens.size() == 3);
    CHECK(c.truncated);
    CHECK(c.original_count == 7);
}

TEST_CASE("report scoring closed forms") {
    CHECK(report_score(tokens({"createfilew", "readfile"}), zero_model()) == 0.5);

    auto m = zero_model();
    m.weights[m.bucket_of("createfilew")] = 10.0;
    m.bias = -5.0;
    CHECK(std::abs(report_score(tokens({"createfilew"}), m) - 0.9933071490757153) < 1e-15);

    auto b = zero_model();
    b.bias = -2.0;
    CHECK(std::abs(report_score(tokens({}), b) - 0.11920292202211755) < 1e-15);

    auto bad = zero_model();
    bad.weights.pop_back();
    CHECK_THROWS_AS(report_score(tokens({}), bad), models::model_error);
}

}
