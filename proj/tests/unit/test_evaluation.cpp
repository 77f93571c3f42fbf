#include "chainscan/evaluation.hpp"

#include <doctest.h>

#include <random>
#include <set>

using namespace chainscan;
using namespace chainscan::eval;

namespace {

std::vector<metric_input> table(int tp, int fn, int fp, int tn) {
    std::vector<metric_input> v;
    for (int i = 0; i < tp; ++i) v.push_back({ground_truth::malware, "f", label::malicious, false});
    for (int i = 0; i < fn; ++i) v.push_back({ground_truth::malware, "f", label::benign, false});
    for (int i = 0; i < fp; ++i) v.push_back({ground_truth::benign, "", label::malicious, false});
    for (int i = 0; i < tn; ++i) v.push_back({ground_truth::benign, "", label::benign, false});
    return v;
}

labeled_sample labeled(const std::string& name, ground_truth t, const std::string& family) {
    labeled_sample s;
    s.path = name;
    s.truth = t;
    s.family = family;
    return s;
}

cache_entry scored(double s) { return {s, std::nullopt, 0.0}; }

}  // namespace

TEST_SUITE("evaluation") {

TEST_CASE("closed-form metrics") {
    const auto m = compute_metrics(table(9, 1, 1, 9), error_policy::errors_as_benign);
    CHECK(m.tpr == 0.9);
    CHECK(m.fpr == 0.1);
    CHECK(m.f1 == 0.9);
    CHECK(m.er == 0.0);
    const auto perfect = compute_metrics(table(5, 0, 0, 5), error_policy::errors_as_benign);
    CHECK(perfect.tpr == 1.0);
    CHECK(perfect.fpr == 0.0);
    CHECK(perfect.f1 == 1.0);
    const auto no_malware = compute_metrics(table(0, 0, 1, 3), error_policy::errors_as_benign);
    CHECK(!no_malware.tpr);
    CHECK(no_malware.fpr == 0.25);
    CHECK(!tpr(confusion{}));
    CHECK(!f1(confusion{}));
}

TEST_CASE("error policy flips exactly the errored samples") {
    auto v = table(0, 0, 0, 10);
    v[0].had_error = v[1].had_error = true;
    const auto b = compute_metrics(v, error_policy::errors_as_benign);
    const auto m = compute_metrics(v, error_policy::errors_as_malware);
    CHECK(b.fpr == 0.0);
    CHECK(m.fpr == 0.2);
    CHECK(b.er == 0.2);
    CHECK(m.counts.errors == 2);
}

TEST_CASE("per-family TPR and text table") {
    auto v = table(3, 1, 0, 2);
    v[0].family = "emotet";
    const auto m = compute_metrics(v, error_policy::errors_as_benign);
    CHECK(m.per_family_tpr.at("emotet") == 1.0);
    CHECK(m.per_family_tpr.at("f") == 2.0 / 3);
    const auto text = format_metrics_table(std::vector<metrics_report>{m});
    CHECK(text.find("errors_as_benign") != std::string::npos);
    CHECK(to_json(m)["counts"]["tp"] == 3);
}

TEST_CASE("verdict-based metrics check sample ids") {
    std::vector<labeled_sample> samples{labeled("a", ground_truth::malware, "")};
    std::vector<pipeline_verdict> verdicts(1);
    verdicts[0].sample_id = "b";
    CHECK_THROWS_AS(compute_metrics(verdicts, samples, error_policy::errors_as_benign), evaluation_error);
    verdicts[0].sample_id = "a";
    verdicts[0].final_label = label::malicious;
    CHECK(compute_metrics(verdicts, samples, error_policy::errors_as_benign).tpr == 1.0);
}

TEST_CASE("mean detection time and ADR") {
    const auto ones = mean_detection_time(std::vector<double>{1, 1, 1});
    CHECK(ones.mean == 1.0);
    CHECK(ones.stddev == 0.0);
    const auto two = mean_detection_time(std::vector<double>{1, 3});
    CHECK(two.mean == 2.0);
    CHECK(two.stddev == 1.0);
    CHECK_THROWS_AS(mean_detection_time(std::vector<double>{}), evaluation_error);

    std::vector<pipeline_verdict> v(388);
    for (std::size_t i = 0; i < 334; ++i) v[i].final_label = label::malicious;
    CHECK(adversarial_detection_rate(v, error_policy::errors_as_benign) == 334.0 / 388);
    v[350].had_error = true;
    CHECK(adversarial_detection_rate(v, error_policy::errors_as_malware) == 335.0 / 388);
    CHECK_THROWS_AS(adversarial_detection_rate({}, error_policy::errors_as_benign), evaluation_error);
}

TEST_CASE("stratified split") {
    std::vector<labeled_sample> samples;
    for (int i = 0; i < 100; ++i)
        samples.push_back(labeled("s" + std::to_string(i), ground_truth::malware, i < 50 ? "a" : "b"));
    const auto half = stratified_split(samples, 0.5, 1);
    CHECK(half.validation.size() == 50);
    std::size_t in_a = 0;
    for (auto i : half.validation) in_a += samples[i].family == "a";
    CHECK(in_a == 25);
    const auto most = stratified_split(samples, 0.8, 1);
    CHECK(most.validation.size() == 80);
    CHECK(most.test.size() == 20);

    std::set<std::size_t> all(half.validation.begin(), half.validation.end());
    all.insert(half.test.begin(), half.test.end());
    CHECK(all.size() == 100);
    CHECK(stratified_split(samples, 0.5, 1).validation == half.validation);
    CHECK(stratified_split(samples, 0.5, 2).validation != half.validation);

    std::vector<labeled_sample> odd;
    for (int i = 0; i < 7; ++i) odd.push_back(labeled("o" + std::to_string(i), ground_truth::benign, ""));
    const auto o = stratified_split(odd, 0.5, 3);
    CHECK(std::max(o.validation.size(), o.test.size()) - std::min(o.validation.size(), o.test.size()) <= 1);

    std::vector<labeled_sample> single{labeled("x", ground_truth::benign, "")};
    CHECK(stratified_split(single, 0.5, 0).notes.size() == 1);
    CHECK_THROWS_AS(stratified_split(samples, 1.5, 0), evaluation_error);
}

TEST_CASE("research space") {
    const auto r = default_research_space();
    REQUIRE(r.size() == 28);
    CHECK(r.front() == 0.44);
    CHECK(r.back() == 0.98);
    CHECK(r[1] == 0.46);
}

TEST_CASE("replay applies halting to cached rows") {
    score_cache c;
    c.detector_ids = {"a", "b"};
    c.sample_ids = {"x"};
    c.rows = {{{std::nullopt, error_kind::parse, 0.0}, scored(0.7)}};
    c.validate();
    const std::vector<double> low{0.5, 0.5}, high{0.5, 0.8};
    const auto r1 = replay(c, 0, low);
    CHECK(r1.final_label == label::malicious);
    CHECK(r1.decided_by == "b");
    CHECK(!r1.had_error);
    CHECK(r1.invoked == 2);
    const auto r2 = replay(c, 0, high);
    CHECK(r2.final_label == label::benign);
    CHECK(r2.had_error);

    c.rows[0].pop_back();
    CHECK_THROWS_AS(c.validate(), evaluation_error);
}

TEST_CASE("grid search matches brute force on a small cache") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    score_cache c;
    c.detector_ids = {"a", "b", "s"};
    std::vector<ground_truth> truth;
    for (int i = 0; i < 60; ++i) {
        const bool mal = i % 2 == 0;
        truth.push_back(mal ? ground_truth::malware : ground_truth::benign);
        c.sample_ids.push_back("x" + std::to_string(i));
        std::vector<cache_entry> row;
        row.push_back(i % 11 == 0 ? cache_entry{std::nullopt, error_kind::feature, 0.0}
                                  : scored(mal ? 0.3 + 0.7 * u(rng) : 0.7 * u(rng)));
        row.push_back(scored(mal ? 0.4 + 0.6 * u(rng) : 0.6 * u(rng)));
        row.push_back(scored(i % 13 == 0 ? 1.0 : 0.0));
        c.rows.push_back(row);
    }
    calibration_options o;
    o.research_space = {0.9, 0.5, 0.6, 0.7, 0.5};  // unsorted, duplicated
    o.fixed["s"] = 0.5;
    o.keep_grid = true;
    const auto r = grid_search(c, truth, o);
    CHECK(r.combinations == 16);
    CHECK(r.grid.size() == 16);
    CHECK(r.grid[1].thresholds == std::vector<double>{0.5, 0.6, 0.5});

    // independent scan: recount every combination
    double best_f1 = -1, best_fpr = 2;
    std::vector<double> best;
    for (double ta : {0.5, 0.6, 0.7, 0.9}) {
        for (double tb : {0.5, 0.6, 0.7, 0.9}) {
            std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
            for (std::size_t i = 0; i < c.rows.size(); ++i) {
                bool hit = false;
                const double th[3] = {ta, tb, 0.5};
                for (std::size_t d = 0; d < 3 && !hit; ++d) hit = c.rows[i][d].score && *c.rows[i][d].score >= th[d];
                const bool mal = truth[i] == ground_truth::malware;
                (mal ? (hit ? tp : fn) : (hit ? fp : tn)) += 1;
            }
            const double f = 2.0 * tp / (2.0 * tp + fp + fn);
            const double fr = static_cast<double>(fp) / (fp + tn);
            if (f > best_f1 || (f == best_f1 && fr < best_fpr)) {
                best_f1 = f;
                best_fpr = fr;
                best = {ta, tb, 0.5};
            }
        }
    }
    CHECK(r.best_thresholds == best);
    CHECK(*r.best.f1 == best_f1);

    o.jobs = 4;
    const auto parallel = grid_search(c, truth, o);
    CHECK(parallel.best_thresholds == r.best_thresholds);
}

TEST_CASE("one-detector grid over a separable set") {
    score_cache c;
    c.detector_ids = {"a"};
    c.sample_ids = {"m", "b"};
    c.rows = {{scored(0.9)}, {scored(0.1)}};
    calibration_options o;
    o.research_space = {0.5};
    const auto r = grid_search(c, std::vector<ground_truth>{ground_truth::malware, ground_truth::benign}, o);
    CHECK(r.best_thresholds == std::vector<double>{0.5});
    CHECK(r.best.f1 == 1.0);
}

TEST_CASE("score cache from a live pipeline") {
    auto a = std::make_shared<scripted_detector>(
        "a", std::unordered_map<std::string, raw_score>{{"m", raw_score::of(0.9)}}, raw_score::of(0.1));
    const pipeline p({{a}});
    std::vector<sample_input> samples(2);
    samples[0].id = "m";
    samples[1].id = "b";
    const auto c = build_score_cache(p, samples);
    CHECK(c.rows.size() * c.rows[0].size() == 2);
    CHECK(to_json(c, false) == to_json(build_score_cache(p, samples), false));
    const auto io = build_score_cache(
        p, 1, [](std::size_t) -> sample_input { throw std::runtime_error("x"); }, [](std::size_t) { return "z"; });
    CHECK(io.rows[0][0].error == error_kind::io);
}

}
