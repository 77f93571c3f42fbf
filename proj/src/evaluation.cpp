#include "chainscan/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

namespace chainscan::eval {

namespace {

std::optional<double> ratio(std::uint64_t num, std::uint64_t den) {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
}

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

std::string fmt_rate(const std::optional<double>& v) {
    if (!v) return "n/a";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", *v);
    return buf;
}

/// Uniform draw in [0, bound) without modulo bias.
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t bound) {
    const std::uint64_t limit = (0 - bound) % bound;
    for (;;) {
        std::uint64_t r = rng();
        if (r >= limit) return r % bound;
    }
}

/// a better than b under the calibration total order (index breaks final ties).
bool better(const confusion& a, std::size_t ia, const confusion& b, std::size_t ib) {
    // F1 = 2tp / (2tp + fp + fn); undefined counts as 0
    const std::uint64_t da = 2 * a.tp + a.fp + a.fn;
    const std::uint64_t db = 2 * b.tp + b.fp + b.fn;
    // exact for datasets below 2^31 samples
    const std::uint64_t lhs = a.tp * (db == 0 ? 1 : db);
    const std::uint64_t rhs = b.tp * (da == 0 ? 1 : da);
    if (lhs != rhs) return lhs > rhs;
    // benign count is the same for every grid point, so fp orders FPR
    if (a.fp != b.fp) return a.fp < b.fp;
    return ia < ib;
}

grid_point make_point(std::vector<double> thresholds, const confusion& c) {
    return grid_point{std::move(thresholds), c, f1(c), tpr(c), fpr(c)};
}

}  // namespace

std::optional<double> tpr(const confusion& c) { return ratio(c.tp, c.tp + c.fn); }
std::optional<double> fpr(const confusion& c) { return ratio(c.fp, c.fp + c.tn); }
std::optional<double> f1(const confusion& c) { return ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn); }

metrics_report compute_metrics(std::span<const metric_input> inputs, error_policy policy) {
    metrics_report m;
    m.policy = policy;
    std::map<std::string, std::pair<std::uint64_t, std::uint64_t>> families;  // detected, total
    for (const auto& in : inputs) {
        bool positive = in.predicted == label::malicious ||
                        (in.had_error && policy == error_policy::errors_as_malware);
        m.counts.errors += in.had_error;
        if (in.truth == ground_truth::malware) {
            (positive ? m.counts.tp : m.counts.fn) += 1;
            if (!in.family.empty()) {
                auto& f = families[in.family];
                f.first += positive;
                f.second += 1;
            }
        } else {
            (positive ? m.counts.fp : m.counts.tn) += 1;
        }
    }
    m.tpr = tpr(m.counts);
    m.fpr = fpr(m.counts);
    m.f1 = f1(m.counts);
    m.er = inputs.empty() ? 0.0 : static_cast<double>(m.counts.errors) / static_cast<double>(inputs.size());
    for (const auto& [name, c] : families) m.per_family_tpr[name] = ratio(c.first, c.second);
    return m;
}

metrics_report compute_metrics(std::span<const pipeline_verdict> verdicts, std::span<const labeled_sample> samples,
                               error_policy policy) {
    if (verdicts.size() != samples.size()) {
        throw evaluation_error(evaluation_error_kind::missing_label, "every verdict needs a ground-truth label");
    }
    std::vector<metric_input> inputs;
    inputs.reserve(verdicts.size());
    for (std::size_t i = 0; i < verdicts.size(); ++i) {
        if (!verdicts[i].sample_id.empty() && verdicts[i].sample_id != samples[i].id()) {
            throw evaluation_error(evaluation_error_kind::missing_label,
                                   "no label row for sample '" + verdicts[i].sample_id + "'");
        }
        inputs.push_back({samples[i].truth, samples[i].family, verdicts[i].final_label, verdicts[i].had_error});
    }
    return compute_metrics(inputs, policy);
}

nlohmann::json to_json(const metrics_report& m) {
    nlohmann::json fam = nlohmann::json::object();
    for (const auto& [name, v] : m.per_family_tpr) fam[name] = opt(v);
    return nlohmann::json{{"policy", to_string(m.policy)},
                          {"tpr", opt(m.tpr)},
                          {"fpr", opt(m.fpr)},
                          {"f1", opt(m.f1)},
                          {"er", m.er},
                          {"counts",
                           {{"tp", m.counts.tp},
                            {"fp", m.counts.fp},
                            {"tn", m.counts.tn},
                            {"fn", m.counts.fn},
                            {"errors", m.counts.errors}}},
                          {"per_family_tpr", fam}};
}

std::string format_metrics_table(std::span<const metrics_report> reports) {
    std::ostringstream out;
    char line[256];
    std::snprintf(line, sizeof line, "%-18s %8s %8s %8s %8s %6s %6s %6s %6s %6s\n", "policy", "TPR", "FPR", "F1",
                  "ER", "tp", "fp", "tn", "fn", "err");
    out << line;
    for (const auto& m : reports) {
        std::snprintf(line, sizeof line, "%-18s %8s %8s %8s %8.4f %6llu %6llu %6llu %6llu %6llu\n",
                      to_string(m.policy), fmt_rate(m.tpr).c_str(), fmt_rate(m.fpr).c_str(), fmt_rate(m.f1).c_str(),
                      m.er, static_cast<unsigned long long>(m.counts.tp),
                      static_cast<unsigned long long>(m.counts.fp), static_cast<unsigned long long>(m.counts.tn),
                      static_cast<unsigned long long>(m.counts.fn), static_cast<unsigned long long>(m.counts.errors));
        out << line;
    }
    return out.str();
}

time_summary mean_detection_time(std::span<const double> seconds) {
    if (seconds.empty()) throw evaluation_error(evaluation_error_kind::empty_subset, "no timings to summarize");
    time_summary t;
    t.count = seconds.size();
    double sum = 0.0;
    for (double s : seconds) sum += s;
    t.mean = sum / static_cast<double>(t.count);
    double sq = 0.0;
    for (double s : seconds) sq += (s - t.mean) * (s - t.mean);
    t.stddev = std::sqrt(sq / static_cast<double>(t.count));
    return t;
}

time_summary mean_detection_time(std::span<const pipeline_verdict> verdicts, std::span<const labeled_sample> samples,
                                 ground_truth subset) {
    if (verdicts.size() != samples.size()) {
        throw evaluation_error(evaluation_error_kind::missing_label, "every verdict needs a ground-truth label");
    }
    std::vector<double> times;
    for (std::size_t i = 0; i < verdicts.size(); ++i) {
        if (samples[i].truth == subset) times.push_back(verdicts[i].total_elapsed);
    }
    return mean_detection_time(times);
}

double adversarial_detection_rate(std::span<const pipeline_verdict> verdicts, error_policy policy) {
    if (verdicts.empty()) throw evaluation_error(evaluation_error_kind::empty_subset, "no adversarial samples");
    std::size_t detected = 0;
    for (const auto& v : verdicts) detected += v.label_under(policy) == label::malicious;
    return static_cast<double>(detected) / static_cast<double>(verdicts.size());
}

split_result stratified_split(std::span<const labeled_sample> samples, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) {
        throw evaluation_error(evaluation_error_kind::invalid_argument, "split fraction must lie in (0,1)");
    }
    std::map<std::pair<int, std::string>, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        groups[{static_cast<int>(samples[i].truth), samples[i].family}].push_back(i);
    }
    std::mt19937_64 rng(seed);
    split_result out;
    for (auto& [key, members] : groups) {
        for (std::size_t i = members.size(); i > 1; --i) {
            std::swap(members[i - 1], members[bounded(rng, i)]);
        }
        const auto k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(members.size()) + 0.5));
        out.validation.insert(out.validation.end(), members.begin(), members.begin() + static_cast<long>(k));
        out.test.insert(out.test.end(), members.begin() + static_cast<long>(k), members.end());
        if (k == 0 || k == members.size()) {
            out.notes.push_back(std::string(to_string(static_cast<ground_truth>(key.first))) + "/" +
                                (key.second.empty() ? "-" : key.second) + ": all " +
                                std::to_string(members.size()) + " sample(s) to " +
                                (k == 0 ? "test" : "validation"));
        }
    }
    std::sort(out.validation.begin(), out.validation.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

void score_cache::validate() const {
    if (rows.size() != sample_ids.size()) {
        throw evaluation_error(evaluation_error_kind::incomplete_cache, "cache rows do not match sample ids");
    }
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != detector_ids.size()) {
            throw evaluation_error(evaluation_error_kind::incomplete_cache,
                                   "cache row for '" + sample_ids[r] + "' misses detectors");
        }
        for (const auto& e : rows[r]) {
            if (e.score.has_value() == e.error.has_value()) {
                throw evaluation_error(evaluation_error_kind::incomplete_cache,
                                       "cache entry for '" + sample_ids[r] + "' is empty");
            }
        }
    }
}

nlohmann::json to_json(const score_cache& c, bool include_timing) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t r = 0; r < c.rows.size(); ++r) {
        nlohmann::json entries = nlohmann::json::array();
        for (const auto& e : c.rows[r]) {
            nlohmann::json j{{"score", opt(e.score)},
                             {"error", e.error ? nlohmann::json(to_string(*e.error)) : nlohmann::json(nullptr)}};
            if (include_timing) j["elapsed"] = e.elapsed;
            entries.push_back(std::move(j));
        }
        rows.push_back({{"sample", c.sample_ids[r]}, {"entries", entries}});
    }
    return nlohmann::json{{"detectors", c.detector_ids}, {"rows", rows}};
}

score_cache build_score_cache(const pipeline& p, const std::vector<sample_input>& samples, std::size_t jobs) {
    return build_score_cache(
        p, samples.size(), [&](std::size_t i) { return samples[i]; }, [&](std::size_t i) { return samples[i].id; },
        jobs);
}

score_cache build_score_cache(const pipeline& p, std::size_t count, const sample_loader& load,
                              const std::function<std::string(std::size_t)>& id_of, std::size_t jobs) {
    score_cache c;
    c.detector_ids = p.stage_ids();
    c.sample_ids.resize(count);
    c.rows.resize(count);
    const auto& stages = p.stages();
    parallel_for(count, jobs, [&](std::size_t i) {
        c.sample_ids[i] = id_of(i);
        auto& row = c.rows[i];
        sample_input s;
        try {
            s = load(i);
        } catch (const std::exception&) {
            row.assign(stages.size(), cache_entry{std::nullopt, error_kind::io, 0.0});
            return;
        }
        for (const auto& st : stages) {
            const auto t0 = std::chrono::steady_clock::now();
            raw_score r = st.det->score(s);
            const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            row.push_back(cache_entry{r.score, r.error, elapsed});
        }
    });
    return c;
}

replay_result replay(const score_cache& cache, std::size_t row, std::span<const double> thresholds) {
    const auto& entries = cache.rows.at(row);
    if (thresholds.size() != cache.detector_ids.size() || entries.size() != cache.detector_ids.size()) {
        throw evaluation_error(evaluation_error_kind::incomplete_cache, "threshold vector does not match cache");
    }
    replay_result r;
    bool any_error = false;
    std::string last_benign;
    for (std::size_t d = 0; d < entries.size(); ++d) {
        ++r.invoked;
        const auto& e = entries[d];
        if (!e.score) {
            any_error = true;
            continue;
        }
        if (*e.score >= thresholds[d]) {
            r.final_label = label::malicious;
            r.decided_by = cache.detector_ids[d];
            return r;
        }
        last_benign = cache.detector_ids[d];
    }
    r.had_error = any_error;
    r.decided_by = last_benign.empty() ? fallback_decider : last_benign;
    return r;
}

std::vector<double> default_research_space() {
    std::vector<double> r;
    for (int i = 0; i < 28; ++i) r.push_back((44 + 2 * i) / 100.0);
    return r;
}

calibration_result grid_search(const score_cache& cache, std::span<const ground_truth> truth,
                               const calibration_options& options) {
    cache.validate();
    if (truth.size() != cache.rows.size()) {
        throw evaluation_error(evaluation_error_kind::missing_label, "every cached sample needs a label");
    }
    std::vector<double> space = options.research_space;
    std::sort(space.begin(), space.end());
    space.erase(std::unique(space.begin(), space.end()), space.end());
    for (double t : space) {
        if (!(t >= 0.0 && t <= 1.0)) {
            throw evaluation_error(evaluation_error_kind::invalid_argument, "research space must lie in [0,1]");
        }
    }

    const std::size_t nd = cache.detector_ids.size();
    std::vector<double> base(nd, 0.0);
    std::vector<std::size_t> axes;  // calibrated detector positions
    for (std::size_t d = 0; d < nd; ++d) {
        auto it = options.fixed.find(cache.detector_ids[d]);
        if (it != options.fixed.end()) {
            base[d] = it->second;
        } else {
            axes.push_back(d);
        }
    }
    if (!axes.empty() && space.empty()) {
        throw evaluation_error(evaluation_error_kind::invalid_argument, "research space is empty");
    }
    std::size_t combos = 1;
    for (std::size_t a = 0; a < axes.size(); ++a) combos *= space.size();

    // first calibrated axis is the most significant digit, so enumeration
    // order equals lexicographic threshold order
    auto thresholds_of = [&](std::size_t index) {
        std::vector<double> t = base;
        for (std::size_t a = axes.size(); a-- > 0;) {
            t[axes[a]] = space[index % space.size()];
            index /= space.size();
        }
        return t;
    };
    auto evaluate = [&](const std::vector<double>& t) {
        confusion c;
        for (std::size_t r = 0; r < cache.rows.size(); ++r) {
            const auto& row = cache.rows[r];
            bool positive = false, error = false;
            for (std::size_t d = 0; d < nd; ++d) {
                if (!row[d].score) {
                    error = true;
                } else if (*row[d].score >= t[d]) {
                    positive = true;
                    break;
                }
            }
            const bool had_error = error && !positive;
            c.errors += had_error;
            if (had_error && options.objective_policy == error_policy::errors_as_malware) positive = true;
            if (truth[r] == ground_truth::malware) {
                (positive ? c.tp : c.fn) += 1;
            } else {
                (positive ? c.fp : c.tn) += 1;
            }
        }
        return c;
    };

    calibration_result result;
    result.detector_ids = cache.detector_ids;
    result.combinations = combos;
    if (options.keep_grid) result.grid.resize(combos);

    const std::size_t jobs = std::max<std::size_t>(1, std::min(options.jobs, combos));
    std::vector<std::pair<std::size_t, confusion>> chunk_best(jobs, {combos, confusion{}});
    parallel_for(jobs, jobs, [&](std::size_t j) {
        const std::size_t lo = combos * j / jobs, hi = combos * (j + 1) / jobs;
        auto& best = chunk_best[j];
        for (std::size_t i = lo; i < hi; ++i) {
            auto t = thresholds_of(i);
            confusion c = evaluate(t);
            if (best.first == combos || better(c, i, best.second, best.first)) best = {i, c};
            if (options.keep_grid) result.grid[i] = make_point(std::move(t), c);
        }
    });
    auto best = chunk_best.front();
    for (const auto& cb : chunk_best) {
        if (cb.first != combos && (best.first == combos || better(cb.second, cb.first, best.second, best.first))) {
            best = cb;
        }
    }
    result.best_thresholds = thresholds_of(best.first);
    result.best = make_point(result.best_thresholds, best.second);
    return result;
}

nlohmann::json to_json(const calibration_result& r) {
    nlohmann::json best = nlohmann::json::object();
    for (std::size_t d = 0; d < r.detector_ids.size(); ++d) best[r.detector_ids[d]] = r.best_thresholds[d];
    return nlohmann::json{{"detectors", r.detector_ids},
                          {"best_thresholds", best},
                          {"best_f1", opt(r.best.f1)},
                          {"best_tpr", opt(r.best.tpr)},
                          {"best_fpr", opt(r.best.fpr)},
                          {"best_counts",
                           {{"tp", r.best.counts.tp},
                            {"fp", r.best.counts.fp},
                            {"tn", r.best.counts.tn},
                            {"fn", r.best.counts.fn},
                            {"errors", r.best.counts.errors}}},
                          {"combinations", r.combinations},
                          {"split_fraction", r.split_fraction}};
}

void write_grid_csv(const std::filesystem::path& path, const calibration_result& r) {
    std::ostringstream out;
    for (const auto& id : r.detector_ids) out << "t_" << id << ',';
    out << "tp,fp,tn,fn,errors,f1,tpr,fpr\n";
    auto cell = [](const std::optional<double>& v) {
        if (!v) return std::string();
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", *v);
        return std::string(buf);
    };
    for (const auto& g : r.grid) {
        for (double t : g.thresholds) out << cell(t) << ',';
        out << g.counts.tp << ',' << g.counts.fp << ',' << g.counts.tn << ',' << g.counts.fn << ','
            << g.counts.errors << ',' << cell(g.f1) << ',' << cell(g.tpr) << ',' << cell(g.fpr) << '\n';
    }
    const auto text = out.str();
    write_file(path, as_bytes(text));
}

}  // namespace chainscan::eval
