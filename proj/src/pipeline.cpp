#include "chainscan/pipeline.hpp"

#include <chrono>
#include <exception>
#include <mutex>
#include <set>
#include <thread>

namespace chainscan {

const char* to_string(label l) { return l == label::malicious ? "malicious" : "benign"; }

const char* to_string(error_policy p) {
    return p == error_policy::errors_as_benign ? "errors_as_benign" : "errors_as_malware";
}

error_policy error_policy_from_string(std::string_view s) {
    if (s == "errors_as_benign") return error_policy::errors_as_benign;
    if (s == "errors_as_malware") return error_policy::errors_as_malware;
    throw std::invalid_argument("unknown error policy '" + std::string(s) + "'");
}

nlohmann::json to_json(const pipeline_verdict& v, bool include_timing) {
    nlohmann::json modules = nlohmann::json::array();
    for (const auto& o : v.module_outcomes) {
        nlohmann::json m{{"detector", o.detector_id}, {"kind", to_string(o.kind)}};
        m["score"] = o.score ? nlohmann::json(*o.score) : nlohmann::json(nullptr);
        m["error"] = o.error ? nlohmann::json(to_string(*o.error)) : nlohmann::json(nullptr);
        if (include_timing) m["elapsed"] = o.elapsed;
        modules.push_back(std::move(m));
    }
    nlohmann::json j{{"schema_version", verdict_schema_version},
                     {"sample", v.sample_id},
                     {"sha256", v.sha256},
                     {"final_label", to_string(v.final_label)},
                     {"decided_by", v.decided_by},
                     {"had_error", v.had_error},
                     {"io_error", v.io_error},
                     {"modules", modules}};
    if (include_timing) j["total_elapsed"] = v.total_elapsed;
    return j;
}

std::vector<std::uint64_t> invocation_probe::counts() const {
    std::vector<std::uint64_t> out;
    out.reserve(counts_.size());
    for (const auto& c : counts_) out.push_back(c.load(std::memory_order_relaxed));
    return out;
}

void invocation_probe::reset() noexcept {
    for (auto& c : counts_) c.store(0, std::memory_order_relaxed);
}

pipeline::pipeline(std::vector<stage> stages, bool timing_enabled) : timing_enabled_(timing_enabled) {
    std::set<std::string> ids;
    for (auto& s : stages) {
        if (!s.det) throw config_error("pipeline stage without a detector");
        if (!(s.threshold >= 0.0 && s.threshold <= 1.0)) {
            throw config_error("threshold of '" + s.det->id() + "' must lie in [0,1]");
        }
        if (!ids.insert(s.det->id()).second) throw config_error("duplicate detector id '" + s.det->id() + "'");
        if (s.enabled) stages_.push_back(std::move(s));
    }
    if (stages_.empty()) throw config_error("pipeline needs at least one enabled detector");
    probe_ = std::make_shared<invocation_probe>(stages_.size());
}

std::vector<std::string> pipeline::stage_ids() const {
    std::vector<std::string> out;
    for (const auto& s : stages_) out.push_back(s.det->id());
    return out;
}

pipeline_verdict pipeline::analyze(const sample_input& sample) const {
    const auto t0 = std::chrono::steady_clock::now();
    pipeline_verdict v;
    v.sample_id = sample.id;
    v.sha256 = sample.sha256;
    bool any_error = false;
    std::string last_benign;
    for (std::size_t i = 0; i < stages_.size(); ++i) {
        probe_->record(i);
        auto outcome = stages_[i].det->analyze(sample, stages_[i].threshold);
        const auto kind = outcome.kind;
        v.module_outcomes.push_back(std::move(outcome));
        if (kind == outcome_kind::malicious) {
            v.final_label = label::malicious;
            v.decided_by = stages_[i].det->id();
            break;
        }
        if (kind == outcome_kind::error) {
            any_error = true;
        } else {
            last_benign = stages_[i].det->id();
        }
    }
    if (v.final_label == label::benign) {
        v.had_error = any_error;
        v.decided_by = last_benign.empty() ? fallback_decider : last_benign;
    }
    v.total_elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return v;
}

pipeline_verdict pipeline::io_failure(std::string sample_id) const {
    pipeline_verdict v;
    v.sample_id = std::move(sample_id);
    v.decided_by = fallback_decider;
    v.had_error = true;
    v.io_error = true;
    for (const auto& s : stages_) {
        detector_outcome o;
        o.detector_id = s.det->id();
        o.kind = outcome_kind::error;
        o.error = error_kind::io;
        v.module_outcomes.push_back(std::move(o));
    }
    return v;
}

std::vector<pipeline_verdict> pipeline::analyze_batch(const std::vector<sample_input>& samples,
                                                      std::size_t jobs) const {
    std::vector<pipeline_verdict> out(samples.size());
    parallel_for(samples.size(), timing_enabled_ ? 1 : jobs, [&](std::size_t i) { out[i] = analyze(samples[i]); });
    return out;
}

std::vector<pipeline_verdict> pipeline::analyze_batch(std::size_t count, const sample_loader& load,
                                                      const std::function<std::string(std::size_t)>& id_of,
                                                      std::size_t jobs) const {
    std::vector<pipeline_verdict> out(count);
    parallel_for(count, timing_enabled_ ? 1 : jobs, [&](std::size_t i) {
        sample_input s;
        try {
            s = load(i);
        } catch (const std::exception&) {
            out[i] = io_failure(id_of(i));
            return;
        }
        out[i] = analyze(s);
    });
    return out;
}

void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& work) {
    jobs = std::max<std::size_t>(1, std::min(jobs, count));
    if (jobs <= 1) {
        for (std::size_t i = 0; i < count; ++i) work(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < jobs; ++t) {
        threads.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
                try {
                    work(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& th : threads) th.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace chainscan
