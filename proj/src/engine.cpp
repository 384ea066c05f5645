#include "cascade/engine.hpp"

#include "cascade/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <istream>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

namespace cascade {

using ojson = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

class LockedClassifier : public ClassifierBoundary {
public:
    explicit LockedClassifier(ClassifierBoundary& inner) : inner_(inner) {}
    ClassifierResponse classify(const ClassifierRequest& request) override {
        std::lock_guard lock(mu_);
        return inner_.classify(request);
    }

private:
    ClassifierBoundary& inner_;
    std::mutex mu_;
};

struct Line {
    std::size_t seq = 0;
    std::string text;
};

// Bounded multi-consumer queue of line batches.
class BatchQueue {
public:
    explicit BatchQueue(std::size_t capacity) : capacity_(capacity) {}

    void push(std::vector<Line> batch) {
        std::unique_lock lock(mu_);
        not_full_.wait(lock, [&] { return q_.size() < capacity_; });
        q_.push_back(std::move(batch));
        not_empty_.notify_one();
    }

    std::optional<std::vector<Line>> pop() {
        std::unique_lock lock(mu_);
        not_empty_.wait(lock, [&] { return !q_.empty() || closed_; });
        if (q_.empty()) return std::nullopt;
        auto b = std::move(q_.front());
        q_.pop_front();
        not_full_.notify_one();
        return b;
    }

    void close() {
        std::lock_guard lock(mu_);
        closed_ = true;
        not_empty_.notify_all();
    }

private:
    std::size_t capacity_;
    std::deque<std::vector<Line>> q_;
    bool closed_ = false;
    std::mutex mu_;
    std::condition_variable not_empty_, not_full_;
};

// One processed input line. `result` is empty for malformed input.
struct Outcome {
    std::optional<std::string> result;
    std::optional<std::string> explain;
};

class Writer {
public:
    Writer(std::ostream& out, std::ostream* explain_out, bool ordered)
        : out_(out), explain_out_(explain_out), ordered_(ordered) {}

    void put(std::size_t seq, Outcome o) {
        std::lock_guard lock(mu_);
        if (!ordered_) {
            emit(o);
            return;
        }
        pending_.emplace(seq, std::move(o));
        for (auto it = pending_.find(next_); it != pending_.end(); it = pending_.find(next_)) {
            emit(it->second);
            pending_.erase(it);
            ++next_;
        }
    }

private:
    void emit(const Outcome& o) {
        if (o.result) out_ << *o.result << '\n';
        if (o.explain && explain_out_) *explain_out_ << *o.explain << '\n';
    }

    std::ostream& out_;
    std::ostream* explain_out_;
    bool ordered_;
    std::size_t next_ = 0;
    std::map<std::size_t, Outcome> pending_;
    std::mutex mu_;
};

struct WorkerStats {
    std::size_t total = 0, flagged = 0, malformed = 0, errors = 0, timed_out = 0;
    std::map<std::string, std::size_t> hits;
    std::vector<double> extract, match;
    std::vector<std::string> diagnostics;
};

std::string error_line(const std::string& tx, const char* status, const std::string& message) {
    ojson j;
    j["tx_hash"] = tx;
    j["status"] = status;
    j["flagged"] = false;
    j["results"] = ojson::array();
    j["error"] = message;
    return j.dump();
}

Outcome process(const Line& line, const ScanConfig& cfg, ClassifierBoundary* classifier, WorkerStats& st) {
    Outcome o;
    Trace trace;
    try {
        trace = parse_trace(line.text);
    } catch (const Error& e) {
        ++st.malformed;
        if (st.diagnostics.size() < 20)
            st.diagnostics.push_back("record " + std::to_string(line.seq + 1) + ": " + e.what());
        return o;
    }

    ++st.total;
    try {
        ExtractOptions opt;
        opt.classifier = classifier;
        opt.fallback_on_sidecar_error = cfg.fallback_on_sidecar_error;
        opt.deadline = Clock::now() + cfg.trace_budget;
        ExtractDiagnostics diag;

        auto t0 = Clock::now();
        ExtractedLogic logic = extract(trace, *cfg.labels, *cfg.cheatsheet, opt, cfg.explain ? &diag : nullptr);
        st.extract.push_back(seconds_since(t0));

        auto t1 = Clock::now();
        auto results = match_all(*cfg.patterns, logic, cfg.match);
        st.match.push_back(seconds_since(t1));

        bool flagged = false;
        auto arr = ojson::array();
        for (const auto& r : results) {
            if (r.flagged) {
                flagged = true;
                ++st.hits[r.pattern_id];
            }
            arr.push_back(ojson::parse(match_result_to_json(r)));
        }
        if (flagged) ++st.flagged;
        ojson j;
        j["tx_hash"] = trace.tx_hash;
        j["status"] = "OK";
        j["flagged"] = flagged;
        j["results"] = std::move(arr);
        o.result = j.dump();
        if (cfg.explain) o.explain = explain_to_json(trace, diag);
    } catch (const TimedOut& e) {
        ++st.timed_out;
        o.result = error_line(trace.tx_hash, "TIMED_OUT", e.what());
    } catch (const std::exception& e) {
        ++st.errors;
        o.result = error_line(trace.tx_hash, "ERROR", e.what());
    }
    return o;
}

double percentile(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) return 0.0;
    auto idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(sorted.size())));
    return sorted[std::min(sorted.size() - 1, idx == 0 ? 0 : idx - 1)];
}

ojson latency_json(const LatencyStats& s) {
    ojson j;
    j["p50_ms"] = s.p50 * 1e3;
    j["p95_ms"] = s.p95 * 1e3;
    j["max_ms"] = s.max * 1e3;
    return j;
}

} // namespace

void validate(const ScanConfig& c) {
    if (!c.labels) throw ConfigUnresolvable("scan: no label snapshot");
    if (!c.cheatsheet) throw ConfigUnresolvable("scan: no cheatsheet");
    if (!c.patterns) throw ConfigUnresolvable("scan: no pattern set");
    if (c.workers == 0 || c.workers > 1024) throw ConfigUnresolvable("scan: workers must lie in [1, 1024]");
    if (c.batch_size == 0) throw ConfigUnresolvable("scan: batch size must be positive");
    if (c.trace_budget.count() <= 0) throw ConfigUnresolvable("scan: trace budget must be positive");
}

LatencyStats latency_stats(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    LatencyStats s;
    s.p50 = percentile(v, 0.50);
    s.p95 = percentile(v, 0.95);
    s.max = v.empty() ? 0.0 : v.back();
    return s;
}

ScanReport scan(std::istream& in, std::ostream& out, const ScanConfig& config, std::ostream* explain_out) {
    validate(config);
    const auto t0 = Clock::now();

    std::optional<LockedClassifier> locked;
    if (config.classifier) locked.emplace(*config.classifier);
    ClassifierBoundary* classifier = locked ? &*locked : nullptr;

    BatchQueue queue(std::size_t{4} * config.workers);
    Writer writer(out, explain_out, config.ordered);
    std::vector<WorkerStats> stats(config.workers);
    std::vector<std::thread> pool;
    pool.reserve(config.workers);
    for (unsigned w = 0; w < config.workers; ++w) {
        pool.emplace_back([&, w] {
            while (auto batch = queue.pop())
                for (const auto& line : *batch) writer.put(line.seq, process(line, config, classifier, stats[w]));
        });
    }

    std::size_t seq = 0;
    std::vector<Line> batch;
    std::string text;
    while (std::getline(in, text)) {
        if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
        batch.push_back({seq++, std::move(text)});
        if (batch.size() >= config.batch_size) {
            queue.push(std::move(batch));
            batch.clear();
        }
    }
    if (!batch.empty()) queue.push(std::move(batch));
    queue.close();
    for (auto& t : pool) t.join();

    ScanReport r;
    r.workers = config.workers;
    r.label_snapshot_version = config.labels->version();
    r.cheatsheet_version = config.cheatsheet->version();
    std::vector<double> ext, mat;
    for (auto& s : stats) {
        r.total += s.total;
        r.flagged += s.flagged;
        r.malformed += s.malformed;
        r.errors += s.errors;
        r.timed_out += s.timed_out;
        for (const auto& [id, n] : s.hits) r.per_pattern_hits[id] += n;
        ext.insert(ext.end(), s.extract.begin(), s.extract.end());
        mat.insert(mat.end(), s.match.begin(), s.match.end());
        for (auto& d : s.diagnostics)
            if (r.diagnostics.size() < 20) r.diagnostics.push_back(std::move(d));
    }
    r.extract = latency_stats(std::move(ext));
    r.match = latency_stats(std::move(mat));
    r.wall_time = seconds_since(t0);
    r.throughput_tps = r.wall_time > 0 ? static_cast<double>(r.total) / r.wall_time : 0.0;
    return r;
}

std::string report_to_json(const ScanReport& r) {
    ojson j;
    j["total"] = r.total;
    j["flagged"] = r.flagged;
    j["malformed"] = r.malformed;
    j["errors"] = r.errors;
    j["timed_out"] = r.timed_out;
    j["workers"] = r.workers;
    j["wall_time_s"] = r.wall_time;
    j["throughput_tps"] = r.throughput_tps;
    j["extract_latency"] = latency_json(r.extract);
    j["match_latency"] = latency_json(r.match);
    j["per_pattern_hits"] = r.per_pattern_hits;
    j["label_snapshot_version"] = r.label_snapshot_version;
    j["cheatsheet_version"] = r.cheatsheet_version;
    if (!r.diagnostics.empty()) j["diagnostics"] = r.diagnostics;
    return j.dump();
}

std::vector<ScalingRow> matcher_scaling(const std::vector<std::size_t>& lengths, std::size_t pattern_keys,
                                        unsigned samples) {
    if (pattern_keys < 2 || samples == 0) throw InvalidHyperparameter("matcher_scaling: bad parameters");
    std::vector<LogicKey> core, proto;
    for (std::size_t i = 0; i < pattern_keys; ++i) {
        if (i % 2 == 0) core.push_back({"K" + std::to_string(i), TokenClass::Core, AddressRole::CoreAssetToken});
        else proto.push_back({"K" + std::to_string(i), TokenClass::ProtocolSpecific, AddressRole::ProtocolToken});
    }
    Pattern pattern("scaling", "", core, proto, kDefaultLambda, kDefaultTau);

    std::mt19937_64 rng(17);
    std::vector<ScalingRow> rows;
    for (auto len : lengths) {
        ExtractedLogic cand;
        cand.tx_hash = "scaling";
        for (std::size_t i = 0; i < len; ++i) {
            // Half the items hit the pattern, half miss it.
            std::size_t k = std::uniform_int_distribution<std::size_t>(0, 2 * pattern_keys - 1)(rng);
            bool is_core = k % 2 == 0;
            cand.items.push_back({"K" + std::to_string(k), is_core ? TokenClass::Core : TokenClass::ProtocolSpecific,
                                  is_core ? AddressRole::CoreAssetToken : AddressRole::ProtocolToken, 0});
        }
        // Enough iterations per sample that timer resolution does not dominate.
        const std::size_t iters = std::max<std::size_t>(20, 200000 / std::max<std::size_t>(len, 1));
        std::vector<double> per_call;
        volatile double sink = 0.0;
        for (unsigned s = 0; s < samples; ++s) {
            auto t0 = Clock::now();
            for (std::size_t i = 0; i < iters; ++i) sink = sink + match_one(pattern, cand).sim_final;
            per_call.push_back(seconds_since(t0) / static_cast<double>(iters));
        }
        std::sort(per_call.begin(), per_call.end());
        rows.push_back({len, per_call[per_call.size() / 2]});
    }
    return rows;
}

BenchReport bench(const std::vector<std::string>& lines, const ScanConfig& config, unsigned repetitions) {
    if (repetitions < 3) throw ConfigUnresolvable("bench: at least 3 repetitions");
    std::string joined;
    for (const auto& l : lines) joined += l + '\n';

    std::vector<ScanReport> runs;
    for (unsigned i = 0; i < repetitions; ++i) {
        std::istringstream in(joined);
        std::ostream sink(nullptr);
        runs.push_back(scan(in, sink, config));
    }
    BenchReport b;
    for (const auto& r : runs) b.wall_times.push_back(r.wall_time);
    std::vector<std::size_t> order(runs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](auto x, auto y) { return runs[x].wall_time < runs[y].wall_time; });
    b.median = runs[order[order.size() / 2]];

    b.scaling = matcher_scaling();
    for (std::size_t i = 1; i < b.scaling.size(); ++i)
        b.doubling_ratios.push_back(b.scaling[i].median_seconds / b.scaling[i - 1].median_seconds);
    return b;
}

std::string bench_report_to_json(const BenchReport& b) {
    ojson j;
    j["scan"] = ojson::parse(report_to_json(b.median));
    j["wall_times_s"] = b.wall_times;
    auto rows = ojson::array();
    for (const auto& r : b.scaling) {
        ojson row;
        row["candidate_length"] = r.candidate_length;
        row["median_us"] = r.median_seconds * 1e6;
        rows.push_back(std::move(row));
    }
    j["matcher_scaling"] = std::move(rows);
    j["doubling_ratios"] = b.doubling_ratios;
    return j.dump();
}

} // namespace cascade
