#pragma once

#include "cascade/extractor.hpp"
#include "cascade/matcher.hpp"

#include <chrono>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace cascade {

struct ScanConfig {
    const LabelSnapshot* labels = nullptr;
    const Cheatsheet* cheatsheet = nullptr;
    const std::vector<Pattern>* patterns = nullptr;
    unsigned workers = 1;
    /// Emit results in input order instead of completion order.
    bool ordered = false;
    bool explain = false;
    /// Shared by all workers; calls are serialized.
    ClassifierBoundary* classifier = nullptr;
    bool fallback_on_sidecar_error = true;
    std::chrono::milliseconds trace_budget{5000};
    std::size_t batch_size = 16;
    MatchOptions match;
};

/// Throws ConfigUnresolvable.
void validate(const ScanConfig& config);

struct LatencyStats {
    double p50 = 0.0;
    double p95 = 0.0;
    double max = 0.0;
};

LatencyStats latency_stats(std::vector<double> seconds);

struct ScanReport {
    std::size_t total = 0;      // result lines emitted
    std::size_t flagged = 0;
    std::size_t malformed = 0;  // input lines that failed to parse
    std::size_t errors = 0;     // traces that failed during processing
    std::size_t timed_out = 0;
    std::map<std::string, std::size_t> per_pattern_hits;
    double wall_time = 0.0;
    double throughput_tps = 0.0;
    LatencyStats extract;
    LatencyStats match;
    std::uint64_t label_snapshot_version = 0;
    std::string cheatsheet_version;
    unsigned workers = 1;
    std::vector<std::string> diagnostics;  // first few malformed-line messages

    bool clean() const { return malformed == 0 && errors == 0 && timed_out == 0; }
};

/// Reads trace JSON lines from `in` and writes one result line per valid trace to `out`.
/// Malformed lines are counted and skipped; a failure inside one trace becomes an
/// ERROR or TIMED_OUT result line for that trace. Explain documents go to `explain_out`.
ScanReport scan(std::istream& in, std::ostream& out, const ScanConfig& config,
                std::ostream* explain_out = nullptr);

std::string report_to_json(const ScanReport& report);

struct ScalingRow {
    std::size_t candidate_length = 0;
    double median_seconds = 0.0;
};

/// Match latency of a fixed `pattern_keys`-key pattern against candidates of the given lengths.
std::vector<ScalingRow> matcher_scaling(const std::vector<std::size_t>& lengths = {100, 200, 400, 800},
                                        std::size_t pattern_keys = 800, unsigned samples = 7);

struct BenchReport {
    ScanReport median;  // the run with the median wall time
    std::vector<double> wall_times;
    std::vector<ScalingRow> scaling;
    std::vector<double> doubling_ratios;
};

/// Runs `repetitions` (>= 3) scans of the corpus with output discarded, then the scaling table.
BenchReport bench(const std::vector<std::string>& lines, const ScanConfig& config, unsigned repetitions);

std::string bench_report_to_json(const BenchReport& report);

} // namespace cascade
