#pragma once

#include "cascade/matcher.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace cascade {

enum class Label { Malicious, Benign };

std::string_view to_string(Label l);
Label label_from_string(std::string_view s);

struct LabeledEntry {
    ExtractedLogic logic;
    Label label = Label::Benign;
    std::string family;  // seed attack of an imitation; empty when unknown

    bool operator==(const LabeledEntry&) const = default;
};

struct LabeledCorpus {
    std::vector<LabeledEntry> entries;

    std::size_t count(Label l) const;
    bool operator==(const LabeledCorpus&) const = default;
};

/// JSON lines: {"tx_hash","label","family","logic":{...}}.
std::string corpus_line(const LabeledEntry& entry);
LabeledEntry parse_corpus_line(std::string_view line);
void write_corpus(const LabeledCorpus& corpus, std::ostream& out);
LabeledCorpus read_corpus(std::istream& in);
LabeledCorpus read_corpus_file(const std::filesystem::path& path);

struct Metrics {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    // nullopt where the defining ratio has a zero denominator.
    std::optional<double> precision, recall, f1, fpr, fnr;
    double accuracy = 0.0;

    /// F1 with an undefined value read as 0 (nothing flagged on a set with positives).
    double f1_or_zero() const { return f1.value_or(0.0); }
};

/// Throws DegenerateInput when the input is empty or one label is absent.
Metrics compute_metrics(const std::vector<std::pair<Label, bool>>& predictions);

std::string metrics_to_json(const Metrics& m);

/// Lattice 0, step, 2*step, ... up to 1 inclusive. Throws GridEmpty.
std::vector<double> grid_axis(double step);

struct TuneOptions {
    unsigned outer_folds = 4;
    double inner_validation_fraction = 0.1;  // the 9:1 split
    double grid_step = 0.02;
    std::uint64_t seed = 0;
    MatchOptions match;
};

struct GridPoint {
    double lambda = 0.0;
    double tau = 0.0;
    double f1 = 0.0;  // mean inner-validation F1 across outer folds
};

struct FoldReport {
    unsigned fold = 0;
    double lambda = 0.0;
    double tau = 0.0;
    double inner_f1 = 0.0;
    Metrics test;
    std::size_t train_size = 0;
    std::size_t test_size = 0;
    std::size_t pattern_count = 0;
    std::size_t shared_families = 0;  // families present on both sides; asserted zero
};

struct TuneResult {
    double best_lambda = kDefaultLambda;
    double best_tau = kDefaultTau;
    std::vector<FoldReport> folds;
    std::size_t lambda_points = 0;
    std::size_t tau_points = 0;
    std::vector<GridPoint> grid;  // lambda-major

    double grid_f1(std::size_t li, std::size_t ti) const { return grid[li * tau_points + ti].f1; }
    double mean_test_f1() const;
};

/// Nested k-fold cross-validation of (lambda, tau). Folds keep each family whole;
/// patterns come from malicious training entries only; test folds are scored once
/// with the point chosen on the inner validation split. Ties in F1 go to the higher
/// tau, then the lower lambda.
/// Throws DegenerateInput or GridEmpty.
TuneResult nested_cv(const LabeledCorpus& corpus, const TuneOptions& options = {});

std::string tune_result_to_json(const TuneResult& result);

/// Fold index per entry. Families stay together and labels are spread evenly.
std::vector<unsigned> assign_folds(const LabeledCorpus& corpus, unsigned folds, std::uint64_t seed);

struct Ratio {
    unsigned malicious = 1;
    unsigned benign = 1;
};

/// "1:5" -> {1, 5}. Throws SchemaViolation.
Ratio parse_ratio(std::string_view text);
std::string to_string(const Ratio& r);

struct SkewedPoint {
    Ratio ratio;
    std::size_t malicious = 0;
    std::size_t benign = 0;
    double f1_mean = 0.0, f1_std = 0.0;
    double fpr_mean = 0.0, fnr_mean = 0.0;
    std::vector<Metrics> repetitions;
};

struct SkewedReport {
    std::vector<SkewedPoint> points;
    double f1_drop = 0.0;    // first ratio minus last ratio, mean F1
    double fpr_drift = 0.0;  // last minus first
    double fnr_drift = 0.0;
};

/// Flags every entry against `patterns` with their own hyperparameters, then subsamples
/// the corpus to each ratio. The malicious side is subsampled first; the benign side is
/// subsampled only when the pool exceeds what the ratio needs. Throws InsufficientBenign.
SkewedReport skewed_eval(const LabeledCorpus& corpus, const std::vector<Pattern>& patterns,
                         const std::vector<Ratio>& ratios, std::uint64_t seed,
                         unsigned repetitions = 5, const MatchOptions& options = {});

std::string skewed_report_to_json(const SkewedReport& report);

} // namespace cascade
