#include "cascade/tuner.hpp"

#include "cascade/errors.hpp"
#include "cascade/json_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <set>

namespace cascade {

using nlohmann::json;
using ojson = nlohmann::ordered_json;

std::string_view to_string(Label l) { return l == Label::Malicious ? "MALICIOUS" : "BENIGN"; }

Label label_from_string(std::string_view s) {
    if (s == "MALICIOUS") return Label::Malicious;
    if (s == "BENIGN") return Label::Benign;
    throw SchemaViolation("unknown label: " + std::string(s));
}

std::size_t LabeledCorpus::count(Label l) const {
    return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(),
                                                  [l](const LabeledEntry& e) { return e.label == l; }));
}

std::string corpus_line(const LabeledEntry& entry) {
    ojson j;
    j["tx_hash"] = entry.logic.tx_hash;
    j["label"] = to_string(entry.label);
    if (!entry.family.empty()) j["family"] = entry.family;
    j["logic"] = to_json_value(entry.logic);
    return j.dump();
}

LabeledEntry parse_corpus_line(std::string_view line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::parse_error& e) {
        throw MalformedJson(e.what());
    }
    try {
        LabeledEntry e;
        e.label = label_from_string(j.at("label").get<std::string>());
        e.family = j.value("family", "");
        e.logic = logic_from_json_value(j.at("logic"));
        if (e.logic.tx_hash.empty()) e.logic.tx_hash = j.value("tx_hash", "");
        return e;
    } catch (const json::exception& e) {
        throw SchemaViolation(std::string("corpus line: ") + e.what());
    }
}

void write_corpus(const LabeledCorpus& corpus, std::ostream& out) {
    for (const auto& e : corpus.entries) out << corpus_line(e) << '\n';
}

LabeledCorpus read_corpus(std::istream& in) {
    LabeledCorpus c;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            c.entries.push_back(parse_corpus_line(line));
        } catch (const SchemaViolation& e) {
            throw SchemaViolation("line " + std::to_string(n) + ": " + e.what());
        } catch (const MalformedJson& e) {
            throw MalformedJson("line " + std::to_string(n) + ": " + e.what());
        }
    }
    return c;
}

LabeledCorpus read_corpus_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FileNotFound(path.string() + ": cannot open corpus");
    return read_corpus(in);
}

Metrics compute_metrics(const std::vector<std::pair<Label, bool>>& predictions) {
    if (predictions.empty()) throw DegenerateInput("no predictions");
    Metrics m;
    for (const auto& [label, flagged] : predictions) {
        if (label == Label::Malicious) (flagged ? m.tp : m.fn)++;
        else (flagged ? m.fp : m.tn)++;
    }
    const std::size_t pos = m.tp + m.fn, neg = m.fp + m.tn;
    if (pos == 0) throw DegenerateInput("no malicious entries");
    if (neg == 0) throw DegenerateInput("no benign entries");

    auto ratio = [](std::size_t a, std::size_t b) -> std::optional<double> {
        if (b == 0) return std::nullopt;
        return static_cast<double>(a) / static_cast<double>(b);
    };
    m.recall = ratio(m.tp, pos);
    m.fnr = ratio(m.fn, pos);
    m.fpr = ratio(m.fp, neg);
    m.precision = ratio(m.tp, m.tp + m.fp);
    if (m.precision && *m.precision + *m.recall > 0)
        m.f1 = 2 * *m.precision * *m.recall / (*m.precision + *m.recall);
    m.accuracy = static_cast<double>(m.tp + m.tn) / static_cast<double>(pos + neg);

    if (std::abs(*m.recall - (1.0 - *m.fnr)) > 1e-12)
        throw InvariantViolation("metrics: recall != 1 - fnr");
    return m;
}

std::string metrics_to_json(const Metrics& m) {
    auto val = [](const std::optional<double>& v) -> ojson {
        if (v) return *v;
        return "NOT_DEFINED";
    };
    ojson j;
    j["tp"] = m.tp;
    j["fp"] = m.fp;
    j["tn"] = m.tn;
    j["fn"] = m.fn;
    j["f1"] = val(m.f1);
    j["fpr"] = val(m.fpr);
    j["fnr"] = val(m.fnr);
    j["accuracy"] = m.accuracy;
    j["recall"] = val(m.recall);
    j["precision"] = val(m.precision);
    return j.dump();
}

std::vector<double> grid_axis(double step) {
    if (!(step > 0.0 && step <= 1.0)) throw GridEmpty("grid step must lie in (0, 1]");
    const auto n = static_cast<std::size_t>(std::floor(1.0 / step + 1e-9));
    std::vector<double> axis;
    for (std::size_t i = 0; i <= n; ++i) axis.push_back(std::round(i * step * 1e9) / 1e9);
    return axis;
}

std::vector<unsigned> assign_folds(const LabeledCorpus& corpus, unsigned folds, std::uint64_t seed) {
    if (folds == 0) throw DegenerateInput("zero folds");
    struct Group {
        std::vector<std::size_t> members;
        std::size_t malicious = 0;
    };
    std::map<std::string, std::size_t> by_family;
    std::vector<Group> groups;
    for (std::size_t i = 0; i < corpus.entries.size(); ++i) {
        const auto& e = corpus.entries[i];
        std::size_t g;
        if (!e.family.empty()) {
            auto [it, fresh] = by_family.try_emplace(e.family, groups.size());
            if (fresh) groups.emplace_back();
            g = it->second;
        } else {
            g = groups.size();
            groups.emplace_back();
        }
        groups[g].members.push_back(i);
        if (e.label == Label::Malicious) ++groups[g].malicious;
    }

    std::mt19937_64 rng(seed);
    std::shuffle(groups.begin(), groups.end(), rng);
    std::stable_sort(groups.begin(), groups.end(), [](const Group& a, const Group& b) {
        return a.members.size() > b.members.size();
    });

    // Greedy placement into the fold holding the fewest entries of the group's majority label.
    std::vector<std::size_t> mal(folds, 0), ben(folds, 0);
    std::vector<unsigned> out(corpus.entries.size(), 0);
    for (const auto& g : groups) {
        bool malicious = 2 * g.malicious >= g.members.size();
        auto& load = malicious ? mal : ben;
        unsigned best = 0;
        for (unsigned f = 1; f < folds; ++f) {
            if (load[f] < load[best] ||
                (load[f] == load[best] && mal[f] + ben[f] < mal[best] + ben[best]))
                best = f;
        }
        for (auto i : g.members) out[i] = best;
        mal[best] += g.malicious;
        ben[best] += g.members.size() - g.malicious;
    }
    return out;
}

namespace {

std::vector<Pattern> patterns_from(const LabeledCorpus& corpus, const std::vector<std::size_t>& idx) {
    std::vector<Pattern> out;
    std::set<std::pair<std::vector<LogicKey>, std::vector<LogicKey>>> seen;
    for (auto i : idx) {
        const auto& e = corpus.entries[i];
        if (e.label != Label::Malicious) continue;
        try {
            Pattern p = generalize(e.logic, kDefaultLambda, kDefaultTau, "cv" + std::to_string(i));
            if (seen.insert({p.core_set(), p.proto_set()}).second) out.push_back(std::move(p));
        } catch (const EmptyPattern&) {
        }
    }
    return out;
}

// Per-entry side scores against every pattern, reused across the whole grid.
struct ScoreTable {
    std::vector<std::vector<SideScores>> rows;

    ScoreTable(const LabeledCorpus& corpus, const std::vector<std::size_t>& idx,
               const std::vector<Pattern>& patterns, const MatchOptions& options) {
        rows.reserve(idx.size());
        for (auto i : idx) {
            std::vector<SideScores> row;
            row.reserve(patterns.size());
            for (const auto& p : patterns) row.push_back(side_scores(p, corpus.entries[i].logic, options));
            rows.push_back(std::move(row));
        }
    }

    std::vector<double> best_scores(double lambda) const {
        std::vector<double> out;
        out.reserve(rows.size());
        for (const auto& row : rows) {
            double m = 0.0;
            bool any = false;
            for (const auto& s : row) {
                double v = combine(s, lambda);
                if (!any || v > m) m = v;
                any = true;
            }
            out.push_back(any ? m : -1.0);  // no pattern: never flagged
        }
        return out;
    }
};

std::vector<std::pair<Label, bool>> predict(const LabeledCorpus& corpus, const std::vector<std::size_t>& idx,
                                            const std::vector<double>& scores, double tau) {
    std::vector<std::pair<Label, bool>> out;
    out.reserve(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k)
        out.emplace_back(corpus.entries[idx[k]].label, scores[k] >= tau);
    return out;
}

// Better F1, then higher tau, then lower lambda.
bool preferred(double f1, double tau, double lambda, double best_f1, double best_tau, double best_lambda) {
    if (f1 != best_f1) return f1 > best_f1;
    if (tau != best_tau) return tau > best_tau;
    return lambda < best_lambda;
}

void require_both_labels(const LabeledCorpus& corpus, const std::vector<std::size_t>& idx, const char* what) {
    bool mal = false, ben = false;
    for (auto i : idx) (corpus.entries[i].label == Label::Malicious ? mal : ben) = true;
    if (!mal || !ben) throw DegenerateInput(std::string(what) + " lacks one of the labels");
}

} // namespace

double TuneResult::mean_test_f1() const {
    if (folds.empty()) return 0.0;
    double s = 0.0;
    for (const auto& f : folds) s += f.test.f1_or_zero();
    return s / static_cast<double>(folds.size());
}

TuneResult nested_cv(const LabeledCorpus& corpus, const TuneOptions& options) {
    const auto lambdas = grid_axis(options.grid_step);
    const auto taus = lambdas;
    const unsigned k = options.outer_folds;
    if (k < 2) throw DegenerateInput("need at least two outer folds");
    if (corpus.entries.size() < static_cast<std::size_t>(k) * 2)
        throw DegenerateInput("corpus smaller than twice the fold count");
    if (corpus.count(Label::Malicious) == 0 || corpus.count(Label::Benign) == 0)
        throw DegenerateInput("corpus lacks one of the labels");
    if (!(options.inner_validation_fraction > 0.0 && options.inner_validation_fraction < 1.0))
        throw DegenerateInput("inner validation fraction must lie in (0, 1)");

    TuneResult result;
    result.lambda_points = lambdas.size();
    result.tau_points = taus.size();
    std::vector<double> surface(lambdas.size() * taus.size(), 0.0);

    const auto outer = assign_folds(corpus, k, options.seed);
    for (unsigned fold = 0; fold < k; ++fold) {
        std::vector<std::size_t> train, test;
        for (std::size_t i = 0; i < outer.size(); ++i) (outer[i] == fold ? test : train).push_back(i);

        FoldReport rep;
        rep.fold = fold;
        rep.train_size = train.size();
        rep.test_size = test.size();
        std::set<std::string> train_families, test_families;
        for (auto i : train)
            if (!corpus.entries[i].family.empty()) train_families.insert(corpus.entries[i].family);
        for (auto i : test)
            if (train_families.count(corpus.entries[i].family)) test_families.insert(corpus.entries[i].family);
        rep.shared_families = test_families.size();
        if (rep.shared_families != 0)
            throw InvariantViolation("fold " + std::to_string(fold) + " shares " +
                                     std::to_string(rep.shared_families) + " families with training");

        // Inner 9:1 split of the training portion, family-aware as well.
        LabeledCorpus train_corpus;
        for (auto i : train) train_corpus.entries.push_back(corpus.entries[i]);
        const auto inner_folds = static_cast<unsigned>(std::lround(1.0 / options.inner_validation_fraction));
        const auto inner = assign_folds(train_corpus, std::max(2u, inner_folds), options.seed * 31 + fold + 1);
        std::vector<std::size_t> fit, validate;
        for (std::size_t j = 0; j < train.size(); ++j) (inner[j] == 0 ? validate : fit).push_back(train[j]);
        require_both_labels(corpus, validate, "inner validation split");

        const auto inner_patterns = patterns_from(corpus, fit);
        ScoreTable table(corpus, validate, inner_patterns, options.match);
        double best_f1 = -1.0, best_tau = 0.0, best_lambda = 0.0;
        for (std::size_t li = 0; li < lambdas.size(); ++li) {
            const auto scores = table.best_scores(lambdas[li]);
            for (std::size_t ti = 0; ti < taus.size(); ++ti) {
                double f1 = compute_metrics(predict(corpus, validate, scores, taus[ti])).f1_or_zero();
                surface[li * taus.size() + ti] += f1;
                if (preferred(f1, taus[ti], lambdas[li], best_f1, best_tau, best_lambda)) {
                    best_f1 = f1;
                    best_tau = taus[ti];
                    best_lambda = lambdas[li];
                }
            }
        }
        rep.lambda = best_lambda;
        rep.tau = best_tau;
        rep.inner_f1 = best_f1;

        // The test fold is touched once, with the chosen point.
        const auto patterns = patterns_from(corpus, train);
        rep.pattern_count = patterns.size();
        require_both_labels(corpus, test, "outer test fold");
        ScoreTable test_table(corpus, test, patterns, options.match);
        rep.test = compute_metrics(predict(corpus, test, test_table.best_scores(best_lambda), best_tau));
        result.folds.push_back(std::move(rep));
    }

    double best_f1 = -1.0;
    for (std::size_t li = 0; li < lambdas.size(); ++li)
        for (std::size_t ti = 0; ti < taus.size(); ++ti) {
            double f1 = surface[li * taus.size() + ti] / k;
            result.grid.push_back({lambdas[li], taus[ti], f1});
            if (preferred(f1, taus[ti], lambdas[li], best_f1, result.best_tau, result.best_lambda)) {
                best_f1 = f1;
                result.best_tau = taus[ti];
                result.best_lambda = lambdas[li];
            }
        }
    return result;
}

std::string tune_result_to_json(const TuneResult& r) {
    ojson j;
    j["best_lambda"] = r.best_lambda;
    j["best_tau"] = r.best_tau;
    j["mean_test_f1"] = r.mean_test_f1();
    auto folds = ojson::array();
    for (const auto& f : r.folds) {
        ojson fj;
        fj["fold"] = f.fold;
        fj["lambda"] = f.lambda;
        fj["tau"] = f.tau;
        fj["inner_f1"] = f.inner_f1;
        fj["train_size"] = f.train_size;
        fj["test_size"] = f.test_size;
        fj["pattern_count"] = f.pattern_count;
        fj["shared_families"] = f.shared_families;
        fj["test"] = ojson::parse(metrics_to_json(f.test));
        folds.push_back(std::move(fj));
    }
    j["folds"] = std::move(folds);
    j["grid_points"] = r.grid.size();
    auto grid = ojson::array();
    for (const auto& g : r.grid) grid.push_back({g.lambda, g.tau, g.f1});
    j["grid"] = std::move(grid);
    return j.dump();
}

Ratio parse_ratio(std::string_view text) {
    auto colon = text.find(':');
    if (colon == std::string_view::npos) throw SchemaViolation("ratio must look like M:B");
    auto num = [&](std::string_view s) {
        if (s.empty() || s.find_first_not_of("0123456789") != std::string_view::npos || s.size() > 6)
            throw SchemaViolation("ratio must look like M:B, got " + std::string(text));
        return static_cast<unsigned>(std::stoul(std::string(s)));
    };
    Ratio r{num(text.substr(0, colon)), num(text.substr(colon + 1))};
    if (r.malicious == 0 || r.benign == 0) throw SchemaViolation("ratio terms must be positive");
    return r;
}

std::string to_string(const Ratio& r) {
    return std::to_string(r.malicious) + ":" + std::to_string(r.benign);
}

SkewedReport skewed_eval(const LabeledCorpus& corpus, const std::vector<Pattern>& patterns,
                         const std::vector<Ratio>& ratios, std::uint64_t seed, unsigned repetitions,
                         const MatchOptions& options) {
    if (ratios.empty()) throw DegenerateInput("no ratios");
    if (repetitions == 0) throw DegenerateInput("zero repetitions");
    std::vector<std::size_t> mal, ben;
    std::vector<bool> flagged(corpus.entries.size(), false);
    for (std::size_t i = 0; i < corpus.entries.size(); ++i) {
        const auto& e = corpus.entries[i];
        (e.label == Label::Malicious ? mal : ben).push_back(i);
        for (const auto& p : patterns)
            if (match_one(p, e.logic, options).flagged) {
                flagged[i] = true;
                break;
            }
    }
    if (mal.empty()) throw DegenerateInput("no malicious entries");

    SkewedReport report;
    for (const auto& r : ratios) {
        std::size_t m = std::min<std::size_t>(mal.size(), ben.size() * r.malicious / r.benign);
        if (m == 0)
            throw InsufficientBenign(std::to_string(ben.size()) + " benign entries cannot realize " + to_string(r));
        std::size_t b = m * r.benign / r.malicious;

        SkewedPoint pt;
        pt.ratio = r;
        pt.malicious = m;
        pt.benign = b;
        for (unsigned rep = 0; rep < repetitions; ++rep) {
            std::mt19937_64 rng(seed + 0x9e3779b97f4a7c15ULL * (rep + 1));
            auto ms = mal, bs = ben;
            std::shuffle(ms.begin(), ms.end(), rng);
            std::shuffle(bs.begin(), bs.end(), rng);
            std::vector<std::pair<Label, bool>> preds;
            for (std::size_t i = 0; i < m; ++i) preds.emplace_back(Label::Malicious, flagged[ms[i]]);
            for (std::size_t i = 0; i < b; ++i) preds.emplace_back(Label::Benign, flagged[bs[i]]);
            pt.repetitions.push_back(compute_metrics(preds));
        }
        double n = repetitions;
        for (const auto& mt : pt.repetitions) {
            pt.f1_mean += mt.f1_or_zero() / n;
            pt.fpr_mean += mt.fpr.value_or(0.0) / n;
            pt.fnr_mean += mt.fnr.value_or(0.0) / n;
        }
        double var = 0.0;
        for (const auto& mt : pt.repetitions) var += std::pow(mt.f1_or_zero() - pt.f1_mean, 2);
        pt.f1_std = repetitions > 1 ? std::sqrt(var / (n - 1)) : 0.0;
        report.points.push_back(std::move(pt));
    }
    report.f1_drop = report.points.front().f1_mean - report.points.back().f1_mean;
    report.fpr_drift = report.points.back().fpr_mean - report.points.front().fpr_mean;
    report.fnr_drift = report.points.back().fnr_mean - report.points.front().fnr_mean;
    return report;
}

std::string skewed_report_to_json(const SkewedReport& report) {
    ojson j;
    auto pts = ojson::array();
    for (const auto& p : report.points) {
        ojson pj;
        pj["ratio"] = to_string(p.ratio);
        pj["malicious"] = p.malicious;
        pj["benign"] = p.benign;
        pj["f1_mean"] = p.f1_mean;
        pj["f1_std"] = p.f1_std;
        pj["fpr_mean"] = p.fpr_mean;
        pj["fnr_mean"] = p.fnr_mean;
        pts.push_back(std::move(pj));
    }
    j["ratios"] = std::move(pts);
    j["f1_drop"] = report.f1_drop;
    j["fpr_drift"] = report.fpr_drift;
    j["fnr_drift"] = report.fnr_drift;
    return j.dump();
}

} // namespace cascade
