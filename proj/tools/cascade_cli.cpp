#include "cascade/engine.hpp"
#include "cascade/errors.hpp"
#include "cascade/synth.hpp"
#include "cascade/tuner.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#ifndef CASCADE_DEFAULT_CHEATSHEET
#define CASCADE_DEFAULT_CHEATSHEET "data/cheatsheet.json"
#endif

namespace fs = std::filesystem;
using namespace cascade;

namespace {

constexpr const char* kVersion = "0.1.0";
constexpr int kExitFatal = 1;
constexpr int kExitPartial = 2;
constexpr int kExitUsage = 64;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Values that may also come from CASCADE_<KEY> or the config file.
struct Settings {
    std::string cheatsheet = CASCADE_DEFAULT_CHEATSHEET;
    std::string labels;
    std::string patterns;
    std::string classifier;
    unsigned workers = 1;
    double lambda = kDefaultLambda;
    double tau = kDefaultTau;
    std::uint64_t seed = 0;
    unsigned folds = 4;
    double grid_step = 0.02;
    unsigned reps = 5;
    unsigned trace_budget_ms = 5000;
};

using Setter = std::function<void(const std::string&)>;

template <class T>
T convert(const std::string& key, const std::string& text) {
    T v{};
    if (!CLI::detail::lexical_conversion<T, T>({text}, v))
        throw ConfigUnresolvable("setting " + key + ": cannot read '" + text + "'");
    return v;
}

std::map<std::string, Setter> setters(Settings& s) {
    auto str = [](std::string& f) { return [&f](const std::string& v) { f = v; }; };
    auto num = [](auto& f, const char* key) {
        return [&f, key](const std::string& v) { f = convert<std::decay_t<decltype(f)>>(key, v); };
    };
    return {{"cheatsheet", str(s.cheatsheet)},
            {"labels", str(s.labels)},
            {"patterns", str(s.patterns)},
            {"classifier", str(s.classifier)},
            {"workers", num(s.workers, "workers")},
            {"lambda", num(s.lambda, "lambda")},
            {"tau", num(s.tau, "tau")},
            {"seed", num(s.seed, "seed")},
            {"folds", num(s.folds, "folds")},
            {"grid_step", num(s.grid_step, "grid_step")},
            {"reps", num(s.reps, "reps")},
            {"trace_budget_ms", num(s.trace_budget_ms, "trace_budget_ms")}};
}

std::string config_path_from_args(int argc, char** argv) {
    for (int i = 1; i < argc; ++i) {
        std::string a = argv[i];
        if (a == "--config" && i + 1 < argc) return argv[i + 1];
        if (a.rfind("--config=", 0) == 0) return a.substr(9);
    }
    if (const char* env = std::getenv("CASCADE_CONFIG")) return env;
    return fs::exists("cascade.toml") ? "cascade.toml" : "";
}

// Config file first, environment second; flags are applied afterwards by the parser.
void apply_layers(Settings& s, const std::string& config_path) {
    auto table = setters(s);
    if (!config_path.empty()) {
        if (!fs::exists(config_path)) throw FileNotFound(config_path + ": config file not found");
        for (const auto& item : CLI::ConfigTOML().from_file(config_path)) {
            auto it = table.find(item.fullname());
            if (it == table.end()) {
                std::cerr << "cascade: ignoring unknown config key '" << item.fullname() << "'\n";
                continue;
            }
            if (item.inputs.size() != 1)
                throw ConfigUnresolvable("config key " + item.fullname() + " needs exactly one value");
            it->second(item.inputs.front());
        }
    }
    for (auto& [key, set] : table) {
        std::string env = "CASCADE_" + key;
        for (auto& c : env) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        if (const char* v = std::getenv(env.c_str())) set(v);
    }
}

void require(const std::string& value, const char* flag) {
    if (value.empty()) throw UsageError(std::string("missing ") + flag);
}

std::string read_text(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FileNotFound(path + ": cannot open");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// `-` selects standard input.
std::istream& open_input(const std::string& path, std::ifstream& file) {
    if (path == "-") return std::cin;
    file.open(path);
    if (!file) throw FileNotFound(path + ": cannot open");
    return file;
}

std::ostream& open_output(const std::string& path, std::ofstream& file) {
    if (path.empty() || path == "-") return std::cout;
    file.open(path);
    if (!file) throw FileNotFound(path + ": cannot write");
    return file;
}

std::unique_ptr<ClassifierBoundary> maybe_classifier(const Settings& s) {
    if (s.classifier.empty()) return nullptr;
    return connect_classifier(s.classifier);
}

std::vector<std::string> read_lines(std::istream& in) {
    std::vector<std::string> out;
    for (std::string line; std::getline(in, line);)
        if (line.find_first_not_of(" \t\r") != std::string::npos) out.push_back(line);
    return out;
}

int cmd_labels_load(const std::vector<std::string>& in, const std::string& out_path) {
    if (in.empty()) throw UsageError("labels load: --in needs at least one file");
    require(out_path, "--out");
    std::uint64_t previous = 0;
    if (fs::exists(out_path)) previous = read_snapshot_file(out_path).version();
    std::vector<fs::path> files(in.begin(), in.end());
    LabelLoadDiagnostics diag;
    LabelSnapshot snap = load_labels(files, previous, &diag);
    std::ofstream out(out_path);
    if (!out) throw FileNotFound(out_path + ": cannot write");
    out << snapshot_to_json(snap) << '\n';
    std::cerr << "labels: " << snap.size() << " addresses from " << diag.rows << " rows, version "
              << snap.version() << ", " << diag.conflicts_within_source << " in-source conflicts\n";
    for (const auto& m : diag.messages) std::cerr << "  " << m << '\n';
    return 0;
}

int cmd_extract(const Settings& s, const std::string& traces, bool explain) {
    require(traces, "--traces");
    require(s.labels, "--labels");
    LabelSnapshot labels = read_snapshot_file(s.labels);
    Cheatsheet cs = read_cheatsheet_file(s.cheatsheet);
    auto classifier = maybe_classifier(s);
    ExtractOptions opt;
    opt.classifier = classifier.get();
    opt.fallback_on_sidecar_error = true;

    std::ifstream file;
    std::istream& in = open_input(traces, file);
    std::size_t failed = 0, line_no = 0;
    for (std::string line; std::getline(in, line);) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            Trace t = parse_trace(line);
            ExtractDiagnostics diag;
            std::cout << logic_to_json(extract(t, labels, cs, opt, explain ? &diag : nullptr)) << '\n';
            if (explain) std::cerr << explain_to_json(t, diag) << '\n';
        } catch (const Error& e) {
            ++failed;
            std::cerr << "extract: line " << line_no << ": " << e.what() << '\n';
        }
    }
    return failed ? kExitPartial : 0;
}

ExtractedLogic load_attack(const std::string& path, const Settings& s) {
    std::string text = read_text(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw MalformedJson(path + ": " + e.what());
    }
    if (!j.contains("calls")) return logic_from_json(text);
    // A raw trace: extract it first.
    require(s.labels, "--labels (the attack file is a raw trace)");
    return extract(parse_trace(text), read_snapshot_file(s.labels), read_cheatsheet_file(s.cheatsheet));
}

int cmd_generalize(const Settings& s, const std::string& attack, const std::string& out, const std::string& id) {
    require(attack, "--attack-logic");
    require(out, "--out");
    Pattern p = generalize(load_attack(attack, s), s.lambda, s.tau, id);
    write_pattern_file(p, out);
    MatchResult self = match_one(p, *p.reference_logic());
    std::cout << match_result_to_json(self) << '\n';
    std::cerr << "pattern " << p.id() << ": " << p.core_set().size() << " core keys, " << p.proto_set().size()
              << " protocol-specific keys; self-match " << self.sim_final << " (flagged)\n";
    return 0;
}

ScanConfig scan_config(const Settings& s, const LabelSnapshot& labels, const Cheatsheet& cs,
                       const std::vector<Pattern>& patterns, ClassifierBoundary* classifier) {
    ScanConfig c;
    c.labels = &labels;
    c.cheatsheet = &cs;
    c.patterns = &patterns;
    c.workers = s.workers;
    c.classifier = classifier;
    c.trace_budget = std::chrono::milliseconds(s.trace_budget_ms);
    return c;
}

int cmd_scan(const Settings& s, const std::string& traces, bool ordered, bool explain, const std::string& out,
             const std::string& report) {
    require(traces, "--traces");
    require(s.patterns, "--patterns");
    require(s.labels, "--labels");
    auto patterns = load_pattern_dir(s.patterns);
    LabelSnapshot labels = read_snapshot_file(s.labels);
    Cheatsheet cs = read_cheatsheet_file(s.cheatsheet);
    auto classifier = maybe_classifier(s);
    ScanConfig c = scan_config(s, labels, cs, patterns, classifier.get());
    c.ordered = ordered;
    c.explain = explain;

    std::ifstream in_file;
    std::ofstream out_file, report_file;
    std::istream& in = open_input(traces, in_file);
    std::ostream& results = open_output(out, out_file);
    ScanReport r = scan(in, results, c, explain ? &std::cerr : nullptr);
    results.flush();
    if (report.empty()) std::cerr << report_to_json(r) << '\n';
    else open_output(report, report_file) << report_to_json(r) << '\n';
    return r.clean() ? 0 : kExitPartial;
}

int cmd_tune(const Settings& s, const std::string& corpus, const std::string& out) {
    require(corpus, "--corpus");
    TuneOptions opt;
    opt.outer_folds = s.folds;
    opt.grid_step = s.grid_step;
    opt.seed = s.seed;
    TuneResult r = nested_cv(read_corpus_file(corpus), opt);
    std::ofstream file;
    open_output(out, file) << tune_result_to_json(r) << '\n';
    std::cerr << "tune: lambda " << r.best_lambda << ", tau " << r.best_tau << ", mean test F1 "
              << r.mean_test_f1() << " over " << r.folds.size() << " folds, " << r.grid.size()
              << " grid points\n";
    return 0;
}

int cmd_bench(const Settings& s, const std::string& corpus) {
    require(corpus, "--corpus");
    require(s.patterns, "--patterns");
    require(s.labels, "--labels");
    auto patterns = load_pattern_dir(s.patterns);
    LabelSnapshot labels = read_snapshot_file(s.labels);
    Cheatsheet cs = read_cheatsheet_file(s.cheatsheet);
    std::ifstream file;
    auto lines = read_lines(open_input(corpus, file));
    BenchReport b = bench(lines, scan_config(s, labels, cs, patterns, nullptr), s.reps);
    std::cout << bench_report_to_json(b) << '\n';
    return 0;
}

int cmd_synth(const Settings& s, const std::string& seeds_path, const std::string& spec_path,
              const std::string& ratio, std::size_t imitations, std::size_t seed_count, std::size_t traces,
              const std::string& labels_out, const std::string& out) {
    std::ofstream file;
    if (traces > 0) {
        require(labels_out, "--labels-out");
        SyntheticWorld w = synth_world(s.seed);
        std::ofstream lo(labels_out);
        if (!lo) throw FileNotFound(labels_out + ": cannot write");
        lo << snapshot_to_json(w.labels) << '\n';
        std::ostream& o = open_output(out, file);
        for (const auto& t : synth_traces(w, traces, s.seed)) o << serialize_trace(t) << '\n';
        return 0;
    }

    std::vector<ExtractedLogic> seeds;
    if (!seeds_path.empty()) {
        std::ifstream sf;
        for (const auto& line : read_lines(open_input(seeds_path, sf))) seeds.push_back(logic_from_json(line));
    } else {
        seeds = synth_seeds(seed_count, s.seed);
    }
    MutationSpec spec;
    if (!spec_path.empty()) spec = mutation_spec_from_json(read_text(spec_path));
    spec.seed = spec.seed ^ s.seed;
    Ratio r = parse_ratio(ratio);
    std::size_t need = (seeds.size() * imitations * r.benign + r.malicious - 1) / r.malicious;
    auto pool = synth_benign_pool(need, s.seed);
    LabeledCorpus c = synth_corpus(seeds, spec, imitations, pool, r);
    write_corpus(c, open_output(out, file));
    std::cerr << "synth: " << c.count(Label::Malicious) << " malicious, " << c.count(Label::Benign)
              << " benign\n";
    return 0;
}

void print_version(const Settings& s) {
    std::cout << "cascade " << kVersion << "\n";
    std::cout << "  trace schema: 1\n  logic format: logic-v1\n  pattern format: 1\n";
    try {
        Cheatsheet cs = read_cheatsheet_file(s.cheatsheet);
        std::cout << "  cheatsheet: " << s.cheatsheet << " version " << cs.version() << " hash "
                  << cs.content_hash() << "\n";
    } catch (const Error& e) {
        std::cout << "  cheatsheet: unavailable (" << e.what() << ")\n";
    }
    if (!s.labels.empty()) {
        try {
            LabelSnapshot l = read_snapshot_file(s.labels);
            std::cout << "  labels: " << s.labels << " version " << l.version() << " hash " << l.content_hash()
                      << "\n";
        } catch (const Error& e) {
            std::cout << "  labels: unavailable (" << e.what() << ")\n";
        }
    }
}

} // namespace

int main(int argc, char** argv) {
    Settings s;
    try {
        apply_layers(s, config_path_from_args(argc, argv));
    } catch (const std::exception& e) {
        std::cerr << "cascade: " << e.what() << '\n';
        return kExitFatal;
    }

    CLI::App app{"Imitation attack detection over transaction traces"};
    app.require_subcommand(0, 1);
    std::string config_path;
    bool version = false;
    app.add_option("--config", config_path, "Settings file (TOML); defaults to ./cascade.toml when present");
    app.add_flag("--version", version, "Print component versions and snapshot hashes");
    app.add_option("--cheatsheet", s.cheatsheet, "Signature cheatsheet JSON");
    app.add_option("--labels", s.labels, "Label snapshot JSON");

    auto* labels_cmd = app.add_subcommand("labels", "Label store maintenance");
    labels_cmd->require_subcommand(1);
    auto* load_cmd = labels_cmd->add_subcommand("load", "Merge label CSV and registry files into a snapshot");
    std::vector<std::string> label_inputs;
    std::string labels_out;
    load_cmd->add_option("--in", label_inputs, "Label files")->required();
    load_cmd->add_option("--out", labels_out, "Snapshot path")->required();

    std::string traces, out, report, attack, pattern_id, corpus, seeds_path, spec_path, ratio = "1:1",
                                                                                   labels_out_synth;
    bool explain = false, ordered = false;
    std::size_t imitations = 10, seed_count = 50, trace_count = 0;

    auto common = [&](CLI::App* cmd) {
        cmd->add_option("--cheatsheet", s.cheatsheet, "Signature cheatsheet JSON");
        cmd->add_option("--labels", s.labels, "Label snapshot JSON");
    };

    auto* extract_cmd = app.add_subcommand("extract", "Extract attacker logic from traces");
    extract_cmd->add_option("--traces", traces, "Trace JSON lines, or - for stdin");
    common(extract_cmd);
    extract_cmd->add_option("--classifier", s.classifier, "Classifier sidecar socket path");
    extract_cmd->add_flag("--explain", explain, "Write per-invocation decisions to stderr");

    auto* gen_cmd = app.add_subcommand("generalize", "Build a pattern from one attack");
    gen_cmd->add_option("--attack-logic", attack, "Extracted logic JSON, or a raw trace with --labels");
    gen_cmd->add_option("--lambda", s.lambda, "Core-side weight");
    gen_cmd->add_option("--tau", s.tau, "Flag threshold");
    gen_cmd->add_option("--id", pattern_id, "Pattern id (derived from the attack when omitted)");
    gen_cmd->add_option("--out", out, "Pattern file");
    common(gen_cmd);

    auto* scan_cmd = app.add_subcommand("scan", "Match traces against a pattern directory");
    scan_cmd->add_option("--traces", traces, "Trace JSON lines, or - for stdin");
    scan_cmd->add_option("--patterns", s.patterns, "Pattern directory");
    common(scan_cmd);
    scan_cmd->add_option("--workers", s.workers, "Worker threads");
    scan_cmd->add_option("--classifier", s.classifier, "Classifier sidecar socket path");
    scan_cmd->add_option("--trace-budget-ms", s.trace_budget_ms, "Per-trace time budget");
    scan_cmd->add_flag("--ordered", ordered, "Emit results in input order");
    scan_cmd->add_flag("--explain", explain, "Write per-invocation decisions to stderr");
    scan_cmd->add_option("--out", out, "Results file (default stdout)");
    scan_cmd->add_option("--report", report, "Report file (default stderr)");

    auto* tune_cmd = app.add_subcommand("tune", "Nested cross-validation of lambda and tau");
    tune_cmd->add_option("--corpus", corpus, "Labeled corpus JSON lines");
    tune_cmd->add_option("--folds", s.folds, "Outer folds");
    tune_cmd->add_option("--grid-step", s.grid_step, "Grid step on both axes");
    tune_cmd->add_option("--seed", s.seed, "Fold assignment seed");
    tune_cmd->add_option("--out", out, "Result file (default stdout)");

    auto* bench_cmd = app.add_subcommand("bench", "Repeated scans plus the matcher scaling table");
    bench_cmd->add_option("--corpus", corpus, "Trace JSON lines");
    bench_cmd->add_option("--patterns", s.patterns, "Pattern directory");
    common(bench_cmd);
    bench_cmd->add_option("--workers", s.workers, "Worker threads");
    bench_cmd->add_option("--reps", s.reps, "Repetitions (at least 3)");

    auto* synth_cmd = app.add_subcommand("synth", "Synthetic corpora");
    synth_cmd->add_option("--seeds", seeds_path, "Seed attack logics, JSON lines (synthetic seeds when omitted)");
    synth_cmd->add_option("--seed-count", seed_count, "Synthetic seed attacks when --seeds is omitted");
    synth_cmd->add_option("--spec", spec_path, "Mutation spec JSON");
    synth_cmd->add_option("--ratio", ratio, "Malicious:benign ratio, e.g. 1:5");
    synth_cmd->add_option("--imitations", imitations, "Imitations per seed");
    synth_cmd->add_option("--seed", s.seed, "Random seed");
    synth_cmd->add_option("--traces", trace_count, "Emit this many raw traces instead of a labeled corpus");
    synth_cmd->add_option("--labels-out", labels_out_synth, "Label snapshot for --traces");
    synth_cmd->add_option("--out", out, "Output file (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (version) {
            print_version(s);
            return 0;
        }
        if (*load_cmd) return cmd_labels_load(label_inputs, labels_out);
        if (*extract_cmd) return cmd_extract(s, traces, explain);
        if (*gen_cmd) return cmd_generalize(s, attack, out, pattern_id);
        if (*scan_cmd) return cmd_scan(s, traces, ordered, explain, out, report);
        if (*tune_cmd) return cmd_tune(s, corpus, out);
        if (*bench_cmd) return cmd_bench(s, corpus);
        if (*synth_cmd)
            return cmd_synth(s, seeds_path, spec_path, ratio, imitations, seed_count, trace_count,
                             labels_out_synth, out);
        std::cerr << app.help();
        return kExitUsage;
    } catch (const UsageError& e) {
        std::cerr << "cascade: " << e.what() << "\nRun with --help for usage.\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "cascade: " << e.what() << '\n';
        return kExitFatal;
    }
}
