#include "cascade/matcher.hpp"

#include "cascade/errors.hpp"
#include "cascade/json_io.hpp"
#include "cascade/keccak.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace cascade {

using nlohmann::json;

namespace {

void check_unit(double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0))
        throw InvalidHyperparameter(std::string(name) + " must lie in [0, 1], got " +
                                    std::to_string(v));
}

std::vector<LogicKey> dedup(std::vector<LogicKey> keys) {
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
    return keys;
}

nlohmann::ordered_json keys_to_json(const std::vector<LogicKey>& keys) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& k : keys)
        arr.push_back({k.category, std::string(to_string(k.token)), std::string(to_string(k.role))});
    return arr;
}

std::vector<LogicKey> keys_from_json(const json& arr) {
    std::vector<LogicKey> keys;
    for (const auto& k : arr) {
        if (!k.is_array() || k.size() != 3) throw SchemaViolation("pattern key must be a triple");
        keys.push_back({k[0].get<std::string>(), token_class_from_string(k[1].get<std::string>()),
                        address_role_from_string(k[2].get<std::string>())});
    }
    return keys;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FileNotFound(path.string() + ": cannot open");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

LogicKey key_of(const LogicItem& item) { return {item.category_id, item.token, item.target_role}; }

std::uint64_t key_hash(std::string_view category, TokenClass token, AddressRole role) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : category) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    h ^= static_cast<std::uint64_t>(token) * 0x9e3779b97f4a7c15ULL;
    h *= 1099511628211ULL;
    h ^= static_cast<std::uint64_t>(role) * 0xc2b2ae3d27d4eb4fULL;
    h *= 1099511628211ULL;
    return h;
}

double ansd(std::span<const LogicKey> reference, std::span<const LogicKey> candidate) {
    if (reference.empty()) throw EmptyReference("ansd: empty reference set");
    std::unordered_set<LogicKey, LogicKeyHash> cand(candidate.begin(), candidate.end());
    std::unordered_set<LogicKey, LogicKeyHash> ref(reference.begin(), reference.end());
    std::size_t missing = 0;
    for (const auto& k : ref)
        if (!cand.count(k)) ++missing;
    return static_cast<double>(ref.size() - missing) / static_cast<double>(ref.size());
}

Pattern::Pattern(std::string pattern_id, std::string source_tx, std::vector<LogicKey> core_set,
                 std::vector<LogicKey> proto_set, double lambda, double tau,
                 std::int64_t created_at, std::optional<ExtractedLogic> reference_logic)
    : id_(std::move(pattern_id)),
      source_tx_(std::move(source_tx)),
      core_(dedup(std::move(core_set))),
      proto_(dedup(std::move(proto_set))),
      lambda_(lambda),
      tau_(tau),
      created_at_(created_at),
      reference_(std::move(reference_logic)) {
    check_unit(lambda_, "lambda");
    check_unit(tau_, "tau");
    if (core_.empty() && proto_.empty())
        throw EmptyPattern("pattern " + id_ + " has no core or protocol-specific keys");
    for (const auto& k : core_)
        if (k.token != TokenClass::Core) throw SchemaViolation("core_set holds a non-CORE key");
    for (const auto& k : proto_)
        if (k.token != TokenClass::ProtocolSpecific)
            throw SchemaViolation("proto_set holds a non-PROTOCOL_SPECIFIC key");

    int slot_no = 0;
    for (const auto* side : {&core_, &proto_})
        for (const auto& k : *side) index_.emplace(key_hash(k.category, k.token, k.role), slot_no++);

    weights_.assign(slot_count(), 1);
    if (reference_) {
        std::vector<std::uint32_t> counts(slot_count(), 0);
        for (const auto& item : reference_->items) {
            int s = slot(item.category_id, item.token, item.target_role);
            if (s >= 0) ++counts[static_cast<std::size_t>(s)];
        }
        for (std::size_t i = 0; i < counts.size(); ++i) weights_[i] = std::max(1u, counts[i]);
    }
    for (std::size_t i = 0; i < weights_.size(); ++i)
        (i < core_.size() ? core_weight_ : proto_weight_) += weights_[i];
}

Pattern Pattern::with_hyperparameters(double lambda, double tau) const {
    return Pattern(id_, source_tx_, core_, proto_, lambda, tau, created_at_, reference_);
}

int Pattern::slot(std::string_view category, TokenClass token, AddressRole role) const {
    auto [lo, hi] = index_.equal_range(key_hash(category, token, role));
    for (auto it = lo; it != hi; ++it) {
        const LogicKey& k = it->second < static_cast<int>(core_.size())
                                ? core_[static_cast<std::size_t>(it->second)]
                                : proto_[static_cast<std::size_t>(it->second) - core_.size()];
        if (k.token == token && k.role == role && k.category == category) return it->second;
    }
    return -1;
}

SideScores side_scores(const Pattern& pattern, const ExtractedLogic& candidate,
                       const MatchOptions& options) {
    // Hit counters persist per thread; only touched slots are reset, so the cost
    // follows the candidate length rather than the pattern size.
    thread_local std::vector<std::uint32_t> hits;
    thread_local std::vector<std::size_t> touched;
    const std::size_t slots = pattern.slot_count();
    if (hits.size() < slots) hits.resize(slots, 0);
    touched.clear();

    const std::size_t n_core = pattern.core_set().size();
    std::uint64_t covered_core = 0, covered_proto = 0;
    for (const auto& item : candidate.items) {
        if (item.token == TokenClass::NonToken) continue;
        int s = pattern.slot(item.category_id, item.token, item.target_role);
        if (s < 0) continue;
        auto slot = static_cast<std::size_t>(s);
        std::uint32_t& h = hits[slot];
        if (h == 0) touched.push_back(slot);
        std::uint32_t cap = options.multiset ? pattern.slot_weight(slot) : 1;
        if (h < cap) (slot < n_core ? covered_core : covered_proto) += 1;
        ++h;
    }
    for (auto slot : touched) hits[slot] = 0;

    auto side = [&](bool core, std::uint64_t covered) -> std::optional<double> {
        std::uint64_t total = options.multiset ? pattern.side_weight(core)
                                               : (core ? n_core : slots - n_core);
        if (total == 0) return std::nullopt;
        return static_cast<double>(covered) / static_cast<double>(total);
    };
    return {side(true, covered_core), side(false, covered_proto)};
}

double combine(const SideScores& s, double lambda) {
    if (s.core && s.proto) {
        // lambda*core + (1-lambda)*proto, arranged so equal sides reproduce
        // their common value exactly.
        return *s.proto + lambda * (*s.core - *s.proto);
    }
    if (s.core) return *s.core;
    if (s.proto) return *s.proto;
    return 0.0;
}

MatchResult match_one(const Pattern& pattern, const ExtractedLogic& candidate,
                      const MatchOptions& options) {
    SideScores s = side_scores(pattern, candidate, options);
    MatchResult r;
    r.pattern_id = pattern.id();
    r.tx_hash = candidate.tx_hash;
    r.sim_core = s.core;
    r.sim_proto = s.proto;
    r.sim_final = combine(s, pattern.lambda());
    r.flagged = r.sim_final >= pattern.tau();
    return r;
}

std::vector<MatchResult> match_all(std::span<const Pattern> patterns,
                                   const ExtractedLogic& candidate, const MatchOptions& options) {
    std::vector<MatchResult> out;
    out.reserve(patterns.size());
    for (const auto& p : patterns) out.push_back(match_one(p, candidate, options));
    return out;
}

Pattern generalize(const ExtractedLogic& attack, double lambda, double tau,
                   std::string pattern_id) {
    check_unit(lambda, "lambda");
    check_unit(tau, "tau");
    std::vector<LogicKey> core, proto;
    for (const auto& item : attack.items) {
        if (item.token == TokenClass::Core) core.push_back(key_of(item));
        else if (item.token == TokenClass::ProtocolSpecific) proto.push_back(key_of(item));
    }
    if (core.empty() && proto.empty())
        throw EmptyPattern("attack " + attack.tx_hash + " has no token-bearing logic items");
    if (pattern_id.empty())
        pattern_id = "p_" + short_hash(logic_fingerprint(attack) + attack.tx_hash, 12);

    auto now = std::chrono::duration_cast<std::chrono::seconds>(
                   std::chrono::system_clock::now().time_since_epoch())
                   .count();
    Pattern p(std::move(pattern_id), attack.tx_hash, std::move(core), std::move(proto), lambda,
              tau, now, attack);

    MatchResult self = match_one(p, attack);
    if (self.sim_final != 1.0 || !self.flagged)
        throw InvariantViolation("generalized pattern does not flag its own source");
    return p;
}

std::string pattern_to_json(const Pattern& pattern, bool include_reference) {
    nlohmann::ordered_json j;
    j["pattern_id"] = pattern.id();
    j["source_tx"] = pattern.source_tx();
    j["lambda"] = pattern.lambda();
    j["tau"] = pattern.tau();
    j["core_set"] = keys_to_json(pattern.core_set());
    j["proto_set"] = keys_to_json(pattern.proto_set());
    j["created_at"] = pattern.created_at();
    if (include_reference && pattern.reference_logic())
        j["reference_logic"] = to_json_value(*pattern.reference_logic());
    return j.dump(1);
}

Pattern pattern_from_json(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw MalformedJson(e.what());
    }
    try {
        std::optional<ExtractedLogic> ref;
        if (auto it = j.find("reference_logic"); it != j.end() && !it->is_null())
            ref = logic_from_json_value(*it);
        return Pattern(j.at("pattern_id").get<std::string>(), j.value("source_tx", ""),
                       keys_from_json(j.at("core_set")), keys_from_json(j.at("proto_set")),
                       j.at("lambda").get<double>(), j.at("tau").get<double>(),
                       j.value("created_at", std::int64_t{0}), std::move(ref));
    } catch (const json::exception& e) {
        throw SchemaViolation(std::string("pattern: ") + e.what());
    }
}

Pattern read_pattern_file(const std::filesystem::path& path) {
    return pattern_from_json(read_file(path));
}

void write_pattern_file(const Pattern& pattern, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw FileNotFound(path.string() + ": cannot write pattern");
    out << pattern_to_json(pattern) << "\n";
}

std::vector<Pattern> load_pattern_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    if (!std::filesystem::is_directory(dir, ec))
        throw FileNotFound(dir.string() + ": pattern directory not found");
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<Pattern> out;
    out.reserve(files.size());
    for (const auto& f : files) out.push_back(read_pattern_file(f));
    return out;
}

std::string match_result_to_json(const MatchResult& r) {
    nlohmann::ordered_json j;
    j["pattern_id"] = r.pattern_id;
    j["tx_hash"] = r.tx_hash;
    auto score = [](const std::optional<double>& v) -> nlohmann::ordered_json {
        if (v) return *v;
        return "NOT_APPLICABLE";
    };
    j["sim_core"] = score(r.sim_core);
    j["sim_proto"] = score(r.sim_proto);
    j["sim_final"] = r.sim_final;
    j["flagged"] = r.flagged;
    return j.dump();
}

} // namespace cascade
