#pragma once

#include "cascade/extractor.hpp"
#include "cascade/keccak.hpp"
#include "cascade/labels.hpp"
#include "cascade/matcher.hpp"
#include "cascade/semantics.hpp"
#include "cascade/trace.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

namespace cascade::testing {

inline std::filesystem::path data_dir() { return CASCADE_SOURCE_DIR "/data"; }
inline std::filesystem::path fixture_dir() { return CASCADE_SOURCE_DIR "/tests/fixtures"; }

inline const Cheatsheet& seed_cheatsheet() {
    static const Cheatsheet cs = read_cheatsheet_file(data_dir() / "cheatsheet.json");
    return cs;
}

/// Deterministic address from a small integer tag.
inline std::string addr(unsigned n) {
    std::string hex = to_hex(keccak256("addr" + std::to_string(n)).data(), 20);
    return "0x" + hex;
}

inline std::string txh(unsigned n) {
    return "0x" + to_hex(keccak256("tx" + std::to_string(n)).data(), 32);
}

inline Invocation call(std::string caller, std::string callee, std::string signature,
                       std::vector<Invocation> children = {}) {
    Invocation inv;
    inv.caller = std::move(caller);
    inv.callee = std::move(callee);
    inv.signature = std::move(signature);
    inv.children = std::move(children);
    return inv;
}

/// Fixes depths and callers of a hand-built tree (children called by their parent's callee).
inline void normalize_tree(Invocation& inv, std::uint32_t depth) {
    inv.depth = depth;
    for (auto& c : inv.children) {
        c.caller = inv.callee;
        normalize_tree(c, depth + 1);
    }
}

inline Trace make_trace(std::string tx_hash, std::string sender, std::vector<Invocation> roots) {
    Trace t;
    t.tx_hash = std::move(tx_hash);
    t.sender = std::move(sender);
    t.chain_id = 1;
    for (auto& r : roots) {
        r.caller = t.sender;
        normalize_tree(r, 0);
    }
    t.root_calls = std::move(roots);
    return t;
}

inline LabelSnapshot make_labels(const std::vector<std::pair<std::string, LabelClass>>& rows) {
    std::unordered_map<std::string, AddressLabel> m;
    for (const auto& [a, c] : rows) m[a] = AddressLabel{a, c, "fixture", LabelSource::VendorDb};
    return LabelSnapshot(std::move(m), 1, {});
}

inline std::filesystem::path temp_path(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "cascade_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

inline LogicItem item(std::string cat, TokenClass tok, std::uint32_t depth = 0) {
    AddressRole role = tok == TokenClass::Core               ? AddressRole::CoreAssetToken
                       : tok == TokenClass::ProtocolSpecific ? AddressRole::ProtocolToken
                                                             : AddressRole::Protocol;
    return LogicItem{std::move(cat), tok, role, depth};
}

inline ExtractedLogic logic_of(std::string tx, std::vector<LogicItem> items) {
    ExtractedLogic l;
    l.tx_hash = std::move(tx);
    l.items = std::move(items);
    l.source_invocation_count = l.items.size();
    return l;
}

/// Random key universe used by property tests: categories C0..C{n-1}, both token classes.
inline LogicKey random_key(std::mt19937_64& rng, unsigned universe) {
    std::uniform_int_distribution<unsigned> cat(0, universe - 1);
    std::bernoulli_distribution core(0.5);
    bool c = core(rng);
    return LogicKey{"C" + std::to_string(cat(rng)),
                    c ? TokenClass::Core : TokenClass::ProtocolSpecific,
                    c ? AddressRole::CoreAssetToken : AddressRole::ProtocolToken};
}

inline LogicItem item_of(const LogicKey& k) { return LogicItem{k.category, k.token, k.role, 0}; }

} // namespace cascade::testing
