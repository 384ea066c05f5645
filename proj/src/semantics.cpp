#include "cascade/semantics.hpp"

#include "cascade/errors.hpp"
#include "cascade/keccak.hpp"
#include "cascade/signature.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <sstream>
#include <vector>

namespace cascade {

using nlohmann::json;

namespace {

struct Stem {
    std::string_view stem;  // lowercase
    std::string_view category;
    CategoryKind kind;
};

// Matched by containment in the lowercased function name; longest stem wins,
// ties go to the alphabetically smaller stem.
constexpr std::array<Stem, 44> kStems{{
    {"addliquidity", "ADD_LIQUIDITY", CategoryKind::Financial},
    {"airdrop", "AIRDROP", CategoryKind::Financial},
    {"approve", "APPROVE", CategoryKind::Financial},
    {"borrow", "BORROW", CategoryKind::Financial},
    {"bridge", "BRIDGE", CategoryKind::Financial},
    {"burn", "BURN", CategoryKind::Financial},
    {"buy", "BUY", CategoryKind::Financial},
    {"claim", "CLAIM", CategoryKind::Financial},
    {"collateral", "COLLATERAL", CategoryKind::Financial},
    {"compound", "COMPOUND", CategoryKind::Financial},
    {"delegate", "DELEGATE", CategoryKind::Other},
    {"deposit", "DEPOSIT", CategoryKind::Financial},
    {"donate", "DONATE", CategoryKind::Financial},
    {"exchange", "SWAP", CategoryKind::Financial},
    {"flash", "FLASH_LOAN", CategoryKind::Financial},
    {"flashloan", "FLASH_LOAN", CategoryKind::Financial},
    {"harvest", "HARVEST", CategoryKind::Financial},
    {"leverage", "LEVERAGE", CategoryKind::Financial},
    {"liquidat", "LIQUIDATE", CategoryKind::Financial},
    {"lock", "LOCK", CategoryKind::Financial},
    {"migrate", "MIGRATE", CategoryKind::Financial},
    {"mint", "MINT", CategoryKind::Financial},
    {"oracle", "ORACLE", CategoryKind::Other},
    {"permit", "PERMIT", CategoryKind::Financial},
    {"price", "PRICE_QUERY", CategoryKind::Other},
    {"rebase", "REBASE", CategoryKind::Financial},
    {"redeem", "REDEEM", CategoryKind::Financial},
    {"refund", "REFUND", CategoryKind::Financial},
    {"reinvest", "COMPOUND", CategoryKind::Financial},
    {"removeliquidity", "REMOVE_LIQUIDITY", CategoryKind::Financial},
    {"repay", "REPAY", CategoryKind::Financial},
    {"reward", "REWARD", CategoryKind::Financial},
    {"sell", "SELL", CategoryKind::Financial},
    {"skim", "SKIM", CategoryKind::Financial},
    {"stake", "STAKE", CategoryKind::Financial},
    {"supply", "SUPPLY", CategoryKind::Financial},
    {"swap", "SWAP", CategoryKind::Financial},
    {"sync", "SYNC", CategoryKind::Financial},
    {"trade", "SWAP", CategoryKind::Financial},
    {"transfer", "TRANSFER", CategoryKind::Financial},
    {"unlock", "UNLOCK", CategoryKind::Financial},
    {"unstake", "UNSTAKE", CategoryKind::Financial},
    {"vote", "VOTE", CategoryKind::Other},
    {"withdraw", "WITHDRAW", CategoryKind::Financial},
}};

constexpr std::array<std::string_view, 3> kVerificationPrefixes{"before", "after", "check"};
constexpr std::string_view kVerifyCategory = "VERIFY_HOOK";

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

ClassificationOutcome existing_or_new(const Cheatsheet& cs, std::string canonical,
                                      std::string_view id, CategoryKind kind,
                                      std::string description, Provenance provenance) {
    ClassificationOutcome out;
    out.signature = std::move(canonical);
    out.provenance = provenance;
    out.category_id = std::string(id);
    if (cs.has_category(id)) {
        out.kind = ClassificationOutcome::Kind::Existing;
    } else {
        out.kind = ClassificationOutcome::Kind::NewCategory;
        out.new_category = CategoryMeta{std::string(id), kind, std::move(description)};
    }
    return out;
}

// Content-hash suffix keeps ids collision-free without a central counter.
std::string other_id(const std::string& canonical) {
    std::string h = short_hash(canonical, 8);
    std::transform(h.begin(), h.end(), h.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    return "OTHER_" + h;
}

} // namespace

std::string_view to_string(CategoryKind k) {
    switch (k) {
    case CategoryKind::Financial: return "FINANCIAL";
    case CategoryKind::Verification: return "VERIFICATION";
    case CategoryKind::Other: return "OTHER";
    }
    return "OTHER";
}

CategoryKind category_kind_from_string(std::string_view s) {
    if (s == "FINANCIAL") return CategoryKind::Financial;
    if (s == "VERIFICATION") return CategoryKind::Verification;
    if (s == "OTHER") return CategoryKind::Other;
    throw SchemaViolation("unknown category kind '" + std::string(s) + "'");
}

std::string_view to_string(Provenance p) {
    switch (p) {
    case Provenance::Cheatsheet: return "CHEATSHEET";
    case Provenance::Sidecar: return "SIDECAR";
    case Provenance::LocalFallback: return "LOCAL_FALLBACK";
    case Provenance::DiscardUndecoded: return "DISCARD_UNDECODED";
    }
    return "?";
}

bool is_valid_category_id(std::string_view id) {
    if (id.size() < 2 || id.size() > 32) return false;
    return std::all_of(id.begin(), id.end(), [](char c) {
        return (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
    });
}

bool is_token_operation(std::string_view id) {
    for (std::string_view family : {"TRANSFER", "APPROVE", "MINT", "BURN"})
        if (id.substr(0, family.size()) == family) return true;
    return false;
}

Cheatsheet::Cheatsheet(std::string version, std::map<std::string, CategoryMeta> categories,
                       std::unordered_map<std::string, std::string> entries)
    : version_(std::move(version)), categories_(std::move(categories)) {
    for (const auto& [id, meta] : categories_)
        if (!is_valid_category_id(id) || meta.id != id)
            throw SchemaViolation("cheatsheet: invalid category id '" + id + "'");
    for (auto& [sig, id] : entries) {
        if (!categories_.count(id))
            throw SchemaViolation("cheatsheet: entry '" + sig + "' references unknown category '" +
                                  id + "'");
        entries_.emplace(canonicalize_signature(sig), id);
    }
}

std::uint64_t Cheatsheet::revision() const {
    auto dot = version_.rfind('.');
    std::string tail = dot == std::string::npos ? version_ : version_.substr(dot + 1);
    try {
        return tail.empty() ? 0 : std::stoull(tail);
    } catch (const std::exception&) {
        return 0;
    }
}

const CategoryMeta* Cheatsheet::category(std::string_view id) const {
    auto it = categories_.find(std::string(id));
    return it == categories_.end() ? nullptr : &it->second;
}

std::optional<std::string> Cheatsheet::lookup(std::string_view signature) const {
    auto it = entries_.find(canonicalize_signature(signature));
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

std::string Cheatsheet::content_hash() const {
    std::string all;
    for (const auto& [id, meta] : categories_)
        all += id + "|" + std::string(to_string(meta.kind)) + "|" + meta.description + "\n";
    std::vector<std::pair<std::string, std::string>> sorted(entries_.begin(), entries_.end());
    std::sort(sorted.begin(), sorted.end());
    for (const auto& [sig, id] : sorted) all += sig + "=" + id + "\n";
    return short_hash(all, 16);
}

Cheatsheet with_entry(const Cheatsheet& base, const CategoryMeta& meta,
                      const std::string& canonical_signature) {
    Cheatsheet next = base;
    next.categories_.emplace(meta.id, meta);
    if (!canonical_signature.empty()) next.entries_[canonical_signature] = meta.id;
    auto dot = base.version_.rfind('.');
    std::string prefix = dot == std::string::npos ? base.version_ : base.version_.substr(0, dot);
    next.version_ = prefix + "." + std::to_string(base.revision() + 1);
    return next;
}

Cheatsheet persist_new_category(const Cheatsheet& cheatsheet,
                                const ClassificationOutcome& outcome) {
    if (outcome.kind != ClassificationOutcome::Kind::NewCategory)
        throw InvalidHyperparameter("persist_new_category: outcome is not NEW_CATEGORY");
    const CategoryMeta& meta = outcome.new_category;
    if (!is_valid_category_id(meta.id))
        throw SchemaViolation("persist_new_category: invalid id '" + meta.id + "'");
    if (const CategoryMeta* existing = cheatsheet.category(meta.id)) {
        if (existing->description != meta.description || existing->kind != meta.kind)
            throw CategoryCollision("category '" + meta.id + "' already exists with description '" +
                                    existing->description + "'");
        auto cur = cheatsheet.lookup(outcome.signature);
        if (outcome.signature.empty() || (cur && *cur == meta.id)) return cheatsheet;
    }
    return with_entry(cheatsheet, meta, canonicalize_signature(outcome.signature));
}

ClassificationOutcome classify_local(const Cheatsheet& cheatsheet, std::string_view signature) {
    std::string canonical = canonicalize_signature(signature);
    std::string name = lower(function_name(canonical));

    for (auto prefix : kVerificationPrefixes) {
        if (name.size() > prefix.size() && name.compare(0, prefix.size(), prefix) == 0)
            return existing_or_new(cheatsheet, canonical, kVerifyCategory,
                                   CategoryKind::Verification,
                                   "access-control and validation hooks", Provenance::LocalFallback);
    }

    const Stem* best = nullptr;
    for (const auto& s : kStems) {
        if (name.find(s.stem) == std::string::npos) continue;
        if (!best || s.stem.size() > best->stem.size() ||
            (s.stem.size() == best->stem.size() && s.stem < best->stem))
            best = &s;
    }
    if (best)
        return existing_or_new(cheatsheet, canonical, best->category, best->kind,
                               "stem '" + std::string(best->stem) + "'", Provenance::LocalFallback);

    return existing_or_new(cheatsheet, canonical, other_id(canonical), CategoryKind::Other,
                           "unclassified " + canonical, Provenance::LocalFallback);
}

ClassificationOutcome classify_unknown(const Cheatsheet& cheatsheet, std::string_view signature,
                                       bool is_decoded, ClassifierBoundary* classifier,
                                       std::string_view source_code) {
    if (!is_decoded) {
        ClassificationOutcome out;
        out.kind = ClassificationOutcome::Kind::Discarded;
        out.provenance = Provenance::DiscardUndecoded;
        out.signature = canonicalize_signature(signature);
        return out;
    }
    if (!classifier) return classify_local(cheatsheet, signature);

    std::string canonical = canonicalize_signature(signature);
    ClassifierResponse r = classifier->classify({canonical, std::string(source_code)});
    if (r.validated && is_valid_category_id(r.category)) {
        const CategoryMeta* meta = cheatsheet.category(r.category);
        return existing_or_new(cheatsheet, canonical, r.category,
                               meta ? meta->kind : CategoryKind::Other,
                               "sidecar category " + r.category, Provenance::Sidecar);
    }
    // Rejected by validation: the signature founds its own category.
    return existing_or_new(cheatsheet, canonical, other_id(canonical), CategoryKind::Other,
                           "unclassified " + canonical, Provenance::Sidecar);
}

ClassificationOutcome classify_signature(const Cheatsheet& cheatsheet, std::string_view signature,
                                         ClassifierBoundary* classifier) {
    bool decoded = !signature.empty();
    if (decoded) {
        if (auto id = cheatsheet.lookup(signature)) {
            ClassificationOutcome out;
            out.kind = ClassificationOutcome::Kind::Existing;
            out.category_id = *id;
            out.signature = canonicalize_signature(signature);
            out.provenance = Provenance::Cheatsheet;
            return out;
        }
    }
    return classify_unknown(cheatsheet, signature, decoded, classifier);
}

Cheatsheet cheatsheet_from_json(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw MalformedJson(e.what());
    }
    try {
        std::map<std::string, CategoryMeta> categories;
        for (const auto& c : j.at("categories")) {
            CategoryMeta m;
            m.id = c.at("id").get<std::string>();
            m.kind = category_kind_from_string(c.at("kind").get<std::string>());
            m.description = c.value("description", "");
            if (!categories.emplace(m.id, m).second)
                throw SchemaViolation("cheatsheet: duplicate category '" + m.id + "'");
        }
        std::unordered_map<std::string, std::string> entries;
        for (const auto& e : j.at("entries")) {
            std::string sig = canonicalize_signature(e.at("signature").get<std::string>());
            std::string id = e.at("category").get<std::string>();
            auto [it, inserted] = entries.emplace(sig, id);
            if (!inserted && it->second != id)
                throw SchemaViolation("cheatsheet: signature '" + sig +
                                      "' maps to two categories");
        }
        if (categories.empty()) throw SchemaViolation("cheatsheet: no categories");
        return Cheatsheet(j.at("version").get<std::string>(), std::move(categories),
                          std::move(entries));
    } catch (const json::exception& e) {
        throw SchemaViolation(std::string("cheatsheet: ") + e.what());
    }
}

std::string cheatsheet_to_json(const Cheatsheet& cheatsheet) {
    nlohmann::ordered_json j;
    j["version"] = cheatsheet.version();
    auto cats = nlohmann::ordered_json::array();
    for (const auto& [id, m] : cheatsheet.categories())
        cats.push_back({{"id", id}, {"kind", to_string(m.kind)}, {"description", m.description}});
    j["categories"] = std::move(cats);
    std::vector<std::pair<std::string, std::string>> sorted(cheatsheet.entries().begin(),
                                                            cheatsheet.entries().end());
    std::sort(sorted.begin(), sorted.end(),
              [](const auto& a, const auto& b) { return std::tie(a.second, a.first) < std::tie(b.second, b.first); });
    auto entries = nlohmann::ordered_json::array();
    for (const auto& [sig, id] : sorted) entries.push_back({{"signature", sig}, {"category", id}});
    j["entries"] = std::move(entries);
    return j.dump(1);
}

Cheatsheet read_cheatsheet_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FileNotFound(path.string() + ": cannot open cheatsheet");
    std::stringstream ss;
    ss << in.rdbuf();
    return cheatsheet_from_json(ss.str());
}

} // namespace cascade
