#include "cascade/labels.hpp"

#include "cascade/errors.hpp"
#include "cascade/keccak.hpp"
#include "cascade/trace.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <sstream>

namespace cascade {

using nlohmann::json;

namespace {

constexpr std::string_view kCsvHeader = "address,label_class,display_name,source";

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

// RFC 4180 style: double quotes enclose fields, "" escapes a quote.
bool split_csv(std::string_view line, std::vector<std::string>& out) {
    out.clear();
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (quoted) return false;
    out.push_back(std::move(cur));
    return true;
}

struct Merger {
    std::unordered_map<std::string, AddressLabel> entries;
    LabelLoadDiagnostics* diag;

    void add(AddressLabel label, const std::string& where) {
        if (diag) ++diag->rows;
        auto [it, inserted] = entries.try_emplace(label.address, label);
        if (inserted) return;
        AddressLabel& cur = it->second;
        if (label.source > cur.source) {
            cur = std::move(label);
        } else if (label.source == cur.source) {
            if (cur.label_class != label.label_class && diag) {
                ++diag->conflicts_within_source;
                diag->messages.push_back(where + ": " + label.address + " relabeled " +
                                         std::string(to_string(cur.label_class)) + " -> " +
                                         std::string(to_string(label.label_class)) +
                                         " within " + std::string(to_string(label.source)));
            }
            cur = std::move(label);
        }
    }
};

void load_csv(std::istream& in, const std::string& file, Merger& merger) {
    std::string line;
    std::size_t lineno = 1;  // header already consumed
    std::vector<std::string> fields;
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view view = trim(line);
        if (view.empty()) continue;
        std::string where = file + ":" + std::to_string(lineno);
        if (!split_csv(view, fields) || fields.size() != 4)
            throw MalformedRow(where + ": expected 4 fields");
        AddressLabel label;
        label.address = normalize_address(trim(fields[0]));
        if (!is_address(label.address)) throw MalformedRow(where + ": invalid address");
        try {
            label.label_class = label_class_from_string(trim(fields[1]));
            label.source = label_source_from_string(trim(fields[3]));
        } catch (const Error& e) {
            throw MalformedRow(where + ": " + e.what());
        }
        label.display_name = std::string(trim(fields[2]));
        merger.add(std::move(label), where);
    }
}

void load_core_registry(std::istream& in, const std::string& file, std::string first_line,
                        Merger& merger) {
    std::string line = std::move(first_line);
    std::size_t lineno = 1;
    std::int64_t chain = 0;
    do {
        std::string_view view = trim(line);
        std::string where = file + ":" + std::to_string(lineno);
        if (view.empty()) {
        } else if (view.front() == '#') {
            auto pos = view.find("chain_id=");
            if (pos != std::string_view::npos) {
                try {
                    chain = std::stoll(std::string(view.substr(pos + 9)));
                } catch (const std::exception&) {
                    throw MalformedRow(where + ": bad chain_id header");
                }
            }
        } else {
            AddressLabel label;
            label.address = normalize_address(view);
            if (!is_address(label.address)) throw MalformedRow(where + ": invalid address");
            label.label_class = LabelClass::CoreAssetToken;
            label.display_name = "core-registry chain_id=" + std::to_string(chain);
            label.source = LabelSource::CommunityDb;
            merger.add(std::move(label), where);
        }
        ++lineno;
    } while (std::getline(in, line));
}

template <typename E, std::size_t N>
E parse_enum(std::string_view s, const std::array<std::pair<std::string_view, E>, N>& table,
             const char* what) {
    for (const auto& [name, value] : table)
        if (name == s) return value;
    throw SchemaViolation(std::string("unknown ") + what + " '" + std::string(s) + "'");
}

constexpr std::array<std::pair<std::string_view, LabelClass>, 5> kLabelClasses{{
    {"PROTOCOL", LabelClass::Protocol},
    {"CORE_ASSET_TOKEN", LabelClass::CoreAssetToken},
    {"PROTOCOL_TOKEN", LabelClass::ProtocolToken},
    {"EXPLOITER", LabelClass::Exploiter},
    {"UNLABELED", LabelClass::Unlabeled},
}};
constexpr std::array<std::pair<std::string_view, LabelSource>, 3> kSources{{
    {"COMMUNITY_DB", LabelSource::CommunityDb},
    {"VENDOR_DB", LabelSource::VendorDb},
    {"LOCAL_OVERRIDE", LabelSource::LocalOverride},
}};
constexpr std::array<std::pair<std::string_view, AddressRole>, 5> kRoles{{
    {"PROTOCOL", AddressRole::Protocol},
    {"CORE_ASSET_TOKEN", AddressRole::CoreAssetToken},
    {"PROTOCOL_TOKEN", AddressRole::ProtocolToken},
    {"ATTACKER_SCRIPT", AddressRole::AttackerScript},
    {"SENDER", AddressRole::Sender},
}};
constexpr std::array<std::pair<std::string_view, TokenClass>, 3> kTokenClasses{{
    {"CORE", TokenClass::Core},
    {"PROTOCOL_SPECIFIC", TokenClass::ProtocolSpecific},
    {"NON_TOKEN", TokenClass::NonToken},
}};

template <typename E, std::size_t N>
std::string_view enum_name(E v, const std::array<std::pair<std::string_view, E>, N>& table) {
    for (const auto& [name, value] : table)
        if (value == v) return name;
    return "?";
}

} // namespace

std::string_view to_string(LabelClass c) { return enum_name(c, kLabelClasses); }
std::string_view to_string(LabelSource s) { return enum_name(s, kSources); }
std::string_view to_string(AddressRole r) { return enum_name(r, kRoles); }
std::string_view to_string(TokenClass t) { return enum_name(t, kTokenClasses); }
LabelClass label_class_from_string(std::string_view s) {
    return parse_enum(s, kLabelClasses, "label_class");
}
LabelSource label_source_from_string(std::string_view s) {
    return parse_enum(s, kSources, "source");
}
AddressRole address_role_from_string(std::string_view s) {
    return parse_enum(s, kRoles, "role");
}
TokenClass token_class_from_string(std::string_view s) {
    return parse_enum(s, kTokenClasses, "token class");
}

LabelSnapshot::LabelSnapshot(std::unordered_map<std::string, AddressLabel> entries,
                             std::uint64_t version,
                             std::chrono::system_clock::time_point loaded_at)
    : entries_(std::move(entries)), version_(version), loaded_at_(loaded_at) {}

const AddressLabel* LabelSnapshot::find(std::string_view address) const {
    auto it = entries_.find(std::string(address));
    return it == entries_.end() ? nullptr : &it->second;
}

LabelClass LabelSnapshot::label_class(std::string_view address) const {
    const AddressLabel* l = find(address);
    return l ? l->label_class : LabelClass::Unlabeled;
}

std::string LabelSnapshot::content_hash() const {
    std::vector<std::string> rows;
    rows.reserve(entries_.size());
    for (const auto& [addr, l] : entries_)
        rows.push_back(addr + "," + std::string(to_string(l.label_class)) + "," +
                       std::string(to_string(l.source)));
    std::sort(rows.begin(), rows.end());
    std::string all;
    for (const auto& r : rows) all += r + "\n";
    return short_hash(all, 16);
}

LabelSnapshot load_labels(const std::vector<std::filesystem::path>& files,
                          std::uint64_t previous_version, LabelLoadDiagnostics* diag) {
    Merger merger{{}, diag};
    for (const auto& file : files) {
        std::ifstream in(file);
        if (!in) throw FileNotFound(file.string() + ": cannot open label file");
        std::string first;
        if (!std::getline(in, first)) continue;
        if (trim(first) == kCsvHeader)
            load_csv(in, file.string(), merger);
        else
            load_core_registry(in, file.string(), first, merger);
    }
    return LabelSnapshot(std::move(merger.entries), previous_version + 1,
                         std::chrono::system_clock::now());
}

AddressRole classify_address(const LabelSnapshot& snapshot, std::string_view addr,
                             std::string_view trace_sender, bool directly_called_by_sender) {
    if (addr == trace_sender) return AddressRole::Sender;
    switch (snapshot.label_class(addr)) {
    case LabelClass::Protocol: return AddressRole::Protocol;
    case LabelClass::CoreAssetToken: return AddressRole::CoreAssetToken;
    case LabelClass::ProtocolToken: return AddressRole::ProtocolToken;
    case LabelClass::Exploiter:
    case LabelClass::Unlabeled: break;
    }
    // A direct callee of the sender only becomes an attacker script when it carries
    // no protocol or token label; that case is already covered above.
    (void)directly_called_by_sender;
    return AddressRole::AttackerScript;
}

TokenClass token_class(const LabelSnapshot& snapshot, std::string_view addr, bool token_like) {
    switch (snapshot.label_class(addr)) {
    case LabelClass::CoreAssetToken: return TokenClass::Core;
    case LabelClass::ProtocolToken: return TokenClass::ProtocolSpecific;
    case LabelClass::Unlabeled:
        return token_like ? TokenClass::ProtocolSpecific : TokenClass::NonToken;
    case LabelClass::Protocol:
    case LabelClass::Exploiter: return TokenClass::NonToken;
    }
    return TokenClass::NonToken;
}

std::string snapshot_to_json(const LabelSnapshot& snapshot) {
    nlohmann::ordered_json j;
    j["version"] = snapshot.version();
    j["loaded_at"] = std::chrono::duration_cast<std::chrono::seconds>(
                         snapshot.loaded_at().time_since_epoch())
                         .count();
    j["content_hash"] = snapshot.content_hash();
    std::vector<const AddressLabel*> sorted;
    for (const auto& [a, l] : snapshot.entries()) sorted.push_back(&l);
    std::sort(sorted.begin(), sorted.end(),
              [](auto* a, auto* b) { return a->address < b->address; });
    auto entries = nlohmann::ordered_json::array();
    for (const auto* l : sorted)
        entries.push_back({{"address", l->address},
                           {"label_class", to_string(l->label_class)},
                           {"display_name", l->display_name},
                           {"source", to_string(l->source)}});
    j["entries"] = std::move(entries);
    return j.dump(1);
}

LabelSnapshot snapshot_from_json(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw MalformedJson(e.what());
    }
    try {
        std::unordered_map<std::string, AddressLabel> entries;
        for (const auto& e : j.at("entries")) {
            AddressLabel l;
            l.address = normalize_address(e.at("address").get<std::string>());
            if (!is_address(l.address)) throw SchemaViolation("/entries: invalid address");
            l.label_class = label_class_from_string(e.at("label_class").get<std::string>());
            l.display_name = e.value("display_name", "");
            l.source = label_source_from_string(e.at("source").get<std::string>());
            entries[l.address] = std::move(l);
        }
        auto loaded = std::chrono::system_clock::time_point(
            std::chrono::seconds(j.value("loaded_at", std::int64_t{0})));
        return LabelSnapshot(std::move(entries), j.at("version").get<std::uint64_t>(), loaded);
    } catch (const json::exception& e) {
        throw SchemaViolation(std::string("label snapshot: ") + e.what());
    }
}

LabelSnapshot read_snapshot_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FileNotFound(path.string() + ": cannot open label snapshot");
    std::stringstream ss;
    ss << in.rdbuf();
    return snapshot_from_json(ss.str());
}

} // namespace cascade
