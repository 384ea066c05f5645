#include "cascade/trace.hpp"

#include "cascade/errors.hpp"
#include "cascade/keccak.hpp"
#include "cascade/signature.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>

namespace cascade {

using nlohmann::json;

namespace {

// EVM call-stack limit; deeper documents cannot come from a real execution.
constexpr std::uint32_t kMaxCallDepth = 1024;

bool is_lower_hex(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](char c) {
        return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
    });
}

class TraceReader {
public:
    explicit TraceReader(ParseDiagnostics* diag) : diag_(diag) {}

    Trace read(const json& doc) {
        if (!doc.is_object()) throw SchemaViolation("/: expected object");
        note_unknown(doc, {"tx_hash", "sender", "chain_id", "calls"});

        Trace t;
        t.tx_hash = normalize_address(require_string(doc, "tx_hash", ""));
        if (!is_tx_hash(t.tx_hash)) throw SchemaViolation("/tx_hash: expected 0x + 64 hex chars");
        t.sender = read_address(doc, "sender", "");

        const json& chain = require(doc, "chain_id", "");
        if (!chain.is_number_integer()) throw SchemaViolation("/chain_id: expected integer");
        t.chain_id = chain.get<std::int64_t>();

        const json& calls = require(doc, "calls", "");
        if (!calls.is_array()) throw SchemaViolation("/calls: expected array");
        if (calls.empty()) throw InvariantViolation("/calls: at least one root call required");

        t.root_calls.reserve(calls.size());
        for (std::size_t i = 0; i < calls.size(); ++i) {
            std::string path = "/calls/" + std::to_string(i);
            Invocation inv = read_invocation(calls[i], path);
            if (inv.depth != 0)
                throw InvariantViolation(path + ": root call must have depth 0");
            if (inv.caller != t.sender)
                throw InvariantViolation(path + ": root caller must equal sender");
            t.root_calls.push_back(std::move(inv));
        }
        return t;
    }

private:
    ParseDiagnostics* diag_;
    std::size_t count_ = 0;

    void note_unknown(const json& obj, std::initializer_list<std::string_view> known) {
        if (!diag_) return;
        for (auto it = obj.begin(); it != obj.end(); ++it)
            if (std::find(known.begin(), known.end(), it.key()) == known.end())
                ++diag_->unknown_fields;
    }

    static const json& require(const json& obj, const char* key, const std::string& path) {
        auto it = obj.find(key);
        if (it == obj.end()) throw SchemaViolation(path + "/" + key + ": missing field");
        return *it;
    }

    static std::string require_string(const json& obj, const char* key, const std::string& path) {
        const json& v = require(obj, key, path);
        if (!v.is_string()) throw SchemaViolation(path + "/" + key + ": expected string");
        return v.get<std::string>();
    }

    static std::string read_address(const json& obj, const char* key, const std::string& path) {
        std::string a = normalize_address(require_string(obj, key, path));
        if (!is_address(a))
            throw SchemaViolation(path + "/" + key + ": expected 0x + 40 hex chars");
        return a;
    }

    Invocation read_invocation(const json& node, const std::string& path) {
        if (!node.is_object()) throw SchemaViolation(path + ": expected object");
        if (++count_ > kMaxTraceInvocations)
            throw SchemaViolation(path + ": trace exceeds " +
                                  std::to_string(kMaxTraceInvocations) + " invocations");
        note_unknown(node, {"caller", "callee", "selector", "signature", "kind", "depth",
                            "value", "children"});

        Invocation inv;
        inv.caller = read_address(node, "caller", path);
        inv.callee = read_address(node, "callee", path);

        if (auto it = node.find("selector"); it != node.end() && !it->is_null()) {
            if (!it->is_string()) throw SchemaViolation(path + "/selector: expected string");
            inv.selector = normalize_address(it->get<std::string>());
            if (!inv.selector.empty() &&
                (inv.selector.size() != 10 || inv.selector.rfind("0x", 0) != 0 ||
                 !is_lower_hex(std::string_view(inv.selector).substr(2))))
                throw SchemaViolation(path + "/selector: expected 0x + 8 hex chars");
        }
        if (auto it = node.find("signature"); it != node.end() && !it->is_null()) {
            if (!it->is_string()) throw SchemaViolation(path + "/signature: expected string");
            inv.signature = it->get<std::string>();
        }
        if (!inv.selector.empty() && !inv.signature.empty() &&
            selector_of(canonicalize_signature(inv.signature)) != inv.selector)
            throw InvariantViolation(path + ": selector " + inv.selector +
                                     " does not match signature " + inv.signature);

        inv.call_kind = call_kind_from_string(require_string(node, "kind", path));

        const json& depth = require(node, "depth", path);
        if (!depth.is_number_integer() || depth.get<std::int64_t>() < 0)
            throw SchemaViolation(path + "/depth: expected non-negative integer");
        if (depth.get<std::int64_t>() > kMaxCallDepth)
            throw SchemaViolation(path + "/depth: exceeds call depth limit");
        inv.depth = depth.get<std::uint32_t>();

        if (auto it = node.find("value"); it != node.end()) {
            if (!it->is_string()) throw SchemaViolation(path + "/value: expected decimal string");
            inv.value = it->get<std::string>();
            if (inv.value.empty() ||
                !std::all_of(inv.value.begin(), inv.value.end(),
                             [](char c) { return c >= '0' && c <= '9'; }))
                throw SchemaViolation(path + "/value: expected decimal string");
        }

        if (auto it = node.find("children"); it != node.end()) {
            if (!it->is_array()) throw SchemaViolation(path + "/children: expected array");
            inv.children.reserve(it->size());
            for (std::size_t i = 0; i < it->size(); ++i) {
                std::string child_path = path + "/children/" + std::to_string(i);
                Invocation child = read_invocation((*it)[i], child_path);
                if (child.depth != inv.depth + 1)
                    throw InvariantViolation(child_path + ": depth " + std::to_string(child.depth) +
                                             " must equal parent depth + 1 (" +
                                             std::to_string(inv.depth + 1) + ")");
                inv.children.push_back(std::move(child));
            }
        }
        return inv;
    }
};

nlohmann::ordered_json to_ordered(const Invocation& inv) {
    nlohmann::ordered_json j;
    j["caller"] = inv.caller;
    j["callee"] = inv.callee;
    j["selector"] = inv.selector;
    j["signature"] = inv.signature;
    j["kind"] = std::string(to_string(inv.call_kind));
    j["depth"] = inv.depth;
    j["value"] = inv.value;
    auto children = nlohmann::ordered_json::array();
    for (const auto& c : inv.children) children.push_back(to_ordered(c));
    j["children"] = std::move(children);
    return j;
}

void flatten_into(const Invocation& inv, std::vector<const Invocation*>& out) {
    out.push_back(&inv);
    for (const auto& c : inv.children) flatten_into(c, out);
}

} // namespace

std::string_view to_string(CallKind k) {
    switch (k) {
    case CallKind::Call: return "CALL";
    case CallKind::DelegateCall: return "DELEGATECALL";
    case CallKind::StaticCall: return "STATICCALL";
    case CallKind::Create: return "CREATE";
    }
    return "CALL";
}

CallKind call_kind_from_string(std::string_view s) {
    if (s == "CALL") return CallKind::Call;
    if (s == "DELEGATECALL") return CallKind::DelegateCall;
    if (s == "STATICCALL") return CallKind::StaticCall;
    if (s == "CREATE") return CallKind::Create;
    throw SchemaViolation("kind: unknown call kind '" + std::string(s) + "'");
}

bool is_address(std::string_view s) {
    return s.size() == 42 && s[0] == '0' && s[1] == 'x' && is_lower_hex(s.substr(2));
}

bool is_tx_hash(std::string_view s) {
    return s.size() == 66 && s[0] == '0' && s[1] == 'x' && is_lower_hex(s.substr(2));
}

std::string normalize_address(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

Trace parse_trace(std::string_view bytes, ParseDiagnostics* diag) {
    json doc;
    try {
        doc = json::parse(bytes.begin(), bytes.end());
    } catch (const json::parse_error& e) {
        throw MalformedJson(e.what());
    }
    return TraceReader(diag).read(doc);
}

std::string serialize_trace(const Trace& trace) {
    nlohmann::ordered_json j;
    j["tx_hash"] = trace.tx_hash;
    j["sender"] = trace.sender;
    j["chain_id"] = trace.chain_id;
    auto calls = nlohmann::ordered_json::array();
    for (const auto& c : trace.root_calls) calls.push_back(to_ordered(c));
    j["calls"] = std::move(calls);
    return j.dump();
}

std::vector<const Invocation*> flatten(const Trace& trace) {
    std::vector<const Invocation*> out;
    for (const auto& r : trace.root_calls) flatten_into(r, out);
    return out;
}

std::size_t invocation_count(const Trace& trace) {
    std::size_t n = 0;
    std::vector<const Invocation*> stack;
    for (const auto& r : trace.root_calls) stack.push_back(&r);
    while (!stack.empty()) {
        const Invocation* inv = stack.back();
        stack.pop_back();
        ++n;
        for (const auto& c : inv->children) stack.push_back(&c);
    }
    return n;
}

} // namespace cascade
