#include "cascade/extractor.hpp"

#include "cascade/errors.hpp"
#include "cascade/json_io.hpp"

#include <algorithm>
#include <map>

namespace cascade {

using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

class Tagger {
public:
    Tagger(const Trace& trace, const LabelSnapshot& labels, const Cheatsheet& cheatsheet,
           const std::optional<Clock::time_point>& deadline)
        : trace_(trace), labels_(labels), cheatsheet_(cheatsheet), deadline_(deadline) {}

    TaggedNode tag(const Invocation& inv, AddressRole caller_role) {
        if (deadline_ && (counter_ & 63) == 0 && Clock::now() > *deadline_)
            throw TimedOut("extraction exceeded its time budget");
        TaggedNode node;
        node.origin = counter_++;
        node.caller_role = caller_role;
        // DELEGATECALL frames are attributed to the callee address like any other call.
        node.callee_role = classify_address(labels_, inv.callee, trace_.sender,
                                            caller_role == AddressRole::Sender);
        if (node.callee_role == AddressRole::AttackerScript &&
            labels_.label_class(inv.callee) == LabelClass::Unlabeled && token_like(inv))
            node.callee_role = AddressRole::ProtocolToken;
        node.children.reserve(inv.children.size());
        for (const auto& c : inv.children) node.children.push_back(tag(c, node.callee_role));
        return node;
    }

private:
    const Trace& trace_;
    const LabelSnapshot& labels_;
    const Cheatsheet& cheatsheet_;
    const std::optional<Clock::time_point>& deadline_;
    std::size_t counter_ = 0;

    // Newly deployed tokens are rarely labeled; a decoded token-interface call
    // marks the callee as a protocol-specific token instead of an attacker script.
    bool token_like(const Invocation& inv) const {
        if (inv.signature.empty()) return false;
        auto id = cheatsheet_.lookup(inv.signature);
        std::string category = id ? *id : classify_local(cheatsheet_, inv.signature).category_id;
        return is_token_operation(category);
    }
};

void filter_into(const TaggedNode& node, TaggedForest& out) {
    if (node.attacker_initiated()) {
        TaggedNode kept = node;
        kept.children.clear();
        for (const auto& c : node.children) filter_into(c, kept.children);
        out.push_back(std::move(kept));
    } else {
        // Protocol-internal frame. Only attacker callbacks nested below it survive.
        for (const auto& c : node.children) filter_into(c, out);
    }
}

bool any_wrapper(const TaggedForest& forest) {
    for (const auto& n : forest)
        if (n.targets_attacker() || any_wrapper(n.children)) return true;
    return false;
}

void collect_origins(const TaggedForest& forest, std::vector<std::size_t>& out) {
    for (const auto& n : forest) {
        out.push_back(n.origin);
        collect_origins(n.children, out);
    }
}

TaggedForest drop_wrappers(const TaggedForest& forest, std::vector<std::size_t>& dropped) {
    TaggedForest out;
    for (const auto& n : forest) {
        if (n.targets_attacker()) {
            dropped.push_back(n.origin);
            collect_origins(n.children, dropped);
            continue;
        }
        TaggedNode copy = n;
        copy.children = drop_wrappers(n.children, dropped);
        out.push_back(std::move(copy));
    }
    return out;
}

struct ItemSink {
    const Trace& trace;
    const std::vector<const Invocation*>& flat;
    const LabelSnapshot& labels;
    const Cheatsheet& cheatsheet;
    const ExtractOptions& options;
    std::map<std::size_t, ExplainEntry>* explain;
    ExtractedLogic& logic;
    std::vector<std::size_t>* origins;

    ClassificationOutcome classify(const Invocation& inv) {
        try {
            return classify_signature(cheatsheet, inv.signature, options.classifier);
        } catch (const SidecarUnavailable&) {
            if (!options.fallback_on_sidecar_error) throw;
            return classify_signature(cheatsheet, inv.signature, nullptr);
        }
    }

    void emit(const TaggedForest& forest, std::uint32_t depth) {
        for (const auto& n : forest) {
            const Invocation& inv = *flat[n.origin];
            ClassificationOutcome outcome = classify(inv);
            if (outcome.kind == ClassificationOutcome::Kind::Discarded) {
                note(n.origin, "classification", "discarded", "undecoded signature");
            } else {
                LogicItem item;
                item.category_id = outcome.category_id;
                item.target_role = n.callee_role;
                item.token = token_class(labels, inv.callee, is_token_operation(item.category_id));
                if (n.callee_role == AddressRole::ProtocolToken && item.token == TokenClass::NonToken)
                    item.token = TokenClass::ProtocolSpecific;
                item.depth_after_lift = depth;
                note(n.origin, "classification", "kept",
                     item.category_id + " via " + std::string(to_string(outcome.provenance)));
                logic.items.push_back(std::move(item));
                if (origins) origins->push_back(n.origin);
            }
            emit(n.children, depth + 1);
        }
    }

    void note(std::size_t origin, const char* phase, const char* decision, std::string reason) {
        if (!explain) return;
        ExplainEntry& e = (*explain)[origin];
        e.phase = phase;
        e.decision = decision;
        e.reason = std::move(reason);
    }
};

void record_tags(const TaggedForest& forest, const std::vector<const Invocation*>& flat,
                 std::map<std::size_t, ExplainEntry>& explain) {
    for (const auto& n : forest) {
        ExplainEntry& e = explain[n.origin];
        e.index = n.origin;
        e.callee = flat[n.origin]->callee;
        e.callee_role = n.callee_role;
        e.phase = "tagging";
        e.decision = "kept";
        e.reason = "caller " + std::string(to_string(n.caller_role));
        if (!n.attacker_initiated()) {
            e.phase = "filtration";
            e.decision = "dropped";
            e.reason = "protocol-internal call from " + std::string(to_string(n.caller_role));
        }
        record_tags(n.children, flat, explain);
    }
}

void record_lifts(const TaggedForest& forest, std::map<std::size_t, ExplainEntry>& explain,
                  std::uint32_t round) {
    for (const auto& n : forest) {
        if (n.targets_attacker()) {
            ExplainEntry& e = explain[n.origin];
            e.phase = "restructuring";
            e.decision = "lifted";
            e.reason = "attacker wrapper removed in round " + std::to_string(round);
        } else {
            record_lifts(n.children, explain, round);
        }
    }
}

} // namespace

TaggedForest tag_trace(const Trace& trace, const LabelSnapshot& labels, const Cheatsheet& cheatsheet,
                       const std::optional<Clock::time_point>& deadline) {
    Tagger tagger(trace, labels, cheatsheet, deadline);
    TaggedForest forest;
    forest.reserve(trace.root_calls.size());
    for (const auto& r : trace.root_calls) forest.push_back(tagger.tag(r, AddressRole::Sender));
    return forest;
}

TaggedForest filter_attacker_initiated(const TaggedForest& forest) {
    TaggedForest out;
    for (const auto& n : forest) filter_into(n, out);
    return out;
}

TaggedForest lift_wrappers(const TaggedForest& forest) {
    TaggedForest out;
    out.reserve(forest.size());
    for (const auto& n : forest) {
        if (n.targets_attacker()) {
            // Promoted children are examined in the next round, not this one.
            for (const auto& c : n.children) out.push_back(c);
        } else {
            TaggedNode copy;
            copy.origin = n.origin;
            copy.caller_role = n.caller_role;
            copy.callee_role = n.callee_role;
            copy.children = lift_wrappers(n.children);
            out.push_back(std::move(copy));
        }
    }
    return out;
}

bool has_wrappers(const TaggedForest& forest) { return any_wrapper(forest); }

ExtractedLogic extract(const Trace& trace, const LabelSnapshot& labels, const Cheatsheet& cheatsheet,
                       const ExtractOptions& options, ExtractDiagnostics* diag) {
    std::vector<const Invocation*> flat = flatten(trace);
    std::map<std::size_t, ExplainEntry> explain;

    TaggedForest forest = tag_trace(trace, labels, cheatsheet, options.deadline);
    if (diag) record_tags(forest, flat, explain);

    forest = filter_attacker_initiated(forest);

    std::uint32_t rounds = 0;
    while (has_wrappers(forest) && rounds < options.max_lift_rounds) {
        ++rounds;
        if (diag) record_lifts(forest, explain, rounds);
        forest = lift_wrappers(forest);
        if (options.deadline && Clock::now() > *options.deadline)
            throw TimedOut("extraction exceeded its time budget");
    }
    bool truncated = false;
    if (has_wrappers(forest)) {
        std::vector<std::size_t> dropped;
        forest = drop_wrappers(forest, dropped);
        truncated = true;
        for (auto origin : dropped) {
            ExplainEntry& e = explain[origin];
            e.phase = "restructuring";
            e.decision = "truncated";
            e.reason = "wrapper chain exceeds " + std::to_string(options.max_lift_rounds) +
                       " lift rounds";
        }
    }

    ExtractedLogic logic;
    logic.tx_hash = trace.tx_hash;
    logic.source_invocation_count = flat.size();
    ItemSink sink{trace,  flat,   labels, cheatsheet, options, diag ? &explain : nullptr,
                  logic, diag ? &diag->item_origin : nullptr};
    sink.emit(forest, 0);
    if (options.deadline && Clock::now() > *options.deadline)
        throw TimedOut("extraction exceeded its time budget");

    if (diag) {
        diag->lift_rounds = rounds;
        diag->truncated = truncated;
        diag->entries.clear();
        for (auto& [idx, e] : explain) diag->entries.push_back(std::move(e));
    }
    return logic;
}

std::string logic_fingerprint(const ExtractedLogic& logic) {
    std::vector<std::string> rows;
    rows.reserve(logic.items.size());
    for (const auto& it : logic.items)
        rows.push_back(it.category_id + "|" + std::string(to_string(it.token)) + "|" +
                       std::string(to_string(it.target_role)) + "|" +
                       std::to_string(it.depth_after_lift));
    std::sort(rows.begin(), rows.end());
    std::string out = "logic-v1\n";
    for (const auto& r : rows) out += r + "\n";
    return out;
}

nlohmann::ordered_json to_json_value(const LogicItem& item) {
    nlohmann::ordered_json j;
    j["category"] = item.category_id;
    j["token"] = to_string(item.token);
    j["role"] = to_string(item.target_role);
    j["depth"] = item.depth_after_lift;
    return j;
}

nlohmann::ordered_json to_json_value(const ExtractedLogic& logic) {
    nlohmann::ordered_json j;
    j["tx_hash"] = logic.tx_hash;
    j["source_invocation_count"] = logic.source_invocation_count;
    auto items = nlohmann::ordered_json::array();
    for (const auto& it : logic.items) items.push_back(to_json_value(it));
    j["items"] = std::move(items);
    return j;
}

LogicItem logic_item_from_json(const json& j) {
    LogicItem item;
    item.category_id = j.at("category").get<std::string>();
    item.token = token_class_from_string(j.at("token").get<std::string>());
    item.target_role = address_role_from_string(j.at("role").get<std::string>());
    item.depth_after_lift = j.value("depth", 0u);
    if (item.token == TokenClass::Core && item.target_role != AddressRole::CoreAssetToken)
        throw SchemaViolation("logic item: CORE token requires role CORE_ASSET_TOKEN");
    return item;
}

ExtractedLogic logic_from_json_value(const json& j) {
    try {
        ExtractedLogic logic;
        logic.tx_hash = j.value("tx_hash", "");
        for (const auto& it : j.at("items")) logic.items.push_back(logic_item_from_json(it));
        logic.source_invocation_count =
            j.value("source_invocation_count", static_cast<std::size_t>(logic.items.size()));
        if (logic.items.size() > logic.source_invocation_count)
            throw SchemaViolation("logic: more items than source invocations");
        return logic;
    } catch (const json::exception& e) {
        throw SchemaViolation(std::string("logic: ") + e.what());
    }
}

std::string logic_to_json(const ExtractedLogic& logic) { return to_json_value(logic).dump(); }

ExtractedLogic logic_from_json(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw MalformedJson(e.what());
    }
    return logic_from_json_value(j);
}

std::string explain_to_json(const Trace& trace, const ExtractDiagnostics& diag) {
    nlohmann::ordered_json j;
    j["tx_hash"] = trace.tx_hash;
    j["lift_rounds"] = diag.lift_rounds;
    j["truncated"] = diag.truncated;
    auto entries = nlohmann::ordered_json::array();
    for (const auto& e : diag.entries)
        entries.push_back({{"index", e.index},
                           {"callee", e.callee},
                           {"role", to_string(e.callee_role)},
                           {"phase", e.phase},
                           {"decision", e.decision},
                           {"reason", e.reason}});
    j["explain"] = std::move(entries);
    return j.dump();
}

} // namespace cascade
