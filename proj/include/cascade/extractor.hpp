#pragma once

#include "cascade/labels.hpp"
#include "cascade/semantics.hpp"
#include "cascade/trace.hpp"

#include <chrono>
#include <optional>
#include <string>
#include <vector>

namespace cascade {

/// One attacker-intent operation after abstraction.
struct LogicItem {
    std::string category_id;
    TokenClass token = TokenClass::NonToken;
    AddressRole target_role = AddressRole::Protocol;  // Protocol, CoreAssetToken or ProtocolToken
    std::uint32_t depth_after_lift = 0;

    bool operator==(const LogicItem&) const = default;
};

struct ExtractedLogic {
    std::string tx_hash;
    std::vector<LogicItem> items;
    std::size_t source_invocation_count = 0;

    bool operator==(const ExtractedLogic&) const = default;
};

struct ExtractOptions {
    ClassifierBoundary* classifier = nullptr;
    /// On SidecarUnavailable, classify locally instead of propagating.
    bool fallback_on_sidecar_error = false;
    std::uint32_t max_lift_rounds = 32;
    std::optional<std::chrono::steady_clock::time_point> deadline;
};

struct ExplainEntry {
    std::size_t index = 0;  // position in flatten(trace)
    std::string callee;
    AddressRole callee_role = AddressRole::Protocol;
    std::string phase;     // tagging | filtration | restructuring | classification
    std::string decision;  // kept | dropped | lifted | discarded | truncated
    std::string reason;
};

struct ExtractDiagnostics {
    std::vector<ExplainEntry> entries;
    /// item index -> index of the originating invocation in flatten(trace).
    std::vector<std::size_t> item_origin;
    std::uint32_t lift_rounds = 0;
    bool truncated = false;
};

/// Phase-1 output: an invocation with the roles of both endpoints resolved.
struct TaggedNode {
    std::size_t origin = 0;
    AddressRole caller_role = AddressRole::Sender;
    AddressRole callee_role = AddressRole::Protocol;
    std::vector<TaggedNode> children;

    bool targets_attacker() const {
        return callee_role == AddressRole::AttackerScript || callee_role == AddressRole::Sender;
    }
    bool attacker_initiated() const {
        return caller_role == AddressRole::Sender || caller_role == AddressRole::AttackerScript;
    }
    bool operator==(const TaggedNode&) const = default;
};

using TaggedForest = std::vector<TaggedNode>;

/// Tagging. An unlabeled callee reached through a token-interface signature is
/// tagged PROTOCOL_TOKEN rather than ATTACKER_SCRIPT.
TaggedForest tag_trace(const Trace& trace, const LabelSnapshot& labels, const Cheatsheet& cheatsheet,
                       const std::optional<std::chrono::steady_clock::time_point>& deadline = {});

/// Filtration. Keeps nodes whose caller is the sender or an attacker script;
/// kept descendants of dropped nodes are spliced into the dropped node's place.
TaggedForest filter_attacker_initiated(const TaggedForest& forest);

/// One restructuring round: every node targeting an attacker script is removed
/// and its children take its place. A no-op on forests without such nodes.
TaggedForest lift_wrappers(const TaggedForest& forest);

bool has_wrappers(const TaggedForest& forest);

ExtractedLogic extract(const Trace& trace, const LabelSnapshot& labels, const Cheatsheet& cheatsheet,
                       const ExtractOptions& options = {}, ExtractDiagnostics* diag = nullptr);

/// Order-independent canonical serialization of the item multiset.
std::string logic_fingerprint(const ExtractedLogic& logic);

/// {"tx_hash":…,"source_invocation_count":N,"items":[{"category","token","role","depth"}]}
std::string logic_to_json(const ExtractedLogic& logic);
ExtractedLogic logic_from_json(std::string_view text);

/// `--explain` dump: one JSON document per trace.
std::string explain_to_json(const Trace& trace, const ExtractDiagnostics& diag);

} // namespace cascade
