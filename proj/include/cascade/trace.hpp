#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace cascade {

enum class CallKind { Call, DelegateCall, StaticCall, Create };

std::string_view to_string(CallKind k);
CallKind call_kind_from_string(std::string_view s);  // throws SchemaViolation

/// One frame of a decoded call tree. Addresses are lowercase 0x-prefixed hex.
struct Invocation {
    std::string caller;
    std::string callee;
    std::string selector;   // "0x" + 8 hex chars, or empty
    std::string signature;  // empty when the frame was not decoded
    CallKind call_kind = CallKind::Call;
    std::uint32_t depth = 0;
    std::string value = "0";  // wei, base-10
    std::vector<Invocation> children;

    bool operator==(const Invocation&) const = default;
};

struct Trace {
    std::string tx_hash;
    std::string sender;
    std::int64_t chain_id = 1;
    std::vector<Invocation> root_calls;

    bool operator==(const Trace&) const = default;
};

inline constexpr std::size_t kMaxTraceInvocations = 100'000;

struct ParseDiagnostics {
    std::size_t unknown_fields = 0;
};

bool is_address(std::string_view s);
bool is_tx_hash(std::string_view s);

/// Lowercases a hex address; does not validate.
std::string normalize_address(std::string_view s);

/// Parses one trace document. Throws MalformedJson, SchemaViolation or
/// InvariantViolation; error messages carry the JSON path of the offending node.
Trace parse_trace(std::string_view bytes, ParseDiagnostics* diag = nullptr);

/// Single-line JSON in the documented field order.
std::string serialize_trace(const Trace& trace);

/// Pre-order depth-first enumeration; parents precede their children.
std::vector<const Invocation*> flatten(const Trace& trace);

std::size_t invocation_count(const Trace& trace);

} // namespace cascade
