#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cascade {

enum class LabelClass { Protocol, CoreAssetToken, ProtocolToken, Exploiter, Unlabeled };

/// Declared in increasing precedence order.
enum class LabelSource { CommunityDb, VendorDb, LocalOverride };

/// Role of an address within one transaction, after tagging.
enum class AddressRole { Protocol, CoreAssetToken, ProtocolToken, AttackerScript, Sender };

enum class TokenClass { Core, ProtocolSpecific, NonToken };

std::string_view to_string(LabelClass c);
std::string_view to_string(LabelSource s);
std::string_view to_string(AddressRole r);
std::string_view to_string(TokenClass t);
LabelClass label_class_from_string(std::string_view s);
LabelSource label_source_from_string(std::string_view s);
AddressRole address_role_from_string(std::string_view s);
TokenClass token_class_from_string(std::string_view s);

struct AddressLabel {
    std::string address;
    LabelClass label_class = LabelClass::Unlabeled;
    std::string display_name;
    LabelSource source = LabelSource::CommunityDb;

    bool operator==(const AddressLabel&) const = default;
};

/// Immutable address -> label mapping pinned for the lifetime of a scan.
class LabelSnapshot {
public:
    LabelSnapshot() = default;
    LabelSnapshot(std::unordered_map<std::string, AddressLabel> entries, std::uint64_t version,
                  std::chrono::system_clock::time_point loaded_at);

    const AddressLabel* find(std::string_view address) const;
    LabelClass label_class(std::string_view address) const;

    std::size_t size() const { return entries_.size(); }
    std::uint64_t version() const { return version_; }
    std::chrono::system_clock::time_point loaded_at() const { return loaded_at_; }
    const std::unordered_map<std::string, AddressLabel>& entries() const { return entries_; }

    /// Order-independent digest of the entries, for `--version` and scan pinning.
    std::string content_hash() const;

private:
    std::unordered_map<std::string, AddressLabel> entries_;
    std::uint64_t version_ = 1;
    std::chrono::system_clock::time_point loaded_at_{};
};

struct LabelLoadDiagnostics {
    std::size_t rows = 0;
    std::size_t conflicts_within_source = 0;
    std::vector<std::string> messages;
};

/// Loads label CSV files and core-registry files (detected by content) into a
/// fresh snapshot. Higher-precedence sources win; within one source the last
/// row wins. Throws FileNotFound or MalformedRow (naming file and line).
LabelSnapshot load_labels(const std::vector<std::filesystem::path>& files,
                          std::uint64_t previous_version = 0,
                          LabelLoadDiagnostics* diag = nullptr);

/// Role of `addr` within a transaction sent by `trace_sender`. Addresses that are
/// unlabeled or tagged as exploiters become AttackerScript; labeled protocols and
/// tokens keep their label even when called directly by the sender.
AddressRole classify_address(const LabelSnapshot& snapshot, std::string_view addr,
                             std::string_view trace_sender, bool directly_called_by_sender);

/// Core iff labeled CORE_ASSET_TOKEN. An unlabeled address counts as
/// protocol-specific only when the caller reports that it was invoked through a
/// token interface (`token_like`).
TokenClass token_class(const LabelSnapshot& snapshot, std::string_view addr,
                       bool token_like = false);

std::string snapshot_to_json(const LabelSnapshot& snapshot);
LabelSnapshot snapshot_from_json(std::string_view text);
LabelSnapshot read_snapshot_file(const std::filesystem::path& path);

} // namespace cascade
