#pragma once

#include "cascade/classifier.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>

namespace cascade {

enum class CategoryKind { Financial, Verification, Other };

std::string_view to_string(CategoryKind k);
CategoryKind category_kind_from_string(std::string_view s);

struct CategoryMeta {
    std::string id;  // ^[A-Z0-9_]{2,32}$
    CategoryKind kind = CategoryKind::Other;
    std::string description;

    bool operator==(const CategoryMeta&) const = default;
};

bool is_valid_category_id(std::string_view id);

/// True for the transfer/approve/mint/burn families, the categories that imply
/// the callee implements a token interface.
bool is_token_operation(std::string_view category_id);

/// Signature -> semantic category table. A value type: maintenance operations
/// return a new cheatsheet and leave the original queryable.
class Cheatsheet {
public:
    Cheatsheet() = default;

    /// Throws SchemaViolation if an entry references an unknown category or an id is invalid.
    Cheatsheet(std::string version, std::map<std::string, CategoryMeta> categories,
               std::unordered_map<std::string, std::string> entries);

    const std::string& version() const { return version_; }
    /// Trailing integer component of the version string ("1.7" -> 7).
    std::uint64_t revision() const;

    const std::map<std::string, CategoryMeta>& categories() const { return categories_; }
    const std::unordered_map<std::string, std::string>& entries() const { return entries_; }
    const CategoryMeta* category(std::string_view id) const;
    bool has_category(std::string_view id) const { return category(id) != nullptr; }

    /// Exact match on the canonical signature.
    std::optional<std::string> lookup(std::string_view signature) const;

    std::string content_hash() const;

private:
    friend Cheatsheet with_entry(const Cheatsheet&, const CategoryMeta&, const std::string&);

    std::string version_ = "1.0";
    std::map<std::string, CategoryMeta> categories_;
    std::unordered_map<std::string, std::string> entries_;  // canonical signature -> id
};

inline std::optional<std::string> lookup(const Cheatsheet& cheatsheet, std::string_view signature) {
    return cheatsheet.lookup(signature);
}

Cheatsheet cheatsheet_from_json(std::string_view text);
std::string cheatsheet_to_json(const Cheatsheet& cheatsheet);
Cheatsheet read_cheatsheet_file(const std::filesystem::path& path);

enum class Provenance { Cheatsheet, Sidecar, LocalFallback, DiscardUndecoded };
std::string_view to_string(Provenance p);

struct ClassificationOutcome {
    enum class Kind { Existing, Discarded, NewCategory };

    Kind kind = Kind::Discarded;
    std::string category_id;      // empty when discarded
    CategoryMeta new_category;    // populated for NewCategory
    std::string signature;        // canonical form
    Provenance provenance = Provenance::DiscardUndecoded;
};

/// Fallback path for a signature the cheatsheet does not know. Undecoded
/// signatures are discarded without consulting anything. Decoded ones go to the
/// classifier when one is configured, otherwise to the local stem table.
/// Throws SidecarUnavailable if the classifier cannot be reached.
ClassificationOutcome classify_unknown(const Cheatsheet& cheatsheet, std::string_view signature,
                                       bool is_decoded, ClassifierBoundary* classifier,
                                       std::string_view source_code = {});

/// Deterministic keyword-stem classification used when no sidecar is configured.
ClassificationOutcome classify_local(const Cheatsheet& cheatsheet, std::string_view signature);

/// Returns a new cheatsheet with the outcome's category and signature added and
/// the revision incremented. Re-adding an identical mapping returns an equal
/// cheatsheet. Throws CategoryCollision when the id exists with another description.
Cheatsheet persist_new_category(const Cheatsheet& cheatsheet, const ClassificationOutcome& outcome);

/// Full pipeline: cheatsheet lookup, then classify_unknown.
ClassificationOutcome classify_signature(const Cheatsheet& cheatsheet, std::string_view signature,
                                         ClassifierBoundary* classifier);

} // namespace cascade
