#pragma once

#include "cascade/extractor.hpp"

#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace cascade {

/// Set element for similarity: (category, token class, target role).
struct LogicKey {
    std::string category;
    TokenClass token = TokenClass::NonToken;
    AddressRole role = AddressRole::Protocol;

    auto operator<=>(const LogicKey&) const = default;
    bool operator==(const LogicKey&) const = default;
};

LogicKey key_of(const LogicItem& item);
std::uint64_t key_hash(std::string_view category, TokenClass token, AddressRole role);

struct LogicKeyHash {
    std::size_t operator()(const LogicKey& k) const {
        return static_cast<std::size_t>(key_hash(k.category, k.token, k.role));
    }
};

/// Asymmetric normalized set difference: the fraction of `reference` present in
/// `candidate`, 1 - |reference \ candidate| / |reference|. Duplicates are ignored.
/// Throws EmptyReference when the reference is empty.
double ansd(std::span<const LogicKey> reference, std::span<const LogicKey> candidate);

struct MatchOptions {
    /// Count key multiplicities instead of treating each side as a set.
    bool multiset = false;
};

/// Detection rule generalized from one confirmed attack.
class Pattern {
public:
    /// Throws EmptyPattern when both sides are empty and InvalidHyperparameter
    /// when lambda or tau fall outside [0, 1].
    Pattern(std::string pattern_id, std::string source_tx, std::vector<LogicKey> core_set,
            std::vector<LogicKey> proto_set, double lambda, double tau,
            std::int64_t created_at = 0, std::optional<ExtractedLogic> reference_logic = {});

    const std::string& id() const { return id_; }
    const std::string& source_tx() const { return source_tx_; }
    const std::vector<LogicKey>& core_set() const { return core_; }
    const std::vector<LogicKey>& proto_set() const { return proto_; }
    double lambda() const { return lambda_; }
    double tau() const { return tau_; }
    std::int64_t created_at() const { return created_at_; }
    const std::optional<ExtractedLogic>& reference_logic() const { return reference_; }

    /// Same keys, new hyperparameters.
    Pattern with_hyperparameters(double lambda, double tau) const;

    // Slot index of a key: core keys first, then protocol keys; -1 when absent.
    int slot(std::string_view category, TokenClass token, AddressRole role) const;
    std::size_t slot_count() const { return core_.size() + proto_.size(); }
    std::uint32_t slot_weight(std::size_t slot) const { return weights_[slot]; }
    /// Sum of slot weights on one side.
    std::uint64_t side_weight(bool core) const { return core ? core_weight_ : proto_weight_; }

private:
    std::string id_;
    std::string source_tx_;
    std::vector<LogicKey> core_;
    std::vector<LogicKey> proto_;
    double lambda_;
    double tau_;
    std::int64_t created_at_;
    std::optional<ExtractedLogic> reference_;
    std::unordered_multimap<std::uint64_t, int> index_;
    std::vector<std::uint32_t> weights_;  // reference multiplicity per slot
    std::uint64_t core_weight_ = 0;
    std::uint64_t proto_weight_ = 0;
};

struct MatchResult {
    std::string pattern_id;
    std::string tx_hash;
    std::optional<double> sim_core;   // nullopt: pattern side empty, not applicable
    std::optional<double> sim_proto;
    double sim_final = 0.0;
    bool flagged = false;

    bool operator==(const MatchResult&) const = default;
};

inline constexpr double kDefaultLambda = 0.6;
inline constexpr double kDefaultTau = 0.7;

/// Builds the pattern for one confirmed attack and verifies that it flags its own
/// source. Throws EmptyPattern (no token-bearing items) or InvalidHyperparameter.
Pattern generalize(const ExtractedLogic& attack, double lambda = kDefaultLambda,
                   double tau = kDefaultTau, std::string pattern_id = {});

/// Per-side coverage of a candidate, before weighting.
struct SideScores {
    std::optional<double> core;
    std::optional<double> proto;
};

SideScores side_scores(const Pattern& pattern, const ExtractedLogic& candidate,
                       const MatchOptions& options = {});

/// Weighted combination; a side that is not applicable hands its weight to the other.
double combine(const SideScores& s, double lambda);

MatchResult match_one(const Pattern& pattern, const ExtractedLogic& candidate,
                      const MatchOptions& options = {});

std::vector<MatchResult> match_all(std::span<const Pattern> patterns,
                                   const ExtractedLogic& candidate,
                                   const MatchOptions& options = {});

std::string pattern_to_json(const Pattern& pattern, bool include_reference = true);
Pattern pattern_from_json(std::string_view text);
Pattern read_pattern_file(const std::filesystem::path& path);
void write_pattern_file(const Pattern& pattern, const std::filesystem::path& path);
/// All *.json files of a directory, in filename order. Throws FileNotFound.
std::vector<Pattern> load_pattern_dir(const std::filesystem::path& dir);

std::string match_result_to_json(const MatchResult& result);

} // namespace cascade
