#pragma once

#include "cascade/labels.hpp"
#include "cascade/trace.hpp"
#include "cascade/tuner.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace cascade {

struct MutationSpec {
    bool reorder = false;
    /// Noise item count is drawn uniformly from [noise_min, cap], where cap is
    /// noise_max, or floor(noise_max_fraction * seed length) when that is positive.
    unsigned noise_min = 0;
    unsigned noise_max = 0;
    double noise_max_fraction = 0.0;
    /// Per token side, floor(drop_fraction * distinct keys) keys are removed with all their items.
    double drop_fraction = 0.0;
    /// Keys carry no addresses, so renaming protocol tokens leaves them unchanged.
    bool token_rename = false;
    std::uint64_t seed = 0;
};

/// Throws InvalidHyperparameter when drop_fraction is outside [0, 0.5] or noise bounds are inverted.
void validate(const MutationSpec& spec);
MutationSpec mutation_spec_from_json(std::string_view text);
std::string mutation_spec_to_json(const MutationSpec& spec);

/// One imitation of `seed`. Noise items are drawn from `noise_pool`.
ExtractedLogic mutate(const ExtractedLogic& seed, const MutationSpec& spec,
                      const std::vector<LogicItem>& noise_pool, std::mt19937_64& rng);

enum class BenignKind { SingleCategoryCore, SingleCategoryProto, MixedShort };

std::string_view to_string(BenignKind k);
BenignKind benign_kind_from_string(std::string_view s);

/// Categories benign traffic draws from; attack seeds use them too.
const std::vector<std::string>& common_categories();
/// Protocol-specific operations that mostly appear in exploits.
const std::vector<std::string>& exploit_categories();

std::vector<ExtractedLogic> synth_benign(BenignKind kind, std::size_t n, std::uint64_t seed);

/// Mixed benign pool: mostly single-category traffic plus short mixed logics.
std::vector<ExtractedLogic> synth_benign_pool(std::size_t n, std::uint64_t seed);

struct SeedOptions {
    unsigned archetypes = 5;
    unsigned core_min = 5, core_max = 12;
    unsigned proto_min = 8, proto_max = 20;
    double perturb = 0.15;  // chance that a family replaces an archetype key
};

/// Seed attacks. Families derive from a few shared archetypes, so attacks of
/// one archetype resemble each other across families.
std::vector<ExtractedLogic> synth_seeds(std::size_t n, std::uint64_t seed, const SeedOptions& options = {});

/// Imitations of every seed (family = seed tx_hash) plus benign entries from `benign_pool`
/// at the requested ratio. Throws InsufficientBenign.
LabeledCorpus synth_corpus(const std::vector<ExtractedLogic>& seeds, const MutationSpec& spec,
                           std::size_t imitations_per_seed, const std::vector<ExtractedLogic>& benign_pool,
                           Ratio ratio);

/// Labeled address universe for raw-trace generation.
struct SyntheticWorld {
    LabelSnapshot labels;
    std::vector<std::string> protocols;
    std::vector<std::string> core_tokens;
    std::vector<std::string> protocol_tokens;
};

SyntheticWorld synth_world(std::uint64_t seed);

/// Raw traces with a heavy-tailed invocation count (median about 40, capped at 4000).
std::vector<Trace> synth_traces(const SyntheticWorld& world, std::size_t n, std::uint64_t seed);

/// Deterministic 0x-prefixed hash for synthetic identifiers.
std::string synth_hash(std::string_view tag, std::size_t hex_chars = 64);

} // namespace cascade
