#include "cascade/synth.hpp"

#include "cascade/errors.hpp"
#include "cascade/keccak.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace cascade {

using nlohmann::json;

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
    x ^= x >> 33;
    x *= 0xff51afd7ed558ccdULL;
    x ^= x >> 33;
    return x;
}

std::size_t uniform(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

template <class T>
const T& pick(std::mt19937_64& rng, const std::vector<T>& v) {
    return v[uniform(rng, 0, v.size() - 1)];
}

AddressRole role_for(TokenClass t) {
    switch (t) {
        case TokenClass::Core: return AddressRole::CoreAssetToken;
        case TokenClass::ProtocolSpecific: return AddressRole::ProtocolToken;
        case TokenClass::NonToken: break;
    }
    return AddressRole::Protocol;
}

LogicItem make_item(std::string cat, TokenClass t, std::uint32_t depth) {
    return LogicItem{std::move(cat), t, role_for(t), depth};
}

std::vector<std::string> sample_distinct(std::mt19937_64& rng, const std::vector<std::string>& vocab,
                                         std::size_t n) {
    std::vector<std::string> v = vocab;
    std::shuffle(v.begin(), v.end(), rng);
    v.resize(std::min(n, v.size()));
    return v;
}

const std::vector<std::string>& core_vocab() {
    static const std::vector<std::string> v = [] {
        auto c = common_categories();
        for (const char* s : {"FLASH_LOAN", "SKIM", "SYNC", "DONATE", "REDEEM", "LIQUIDATE"}) c.push_back(s);
        return c;
    }();
    return v;
}

const std::vector<std::string>& proto_vocab() {
    static const std::vector<std::string> v = [] {
        auto c = common_categories();
        const auto& e = exploit_categories();
        c.insert(c.end(), e.begin(), e.end());
        return c;
    }();
    return v;
}

} // namespace

std::string synth_hash(std::string_view tag, std::size_t hex_chars) {
    return "0x" + short_hash(tag, hex_chars);
}

const std::vector<std::string>& common_categories() {
    static const std::vector<std::string> v = {
        "SWAP",     "TRANSFER", "APPROVE", "DEPOSIT", "WITHDRAW", "ADD_LIQUIDITY", "REMOVE_LIQUIDITY",
        "STAKE",    "UNSTAKE",  "CLAIM",   "MINT",    "BURN",     "BORROW",        "REPAY",
        "WRAP",     "UNWRAP",   "BUY",     "SELL",    "HARVEST",  "SUPPLY"};
    return v;
}

const std::vector<std::string>& exploit_categories() {
    static const std::vector<std::string> v = {
        "SKIM",          "SYNC",           "FLASH_LOAN",     "FLASH_CALLBACK", "LIQUIDATE",
        "EMERGENCY_BURN", "BURN_ALP",      "REFLECT",        "DISTRIBUTE_FEE", "BUYBACK",
        "SWAP_AND_LIQUIFY", "SET_PAIR",    "CONVERT_DUST",   "FORCE_RESERVES", "SIPHON",
        "SHARE_MINT",    "SHARE_BURN",     "REBASE",         "DONATE",         "REDEEM",
        "COMPOUND",      "VAULT_EARN",     "STRATEGY_EXIT",  "ZAP_IN",         "ZAP_OUT",
        "SWEEP",         "RECOVER_ERC20",  "KICK",           "POKE",           "SYNC_REWARD",
        "CLAIM_VESTED",  "DIVIDEND_CLAIM", "REFERRAL_BIND",  "AIRDROP_REWARD", "MIGRATE",
        "LEVERAGE",      "COLLATERAL",     "ACCRUE",         "CHECKPOINT",     "STABILIZE"};
    return v;
}

void validate(const MutationSpec& spec) {
    if (!(spec.drop_fraction >= 0.0 && spec.drop_fraction <= 0.5))
        throw InvalidHyperparameter("drop_fraction must lie in [0, 0.5]");
    if (!(spec.noise_max_fraction >= 0.0)) throw InvalidHyperparameter("noise_max_fraction must be >= 0");
    if (spec.noise_max_fraction == 0.0 && spec.noise_min > spec.noise_max)
        throw InvalidHyperparameter("noise_min exceeds noise_max");
}

MutationSpec mutation_spec_from_json(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw MalformedJson(e.what());
    }
    try {
        MutationSpec s;
        s.reorder = j.value("reorder", false);
        s.noise_min = j.value("noise_min", 0u);
        s.noise_max = j.value("noise_max", 0u);
        s.noise_max_fraction = j.value("noise_max_fraction", 0.0);
        s.drop_fraction = j.value("drop_fraction", 0.0);
        s.token_rename = j.value("token_rename", false);
        s.seed = j.value("seed", std::uint64_t{0});
        validate(s);
        return s;
    } catch (const json::exception& e) {
        throw SchemaViolation(std::string("mutation spec: ") + e.what());
    }
}

std::string mutation_spec_to_json(const MutationSpec& s) {
    nlohmann::ordered_json j;
    j["reorder"] = s.reorder;
    j["noise_min"] = s.noise_min;
    j["noise_max"] = s.noise_max;
    j["noise_max_fraction"] = s.noise_max_fraction;
    j["drop_fraction"] = s.drop_fraction;
    j["token_rename"] = s.token_rename;
    j["seed"] = s.seed;
    return j.dump();
}

ExtractedLogic mutate(const ExtractedLogic& seed, const MutationSpec& spec,
                      const std::vector<LogicItem>& noise_pool, std::mt19937_64& rng) {
    ExtractedLogic out = seed;

    if (spec.drop_fraction > 0.0) {
        std::set<LogicKey> dropped;
        for (TokenClass side : {TokenClass::Core, TokenClass::ProtocolSpecific}) {
            std::set<LogicKey> keys;
            for (const auto& it : seed.items)
                if (it.token == side) keys.insert(key_of(it));
            auto k = static_cast<std::size_t>(std::floor(spec.drop_fraction * keys.size() + 1e-9));
            std::vector<LogicKey> order(keys.begin(), keys.end());
            std::shuffle(order.begin(), order.end(), rng);
            dropped.insert(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
        }
        std::erase_if(out.items, [&](const LogicItem& it) { return dropped.count(key_of(it)) > 0; });
    }

    std::size_t cap = spec.noise_max_fraction > 0.0
                          ? static_cast<std::size_t>(std::floor(spec.noise_max_fraction * seed.items.size()))
                          : spec.noise_max;
    std::size_t lo = std::min<std::size_t>(spec.noise_min, cap);
    std::size_t noise = cap > 0 ? uniform(rng, lo, cap) : 0;
    for (std::size_t i = 0; i < noise; ++i) {
        LogicItem n = noise_pool.empty()
                          ? make_item(pick(rng, common_categories()),
                                      uniform(rng, 0, 1) ? TokenClass::Core : TokenClass::ProtocolSpecific, 0)
                          : pick(rng, noise_pool);
        n.depth_after_lift = static_cast<std::uint32_t>(uniform(rng, 0, 2));
        auto pos = static_cast<std::ptrdiff_t>(uniform(rng, 0, out.items.size()));
        out.items.insert(out.items.begin() + pos, std::move(n));
    }
    out.source_invocation_count = std::max(out.source_invocation_count, seed.source_invocation_count) + noise;

    if (spec.reorder) std::shuffle(out.items.begin(), out.items.end(), rng);
    return out;
}

std::string_view to_string(BenignKind k) {
    switch (k) {
        case BenignKind::SingleCategoryCore: return "SINGLE_CATEGORY_CORE";
        case BenignKind::SingleCategoryProto: return "SINGLE_CATEGORY_PROTO";
        case BenignKind::MixedShort: return "MIXED_SHORT";
    }
    return "?";
}

BenignKind benign_kind_from_string(std::string_view s) {
    for (auto k : {BenignKind::SingleCategoryCore, BenignKind::SingleCategoryProto, BenignKind::MixedShort})
        if (to_string(k) == s) return k;
    throw SchemaViolation("unknown benign kind: " + std::string(s));
}

std::vector<ExtractedLogic> synth_benign(BenignKind kind, std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(mix(seed, static_cast<std::uint64_t>(kind) + 101));
    std::vector<ExtractedLogic> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        ExtractedLogic l;
        l.tx_hash = synth_hash("benign|" + std::string(to_string(kind)) + "|" + std::to_string(seed) + "|" +
                               std::to_string(i));
        if (kind == BenignKind::MixedShort) {
            for (std::size_t k = 0, len = uniform(rng, 1, 3); k < len; ++k) {
                static const TokenClass classes[] = {TokenClass::Core, TokenClass::ProtocolSpecific,
                                                     TokenClass::NonToken};
                l.items.push_back(make_item(pick(rng, common_categories()), classes[uniform(rng, 0, 2)],
                                            static_cast<std::uint32_t>(uniform(rng, 0, 1))));
            }
        } else {
            TokenClass t = kind == BenignKind::SingleCategoryCore ? TokenClass::Core : TokenClass::ProtocolSpecific;
            for (std::size_t k = 0, len = uniform(rng, 1, 8); k < len; ++k)
                l.items.push_back(make_item(pick(rng, common_categories()), t,
                                            static_cast<std::uint32_t>(uniform(rng, 0, 2))));
        }
        l.source_invocation_count = l.items.size() + uniform(rng, 0, 20);
        out.push_back(std::move(l));
    }
    return out;
}

std::vector<ExtractedLogic> synth_benign_pool(std::size_t n, std::uint64_t seed) {
    std::size_t core = n * 45 / 100, proto = n * 35 / 100, mixed = n - core - proto;
    std::vector<ExtractedLogic> pool = synth_benign(BenignKind::SingleCategoryCore, core, seed);
    auto p = synth_benign(BenignKind::SingleCategoryProto, proto, seed);
    auto m = synth_benign(BenignKind::MixedShort, mixed, seed);
    pool.insert(pool.end(), p.begin(), p.end());
    pool.insert(pool.end(), m.begin(), m.end());
    std::mt19937_64 rng(mix(seed, 7));
    std::shuffle(pool.begin(), pool.end(), rng);
    return pool;
}

std::vector<ExtractedLogic> synth_seeds(std::size_t n, std::uint64_t seed, const SeedOptions& o) {
    if (o.archetypes == 0 || o.core_min == 0 || o.proto_min == 0 || o.core_min > o.core_max ||
        o.proto_min > o.proto_max)
        throw InvalidHyperparameter("seed options out of range");
    std::mt19937_64 rng(mix(seed, 3));

    struct Archetype {
        std::vector<std::string> core, proto;
    };
    std::vector<Archetype> archetypes;
    for (unsigned a = 0; a < o.archetypes; ++a)
        archetypes.push_back({sample_distinct(rng, core_vocab(), uniform(rng, o.core_min, o.core_max)),
                              sample_distinct(rng, proto_vocab(), uniform(rng, o.proto_min, o.proto_max))});

    auto perturb = [&](std::vector<std::string> keys, const std::vector<std::string>& vocab) {
        std::set<std::string> used(keys.begin(), keys.end());
        for (auto& k : keys) {
            if (std::bernoulli_distribution(o.perturb)(rng)) {
                for (int tries = 0; tries < 32; ++tries) {
                    const auto& cand = pick(rng, vocab);
                    if (!used.count(cand)) {
                        used.erase(k);
                        used.insert(cand);
                        k = cand;
                        break;
                    }
                }
            }
        }
        return keys;
    };

    std::vector<ExtractedLogic> out;
    for (std::size_t i = 0; i < n; ++i) {
        const Archetype& a = archetypes[i % archetypes.size()];
        ExtractedLogic l;
        l.tx_hash = synth_hash("seed|" + std::to_string(seed) + "|" + std::to_string(i));
        for (const auto& c : perturb(a.core, core_vocab()))
            for (std::size_t r = 0, m = uniform(rng, 1, 3); r < m; ++r)
                l.items.push_back(make_item(c, TokenClass::Core, static_cast<std::uint32_t>(uniform(rng, 0, 2))));
        for (const auto& c : perturb(a.proto, proto_vocab()))
            for (std::size_t r = 0, m = uniform(rng, 1, 3); r < m; ++r)
                l.items.push_back(
                    make_item(c, TokenClass::ProtocolSpecific, static_cast<std::uint32_t>(uniform(rng, 0, 2))));
        for (std::size_t r = 0, m = uniform(rng, 0, 5); r < m; ++r)
            l.items.push_back(make_item(pick(rng, common_categories()), TokenClass::NonToken, 0));
        std::shuffle(l.items.begin(), l.items.end(), rng);
        l.source_invocation_count = l.items.size() * 3 + uniform(rng, 0, 50);
        out.push_back(std::move(l));
    }
    return out;
}

LabeledCorpus synth_corpus(const std::vector<ExtractedLogic>& seeds, const MutationSpec& spec,
                           std::size_t imitations_per_seed, const std::vector<ExtractedLogic>& benign_pool,
                           Ratio ratio) {
    validate(spec);
    if (seeds.empty()) throw DegenerateInput("no seed attacks");
    if (ratio.malicious == 0 || ratio.benign == 0) throw SchemaViolation("ratio terms must be positive");
    const std::size_t n_mal = seeds.size() * imitations_per_seed;
    const std::size_t n_ben = (n_mal * ratio.benign + ratio.malicious - 1) / ratio.malicious;
    if (benign_pool.size() < n_ben)
        throw InsufficientBenign("ratio " + to_string(ratio) + " needs " + std::to_string(n_ben) +
                                 " benign entries, pool has " + std::to_string(benign_pool.size()));

    std::vector<LogicItem> noise_pool;
    for (const auto& b : benign_pool)
        noise_pool.insert(noise_pool.end(), b.items.begin(), b.items.end());

    LabeledCorpus corpus;
    corpus.entries.reserve(n_mal + n_ben);
    for (std::size_t f = 0; f < seeds.size(); ++f) {
        std::mt19937_64 rng(mix(spec.seed, f));
        for (std::size_t i = 0; i < imitations_per_seed; ++i) {
            LabeledEntry e;
            e.logic = mutate(seeds[f], spec, noise_pool, rng);
            e.logic.tx_hash = synth_hash("imitation|" + seeds[f].tx_hash + "|" + std::to_string(i) + "|" +
                                         std::to_string(spec.seed));
            e.label = Label::Malicious;
            e.family = seeds[f].tx_hash;
            corpus.entries.push_back(std::move(e));
        }
    }
    for (std::size_t i = 0; i < n_ben; ++i) corpus.entries.push_back({benign_pool[i], Label::Benign, ""});
    return corpus;
}

SyntheticWorld synth_world(std::uint64_t seed) {
    SyntheticWorld w;
    std::unordered_map<std::string, AddressLabel> rows;
    auto add = [&](std::vector<std::string>& list, const char* tag, std::size_t n, LabelClass c) {
        for (std::size_t i = 0; i < n; ++i) {
            std::string a = synth_hash(std::string(tag) + "|" + std::to_string(seed) + "|" + std::to_string(i), 40);
            list.push_back(a);
            rows[a] = AddressLabel{a, c, std::string(tag) + std::to_string(i), LabelSource::CommunityDb};
        }
    };
    add(w.protocols, "protocol", 300, LabelClass::Protocol);
    add(w.core_tokens, "core", 8, LabelClass::CoreAssetToken);
    add(w.protocol_tokens, "ptoken", 150, LabelClass::ProtocolToken);
    w.labels = LabelSnapshot(std::move(rows), 1, {});
    return w;
}

std::vector<Trace> synth_traces(const SyntheticWorld& w, std::size_t n, std::uint64_t seed) {
    static const std::vector<std::string> token_sigs = {
        "transfer(address,uint256)", "transferFrom(address,address,uint256)", "approve(address,uint256)",
        "balanceOf(address)", "allowance(address,address)"};
    static const std::vector<std::string> protocol_sigs = {
        "swap(uint256,uint256,address,bytes)", "getReserves()", "sync()", "skim(address)",
        "deposit(uint256)", "withdraw(uint256)", "claim()", "stake(uint256)", "getPrice(address)",
        "swapExactTokensForTokens(uint256,uint256,address[],address,uint256)",
        "addLiquidity(address,address,uint256,uint256,uint256,uint256,address,uint256)",
        "getAmountsOut(uint256,address[])", "flashLoan(address,address,uint256,bytes)", "mint(address)",
        "burn(address)"};
    static const std::vector<std::string> script_sigs = {
        "", "", "onFlashLoan(address,address,uint256,uint256,bytes)", "pancakeCall(address,uint256,uint256,bytes)"};

    std::mt19937_64 rng(mix(seed, 11));
    std::lognormal_distribution<double> size_dist(std::log(40.0), 1.0);
    std::vector<Trace> out;
    out.reserve(n);
    for (std::size_t t = 0; t < n; ++t) {
        auto count = static_cast<std::size_t>(std::clamp(std::lround(size_dist(rng)), 1L, 4000L));
        std::string sender = synth_hash("sender|" + std::to_string(seed) + "|" + std::to_string(t % 997), 40);
        std::string script = synth_hash("script|" + std::to_string(seed) + "|" + std::to_string(t % 613), 40);

        std::vector<Invocation> nodes(count);
        std::vector<std::size_t> parent(count, 0);
        std::vector<std::uint32_t> depth(count, 0);
        for (std::size_t k = 0; k < count; ++k) {
            Invocation& inv = nodes[k];
            bool root = k == 0 || uniform(rng, 0, 19) == 0;
            if (!root) {
                parent[k] = uniform(rng, k > 8 ? k - 8 : 0, k - 1);
                depth[k] = depth[parent[k]] + 1;
                if (depth[k] > 40) {
                    parent[k] = 0;
                    depth[k] = 1;
                }
            }
            std::size_t roll = uniform(rng, 0, 99);
            if (root) {
                inv.callee = roll < 60 ? pick(rng, w.protocols) : script;
            } else if (roll < 40) {
                inv.callee = pick(rng, w.core_tokens);
            } else if (roll < 65) {
                inv.callee = pick(rng, w.protocol_tokens);
            } else if (roll < 95) {
                inv.callee = pick(rng, w.protocols);
            } else {
                inv.callee = script;
            }
            if (inv.callee == script) inv.signature = pick(rng, script_sigs);
            else if (roll < 65 && !root) inv.signature = pick(rng, token_sigs);
            else inv.signature = pick(rng, protocol_sigs);
            if (uniform(rng, 0, 32) == 0) inv.signature = "op" + std::to_string(uniform(rng, 0, 500)) + "(uint256)";
            if (!inv.signature.empty()) inv.selector = selector_of(inv.signature);
            inv.value = std::to_string(uniform(rng, 0, 1000)) + "000000000000";
            if (root) parent[k] = count;  // marker
        }
        // Move children into parents from the back so indices stay valid.
        std::vector<Invocation> roots;
        for (std::size_t k = count; k-- > 0;) {
            if (parent[k] == count) {
                roots.insert(roots.begin(), std::move(nodes[k]));
            } else {
                auto& kids = nodes[parent[k]].children;
                kids.insert(kids.begin(), std::move(nodes[k]));
            }
        }

        Trace tr;
        tr.tx_hash = synth_hash("trace|" + std::to_string(seed) + "|" + std::to_string(t));
        tr.sender = sender;
        tr.chain_id = 1;
        struct Fix {
            static void run(Invocation& inv, std::uint32_t d) {
                inv.depth = d;
                for (auto& c : inv.children) {
                    c.caller = inv.callee;
                    run(c, d + 1);
                }
            }
        };
        for (auto& r : roots) {
            r.caller = sender;
            Fix::run(r, 0);
        }
        tr.root_calls = std::move(roots);
        out.push_back(std::move(tr));
    }
    return out;
}

} // namespace cascade
