#include "support/builders.hpp"

#include "cascade/errors.hpp"

#include <doctest.h>
#include <json.hpp>

#include <random>
#include <set>

using namespace cascade;
using namespace cascade::testing;

namespace {

// Labeled universe shared by the cases below.
const std::string kSender = addr(100);
const std::string kPool = addr(1);     // PROTOCOL
const std::string kWeth = addr(2);     // CORE_ASSET_TOKEN
const std::string kPtoken = addr(3);   // PROTOCOL_TOKEN
const std::string kRouter = addr(4);   // PROTOCOL
const std::string kScriptX = addr(50); // unlabeled
const std::string kScriptY = addr(51); // unlabeled

const LabelSnapshot& labels() {
    static const LabelSnapshot s = make_labels({{kPool, LabelClass::Protocol},
                                                {kWeth, LabelClass::CoreAssetToken},
                                                {kPtoken, LabelClass::ProtocolToken},
                                                {kRouter, LabelClass::Protocol}});
    return s;
}

ExtractedLogic run(const Trace& t, ExtractDiagnostics* diag = nullptr, ExtractOptions opts = {}) {
    return extract(t, labels(), seed_cheatsheet(), opts, diag);
}

class FailingClassifier : public ClassifierBoundary {
public:
    ClassifierResponse classify(const ClassifierRequest&) override {
        throw SidecarUnavailable("down");
    }
};

// Subtree of protocol-internal calls: every callee is labeled, so no node in it is attacker-initiated.
Invocation noise_subtree(std::mt19937_64& rng, int depth) {
    static const std::vector<std::string> callees = {kPool, kWeth, kPtoken, kRouter};
    static const std::vector<std::string> sigs = {"transfer(address,uint256)", "sync()",
                                                  "balanceOf(address)", "swap(uint256,uint256,address,bytes)"};
    Invocation inv = call("", callees[rng() % callees.size()], sigs[rng() % sigs.size()]);
    if (depth < 3)
        for (unsigned i = 0, n = rng() % 3; i < n; ++i) inv.children.push_back(noise_subtree(rng, depth + 1));
    return inv;
}

// Attack-shaped tree: attacker scripts invoking labeled contracts, occasionally nested.
Invocation attack_subtree(std::mt19937_64& rng, int depth) {
    static const std::vector<std::string> sigs = {"transfer(address,uint256)", "skim(address)",
                                                  "swap(uint256,uint256,address,bytes)", "sync()",
                                                  "deposit(uint256)", "withdraw(uint256)", ""};
    unsigned kind = rng() % 6;
    if (depth < 4 && kind == 0) {
        Invocation w = call("", addr(200 + static_cast<unsigned>(rng() % 5)), "");
        for (unsigned i = 0, n = 1 + rng() % 3; i < n; ++i) w.children.push_back(attack_subtree(rng, depth + 1));
        return w;
    }
    static const std::vector<std::string> callees = {kPool, kWeth, kPtoken, kRouter};
    return call("", callees[rng() % callees.size()], sigs[rng() % sigs.size()]);
}

void add_noise(Invocation& inv, std::mt19937_64& rng) {
    for (auto& c : inv.children) add_noise(c, rng);
    bool labeled = inv.callee == kPool || inv.callee == kRouter;
    if (labeled && rng() % 2 == 0) {
        std::size_t pos = rng() % (inv.children.size() + 1);
        inv.children.insert(inv.children.begin() + static_cast<std::ptrdiff_t>(pos), noise_subtree(rng, 0));
    }
}

TaggedForest lift_to_fixpoint(TaggedForest f) {
    while (has_wrappers(f)) f = lift_wrappers(f);
    return f;
}

} // namespace

TEST_CASE("direct protocol call drops its internal subcalls") {
    std::vector<Invocation> subs;
    for (int i = 0; i < 5; ++i) subs.push_back(call("", i % 2 ? kWeth : kPtoken, "transfer(address,uint256)"));
    Trace t = make_trace(txh(1), kSender, {call("", kPool, "deposit(uint256)", subs)});
    ExtractedLogic l = run(t);
    CHECK(l.source_invocation_count == 6);
    REQUIRE(l.items.size() == 1);
    CHECK(l.items[0] == LogicItem{"DEPOSIT", TokenClass::NonToken, AddressRole::Protocol, 0});
}

TEST_CASE("attacker wrapper is removed and its subcalls lifted") {
    Trace t = make_trace(txh(2), kSender,
                         {call("", kScriptX, "",
                               {call("", kWeth, "transfer(address,uint256)"),
                                call("", kPool, "swap(uint256,uint256,address,bytes)")})});
    ExtractDiagnostics diag;
    ExtractedLogic l = run(t, &diag);
    REQUIRE(l.items.size() == 2);
    CHECK(l.items[0] == LogicItem{"TRANSFER", TokenClass::Core, AddressRole::CoreAssetToken, 0});
    CHECK(l.items[1] == LogicItem{"SWAP", TokenClass::NonToken, AddressRole::Protocol, 0});
    CHECK(diag.lift_rounds == 1);
    CHECK_FALSE(diag.truncated);
}

TEST_CASE("no attacker-initiated calls gives no items") {
    // Roots that reach only undecoded protocol calls or empty attacker scripts.
    Trace t = make_trace(txh(3), kSender, {call("", kPool, "", {call("", kWeth, "transfer(address,uint256)")}),
                                           call("", kScriptX, "")});
    CHECK(run(t).items.empty());

    // Callbacks whose caller is a protocol are removed by filtration outright.
    TaggedForest callbacks(2);
    callbacks[0].caller_role = AddressRole::Protocol;
    callbacks[0].callee_role = AddressRole::CoreAssetToken;
    callbacks[1].caller_role = AddressRole::CoreAssetToken;
    callbacks[1].callee_role = AddressRole::Protocol;
    CHECK(filter_attacker_initiated(callbacks).empty());
}

TEST_CASE("nested attacker scripts lift in two rounds") {
    Trace t = make_trace(txh(4), kSender,
                         {call("", kScriptX, "", {call("", kScriptY, "attack()", {call("", kPool, "skim(address)")})})});
    ExtractDiagnostics diag;
    ExtractedLogic l = run(t, &diag);
    REQUIRE(l.items.size() == 1);
    CHECK(l.items[0] == LogicItem{"SKIM", TokenClass::NonToken, AddressRole::Protocol, 0});
    CHECK(diag.lift_rounds == 2);

    // Hand trace of the phases on the same fixture.
    TaggedForest f = filter_attacker_initiated(tag_trace(t, labels(), seed_cheatsheet()));
    REQUIRE(f.size() == 1);
    CHECK(f[0].callee_role == AddressRole::AttackerScript);
    f = lift_wrappers(f);
    REQUIRE(f.size() == 1);
    CHECK(f[0].origin == 1);
    CHECK(f[0].callee_role == AddressRole::AttackerScript);
    f = lift_wrappers(f);
    REQUIRE(f.size() == 1);
    CHECK(f[0].origin == 2);
    CHECK_FALSE(has_wrappers(f));
}

TEST_CASE("attacker callbacks nested under protocol frames survive filtration") {
    // Flash loan: pool calls back into the attacker script, which then acts.
    Trace t = make_trace(
        txh(5), kSender,
        {call("", kScriptX, "",
              {call("", kPool, "flashLoan(address,address,uint256,bytes)",
                    {call("", kWeth, "transfer(address,uint256)"),
                     call("", kScriptX, "onFlashLoan(address,address,uint256,uint256,bytes)",
                          {call("", kPtoken, "burn(uint256)")})})})});
    ExtractedLogic l = run(t);
    REQUIRE(l.items.size() == 2);
    CHECK(l.items[0].category_id == "FLASH_LOAN");
    CHECK(l.items[1] == LogicItem{"BURN", TokenClass::ProtocolSpecific, AddressRole::ProtocolToken, 1});
}

TEST_CASE("unlabeled callee reached through a token interface is a protocol token") {
    const std::string fresh = addr(60);
    Trace t = make_trace(txh(6), kSender,
                         {call("", kScriptX, "", {call("", fresh, "transfer(address,uint256)",
                                                       {call("", kPool, "sync()")})})});
    ExtractedLogic l = run(t);
    REQUIRE(l.items.size() == 1);
    CHECK(l.items[0] == LogicItem{"TRANSFER", TokenClass::ProtocolSpecific, AddressRole::ProtocolToken, 0});
}

TEST_CASE("delegatecall frames are attributed to the callee") {
    Invocation inner = call("", kPool, "withdraw(uint256)");
    inner.call_kind = CallKind::DelegateCall;
    Trace t = make_trace(txh(7), kSender, {call("", kScriptX, "", {inner})});
    ExtractedLogic l = run(t);
    REQUIRE(l.items.size() == 1);
    CHECK(l.items[0].category_id == "WITHDRAW");
}

TEST_CASE("protocol-internal noise never changes the output") {
    std::mt19937_64 rng(1234);
    for (int rep = 0; rep < 300; ++rep) {
        std::vector<Invocation> roots;
        for (unsigned i = 0, n = 1 + rng() % 3; i < n; ++i) roots.push_back(attack_subtree(rng, 0));
        Trace clean = make_trace(txh(1000 + rep), kSender, roots);
        for (auto& r : roots) add_noise(r, rng);
        Trace noisy = make_trace(txh(1000 + rep), kSender, roots);
        ExtractedLogic a = run(clean), b = run(noisy);
        CHECK(a.items == b.items);
        CHECK(logic_fingerprint(a) == logic_fingerprint(b));
    }
}

TEST_CASE("restructuring is idempotent") {
    std::mt19937_64 rng(77);
    for (int rep = 0; rep < 200; ++rep) {
        std::vector<Invocation> roots;
        for (unsigned i = 0, n = 1 + rng() % 3; i < n; ++i) roots.push_back(attack_subtree(rng, 0));
        Trace t = make_trace(txh(rep), kSender, roots);
        TaggedForest f = lift_to_fixpoint(filter_attacker_initiated(tag_trace(t, labels(), seed_cheatsheet())));
        CHECK(lift_wrappers(f) == f);
        CHECK(filter_attacker_initiated(f) == f);
    }
}

TEST_CASE("items trace back to distinct attacker-initiated invocations") {
    std::mt19937_64 rng(5);
    for (int rep = 0; rep < 200; ++rep) {
        std::vector<Invocation> roots;
        for (unsigned i = 0, n = 1 + rng() % 3; i < n; ++i) roots.push_back(attack_subtree(rng, 0));
        for (auto& r : roots) add_noise(r, rng);
        Trace t = make_trace(txh(rep), kSender, roots);
        ExtractDiagnostics diag;
        ExtractedLogic l = run(t, &diag);
        REQUIRE(diag.item_origin.size() == l.items.size());
        CHECK(l.items.size() <= l.source_invocation_count);
        auto flat = flatten(t);
        std::set<std::size_t> seen;
        for (std::size_t i = 0; i < l.items.size(); ++i) {
            std::size_t o = diag.item_origin[i];
            CHECK(seen.insert(o).second);
            const Invocation* inv = flat[o];
            bool attacker_caller = inv->caller == kSender || labels().label_class(inv->caller) == LabelClass::Unlabeled;
            CHECK(attacker_caller);
            CHECK_FALSE(inv->signature.empty());
            if (l.items[i].token == TokenClass::Core) CHECK(l.items[i].target_role == AddressRole::CoreAssetToken);
        }
    }
}

TEST_CASE("lift cap truncates adversarial wrapper chains") {
    auto chain = [](unsigned wrappers) {
        Invocation leaf = call("", kPool, "skim(address)");
        for (unsigned i = 0; i < wrappers; ++i) leaf = call("", addr(300 + i), "", {leaf});
        return make_trace(txh(wrappers), kSender, {leaf});
    };
    ExtractDiagnostics ok;
    ExtractedLogic at_cap = run(chain(32), &ok);
    CHECK(ok.lift_rounds == 32);
    CHECK_FALSE(ok.truncated);
    CHECK(at_cap.items.size() == 1);

    ExtractDiagnostics over;
    ExtractedLogic beyond = run(chain(40), &over);
    CHECK(over.lift_rounds == 32);
    CHECK(over.truncated);
    CHECK(beyond.items.empty());
    bool noted = false;
    for (const auto& e : over.entries) noted |= e.decision == "truncated";
    CHECK(noted);
}

TEST_CASE("time budget") {
    Trace t = make_trace(txh(8), kSender, {call("", kPool, "sync()")});
    ExtractOptions opts;
    opts.deadline = std::chrono::steady_clock::now() - std::chrono::seconds(1);
    CHECK_THROWS_AS(run(t, nullptr, opts), TimedOut);
}

TEST_CASE("sidecar failure propagates unless fallback is enabled") {
    Trace t = make_trace(txh(9), kSender, {call("", kPool, "rebalanceEverything(uint256)")});
    FailingClassifier failing;
    ExtractOptions opts;
    opts.classifier = &failing;
    CHECK_THROWS_AS(run(t, nullptr, opts), SidecarUnavailable);
    opts.fallback_on_sidecar_error = true;
    ExtractedLogic l = run(t, nullptr, opts);
    REQUIRE(l.items.size() == 1);
    CHECK(l.items[0].category_id == classify_local(seed_cheatsheet(), "rebalanceEverything(uint256)").category_id);
}

TEST_CASE("explain dump covers every invocation") {
    Trace t = make_trace(txh(10), kSender,
                         {call("", kScriptX, "",
                               {call("", kPool, "deposit(uint256)", {call("", kWeth, "transfer(address,uint256)")}),
                                call("", kPool, "")})});
    ExtractDiagnostics diag;
    run(t, &diag);
    auto j = nlohmann::json::parse(explain_to_json(t, diag));
    CHECK(j["tx_hash"] == txh(10));
    REQUIRE(j["explain"].size() == 4);
    CHECK(j["explain"][0]["decision"] == "lifted");
    CHECK(j["explain"][1]["decision"] == "kept");
    CHECK(j["explain"][2]["phase"] == "filtration");
    CHECK(j["explain"][2]["decision"] == "dropped");
    CHECK(j["explain"][3]["decision"] == "discarded");
}

TEST_CASE("logic_fingerprint") {
    ExtractedLogic a = logic_of("x", {item("SWAP", TokenClass::Core), item("SKIM", TokenClass::ProtocolSpecific, 1)});
    ExtractedLogic b = logic_of("y", {item("SKIM", TokenClass::ProtocolSpecific, 1), item("SWAP", TokenClass::Core)});
    CHECK(logic_fingerprint(a) == logic_fingerprint(b));
    CHECK(logic_fingerprint(logic_of("p", {})) == logic_fingerprint(logic_of("q", {})));
    CHECK(logic_fingerprint(logic_of("p", {})) == "logic-v1\n");

    // Every single-field perturbation of every item changes the fingerprint.
    const std::string base = logic_fingerprint(a);
    for (std::size_t i = 0; i < a.items.size(); ++i) {
        std::vector<ExtractedLogic> variants(4, a);
        variants[0].items[i].category_id += "X";
        variants[1].items[i].token = a.items[i].token == TokenClass::Core ? TokenClass::ProtocolSpecific : TokenClass::Core;
        variants[2].items[i].target_role = AddressRole::Protocol;
        variants[3].items[i].depth_after_lift += 1;
        for (const auto& v : variants) CHECK(logic_fingerprint(v) != base);
    }
    // Multiplicity matters.
    ExtractedLogic dup = a;
    dup.items.push_back(a.items[0]);
    CHECK(logic_fingerprint(dup) != base);
}

TEST_CASE("logic JSON round trip") {
    ExtractedLogic a = logic_of(txh(3), {item("SWAP", TokenClass::Core), item("SKIM", TokenClass::ProtocolSpecific, 2),
                                         item("SYNC", TokenClass::NonToken)});
    a.source_invocation_count = 9;
    CHECK(logic_from_json(logic_to_json(a)) == a);
    CHECK_THROWS_AS(logic_from_json("{"), MalformedJson);
    CHECK_THROWS_AS(logic_from_json(R"({"items":[{"category":"A","token":"CORE","role":"PROTOCOL"}]})"),
                    SchemaViolation);
}
