#include "support/builders.hpp"

#include "cascade/errors.hpp"
#include "cascade/signature.hpp"

#include <doctest.h>
#include <json.hpp>

#include <functional>
#include <random>

using namespace cascade;
using namespace cascade::testing;
using nlohmann::json;

namespace {

const std::string kSender = "0x1111111111111111111111111111111111111111";
const std::string kTarget = "0x2222222222222222222222222222222222222222";
const std::string kTx = "0x" + std::string(64, 'a');

std::string minimal_doc() {
    return R"J({"tx_hash":")J" + kTx + R"J(","sender":")J" + kSender +
           R"J(","chain_id":1,"calls":[{"caller":")J" + kSender + R"J(","callee":")J" + kTarget +
           R"J(","selector":"0xa9059cbb","signature":"transfer(address,uint256)","kind":"CALL","depth":0,"value":"0","children":[]}]})J";
}

// Builds a random valid document as a JSON value, independently of serialize_trace.
json random_invocation(std::mt19937_64& rng, const std::string& caller, unsigned depth,
                       int& budget) {
    static const std::vector<std::string> sigs = {"transfer(address,uint256)", "sync()",
                                                  "swap(uint256,uint256,address,bytes)", ""};
    static const std::vector<std::string> kinds = {"CALL", "DELEGATECALL", "STATICCALL", "CREATE"};
    std::uniform_int_distribution<unsigned> pick(0, 1000);
    std::string callee = addr(pick(rng) % 40);
    std::string sig = sigs[pick(rng) % sigs.size()];
    json j;
    j["caller"] = caller;
    j["callee"] = callee;
    j["selector"] = sig.empty() ? "" : selector_of(sig);
    j["signature"] = sig;
    j["kind"] = kinds[pick(rng) % kinds.size()];
    j["depth"] = depth;
    j["value"] = std::to_string(pick(rng)) + "000000000000000000000";  // exceeds 64 bits
    j["children"] = json::array();
    unsigned n_children = budget > 0 ? pick(rng) % 4 : 0;
    for (unsigned i = 0; i < n_children && budget > 0; ++i) {
        --budget;
        j["children"].push_back(random_invocation(rng, callee, depth + 1, budget));
    }
    return j;
}

json random_document(std::mt19937_64& rng, unsigned idx) {
    json j;
    j["tx_hash"] = txh(idx);
    std::string sender = addr(1000 + idx);
    j["sender"] = sender;
    j["chain_id"] = 1 + idx % 3;
    j["calls"] = json::array();
    int budget = static_cast<int>(rng() % 30);
    unsigned roots = 1 + rng() % 3;
    for (unsigned i = 0; i < roots; ++i) j["calls"].push_back(random_invocation(rng, sender, 0, budget));
    return j;
}

std::size_t count_nodes(const json& inv) {
    std::size_t n = 1;
    for (const auto& c : inv["children"]) n += count_nodes(c);
    return n;
}

} // namespace

TEST_CASE("minimal valid document parses to one invocation") {
    Trace t = parse_trace(minimal_doc());
    CHECK(t.tx_hash == kTx);
    CHECK(t.sender == kSender);
    CHECK(t.root_calls.size() == 1);
    CHECK(invocation_count(t) == 1);
    CHECK(t.root_calls[0].call_kind == CallKind::Call);
    CHECK(t.root_calls[0].signature == "transfer(address,uint256)");
}

TEST_CASE("child depth equal to parent depth names the child node") {
    json doc = json::parse(minimal_doc());
    json child = doc["calls"][0];
    child["caller"] = kTarget;
    child["selector"] = "";
    child["depth"] = 0;
    doc["calls"][0]["children"].push_back(child);
    try {
        parse_trace(doc.dump());
        FAIL("expected InvariantViolation");
    } catch (const InvariantViolation& e) {
        CHECK(std::string(e.what()).find("/calls/0/children/0") != std::string::npos);
    }
}

TEST_CASE("error classes") {
    CHECK_THROWS_AS(parse_trace("{not json"), MalformedJson);

    json doc = json::parse(minimal_doc());
    doc["calls"][0].erase("callee");
    try {
        parse_trace(doc.dump());
        FAIL("expected SchemaViolation");
    } catch (const SchemaViolation& e) {
        CHECK(std::string(e.what()).find("/calls/0/callee") != std::string::npos);
    }

    doc = json::parse(minimal_doc());
    doc["calls"][0]["kind"] = "JUMP";
    CHECK_THROWS_AS(parse_trace(doc.dump()), SchemaViolation);

    doc = json::parse(minimal_doc());
    doc["calls"][0]["value"] = 5;
    CHECK_THROWS_AS(parse_trace(doc.dump()), SchemaViolation);

    doc = json::parse(minimal_doc());
    doc["calls"] = json::array();
    CHECK_THROWS_AS(parse_trace(doc.dump()), InvariantViolation);

    doc = json::parse(minimal_doc());
    doc["calls"][0]["caller"] = kTarget;
    CHECK_THROWS_AS(parse_trace(doc.dump()), InvariantViolation);

    doc = json::parse(minimal_doc());
    doc["calls"][0]["selector"] = "0xdeadbeef";
    CHECK_THROWS_AS(parse_trace(doc.dump()), InvariantViolation);

    doc = json::parse(minimal_doc());
    doc["sender"] = "0x1234";
    CHECK_THROWS_AS(parse_trace(doc.dump()), SchemaViolation);
}

TEST_CASE("addresses are normalized to lowercase and unknown fields counted") {
    json doc = json::parse(minimal_doc());
    doc["sender"] = "0x" + std::string(40, 'A');
    doc["calls"][0]["caller"] = "0x" + std::string(40, 'A');
    doc["gas_used"] = 21000;
    doc["calls"][0]["output"] = "0x";
    ParseDiagnostics diag;
    Trace t = parse_trace(doc.dump(), &diag);
    CHECK(t.sender == "0x" + std::string(40, 'a'));
    CHECK(diag.unknown_fields == 2);
}

TEST_CASE("selector check uses the canonical signature") {
    json doc = json::parse(minimal_doc());
    doc["calls"][0]["signature"] = "transfer(address to, uint256 amount)";
    CHECK_NOTHROW(parse_trace(doc.dump()));
}

TEST_CASE("trace length bound") {
    json doc = json::parse(minimal_doc());
    json child = doc["calls"][0];
    child["caller"] = kTarget;
    child["depth"] = 1;
    auto& children = doc["calls"][0]["children"];
    for (std::size_t i = 0; i < kMaxTraceInvocations; ++i) children.push_back(child);
    CHECK_THROWS_AS(parse_trace(doc.dump()), SchemaViolation);
    children.erase(children.size() - 1);
    CHECK(invocation_count(parse_trace(doc.dump())) == kMaxTraceInvocations);
}

TEST_CASE("round trip over 1000 random documents") {
    std::mt19937_64 rng(7);
    for (unsigned i = 0; i < 1000; ++i) {
        json doc = random_document(rng, i);
        Trace a = parse_trace(doc.dump());
        std::string text = serialize_trace(a);
        Trace b = parse_trace(text);
        REQUIRE(a == b);
        CHECK(serialize_trace(b) == text);
        std::size_t expected = 0;
        for (const auto& r : doc["calls"]) expected += count_nodes(r);
        CHECK(flatten(a).size() == expected);
        CHECK(flatten(b).size() == expected);
    }
}

TEST_CASE("flatten order") {
    Trace t = make_trace(txh(1), addr(1),
                         {call("", addr(2), "sync()", {call("", addr(3), "sync()"),
                                                       call("", addr(4), "sync()")})});
    auto flat = flatten(t);
    REQUIRE(flat.size() == 3);
    CHECK(flat[0]->callee == addr(2));
    CHECK(flat[1]->callee == addr(3));
    CHECK(flat[2]->callee == addr(4));

    Trace single = make_trace(txh(2), addr(1), {call("", addr(2), "sync()")});
    CHECK(flatten(single).size() == 1);
}

TEST_CASE("flatten of random 50-node trees keeps parents before children") {
    std::mt19937_64 rng(99);
    for (int rep = 0; rep < 50; ++rep) {
        // Attach node k to a uniformly chosen earlier node.
        std::vector<Invocation> nodes(50);
        std::vector<int> parent(50, -1);
        for (int k = 0; k < 50; ++k) {
            nodes[k] = call("", addr(static_cast<unsigned>(k + 10)), "sync()");
            if (k > 0) parent[k] = static_cast<int>(rng() % static_cast<unsigned>(k));
        }
        for (int k = 49; k > 0; --k) {
            auto& kids = nodes[parent[k]].children;
            kids.insert(kids.begin(), nodes[k]);
        }
        Trace t = make_trace(txh(rep), addr(1), {nodes[0]});

        std::function<std::size_t(const Invocation&)> counter = [&](const Invocation& inv) {
            std::size_t n = 1;
            for (const auto& c : inv.children) n += counter(c);
            return n;
        };
        auto flat = flatten(t);
        REQUIRE(flat.size() == counter(t.root_calls[0]));
        REQUIRE(flat.size() == 50);
        std::map<std::string, std::size_t> pos;
        for (std::size_t i = 0; i < flat.size(); ++i) pos[flat[i]->callee] = i;
        for (int k = 1; k < 50; ++k)
            CHECK(pos[addr(static_cast<unsigned>(parent[k] + 10))] <
                  pos[addr(static_cast<unsigned>(k + 10))]);
    }
}

TEST_CASE("keccak and canonical signatures") {
    auto empty = keccak256("");
    CHECK(to_hex(empty.data(), 32) ==
          "c5d2460186f7233c927e7db2dcc703c0e500b653ca82273b7bfad8045d85a470");
    CHECK(selector_of("transfer(address,uint256)") == "0xa9059cbb");
    CHECK(selector_of("approve(address,uint256)") == "0x095ea7b3");
    // Multi-block input (rate is 136 bytes).
    std::string long_input(300, 'x');
    CHECK(keccak256(long_input) != keccak256(std::string(299, 'x')));

    CHECK(canonicalize_signature("transfer( address , uint256 )") == "transfer(address,uint256)");
    CHECK(canonicalize_signature("transfer(address to, uint256 amount)") ==
          "transfer(address,uint256)");
    CHECK(canonicalize_signature("swap(Address[] memory path, UINT256 x)") ==
          "swap(address[],uint256)");
    CHECK(canonicalize_signature("f((address a, uint256 b)[] calldata xs, bytes data)") ==
          "f((address,uint256)[],bytes)");
    CHECK(canonicalize_signature("sync()") == "sync()");
    CHECK(function_name("emergencyBurn(address)") == "emergencyBurn");
}
