#include "support/builders.hpp"

#include "cascade/errors.hpp"

#include <doctest.h>

#include <set>
#include <sstream>

using namespace cascade;
using namespace cascade::testing;

namespace {
const std::string kHeader = "address,label_class,display_name,source\n";
}

TEST_CASE("empty file set gives an empty snapshot at version 1") {
    LabelSnapshot s = load_labels({});
    CHECK(s.size() == 0);
    CHECK(s.version() == 1);
    CHECK(load_labels({}, 4).version() == 5);
}

TEST_CASE("local override beats the community database") {
    auto community = temp_path("community.csv");
    auto local = temp_path("local.csv");
    write_text(community, kHeader + addr(1) + ",PROTOCOL,Pool,COMMUNITY_DB\n");
    write_text(local, kHeader + addr(1) + ",EXPLOITER,Exploit 1,LOCAL_OVERRIDE\n");

    // Order of files must not matter.
    for (auto files : {std::vector<std::filesystem::path>{community, local},
                       std::vector<std::filesystem::path>{local, community}}) {
        LabelSnapshot s = load_labels(files);
        CHECK(s.label_class(addr(1)) == LabelClass::Exploiter);
        CHECK(classify_address(s, addr(1), addr(99), false) == AddressRole::AttackerScript);
    }
}

TEST_CASE("duplicates within a source keep the last row and log a conflict") {
    auto f = temp_path("dups.csv");
    write_text(f, kHeader + addr(1) + ",PROTOCOL,a,VENDOR_DB\n" + addr(1) +
                      ",PROTOCOL_TOKEN,\"Token, Inc.\",VENDOR_DB\n");
    LabelLoadDiagnostics diag;
    LabelSnapshot s = load_labels({f}, 0, &diag);
    CHECK(s.label_class(addr(1)) == LabelClass::ProtocolToken);
    CHECK(s.find(addr(1))->display_name == "Token, Inc.");
    CHECK(diag.conflicts_within_source == 1);
}

TEST_CASE("three files totaling 10,000 unique rows") {
    const char* sources[] = {"COMMUNITY_DB", "VENDOR_DB", "LOCAL_OVERRIDE"};
    const unsigned per_file[] = {3334, 3333, 3333};
    std::vector<std::filesystem::path> files;
    std::set<std::string> oracle;  // unique address column across all files
    unsigned next = 0;
    for (int f = 0; f < 3; ++f) {
        std::string text = kHeader;
        for (unsigned i = 0; i < per_file[f]; ++i) {
            text += addr(next) + ",PROTOCOL,n," + sources[f] + "\n";
            // Every 7th address repeats within its file; the loader keeps one.
            if (i % 7 == 0) text += addr(next) + ",PROTOCOL,m," + sources[f] + "\n";
            ++next;
        }
        auto p = temp_path("bulk" + std::to_string(f) + ".csv");
        write_text(p, text);
        files.push_back(p);
        std::istringstream in(text);
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) oracle.insert(line.substr(0, line.find(',')));
    }
    REQUIRE(oracle.size() == 10000);
    CHECK(load_labels(files).size() == 10000);
}

TEST_CASE("errors name the file and line") {
    CHECK_THROWS_AS(load_labels({temp_path("missing-file.csv")}), FileNotFound);
    auto bad = temp_path("bad.csv");
    write_text(bad, kHeader + addr(1) + ",PROTOCOL,x,COMMUNITY_DB\nnot-an-address,PROTOCOL,x,COMMUNITY_DB\n");
    try {
        load_labels({bad});
        FAIL("expected MalformedRow");
    } catch (const MalformedRow& e) {
        CHECK(std::string(e.what()).find("bad.csv:3") != std::string::npos);
    }
    write_text(bad, kHeader + addr(1) + ",NOT_A_CLASS,x,COMMUNITY_DB\n");
    CHECK_THROWS_AS(load_labels({bad}), MalformedRow);
}

TEST_CASE("core registry seed file") {
    LabelSnapshot s = load_labels({data_dir() / "core_registry.txt"});
    CHECK(s.size() == 10);
    const std::string usdt = "0xdac17f958d2ee523a2206206994597c13d831ec7";
    CHECK(token_class(s, usdt) == TokenClass::Core);
    CHECK(s.find(usdt)->display_name.find("chain_id=1") != std::string::npos);
    CHECK(token_class(s, addr(5)) == TokenClass::NonToken);

    // A vendor label overrides the registry seed.
    auto vendor = temp_path("vendor.csv");
    write_text(vendor, kHeader + usdt + ",PROTOCOL,not core,VENDOR_DB\n");
    LabelSnapshot both = load_labels({data_dir() / "core_registry.txt", vendor});
    CHECK(token_class(both, usdt) == TokenClass::NonToken);
}

TEST_CASE("classify_address decision table") {
    const std::string sender = addr(100);
    LabelSnapshot s = make_labels({{addr(1), LabelClass::Protocol},
                                   {addr(2), LabelClass::CoreAssetToken},
                                   {addr(3), LabelClass::ProtocolToken},
                                   {addr(4), LabelClass::Exploiter}});
    // Oracle: the table written out cell by cell.
    struct Row {
        std::string a;
        bool direct;
        AddressRole expected;
    };
    std::vector<Row> table = {
        {addr(1), false, AddressRole::Protocol},       {addr(1), true, AddressRole::Protocol},
        {addr(2), false, AddressRole::CoreAssetToken}, {addr(2), true, AddressRole::CoreAssetToken},
        {addr(3), false, AddressRole::ProtocolToken},  {addr(3), true, AddressRole::ProtocolToken},
        {addr(4), false, AddressRole::AttackerScript}, {addr(4), true, AddressRole::AttackerScript},
        {addr(5), false, AddressRole::AttackerScript}, {addr(5), true, AddressRole::AttackerScript},
        {sender, false, AddressRole::Sender},          {sender, true, AddressRole::Sender},
    };
    for (const auto& r : table) {
        CAPTURE(r.a);
        CAPTURE(r.direct);
        CHECK(classify_address(s, r.a, sender, r.direct) == r.expected);
        // Deterministic across calls.
        CHECK(classify_address(s, r.a, sender, r.direct) == classify_address(s, r.a, sender, r.direct));
    }
}

TEST_CASE("token_class mapping") {
    LabelSnapshot s = make_labels({{addr(1), LabelClass::Protocol},
                                   {addr(2), LabelClass::CoreAssetToken},
                                   {addr(3), LabelClass::ProtocolToken},
                                   {addr(4), LabelClass::Exploiter}});
    CHECK(token_class(s, addr(2)) == TokenClass::Core);
    CHECK(token_class(s, addr(3)) == TokenClass::ProtocolSpecific);
    CHECK(token_class(s, addr(1)) == TokenClass::NonToken);
    CHECK(token_class(s, addr(1), true) == TokenClass::NonToken);
    CHECK(token_class(s, addr(4), true) == TokenClass::NonToken);
    CHECK(token_class(s, addr(9)) == TokenClass::NonToken);
    CHECK(token_class(s, addr(9), true) == TokenClass::ProtocolSpecific);
}

TEST_CASE("precedence holds exhaustively over source pairs") {
    const LabelSource srcs[] = {LabelSource::CommunityDb, LabelSource::VendorDb,
                                LabelSource::LocalOverride};
    const LabelClass classes[] = {LabelClass::Protocol, LabelClass::CoreAssetToken,
                                  LabelClass::ProtocolToken, LabelClass::Exploiter};
    int n = 0;
    for (auto s1 : srcs)
        for (auto s2 : srcs)
            for (auto c1 : classes)
                for (auto c2 : classes) {
                    if (s1 == s2) continue;
                    auto f1 = temp_path("p1.csv"), f2 = temp_path("p2.csv");
                    write_text(f1, kHeader + addr(7) + "," + std::string(to_string(c1)) + ",x," +
                                       std::string(to_string(s1)) + "\n");
                    write_text(f2, kHeader + addr(7) + "," + std::string(to_string(c2)) + ",x," +
                                       std::string(to_string(s2)) + "\n");
                    auto snap = load_labels({f1, f2});
                    CHECK(snap.label_class(addr(7)) == (s1 > s2 ? c1 : c2));
                    // token_class never yields CORE unless the resolved label is core.
                    if (snap.label_class(addr(7)) != LabelClass::CoreAssetToken)
                        CHECK(token_class(snap, addr(7), true) != TokenClass::Core);
                    ++n;
                }
    CHECK(n == 96);
}

TEST_CASE("snapshot file round trip") {
    LabelSnapshot s = load_labels({data_dir() / "core_registry.txt"}, 2);
    auto p = temp_path("snap.json");
    write_text(p, snapshot_to_json(s));
    LabelSnapshot back = read_snapshot_file(p);
    CHECK(back.version() == 3);
    CHECK(back.entries() == s.entries());
    CHECK(back.content_hash() == s.content_hash());
}
