#include "doctest.h"

#include <algorithm>

#include "../support/gen.hpp"
#include "../support/sha256_ref.hpp"
#include "parblock/codec.hpp"
#include "parblock/crypto.hpp"
#include "parblock/messages.hpp"
#include "parblock/state.hpp"

using namespace parblock;

namespace {

std::string be(std::uint64_t v, int width) {
    std::string out;
    for (int i = width - 1; i >= 0; --i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    return out;
}

std::string lp(std::string_view s) { return be(s.size(), 4) + std::string(s); }

}  // namespace

TEST_SUITE("codec") {
    TEST_CASE("identical blocks encode identically") {
        testgen::Gen g(7);
        auto b = g.block(3, 5, true);
        auto copy = b;
        CHECK(canonical_bytes(b) == canonical_bytes(copy));
    }

    TEST_CASE("key sets encode independently of insertion order") {
        Operation a, b;
        a.read_set.insert("k2");
        a.read_set.insert("k1");
        b.read_set.insert("k1");
        b.read_set.insert("k2");
        CHECK(canonical_bytes(a) == canonical_bytes(b));
    }

    TEST_CASE("reordering a block's transactions changes its encoding") {
        testgen::Gen g(11);
        for (int trial = 0; trial < 50; ++trial) {
            auto b = g.block(1, 2 + g.below(6));
            auto swapped = b;
            std::swap(swapped.txns.front(), swapped.txns.back());
            if (swapped.txns == b.txns) continue;
            CHECK(canonical_bytes(b) != canonical_bytes(swapped));
        }
    }

    TEST_CASE("round trip over generated values") {
        testgen::Gen g(1234);
        for (int trial = 0; trial < 300; ++trial) {
            auto op = g.op();
            CHECK(decode_all<Operation>(canonical_bytes(op), decode_operation) == op);
            auto t = g.txn(static_cast<std::uint32_t>(g.below(9)), g.below(1000));
            CHECK(decode_all<Transaction>(canonical_bytes(t), decode_transaction) == t);
            auto r = g.result();
            CHECK(decode_all<ResultRecords>(canonical_bytes(r), decode_result) == r);
            auto e = g.endorsement(t.id);
            CHECK(decode_all<Endorsement>(canonical_bytes(e), decode_endorsement) == e);
            auto b = g.block(g.below(100), 1 + g.below(8), g.chance(0.5));
            CHECK(decode_all<Block>(canonical_bytes(b), decode_block) == b);
        }
    }

    TEST_CASE("truncated and padded buffers are rejected") {
        testgen::Gen g(5);
        auto bytes = canonical_bytes(g.block(0, 3));
        for (std::size_t cut = 0; cut < bytes.size(); cut += 7)
            CHECK_THROWS_AS(decode_all<Block>(bytes.substr(0, cut), decode_block), DecodeError);
        CHECK_THROWS_AS(decode_all<Block>(bytes + "x", decode_block), DecodeError);
    }

    TEST_CASE("integers are fixed-width big-endian") {
        Writer w;
        w.u32(0x01020304).u64(0x0a0b0c0d0e0f1011ULL);
        CHECK(w.data() == be(0x01020304, 4) + be(0x0a0b0c0d0e0f1011ULL, 8));
    }

    TEST_CASE("abort marker with writes does not decode") {
        Writer w;
        w.boolean(true).u32(1).bytes("k").bytes("v");
        CHECK_THROWS_AS(decode_all<ResultRecords>(w.data(), decode_result), DecodeError);
    }
}

TEST_SUITE("hashing") {
    TEST_CASE("sha256 matches the reference implementation") {
        testgen::Gen g(3);
        for (std::string s : {std::string(), std::string("abc"), std::string(1000, 'a')}) {
            auto ref = testref::sha256(s);
            CHECK(std::equal(ref.begin(), ref.end(), sha256(s).bytes.begin()));
        }
        for (int i = 0; i < 50; ++i) {
            auto s = g.bytes(300);
            auto ref = testref::sha256(s);
            CHECK(std::equal(ref.begin(), ref.end(), sha256(s).bytes.begin()));
        }
    }

    TEST_CASE("known sha256 vector") {
        CHECK(sha256("abc").hex() == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    TEST_CASE("genesis block digest equals an independent hash of hand-built bytes") {
        Block b;
        b.seq = 0;
        b.prev_hash = Digest::zero();
        Transaction t;
        t.client = ClientId{7};
        t.client_ts = 1;
        t.id = make_txn_id(t.client, 1);
        t.op.app = AppId{2};
        t.op.payload = "pay";
        t.op.read_set = {"a"};
        t.op.write_set = {"a", "b"};
        t.sig = Signature{"sg"};
        b.txns.push_back(t);
        b.apps = {AppId{2}};

        auto txn_id_ref = testref::sha256("TXN" + be(7, 4) + be(1, 8));
        CHECK(std::equal(txn_id_ref.begin(), txn_id_ref.end(), t.id.bytes.begin()));

        std::string expect = be(0, 8) + std::string(32, '\0') + be(1, 4) + be(2, 4) + be(1, 4);
        expect += std::string(t.id.bytes.begin(), t.id.bytes.end()) + be(7, 4) + be(1, 8);
        expect += be(2, 4) + lp("pay") + be(1, 4) + lp("a") + be(2, 4) + lp("a") + lp("b") + lp("sg");
        expect += be(0, 4);
        CHECK(canonical_bytes(b) == expect);
        auto ref = testref::sha256(expect);
        CHECK(std::equal(ref.begin(), ref.end(), hash_block(b).bytes.begin()));
    }

    TEST_CASE("one changed payload byte changes the block digest") {
        testgen::Gen g(9);
        auto b = g.block(2, 4);
        auto other = b;
        other.txns[1].op.payload += "x";
        CHECK(hash_block(b) == hash_block(b));
        CHECK(hash_block(b) != hash_block(other));
    }
}

TEST_SUITE("signatures") {
    TEST_CASE("sign and verify across schemes") {
        for (auto scheme : {SignatureScheme::ed25519, SignatureScheme::hmac}) {
            CAPTURE(to_string(scheme));
            KeyRing keys(scheme, 42);
            auto a = Principal::of(NodeId{1});
            auto b = Principal::of(NodeId{2});
            keys.provision(a);
            keys.provision(b);
            auto sig = keys.sign(a, "hello world");
            CHECK(keys.verify(a, "hello world", sig));
            CHECK_FALSE(keys.verify(a, "hello worle", sig));
            CHECK_FALSE(keys.verify(b, "hello world", sig));
            CHECK_FALSE(keys.verify(Principal::of(NodeId{9}), "hello world", sig));
            CHECK_THROWS_AS(keys.sign(Principal::of(NodeId{9}), "x"), std::out_of_range);

            std::string msg = "some signed bytes";
            for (std::size_t i = 0; i < msg.size(); ++i) {
                auto flipped = msg;
                flipped[i] ^= 0x01;
                CHECK_FALSE(keys.verify(a, flipped, keys.sign(a, msg)));
            }
        }
    }

    TEST_CASE("deterministic keyrings agree across instances") {
        KeyRing k1(SignatureScheme::ed25519, 5), k2(SignatureScheme::ed25519, 5), k3(SignatureScheme::ed25519, 6);
        auto p = Principal::of(ClientId{3});
        k1.provision(p);
        k2.provision(p);
        k3.provision(p);
        auto sig = k1.sign(p, "m");
        CHECK(k2.verify(p, "m", sig));
        CHECK_FALSE(k3.verify(p, "m", sig));
    }

    TEST_CASE("client and node id spaces are distinct") {
        KeyRing keys(SignatureScheme::hmac, 1);
        keys.provision(Principal::of(NodeId{1}));
        keys.provision(Principal::of(ClientId{1}));
        auto sig = keys.sign(Principal::of(NodeId{1}), "m");
        CHECK_FALSE(keys.verify(Principal::of(ClientId{1}), "m", sig));
    }

    TEST_CASE("transaction verification covers id and signature") {
        KeyRing keys(SignatureScheme::ed25519, 8);
        keys.provision(Principal::of(ClientId{4}));
        Operation op;
        op.app = AppId{1};
        op.write_set = {"x"};
        auto t = make_transaction(keys, ClientId{4}, 10, op);
        CHECK(verify_transaction(keys, t));
        auto forged = t;
        forged.op.write_set.insert("y");
        CHECK_FALSE(verify_transaction(keys, forged));
        auto wrong_id = t;
        wrong_id.id = make_txn_id(ClientId{4}, 11);
        CHECK_FALSE(verify_transaction(keys, wrong_id));
    }

    TEST_CASE("noop scheme accepts anything") {
        KeyRing keys(SignatureScheme::noop, 1);
        keys.provision(Principal::of(NodeId{1}));
        CHECK(keys.verify(Principal::of(NodeId{1}), "a", Signature{"garbage"}));
    }
}

TEST_SUITE("framing") {
    TEST_CASE("frames round trip and report partial input") {
        Frame f{FrameType::commit, "payload bytes"};
        auto wire = encode_frame(f);
        std::size_t used = 0;
        auto back = decode_frame(wire, used);
        REQUIRE(back);
        CHECK(*back == f);
        CHECK(used == wire.size());
        CHECK_FALSE(decode_frame(std::string_view(wire).substr(0, wire.size() - 1), used));
    }
}

namespace {

std::vector<LedgerEntry> make_chain(testgen::Gen& g, std::size_t n) {
    std::vector<LedgerEntry> out;
    Digest prev = Digest::zero();
    for (std::size_t i = 0; i < n; ++i) {
        LedgerEntry e;
        e.block = g.block(i, 1 + g.below(4));
        e.block.prev_hash = prev;
        for (std::size_t t = 0; t < e.block.txns.size(); ++t) {
            e.statuses.push_back(TxnStatus::aborted);
            e.results.push_back(ResultRecords::abort());
        }
        prev = hash_block(e.block);
        out.push_back(std::move(e));
    }
    return out;
}

}  // namespace

TEST_SUITE("hash chain") {
    TEST_CASE("verify_chain succeeds iff every link matches") {
        testgen::Gen g(77);
        for (int trial = 0; trial < 40; ++trial) {
            auto chain = make_chain(g, 1 + g.below(6));
            CHECK(Ledger::verify_chain(chain).ok);
            auto k = g.below(chain.size());
            auto broken = chain;
            broken[k].block.txns[0].op.payload += "!";
            auto check = Ledger::verify_chain(broken);
            if (k + 1 < chain.size()) {
                CHECK_FALSE(check.ok);
                CHECK(check.first_bad_block == k + 1);
            } else {
                CHECK(check.ok);  // the tip has no successor to witness it
            }
        }
    }

    TEST_CASE("ledger file detects tampering including the tip") {
        testgen::Gen g(78);
        auto path = std::filesystem::temp_directory_path() / "parblock_chain_test.ledger";
        Ledger ledger;
        ledger.persist_to(path);
        for (auto& e : make_chain(g, 5)) ledger.append(e);

        auto loaded = Ledger::load(path);
        CHECK(loaded.check.ok);
        CHECK(loaded.entries == ledger.entries());

        std::string data;
        {
            std::ifstream in(path, std::ios::binary);
            data.assign(std::istreambuf_iterator<char>(in), {});
        }
        auto tampered = data;
        tampered[tampered.size() - 40] ^= 0x01;
        {
            std::ofstream out(path, std::ios::binary | std::ios::trunc);
            out << tampered;
        }
        auto bad = Ledger::load(path);
        CHECK_FALSE(bad.check.ok);
        CHECK(bad.check.first_bad_block == 4);
        std::filesystem::remove(path);
    }

    TEST_CASE("append rejects broken links") {
        testgen::Gen g(79);
        auto chain = make_chain(g, 2);
        Ledger ledger;
        CHECK_THROWS_AS(ledger.append(chain[1]), std::logic_error);
        ledger.append(chain[0]);
        auto wrong = chain[1];
        wrong.block.prev_hash = Digest::zero();
        CHECK_THROWS_AS(ledger.append(wrong), std::logic_error);
        ledger.append(chain[1]);
        CHECK(ledger.size() == 2);
    }
}

TEST_SUITE("state store") {
    TEST_CASE("each committed write bumps the version by one") {
        StateStore s;
        s.seed("a", "1");
        CHECK(s.version("a") == 0);
        s.put("a", "2");
        s.put("a", "2");
        CHECK(s.version("a") == 2);
        s.bump("a");
        CHECK(s.version("a") == 3);
        CHECK(*s.get("a") == "2");
        CHECK(s.version("missing") == 0);
        CHECK_FALSE(s.get("missing"));
        s.apply(ResultRecords::abort());
        CHECK(s.version("a") == 3);
    }

    TEST_CASE("state snapshots round trip") {
        StateStore s;
        s.seed("a", "x");
        s.put("b", "y");
        s.put("b", "z");
        CHECK(decode_all<StateStore>(canonical_bytes(s), decode_state) == s);
    }
}
