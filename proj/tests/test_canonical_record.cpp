#include <catch2/catch_amalgamated.hpp>

#include "regulus/canonical.hpp"
#include "regulus/record.hpp"

using namespace regulus;

TEST_CASE("canonical encoding is sorted and length-prefixed") {
  canonical::KvMap kv{{"b", "2"}, {"a", "1"}};
  crypto::Bytes enc = canonical::encode(kv);
  // a before b regardless of insertion order; u32le lengths.
  crypto::Bytes expect = {1, 0, 0, 0, 'a', 1, 0, 0, 0, '1',
                          1, 0, 0, 0, 'b', 1, 0, 0, 0, '2'};
  CHECK(enc == expect);
  CHECK(canonical::decode(enc) == kv);
  CHECK(canonical::is_canonical(enc));
}

TEST_CASE("decode round-trips arbitrary maps") {
  canonical::KvMap kv{{"", ""}, {"key", "value with spaces"}, {"z", std::string(300, 'x')}};
  CHECK(canonical::decode(canonical::encode(kv)) == kv);
}

TEST_CASE("decode rejects every non-canonical shape") {
  canonical::KvMap kv{{"a", "1"}, {"b", "2"}};
  crypto::Bytes enc = canonical::encode(kv);

  SECTION("trailing garbage") {
    enc.push_back(0);
    CHECK_THROWS_AS(canonical::decode(enc), Error);
    CHECK_FALSE(canonical::is_canonical(enc));
  }
  SECTION("truncated value") {
    enc.pop_back();
    CHECK_THROWS_AS(canonical::decode(enc), Error);
  }
  SECTION("unsorted keys") {
    crypto::Bytes swapped;
    canonical::put_string(swapped, "b");
    canonical::put_string(swapped, "2");
    canonical::put_string(swapped, "a");
    canonical::put_string(swapped, "1");
    CHECK_THROWS_AS(canonical::decode(swapped), Error);
    CHECK_FALSE(canonical::is_canonical(swapped));
  }
  SECTION("duplicate keys") {
    crypto::Bytes dup;
    canonical::put_string(dup, "a");
    canonical::put_string(dup, "1");
    canonical::put_string(dup, "a");
    canonical::put_string(dup, "2");
    CHECK_THROWS_AS(canonical::decode(dup), Error);
  }
  SECTION("length prefix larger than remaining bytes") {
    crypto::Bytes bad = {0xff, 0xff, 0xff, 0x7f, 'a'};
    CHECK_THROWS_AS(canonical::decode(bad), Error);
  }
}

TEST_CASE("double formatting round-trips exactly") {
  for (double v : {0.0, 1.0, -1.5, 0.1, 1e-9, 3.141592653589793, 1e300}) {
    CHECK(canonical::parse_double(canonical::format_double(v)) == v);
  }
  CHECK_THROWS_AS(canonical::parse_double("1.5x"), Error);
  CHECK_THROWS_AS(canonical::parse_double(""), Error);
  CHECK(canonical::parse_i64("-42") == -42);
  CHECK_THROWS_AS(canonical::parse_i64("12.5"), Error);
}

TEST_CASE("record ids and signatures are reproducible byte for byte") {
  // Frozen fixture: independently computed from the wire layout
  // (u32le id length, id, u64le epoch, kind byte, u32le payload length,
  // payload, i64le timestamp) with Ed25519 over the preimage and
  // SHA-256(preimage || signature) as the record id.
  crypto::Hash32 seed;
  seed.fill(0x01);
  crypto::KeyPair kp = crypto::KeyPair::from_seed(seed);
  CHECK(crypto::to_hex(kp.public_key) ==
        "8a88e3dd7409f195fd52db2d3cba5d72ca6709bf1d94121bf3748801b40f6f5c");

  canonical::KvMap payload{{"action", "move"}, {"target", "cell-7"}};
  CHECK(crypto::to_hex(canonical::encode(payload)) ==
        "06000000616374696f6e040000006d6f7665060000007461726765740600000063656c6c2d37");

  ledger::BehaviorRecord rec =
      ledger::make_record("agent-a", 3, ledger::RecordKind::action_log, payload, 42, kp);
  CHECK(crypto::to_hex(rec.signature) ==
        "93b1e4980dbe4615e622dfad1eb559002fcdb6e7b6e4fd65587aacfd1d75693833de48ee41f14ee0"
        "a0e9ef432969c47dd3c787d34de9d4ffec1bf9c2f64bbf01");
  CHECK(crypto::to_hex(rec.record_id) ==
        "11ad8f7d345916ef7d4ead504526394a35560a5974f6fc1d48626e2939559649");
  CHECK(ledger::verify_record_signature(rec, kp.public_key));
  CHECK(ledger::content_hash(rec) == rec.record_id);
}

TEST_CASE("any field change breaks signature verification") {
  crypto::KeyPair kp = crypto::KeyPair::from_seed(11);
  canonical::KvMap payload{{"k", "v"}};
  ledger::BehaviorRecord rec =
      ledger::make_record("agent-b", 5, ledger::RecordKind::sensor_reading, payload, 100, kp);

  ledger::BehaviorRecord tampered = rec;
  tampered.epoch = 6;
  CHECK_FALSE(ledger::verify_record_signature(tampered, kp.public_key));

  tampered = rec;
  tampered.kind = ledger::RecordKind::action_log;
  CHECK_FALSE(ledger::verify_record_signature(tampered, kp.public_key));

  tampered = rec;
  tampered.timestamp = 101;
  CHECK_FALSE(ledger::verify_record_signature(tampered, kp.public_key));

  tampered = rec;
  tampered.payload = canonical::encode(canonical::KvMap{{"k", "w"}});
  CHECK_FALSE(ledger::verify_record_signature(tampered, kp.public_key));
}

TEST_CASE("record kinds round-trip through their names") {
  using ledger::RecordKind;
  for (RecordKind k : {RecordKind::decision_input, RecordKind::sensor_reading,
                       RecordKind::action_log, RecordKind::task_assignment,
                       RecordKind::cooperation_outcome, RecordKind::coalition_event,
                       RecordKind::report}) {
    auto back = ledger::record_kind_from_string(ledger::to_string(k));
    REQUIRE(back.has_value());
    CHECK(*back == k);
  }
  CHECK_FALSE(ledger::record_kind_from_string("nonsense").has_value());
}
