#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "regulus/canonical.hpp"
#include "regulus/crypto.hpp"
#include "regulus/errors.hpp"
#include "regulus/merkle.hpp"
#include "regulus/record.hpp"

// Append-only tamper-evident store of behavior records. Records accumulate in
// a pending pool, get sealed into Merkle-rooted blocks chained by header hash,
// and stay queryable through per-agent and per-epoch indexes.

namespace regulus::ledger {

struct Block {
  std::uint64_t height = 0;
  Hash32 prev_hash{};
  Hash32 merkle_root{};
  Epoch epoch = 0;
  std::vector<Hash32> record_ids;
  Hash32 header_hash{};
};

inline Hash32 compute_header_hash(std::uint64_t height, const Hash32& prev_hash,
                                  const Hash32& merkle_root, Epoch epoch) {
  Bytes buf;
  canonical::put_u64(buf, height);
  buf.insert(buf.end(), prev_hash.begin(), prev_hash.end());
  buf.insert(buf.end(), merkle_root.begin(), merkle_root.end());
  canonical::put_u64(buf, epoch);
  return crypto::sha256(buf);
}

enum class ViolationKind {
  record_hash_mismatch,
  merkle_root_mismatch,
  header_hash_mismatch,
  prev_hash_mismatch,
};

inline std::string_view to_string(ViolationKind k) {
  switch (k) {
    case ViolationKind::record_hash_mismatch: return "record_hash_mismatch";
    case ViolationKind::merkle_root_mismatch: return "merkle_root_mismatch";
    case ViolationKind::header_hash_mismatch: return "header_hash_mismatch";
    case ViolationKind::prev_hash_mismatch: return "prev_hash_mismatch";
  }
  return "unknown";
}

struct Violation {
  std::uint64_t height = 0;
  ViolationKind kind;
  std::string detail;
};

struct QueryFilter {
  std::optional<AgentId> agent_id;
  std::optional<std::pair<Epoch, Epoch>> epoch_range;  // inclusive [lo, hi]
  std::optional<RecordKind> kind;
};

// by_agent / by_epoch record-id indexes, maintained on append.
struct LedgerIndex {
  std::map<AgentId, std::vector<Hash32>> by_agent;
  std::map<Epoch, std::vector<Hash32>> by_epoch;
};

class Ledger {
 public:
  // --- key registry ---

  void register_key(const AgentId& agent_id, const crypto::PublicKey& pk) {
    keys_[agent_id] = pk;
  }

  bool has_key(const AgentId& agent_id) const { return keys_.count(agent_id) > 0; }

  const crypto::PublicKey* find_key(const AgentId& agent_id) const {
    auto it = keys_.find(agent_id);
    return it == keys_.end() ? nullptr : &it->second;
  }

  // --- writes ---

  // Validates canonical payload, signature, id consistency and uniqueness,
  // then stores the record in the pending pool and both indexes.
  Hash32 append_record(const BehaviorRecord& record) {
    if (!canonical::is_canonical(record.payload)) {
      fail(Errc::malformed_payload, "payload is not canonically serialized");
    }
    if (content_hash(record) != record.record_id) {
      fail(Errc::malformed_payload, "record_id does not match content hash");
    }
    const crypto::PublicKey* pk = find_key(record.agent_id);
    if (pk == nullptr || !verify_record_signature(record, *pk)) {
      fail(Errc::invalid_signature, "signature does not verify for " + record.agent_id);
    }
    if (records_.count(record.record_id) > 0) {
      fail(Errc::duplicate_record, "record already present: " + crypto::to_hex(record.record_id));
    }
    store_unchecked(record);
    return record.record_id;
  }

  // Seals the pending pool, in append order, into the next block.
  const Block& seal_block(Epoch epoch) {
    if (pending_.empty()) fail(Errc::empty_pool, "no pending records to seal");
    Block b;
    b.height = blocks_.size();
    b.prev_hash = blocks_.empty() ? Hash32{} : blocks_.back().header_hash;
    b.epoch = epoch;
    b.record_ids = pending_;
    b.merkle_root = compute_merkle_root(b.record_ids);
    b.header_hash = compute_header_hash(b.height, b.prev_hash, b.merkle_root, b.epoch);
    for (std::size_t i = 0; i < b.record_ids.size(); ++i) {
      Stored& s = records_.at(b.record_ids[i]);
      s.block_height = b.height;
      s.leaf_index = i;
    }
    pending_.clear();
    blocks_.push_back(std::move(b));
    return blocks_.back();
  }

  // --- proofs ---

  MerkleProof prove_inclusion(const Hash32& record_id) const {
    const Stored* s = find_stored(record_id);
    if (s == nullptr) fail(Errc::unknown_record, "no such record: " + crypto::to_hex(record_id));
    if (!s->block_height) fail(Errc::not_yet_sealed, "record is still in the pending pool");
    const Block& b = blocks_[*s->block_height];
    return build_merkle_proof(b.record_ids, s->leaf_index);
  }

  // --- audits ---

  // Recomputes every leaf hash from stored record content, every header from
  // stored fields, and the prev linkage. Once a header or linkage check fails
  // at some height, every later block sits on unverified ancestry and is
  // reported as a linkage violation too. Merkle mismatches stay local.
  std::vector<Violation> verify_chain() const {
    std::vector<Violation> out;
    bool ancestry_broken = false;
    for (const Block& b : blocks_) {
      std::vector<Hash32> content_ids;
      content_ids.reserve(b.record_ids.size());
      bool record_ok = true;
      for (const Hash32& id : b.record_ids) {
        const Stored* s = find_stored(id);
        if (s == nullptr) {
          out.push_back({b.height, ViolationKind::record_hash_mismatch,
                         "record missing from store: " + crypto::to_hex(id)});
          record_ok = false;
          continue;
        }
        Hash32 actual = content_hash(s->record);
        content_ids.push_back(actual);
        if (actual != id) {
          out.push_back({b.height, ViolationKind::record_hash_mismatch,
                         "stored content no longer hashes to " + crypto::to_hex(id)});
        }
      }
      if (record_ok && compute_merkle_root(content_ids) != b.merkle_root) {
        out.push_back({b.height, ViolationKind::merkle_root_mismatch,
                       "merkle_root does not match record content"});
      }
      Hash32 expect_header =
          compute_header_hash(b.height, b.prev_hash, b.merkle_root, b.epoch);
      if (expect_header != b.header_hash) {
        out.push_back({b.height, ViolationKind::header_hash_mismatch,
                       "header_hash does not match header fields"});
        ancestry_broken = true;
      }
      Hash32 expect_prev = b.height == 0 ? Hash32{} : blocks_[b.height - 1].header_hash;
      if (b.prev_hash != expect_prev) {
        out.push_back({b.height, ViolationKind::prev_hash_mismatch,
                       "prev_hash does not match predecessor header"});
        ancestry_broken = true;
      } else if (ancestry_broken) {
        out.push_back({b.height, ViolationKind::prev_hash_mismatch,
                       "ancestry broken at an earlier height"});
      }
    }
    return out;
  }

  // --- reads ---

  // All sealed records matching every provided predicate, in append order.
  std::vector<BehaviorRecord> query(const QueryFilter& f) const {
    std::vector<const Stored*> hits;
    if (f.agent_id) {
      auto it = index_.by_agent.find(*f.agent_id);
      if (it == index_.by_agent.end()) return {};
      for (const Hash32& id : it->second) hits.push_back(&records_.at(id));
    } else if (f.epoch_range) {
      auto lo = index_.by_epoch.lower_bound(f.epoch_range->first);
      auto hi = index_.by_epoch.upper_bound(f.epoch_range->second);
      for (auto it = lo; it != hi; ++it) {
        for (const Hash32& id : it->second) hits.push_back(&records_.at(id));
      }
    } else {
      for (const auto& [id, s] : records_) hits.push_back(&s);
    }
    std::vector<const Stored*> kept;
    for (const Stored* s : hits) {
      if (!s->block_height) continue;  // pending records are not yet queryable
      const BehaviorRecord& r = s->record;
      if (f.agent_id && r.agent_id != *f.agent_id) continue;
      if (f.epoch_range &&
          (r.epoch < f.epoch_range->first || r.epoch > f.epoch_range->second)) {
        continue;
      }
      if (f.kind && r.kind != *f.kind) continue;
      kept.push_back(s);
    }
    std::sort(kept.begin(), kept.end(),
              [](const Stored* a, const Stored* b) { return a->seq < b->seq; });
    std::vector<BehaviorRecord> out;
    out.reserve(kept.size());
    for (const Stored* s : kept) out.push_back(s->record);
    return out;
  }

  const BehaviorRecord* find_record(const Hash32& id) const {
    const Stored* s = find_stored(id);
    return s == nullptr ? nullptr : &s->record;
  }

  bool is_sealed(const Hash32& id) const {
    const Stored* s = find_stored(id);
    return s != nullptr && s->block_height.has_value();
  }

  std::optional<std::uint64_t> block_height_of(const Hash32& id) const {
    const Stored* s = find_stored(id);
    return s == nullptr ? std::nullopt : s->block_height;
  }

  const std::vector<Block>& blocks() const { return blocks_; }
  const std::vector<Hash32>& pending() const { return pending_; }
  const LedgerIndex& index() const { return index_; }
  std::size_t record_count() const { return records_.size(); }
  const std::map<AgentId, crypto::PublicKey>& keys() const { return keys_; }

  // Test hook: direct storage mutation, the tamper case verify_chain exists
  // to catch.
  BehaviorRecord& mutable_record_for_test(const Hash32& id) { return records_.at(id).record; }
  Block& mutable_block_for_test(std::uint64_t height) { return blocks_.at(height); }

  // --- export / import (JSON Lines + block header array) ---

  void export_records(std::ostream& os) const {
    std::vector<const Stored*> all;
    all.reserve(records_.size());
    for (const auto& [id, s] : records_) all.push_back(&s);
    std::sort(all.begin(), all.end(),
              [](const Stored* a, const Stored* b) { return a->seq < b->seq; });
    for (const Stored* s : all) os << record_to_json(s->record).dump() << "\n";
  }

  void export_blocks(std::ostream& os) const {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const Block& b : blocks_) {
      nlohmann::ordered_json jb;
      jb["height"] = b.height;
      jb["prev_hash"] = crypto::to_hex(b.prev_hash);
      jb["merkle_root"] = crypto::to_hex(b.merkle_root);
      jb["epoch"] = b.epoch;
      jb["header_hash"] = crypto::to_hex(b.header_hash);
      nlohmann::ordered_json ids = nlohmann::ordered_json::array();
      for (const Hash32& id : b.record_ids) ids.push_back(crypto::to_hex(id));
      jb["record_ids"] = std::move(ids);
      arr.push_back(std::move(jb));
    }
    os << arr.dump(2) << "\n";
  }

  static nlohmann::ordered_json record_to_json(const BehaviorRecord& r) {
    nlohmann::ordered_json j;
    j["record_id"] = crypto::to_hex(r.record_id);
    j["agent_id"] = r.agent_id;
    j["epoch"] = r.epoch;
    j["kind"] = std::string(to_string(r.kind));
    nlohmann::ordered_json payload;
    for (const auto& [k, v] : canonical::decode(r.payload)) payload[k] = v;
    j["payload"] = std::move(payload);
    j["timestamp"] = r.timestamp;
    j["signature"] = crypto::to_hex(std::span<const Byte>(r.signature.data(), r.signature.size()));
    return j;
  }

  static BehaviorRecord record_from_json(const nlohmann::json& j) {
    BehaviorRecord r;
    r.record_id = crypto::array_from_hex<32>(j.at("record_id").get<std::string>());
    r.agent_id = j.at("agent_id").get<std::string>();
    r.epoch = j.at("epoch").get<Epoch>();
    auto kind = record_kind_from_string(j.at("kind").get<std::string>());
    if (!kind) fail(Errc::parse_error, "unknown record kind");
    r.kind = *kind;
    canonical::KvMap kv;
    for (const auto& [k, v] : j.at("payload").items()) kv[k] = v.get<std::string>();
    r.payload = canonical::encode(kv);
    r.timestamp = j.at("timestamp").get<Tick>();
    r.signature = crypto::array_from_hex<crypto::kSignatureBytes>(
        j.at("signature").get<std::string>());
    return r;
  }

  // Rebuilds a ledger verbatim from an export. Stored hashes are taken as-is
  // (verify_chain re-derives everything); the key registry is reconstructed
  // from registration events so later appends can verify signatures.
  static Ledger import_from(std::istream& records_jsonl, std::istream& blocks_json) {
    Ledger led;
    std::string line;
    std::uint64_t lineno = 0;
    while (std::getline(records_jsonl, line)) {
      ++lineno;
      if (line.empty()) continue;
      nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded()) {
        fail(Errc::parse_error, "bad JSON on record line " + std::to_string(lineno));
      }
      BehaviorRecord r;
      try {
        r = record_from_json(j);
      } catch (const nlohmann::json::exception& e) {
        fail(Errc::parse_error, "record line " + std::to_string(lineno) + ": " + e.what());
      }
      if (led.records_.count(r.record_id) > 0) {
        fail(Errc::duplicate_record, "duplicate record in export");
      }
      led.store_unchecked(r);
      auto kv = canonical::decode(r.payload);
      auto ev = kv.find("event");
      auto pk = kv.find("public_key");
      auto who = kv.find("agent");
      if (ev != kv.end() && ev->second == "registration" && pk != kv.end() && who != kv.end()) {
        led.register_key(who->second, crypto::array_from_hex<crypto::kPublicKeyBytes>(pk->second));
      }
    }
    nlohmann::json arr = nlohmann::json::parse(blocks_json, nullptr, false);
    if (arr.is_discarded() || !arr.is_array()) {
      fail(Errc::parse_error, "block header file is not a JSON array");
    }
    std::vector<Hash32> sealed_order;
    for (const auto& jb : arr) {
      Block b;
      try {
        b.height = jb.at("height").get<std::uint64_t>();
        b.prev_hash = crypto::array_from_hex<32>(jb.at("prev_hash").get<std::string>());
        b.merkle_root = crypto::array_from_hex<32>(jb.at("merkle_root").get<std::string>());
        b.epoch = jb.at("epoch").get<Epoch>();
        b.header_hash = crypto::array_from_hex<32>(jb.at("header_hash").get<std::string>());
        for (const auto& id : jb.at("record_ids")) {
          b.record_ids.push_back(crypto::array_from_hex<32>(id.get<std::string>()));
        }
      } catch (const nlohmann::json::exception& e) {
        fail(Errc::parse_error, std::string("block header: ") + e.what());
      }
      if (b.height != led.blocks_.size()) fail(Errc::parse_error, "block heights not contiguous");
      for (std::size_t i = 0; i < b.record_ids.size(); ++i) {
        auto it = led.records_.find(b.record_ids[i]);
        if (it == led.records_.end()) fail(Errc::parse_error, "block references unknown record");
        it->second.block_height = b.height;
        it->second.leaf_index = i;
      }
      led.blocks_.push_back(std::move(b));
    }
    // whatever no block claimed is still pending, in append order
    led.pending_.clear();
    std::vector<const Stored*> all;
    for (const auto& [id, s] : led.records_) {
      if (!s.block_height) all.push_back(&s);
    }
    std::sort(all.begin(), all.end(),
              [](const Stored* a, const Stored* b) { return a->seq < b->seq; });
    for (const Stored* s : all) led.pending_.push_back(s->record.record_id);
    return led;
  }

 private:
  struct Stored {
    BehaviorRecord record;
    std::uint64_t seq = 0;
    std::optional<std::uint64_t> block_height;
    std::size_t leaf_index = 0;
  };

  struct HashKey {
    std::size_t operator()(const Hash32& h) const {
      std::size_t out;
      std::memcpy(&out, h.data(), sizeof(out));
      return out;
    }
  };

  const Stored* find_stored(const Hash32& id) const {
    auto it = records_.find(id);
    return it == records_.end() ? nullptr : &it->second;
  }

  void store_unchecked(const BehaviorRecord& record) {
    Stored s;
    s.record = record;
    s.seq = next_seq_++;
    records_.emplace(record.record_id, std::move(s));
    pending_.push_back(record.record_id);
    index_.by_agent[record.agent_id].push_back(record.record_id);
    index_.by_epoch[record.epoch].push_back(record.record_id);
  }

  std::unordered_map<Hash32, Stored, HashKey> records_;
  std::vector<Hash32> pending_;
  std::vector<Block> blocks_;
  LedgerIndex index_;
  std::map<AgentId, crypto::PublicKey> keys_;
  std::uint64_t next_seq_ = 0;
};

}  // namespace regulus::ledger
