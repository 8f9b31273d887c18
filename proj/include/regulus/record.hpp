#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "regulus/canonical.hpp"
#include "regulus/crypto.hpp"
#include "regulus/errors.hpp"

namespace regulus::ledger {

using crypto::Byte;
using crypto::Bytes;
using crypto::Hash32;

using AgentId = std::string;
using Epoch = std::uint64_t;
using Tick = std::int64_t;

// The three data tiers: low-level operational traces, mid-level interaction
// metadata, high-level semantic behaviors. Wire order is load-bearing (the
// enum value is the byte that gets hashed and signed).
enum class RecordKind : std::uint8_t {
  decision_input = 0,
  sensor_reading = 1,
  action_log = 2,
  task_assignment = 3,
  cooperation_outcome = 4,
  coalition_event = 5,
  report = 6,
};

inline constexpr std::string_view kRecordKindNames[] = {
    "decision_input",     "sensor_reading", "action_log", "task_assignment",
    "cooperation_outcome", "coalition_event", "report",
};

inline std::string_view to_string(RecordKind k) {
  return kRecordKindNames[static_cast<std::size_t>(k)];
}

inline std::optional<RecordKind> record_kind_from_string(std::string_view name) {
  for (std::size_t i = 0; i < std::size(kRecordKindNames); ++i) {
    if (kRecordKindNames[i] == name) return static_cast<RecordKind>(i);
  }
  return std::nullopt;
}

// One signed behavior event, the ledger's leaf unit. `payload` is canonical
// bytes (see canonical.hpp); `record_id` is the SHA-256 of everything else,
// signature included, so any field flip changes the id.
struct BehaviorRecord {
  Hash32 record_id{};
  AgentId agent_id;
  Epoch epoch = 0;
  RecordKind kind = RecordKind::decision_input;
  Bytes payload;
  Tick timestamp = 0;
  crypto::Signature signature{};

  canonical::KvMap payload_map() const { return canonical::decode(payload); }
};

// Bytes covered by the signature: (agent_id, epoch, kind, payload, timestamp).
inline Bytes sign_preimage(const AgentId& agent_id, Epoch epoch, RecordKind kind,
                           const Bytes& payload, Tick timestamp) {
  Bytes out;
  canonical::put_string(out, agent_id);
  canonical::put_u64(out, epoch);
  out.push_back(static_cast<Byte>(kind));
  canonical::put_u32(out, static_cast<std::uint32_t>(payload.size()));
  out.insert(out.end(), payload.begin(), payload.end());
  canonical::put_i64(out, timestamp);
  return out;
}

inline Hash32 content_hash(const BehaviorRecord& r) {
  Bytes pre = sign_preimage(r.agent_id, r.epoch, r.kind, r.payload, r.timestamp);
  pre.insert(pre.end(), r.signature.begin(), r.signature.end());
  return crypto::sha256(pre);
}

// Builds and signs a record in one shot; the normal way agents author records.
inline BehaviorRecord make_record(const AgentId& agent_id, Epoch epoch, RecordKind kind,
                                  const canonical::KvMap& payload, Tick timestamp,
                                  const crypto::KeyPair& keys) {
  BehaviorRecord r;
  r.agent_id = agent_id;
  r.epoch = epoch;
  r.kind = kind;
  r.payload = canonical::encode(payload);
  r.timestamp = timestamp;
  r.signature = crypto::sign(sign_preimage(agent_id, epoch, kind, r.payload, timestamp),
                             keys.secret_key);
  r.record_id = content_hash(r);
  return r;
}

inline bool verify_record_signature(const BehaviorRecord& r, const crypto::PublicKey& pk) {
  return crypto::verify(sign_preimage(r.agent_id, r.epoch, r.kind, r.payload, r.timestamp),
                        r.signature, pk);
}

}  // namespace regulus::ledger
