#pragma once

#include <cstdint>
#include <vector>

#include "regulus/crypto.hpp"
#include "regulus/errors.hpp"

// Binary Merkle tree over record ids. Leaves and internal nodes are hashed
// under distinct domain prefixes (0x00 / 0x01) so an internal node can never
// be replayed as a leaf. A level with an odd node count duplicates its last
// node.

namespace regulus::ledger {

using crypto::Byte;
using crypto::Hash32;

enum class Side : std::uint8_t { left = 0, right = 1 };

struct ProofStep {
  Hash32 hash{};
  Side side = Side::left;  // which side the sibling sits on
};

struct MerkleProof {
  std::size_t leaf_index = 0;
  std::vector<ProofStep> siblings;
};

inline Hash32 leaf_hash(const Hash32& record_id) {
  crypto::Bytes buf;
  buf.reserve(33);
  buf.push_back(0x00);
  buf.insert(buf.end(), record_id.begin(), record_id.end());
  return crypto::sha256(buf);
}

inline Hash32 node_hash(const Hash32& left, const Hash32& right) {
  crypto::Bytes buf;
  buf.reserve(65);
  buf.push_back(0x01);
  buf.insert(buf.end(), left.begin(), left.end());
  buf.insert(buf.end(), right.begin(), right.end());
  return crypto::sha256(buf);
}

inline Hash32 compute_merkle_root(const std::vector<Hash32>& leaves) {
  if (leaves.empty()) fail(Errc::empty_leaves, "cannot build a tree over zero leaves");
  std::vector<Hash32> level;
  level.reserve(leaves.size());
  for (const Hash32& id : leaves) level.push_back(leaf_hash(id));
  while (level.size() > 1) {
    if (level.size() % 2 == 1) level.push_back(level.back());
    std::vector<Hash32> next;
    next.reserve(level.size() / 2);
    for (std::size_t i = 0; i < level.size(); i += 2) {
      next.push_back(node_hash(level[i], level[i + 1]));
    }
    level = std::move(next);
  }
  return level[0];
}

// Sibling path for leaf `index`; ceil(log2(n)) steps for n leaves.
inline MerkleProof build_merkle_proof(const std::vector<Hash32>& leaves, std::size_t index) {
  if (leaves.empty()) fail(Errc::empty_leaves, "cannot build a proof over zero leaves");
  if (index >= leaves.size()) fail(Errc::unknown_record, "leaf index out of range");
  MerkleProof proof;
  proof.leaf_index = index;
  std::vector<Hash32> level;
  level.reserve(leaves.size());
  for (const Hash32& id : leaves) level.push_back(leaf_hash(id));
  std::size_t pos = index;
  while (level.size() > 1) {
    if (level.size() % 2 == 1) level.push_back(level.back());
    std::size_t sibling = pos ^ 1;
    proof.siblings.push_back({level[sibling], sibling < pos ? Side::left : Side::right});
    std::vector<Hash32> next;
    next.reserve(level.size() / 2);
    for (std::size_t i = 0; i < level.size(); i += 2) {
      next.push_back(node_hash(level[i], level[i + 1]));
    }
    level = std::move(next);
    pos /= 2;
  }
  return proof;
}

// Pure check: replay the sibling path from the leaf hash and compare roots.
inline bool verify_proof(const Hash32& record_id, const MerkleProof& proof, const Hash32& root) {
  Hash32 cur = leaf_hash(record_id);
  for (const ProofStep& step : proof.siblings) {
    cur = step.side == Side::left ? node_hash(step.hash, cur) : node_hash(cur, step.hash);
  }
  return cur == root;
}

}  // namespace regulus::ledger
