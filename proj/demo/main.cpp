// Minimal end-to-end walkthrough: three agents register with stakes, submit
// signed behavior records, one agent goes silent and gets slashed, a dispute
// runs through evidence evaluation, and the chain verifies from a fresh
// re-import. Prints a short trace of each step.

#include <iostream>
#include <sstream>

#include "regulus/arbitration.hpp"
#include "regulus/ledger.hpp"
#include "regulus/reputation.hpp"

using namespace regulus;

int main() {
  crypto::init();

  ledger::Ledger chain;
  arbitration::Params params;
  params.key_seed = 42;
  arbitration::ArbitrationContract contract(chain, params);

  auto alice = crypto::KeyPair::from_seed(1);
  auto bob = crypto::KeyPair::from_seed(2);
  auto carol = crypto::KeyPair::from_seed(3);
  contract.register_agent("alice", alice.public_key, 100, {"navigation", "vision"});
  contract.register_agent("bob", bob.public_key, 150, {"navigation"});
  contract.register_agent("carol", carol.public_key, 120, {"navigation"});
  std::cout << "registered 3 agents with stakes 100/150/120\n";

  ledger::Tick tick = 1;
  auto submit = [&](const std::string& id, const crypto::KeyPair& keys, ledger::Epoch epoch,
                    ledger::RecordKind kind, const canonical::KvMap& payload) {
    auto rec = ledger::make_record(id, epoch, kind, payload, tick++, keys);
    contract.submit_behavior(id, epoch, rec);
    return rec.record_id;
  };

  // Epoch 0: everyone submits; bob overclaims a capability.
  submit("alice", alice, 0, ledger::RecordKind::action_log, {{"status", "ok"}});
  crypto::Hash32 overclaim = submit("bob", bob, 0, ledger::RecordKind::task_assignment,
                                    {{"task", "t1"}, {"task_type", "manipulation"}});
  submit("carol", carol, 0, ledger::RecordKind::action_log, {{"status", "ok"}});
  const arbitration::EpochReport& e0 = contract.close_epoch(0);
  std::cout << "epoch 0 sealed: " << e0.submitted.size() << " submitted, "
            << e0.missing.size() << " missing\n";

  // Epoch 1: carol goes silent and is slashed at the close.
  submit("alice", alice, 1, ledger::RecordKind::action_log, {{"status", "ok"}});
  submit("bob", bob, 1, ledger::RecordKind::action_log, {{"status", "ok"}});
  const arbitration::EpochReport& e1 = contract.close_epoch(1);
  for (const auto& [agent, amount] : e1.slashes) {
    std::cout << "epoch 1: slashed " << agent << " by " << amount << " tokens\n";
  }

  // Epoch 2: alice disputes bob's capability overclaim, citing the sealed
  // record as evidence.
  const arbitration::Dispute& dispute = contract.open_dispute(
      "alice", "bob", arbitration::ClaimKind::capability_violation, {overclaim});
  contract.evaluate_evidence(dispute.dispute_id);
  const arbitration::Resolution& res = contract.resolve_dispute(dispute.dispute_id);
  std::cout << "dispute resolved: penalty " << res.penalty_tokens << " tokens, suspension "
            << res.suspension_epochs << " epoch(s)\n";
  submit("alice", alice, 2, ledger::RecordKind::action_log, {{"status", "ok"}});
  contract.close_epoch(2);

  arbitration::TokenAudit audit = contract.audit();
  std::cout << "token audit: deposits " << audit.deposits << " + minted " << audit.minted
            << " == stakes " << audit.stakes_sum << " + sink " << audit.sink << " : "
            << (audit.balanced ? "balanced" : "BROKEN") << "\n";

  // Round-trip the chain through its export format and verify everything.
  std::stringstream records, blocks;
  chain.export_records(records);
  chain.export_blocks(blocks);
  ledger::Ledger imported = ledger::Ledger::import_from(records, blocks);
  auto violations = imported.verify_chain();
  std::cout << "re-imported chain: " << imported.blocks().size() << " blocks, "
            << violations.size() << " violations\n";
  for (const ledger::Block& b : imported.blocks()) {
    for (const crypto::Hash32& id : b.record_ids) {
      auto proof = imported.prove_inclusion(id);
      if (!ledger::verify_proof(id, proof, b.merkle_root)) {
        std::cout << "inclusion proof FAILED at height " << b.height << "\n";
        return 1;
      }
    }
  }
  std::cout << "all inclusion proofs verified\n";
  return violations.empty() ? 0 : 1;
}
