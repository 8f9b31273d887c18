#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "regulus/canonical.hpp"
#include "regulus/crypto.hpp"
#include "regulus/errors.hpp"
#include "regulus/ledger.hpp"
#include "regulus/record.hpp"

// Arbitration contract: a staking/slashing state machine layered on the
// ledger. Agents stake tokens to register, owe one valid record per epoch,
// and face a three-rule evidence engine when disputed. Every state change
// the contract makes is itself appended to the ledger under its own signing
// identity, so the full token flow is auditable from chain state.

namespace regulus::arbitration {

using ledger::AgentId;
using ledger::Epoch;
using ledger::Hash32;
using ledger::Tick;

struct Params {
  std::int64_t min_stake = 100;
  std::int64_t slash_percent = 10;          // missing-submission slash, floored
  std::int64_t penalty_per_true_verdict = 5;
  std::int64_t frivolous_fee = 1;
  int strike_limit = 3;                     // coalition exclusion threshold
  std::uint64_t key_seed = 0;               // derives the contract identity
};

enum class Privilege { active, restricted, suspended };

inline std::string_view to_string(Privilege p) {
  switch (p) {
    case Privilege::active: return "active";
    case Privilege::restricted: return "restricted";
    case Privilege::suspended: return "suspended";
  }
  return "unknown";
}

struct AgentAccount {
  AgentId agent_id;
  crypto::PublicKey public_key{};
  std::int64_t stake = 0;
  int strikes = 0;
  std::set<std::string> declared_capabilities;
  bool monitored = false;
  bool coalition_banned = false;  // set once strikes reach the limit
  // First epochs at which each sanction has lapsed.
  Epoch restricted_until = 0;
  Epoch suspended_until = 0;

  Privilege privilege_at(Epoch now) const {
    if (now < suspended_until) return Privilege::suspended;
    if (now < restricted_until) return Privilege::restricted;
    return Privilege::active;
  }
};

struct EpochReport {
  Epoch epoch = 0;
  std::set<AgentId> submitted;
  std::set<AgentId> missing;
  std::map<AgentId, std::int64_t> slashes;
  std::set<AgentId> revocations;
  Hash32 event_record_id{};
  std::uint64_t block_height = 0;
};

enum class ClaimKind { capability_violation, deadline_violation, contradiction };

inline std::string_view to_string(ClaimKind k) {
  switch (k) {
    case ClaimKind::capability_violation: return "capability_violation";
    case ClaimKind::deadline_violation: return "deadline_violation";
    case ClaimKind::contradiction: return "contradiction";
  }
  return "unknown";
}

enum class DisputeStatus { open, evaluated, resolved };

struct Dispute {
  std::uint64_t dispute_id = 0;
  AgentId claimant;
  AgentId respondent;
  ClaimKind claim_kind = ClaimKind::capability_violation;
  std::vector<Hash32> evidence_record_ids;
  DisputeStatus status = DisputeStatus::open;
  std::array<bool, 3> verdicts{};  // R1 capability, R2 deadline, R3 contradiction
  Epoch opened_epoch = 0;
  bool system_claim = false;  // escalations by the forecaster pay no fee
};

struct Resolution {
  std::uint64_t dispute_id = 0;
  std::array<bool, 3> verdicts{};
  std::int64_t penalty_tokens = 0;
  std::uint64_t suspension_epochs = 0;
  std::map<AgentId, std::int64_t> redistribution;
  bool flagged = false;
  Hash32 event_record_id{};
};

struct TokenAudit {
  std::int64_t deposits = 0;
  std::int64_t minted = 0;
  std::int64_t stakes_sum = 0;
  std::int64_t sink = 0;
  bool balanced = false;
};

// Token/strike hooks the reputation game drives. Kept abstract so the game
// logic is testable against a fake account book.
struct AccountEnforcer {
  virtual ~AccountEnforcer() = default;
  virtual void reward(const AgentId& agent, std::int64_t tokens) = 0;
  // Returns the amount actually taken (floored at a zero balance).
  virtual std::int64_t penalize(const AgentId& agent, std::int64_t tokens) = 0;
  // Returns the new strike count.
  virtual int add_strike(const AgentId& agent) = 0;
};

class ArbitrationContract : public AccountEnforcer {
 public:
  static constexpr const char* kSystemId = "__asc__";
  static constexpr const char* kSinkId = "__sink__";

  explicit ArbitrationContract(ledger::Ledger& led, Params params = {})
      : ledger_(led),
        params_(params),
        keys_(crypto::KeyPair::from_seed(crypto::derive_seed(params.key_seed, 0xA5C))) {
    ledger_.register_key(kSystemId, keys_.public_key);
    canonical::KvMap ev;
    ev["event"] = "registration";
    ev["agent"] = kSystemId;
    ev["public_key"] = crypto::to_hex(keys_.public_key);
    append_event(ev);
  }

  // --- registration and submissions ---

  const AgentAccount& register_agent(const AgentId& agent_id, const crypto::PublicKey& pk,
                                     std::int64_t stake, std::set<std::string> capabilities) {
    if (accounts_.count(agent_id) > 0) fail(Errc::duplicate_agent, "already registered: " + agent_id);
    if (stake < params_.min_stake) {
      fail(Errc::insufficient_stake,
           "stake " + std::to_string(stake) + " below minimum " + std::to_string(params_.min_stake));
    }
    AgentAccount acc;
    acc.agent_id = agent_id;
    acc.public_key = pk;
    acc.stake = stake;
    acc.declared_capabilities = std::move(capabilities);
    deposits_ += stake;
    ledger_.register_key(agent_id, pk);
    canonical::KvMap ev;
    ev["event"] = "registration";
    ev["agent"] = agent_id;
    ev["public_key"] = crypto::to_hex(pk);
    ev["stake"] = std::to_string(stake);
    std::string caps;
    for (const auto& c : acc.declared_capabilities) {
      if (!caps.empty()) caps += ",";
      caps += c;
    }
    ev["capabilities"] = caps;
    append_event(ev);
    return accounts_.emplace(agent_id, std::move(acc)).first->second;
  }

  Hash32 submit_behavior(const AgentId& agent_id, Epoch epoch,
                         const ledger::BehaviorRecord& record) {
    AgentAccount& acc = must_find(agent_id);
    if (acc.privilege_at(current_epoch_) == Privilege::suspended) {
      fail(Errc::suspended_agent, agent_id + " is suspended until epoch " +
                                      std::to_string(acc.suspended_until));
    }
    if (epoch != current_epoch_ || record.epoch != current_epoch_) {
      fail(Errc::wrong_epoch, "current epoch is " + std::to_string(current_epoch_));
    }
    if (record.agent_id != agent_id) {
      fail(Errc::invalid_signature, "record is signed for a different agent");
    }
    Hash32 receipt = ledger_.append_record(record);  // throws on a bad signature
    submitted_.insert(agent_id);
    return receipt;
  }

  // Ends the open epoch: slashes and restricts every obligated account that
  // did not submit, seals the block, advances the epoch counter.
  const EpochReport& close_epoch(Epoch epoch) {
    if (epoch != current_epoch_) {
      fail(Errc::epoch_already_closed, "open epoch is " + std::to_string(current_epoch_) +
                                           ", not " + std::to_string(epoch));
    }
    EpochReport rep;
    rep.epoch = epoch;
    canonical::KvMap ev;
    ev["event"] = "epoch_report";
    ev["epoch"] = std::to_string(epoch);
    for (auto& [id, acc] : accounts_) {
      if (acc.privilege_at(epoch) == Privilege::suspended) continue;  // not obligated
      if (submitted_.count(id) > 0) {
        rep.submitted.insert(id);
        continue;
      }
      rep.missing.insert(id);
      std::int64_t slash = acc.stake * params_.slash_percent / 100;
      acc.stake -= slash;
      sink_ += slash;
      acc.restricted_until = std::max(acc.restricted_until, epoch + 2);
      rep.slashes[id] = slash;
      rep.revocations.insert(id);
      ev["delta_" + id] = std::to_string(-slash);
    }
    ev["submitted"] = join(rep.submitted);
    ev["missing"] = join(rep.missing);
    rep.event_record_id = append_event(ev);
    const ledger::Block& block = ledger_.seal_block(epoch);
    rep.block_height = block.height;
    submitted_.clear();
    ++current_epoch_;
    return reports_.emplace(epoch, std::move(rep)).first->second;
  }

  // --- disputes ---

  const Dispute& open_dispute(const AgentId& claimant, const AgentId& respondent,
                              ClaimKind kind, std::vector<Hash32> evidence_ids) {
    bool system = claimant == kSystemId;
    if (!system) must_find(claimant);
    must_find(respondent);
    for (const Hash32& id : evidence_ids) {
      if (ledger_.find_record(id) == nullptr) {
        fail(Errc::unknown_evidence, "evidence not on ledger: " + crypto::to_hex(id));
      }
    }
    Dispute d;
    d.dispute_id = next_dispute_id_++;
    d.claimant = claimant;
    d.respondent = respondent;
    d.claim_kind = kind;
    d.evidence_record_ids = std::move(evidence_ids);
    d.opened_epoch = current_epoch_;
    d.system_claim = system;
    canonical::KvMap ev;
    ev["event"] = "dispute_opened";
    ev["dispute"] = std::to_string(d.dispute_id);
    ev["claimant"] = claimant;
    ev["respondent"] = respondent;
    ev["claim_kind"] = std::string(to_string(kind));
    append_event(ev);
    return disputes_.emplace(d.dispute_id, std::move(d)).first->second;
  }

  // Evaluates all three rule predicates over the evidence set. Evidence must
  // already be sealed: inclusion proofs are checked against block roots.
  std::array<bool, 3> evaluate_evidence(std::uint64_t dispute_id) {
    Dispute& d = must_find_dispute(dispute_id);
    if (d.status != DisputeStatus::open) fail(Errc::dispute_not_open, "dispute is not open");
    std::vector<const ledger::BehaviorRecord*> evidence;
    for (const Hash32& id : d.evidence_record_ids) {
      if (!ledger_.is_sealed(id)) {
        fail(Errc::evidence_proof_invalid, "evidence record is not sealed into a block");
      }
      ledger::MerkleProof proof = ledger_.prove_inclusion(id);
      const ledger::Block& b = ledger_.blocks().at(*ledger_.block_height_of(id));
      if (!ledger::verify_proof(id, proof, b.merkle_root)) {
        fail(Errc::evidence_proof_invalid, "inclusion proof does not verify");
      }
      evidence.push_back(ledger_.find_record(id));
    }
    const AgentAccount& resp = must_find(d.respondent);
    std::array<bool, 3> v{};
    for (const auto* r : evidence) {
      if (r->agent_id != d.respondent) continue;  // rules judge the respondent's own records
      canonical::KvMap kv = r->payload_map();
      if (r->kind == ledger::RecordKind::task_assignment) {
        auto it = kv.find("task_type");
        if (it != kv.end() && resp.declared_capabilities.count(it->second) == 0) v[0] = true;
      }
      if (r->kind == ledger::RecordKind::cooperation_outcome) {
        auto ct = kv.find("completion_tick");
        auto dt = kv.find("deadline_tick");
        if (ct != kv.end() && dt != kv.end() &&
            canonical::parse_i64(ct->second) > canonical::parse_i64(dt->second)) {
          v[1] = true;
        }
      }
    }
    for (std::size_t i = 0; i < evidence.size() && !v[2]; ++i) {
      for (std::size_t j = i + 1; j < evidence.size() && !v[2]; ++j) {
        const auto *a = evidence[i], *b = evidence[j];
        if (a->agent_id != d.respondent || b->agent_id != d.respondent) continue;
        if (a->epoch != b->epoch) continue;
        canonical::KvMap ka = a->payload_map(), kb = b->payload_map();
        for (const auto& [key, val] : ka) {
          auto it = kb.find(key);
          if (it != kb.end() && it->second != val) {
            v[2] = true;
            break;
          }
        }
      }
    }
    d.verdicts = v;
    d.status = DisputeStatus::evaluated;
    canonical::KvMap ev;
    ev["event"] = "dispute_evaluated";
    ev["dispute"] = std::to_string(d.dispute_id);
    ev["verdicts"] = verdict_string(v);
    append_event(ev);
    return v;
  }

  const Resolution& resolve_dispute(std::uint64_t dispute_id) {
    Dispute& d = must_find_dispute(dispute_id);
    if (d.status != DisputeStatus::evaluated) {
      fail(Errc::dispute_not_evaluated, "dispute has not been evaluated");
    }
    Resolution res;
    res.dispute_id = d.dispute_id;
    res.verdicts = d.verdicts;
    int n_true = static_cast<int>(std::count(d.verdicts.begin(), d.verdicts.end(), true));
    canonical::KvMap ev;
    ev["event"] = "resolution";
    ev["dispute"] = std::to_string(d.dispute_id);
    ev["respondent"] = d.respondent;
    ev["verdicts"] = verdict_string(d.verdicts);
    if (n_true > 0) {
      AgentAccount& resp = must_find(d.respondent);
      res.penalty_tokens = std::min<std::int64_t>(params_.penalty_per_true_verdict * n_true,
                                                  resp.stake);
      resp.stake -= res.penalty_tokens;
      ev["delta_" + d.respondent] = std::to_string(-res.penalty_tokens);
      std::vector<AgentId> unaffected;
      for (const auto& [id, acc] : accounts_) {
        if (id != d.claimant && id != d.respondent) unaffected.push_back(id);
      }
      if (unaffected.empty()) {
        sink_ += res.penalty_tokens;
        if (res.penalty_tokens > 0) res.redistribution[kSinkId] = res.penalty_tokens;
      } else {
        std::int64_t share = res.penalty_tokens / static_cast<std::int64_t>(unaffected.size());
        std::int64_t rem = res.penalty_tokens % static_cast<std::int64_t>(unaffected.size());
        for (const AgentId& id : unaffected) {
          std::int64_t amount = share + (id == unaffected.front() ? rem : 0);
          if (amount == 0) continue;
          accounts_.at(id).stake += amount;
          res.redistribution[id] = amount;
          ev["delta_" + id] = std::to_string(amount);
        }
      }
      res.suspension_epochs = 1ULL << std::min(resp.strikes, 62);
      resp.suspended_until =
          std::max(resp.suspended_until, current_epoch_ + 1 + res.suspension_epochs);
      resp.strikes += 1;
      if (resp.strikes >= params_.strike_limit) resp.coalition_banned = true;
      resp.monitored = true;
      res.flagged = true;
      ev["suspension_epochs"] = std::to_string(res.suspension_epochs);
    } else if (!d.system_claim) {
      AgentAccount& cl = must_find(d.claimant);
      std::int64_t fee = std::min(params_.frivolous_fee, cl.stake);
      cl.stake -= fee;
      sink_ += fee;
      if (fee != 0) ev["delta_" + d.claimant] = std::to_string(-fee);
    }
    ev["penalty"] = std::to_string(res.penalty_tokens);
    res.event_record_id = append_event(ev);
    d.status = DisputeStatus::resolved;
    return resolutions_.emplace(d.dispute_id, std::move(res)).first->second;
  }

  // --- reputation-game enforcement hooks ---

  void reward(const AgentId& agent, std::int64_t tokens) override {
    AgentAccount& acc = must_find(agent);
    acc.stake += tokens;
    minted_ += tokens;
    canonical::KvMap ev;
    ev["event"] = "reward";
    ev["delta_" + agent] = std::to_string(tokens);
    append_event(ev);
  }

  std::int64_t penalize(const AgentId& agent, std::int64_t tokens) override {
    AgentAccount& acc = must_find(agent);
    std::int64_t taken = std::min(tokens, acc.stake);
    acc.stake -= taken;
    sink_ += taken;
    canonical::KvMap ev;
    ev["event"] = "penalty";
    ev["delta_" + agent] = std::to_string(-taken);
    append_event(ev);
    return taken;
  }

  int add_strike(const AgentId& agent) override {
    AgentAccount& acc = must_find(agent);
    acc.strikes += 1;
    if (acc.strikes >= params_.strike_limit) acc.coalition_banned = true;
    return acc.strikes;
  }

  // --- forecaster countermeasures ---

  void restrict_agent(const AgentId& agent) {
    AgentAccount& acc = must_find(agent);
    acc.restricted_until = std::max(acc.restricted_until, current_epoch_ + 2);
  }

  Hash32 record_alert(const AgentId& agent, Epoch epoch, double anomaly_score,
                      double deviation_probability, std::string_view action) {
    canonical::KvMap ev;
    ev["event"] = "alert";
    ev["agent"] = agent;
    ev["epoch"] = std::to_string(epoch);
    ev["anomaly_score"] = canonical::format_double(anomaly_score);
    ev["deviation_probability"] = canonical::format_double(deviation_probability);
    ev["action"] = std::string(action);
    return append_event(ev);
  }

  const Dispute& open_system_dispute(const AgentId& respondent, ClaimKind kind,
                                     std::vector<Hash32> evidence_ids) {
    return open_dispute(kSystemId, respondent, kind, std::move(evidence_ids));
  }

  // --- audits and reads ---

  // Every token entering the system (deposits, minted rewards) is either in
  // some account's stake or in the sink. Exact integer identity.
  TokenAudit audit() const {
    TokenAudit a;
    a.deposits = deposits_;
    a.minted = minted_;
    a.sink = sink_;
    for (const auto& [id, acc] : accounts_) a.stakes_sum += acc.stake;
    a.balanced = a.deposits + a.minted == a.stakes_sum + a.sink;
    return a;
  }

  Epoch current_epoch() const { return current_epoch_; }

  const AgentAccount* find_account(const AgentId& id) const {
    auto it = accounts_.find(id);
    return it == accounts_.end() ? nullptr : &it->second;
  }

  Privilege privilege_of(const AgentId& id) const {
    return must_find(id).privilege_at(current_epoch_);
  }

  const std::map<AgentId, AgentAccount>& accounts() const { return accounts_; }
  const std::map<Epoch, EpochReport>& epoch_reports() const { return reports_; }
  const std::map<std::uint64_t, Dispute>& disputes() const { return disputes_; }
  const std::map<std::uint64_t, Resolution>& resolutions() const { return resolutions_; }
  std::int64_t sink() const { return sink_; }

 private:
  static std::string join(const std::set<AgentId>& ids) {
    std::string out;
    for (const auto& id : ids) {
      if (!out.empty()) out += ",";
      out += id;
    }
    return out;
  }

  static std::string verdict_string(const std::array<bool, 3>& v) {
    std::string s;
    for (bool b : v) s += b ? '1' : '0';
    return s;
  }

  AgentAccount& must_find(const AgentId& id) {
    auto it = accounts_.find(id);
    if (it == accounts_.end()) fail(Errc::unknown_agent, "no such agent: " + id);
    return it->second;
  }

  const AgentAccount& must_find(const AgentId& id) const {
    auto it = accounts_.find(id);
    if (it == accounts_.end()) fail(Errc::unknown_agent, "no such agent: " + id);
    return it->second;
  }

  Dispute& must_find_dispute(std::uint64_t id) {
    auto it = disputes_.find(id);
    if (it == disputes_.end()) fail(Errc::unknown_evidence, "no such dispute: " + std::to_string(id));
    return it->second;
  }

  Hash32 append_event(const canonical::KvMap& payload) {
    ledger::BehaviorRecord rec = ledger::make_record(
        kSystemId, current_epoch_, ledger::RecordKind::report, payload, next_tick_++, keys_);
    return ledger_.append_record(rec);
  }

  ledger::Ledger& ledger_;
  Params params_;
  crypto::KeyPair keys_;
  std::map<AgentId, AgentAccount> accounts_;
  std::set<AgentId> submitted_;
  std::map<Epoch, EpochReport> reports_;
  std::map<std::uint64_t, Dispute> disputes_;
  std::map<std::uint64_t, Resolution> resolutions_;
  Epoch current_epoch_ = 0;
  std::uint64_t next_dispute_id_ = 0;
  std::int64_t deposits_ = 0;
  std::int64_t minted_ = 0;
  std::int64_t sink_ = 0;
  Tick next_tick_ = 0;
};

}  // namespace regulus::arbitration
