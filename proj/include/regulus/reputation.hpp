#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "regulus/arbitration.hpp"
#include "regulus/canonical.hpp"
#include "regulus/crypto.hpp"
#include "regulus/errors.hpp"
#include "regulus/ledger.hpp"
#include "regulus/record.hpp"

// Trust scoring: context-weighted task scores feed a decayed Beta posterior
// per agent, and peer report rounds are settled by a median-consensus game
// with token rewards for honest reporters and slashes for outliers.

namespace regulus::reputation {

using arbitration::AccountEnforcer;
using ledger::AgentId;
using ledger::Epoch;

struct TaskFeatures {
  double completion = 0.0;  // {0, 1}
  double timeliness = 0.0;
  double resource_contribution = 0.0;
  double peer_feedback = 0.0;
};

struct ContextWeights {
  std::string context_id;
  std::array<double, 4> weights{0.25, 0.25, 0.25, 0.25};
};

struct ReputationProfile {
  AgentId agent_id;
  double alpha = 1.0;
  double beta = 1.0;
  Epoch last_update_epoch = 0;
};

struct ReportRound {
  std::string task_id;
  AgentId subject_agent;
  std::map<AgentId, double> reports;
  std::set<AgentId> flags;
  double consensus = 0.0;
};

enum class ConsensusStat { median, mean };

struct Params {
  double decay = 0.95;
  double prior_alpha = 1.0;
  double prior_beta = 1.0;
  double tolerance = 0.15;
  int quorum = 3;
  std::int64_t reward_tokens = 1;
  std::int64_t slash_tokens = 5;
  ConsensusStat consensus = ConsensusStat::median;
  std::uint64_t key_seed = 0;
};

// --- pure core ---

inline double score_task(const TaskFeatures& f, const ContextWeights& w) {
  double sum = 0.0;
  for (double x : w.weights) {
    if (x < 0.0) fail(Errc::weights_not_normalized, "negative weight");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    fail(Errc::weights_not_normalized, "weights sum to " + canonical::format_double(sum));
  }
  return w.weights[0] * f.completion + w.weights[1] * f.timeliness +
         w.weights[2] * f.resource_contribution + w.weights[3] * f.peer_feedback;
}

// alpha <- decay*alpha + score, beta <- decay*beta + (1-score): a fractional
// Bernoulli observation after shrinking old evidence toward the prior mass.
inline ReputationProfile update_posterior(ReputationProfile profile, double score, double decay) {
  if (!(score >= 0.0 && score <= 1.0)) {
    fail(Errc::score_out_of_range, "score " + canonical::format_double(score));
  }
  if (!(decay > 0.0 && decay <= 1.0)) {
    fail(Errc::decay_out_of_range, "decay " + canonical::format_double(decay));
  }
  profile.alpha = decay * profile.alpha + score;
  profile.beta = decay * profile.beta + (1.0 - score);
  return profile;
}

inline double reputation(const ReputationProfile& p) { return p.alpha / (p.alpha + p.beta); }

inline ReportRound collect_reports(const std::string& task_id, const AgentId& subject,
                                   const std::map<AgentId, double>& reports, double tolerance,
                                   int quorum = 3, ConsensusStat stat = ConsensusStat::median) {
  if (reports.empty()) fail(Errc::no_reports, "no reports for task " + task_id);
  std::vector<double> values;
  values.reserve(reports.size());
  for (const auto& [id, v] : reports) {
    if (!(v >= 0.0 && v <= 1.0)) {
      fail(Errc::report_out_of_range, id + " reported " + canonical::format_double(v));
    }
    values.push_back(v);
  }
  ReportRound round;
  round.task_id = task_id;
  round.subject_agent = subject;
  round.reports = reports;
  if (stat == ConsensusStat::mean) {
    double sum = 0.0;
    for (double v : values) sum += v;
    round.consensus = sum / static_cast<double>(values.size());
  } else {
    std::sort(values.begin(), values.end());
    std::size_t n = values.size();
    round.consensus =
        n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
  }
  if (static_cast<int>(reports.size()) >= quorum) {
    for (const auto& [id, v] : reports) {
      if (std::abs(v - round.consensus) > tolerance) round.flags.insert(id);
    }
  }
  return round;
}

struct PayoffApplication {
  std::map<AgentId, std::int64_t> token_deltas;
  std::map<AgentId, int> strikes;  // flagged reporters only, post-increment counts
  double subject_score = 0.0;
};

// Stateful engine: owns the per-agent posteriors and anchors every update and
// settled report round on the ledger under its own signing identity.
class ReputationEngine {
 public:
  static constexpr const char* kSystemId = "__rep__";

  explicit ReputationEngine(ledger::Ledger& led, Params params = {})
      : ledger_(led),
        params_(params),
        keys_(crypto::KeyPair::from_seed(crypto::derive_seed(params.key_seed, 0x4e9))) {
    ledger_.register_key(kSystemId, keys_.public_key);
    canonical::KvMap ev;
    ev["event"] = "registration";
    ev["agent"] = kSystemId;
    ev["public_key"] = crypto::to_hex(keys_.public_key);
    append_event(ev);
  }

  const Params& params() const { return params_; }

  // Events carry the epoch they happen in; the simulation advances this.
  void set_epoch(Epoch e) { epoch_ = e; }

  const ReputationProfile& profile(const AgentId& agent) {
    auto it = profiles_.find(agent);
    if (it == profiles_.end()) {
      ReputationProfile p;
      p.agent_id = agent;
      p.alpha = params_.prior_alpha;
      p.beta = params_.prior_beta;
      it = profiles_.emplace(agent, std::move(p)).first;
    }
    return it->second;
  }

  double reputation_of(const AgentId& agent) { return reputation(profile(agent)); }

  const ReputationProfile& update(const AgentId& agent, double score) {
    ReputationProfile next = update_posterior(profile(agent), score, params_.decay);
    next.last_update_epoch = epoch_;
    canonical::KvMap ev;
    ev["event"] = "posterior_update";
    ev["agent"] = agent;
    ev["score"] = canonical::format_double(score);
    ev["alpha"] = canonical::format_double(next.alpha);
    ev["beta"] = canonical::format_double(next.beta);
    append_event(ev);
    return profiles_[agent] = std::move(next);
  }

  ReportRound collect(const std::string& task_id, const AgentId& subject,
                      const std::map<AgentId, double>& reports) const {
    return collect_reports(task_id, subject, reports, params_.tolerance, params_.quorum,
                           params_.consensus);
  }

  // Settles a round: honest reporters are rewarded and reinforced, flagged
  // reporters are slashed, struck, and degraded; the subject's posterior
  // absorbs the consensus as its score.
  PayoffApplication apply_payoffs(const ReportRound& round, AccountEnforcer& enforcer) {
    PayoffApplication out;
    canonical::KvMap ev;
    ev["event"] = "report_round";
    ev["task"] = round.task_id;
    ev["subject"] = round.subject_agent;
    ev["consensus"] = canonical::format_double(round.consensus);
    for (const auto& [id, value] : round.reports) {
      ev["r_" + id] = canonical::format_double(value);
      if (round.flags.count(id) > 0) {
        std::int64_t taken = enforcer.penalize(id, params_.slash_tokens);
        out.token_deltas[id] = -taken;
        out.strikes[id] = enforcer.add_strike(id);
        update(id, 0.0);
      } else {
        enforcer.reward(id, params_.reward_tokens);
        out.token_deltas[id] = params_.reward_tokens;
        update(id, 1.0);
      }
    }
    std::string flagged;
    for (const auto& id : round.flags) {
      if (!flagged.empty()) flagged += ",";
      flagged += id;
    }
    ev["flags"] = flagged;
    append_event(ev);
    out.subject_score = round.consensus;
    update(round.subject_agent, round.consensus);
    return out;
  }

  const std::map<AgentId, ReputationProfile>& profiles() const { return profiles_; }

 private:
  crypto::Hash32 append_event(const canonical::KvMap& payload) {
    ledger::BehaviorRecord rec = ledger::make_record(
        kSystemId, epoch_, ledger::RecordKind::report, payload, next_tick_++, keys_);
    return ledger_.append_record(rec);
  }

  ledger::Ledger& ledger_;
  Params params_;
  crypto::KeyPair keys_;
  std::map<AgentId, ReputationProfile> profiles_;
  Epoch epoch_ = 0;
  ledger::Tick next_tick_ = 0;
};

}  // namespace regulus::reputation
