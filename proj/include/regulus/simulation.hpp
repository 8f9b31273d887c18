#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "regulus/arbitration.hpp"
#include "regulus/canonical.hpp"
#include "regulus/crypto.hpp"
#include "regulus/errors.hpp"
#include "regulus/forecasting.hpp"
#include "regulus/ledger.hpp"
#include "regulus/reputation.hpp"

// Scenario harness: synthesizes an agent population with per-agent behavior
// policies, drives the ledger -> arbitration -> reputation -> forecasting
// loop epoch by epoch, and measures detection and aggregation quality against
// the injected ground truth. Fully deterministic for a fixed config.

namespace regulus::sim {

using ledger::AgentId;
using ledger::Epoch;

// --- policies ---

enum class PolicyKind { honest, free_rider, colluder, exaggerator, saboteur };

inline constexpr PolicyKind kPolicyKinds[] = {PolicyKind::honest, PolicyKind::free_rider,
                                              PolicyKind::colluder, PolicyKind::exaggerator,
                                              PolicyKind::saboteur};

inline std::string_view to_string(PolicyKind k) {
  switch (k) {
    case PolicyKind::honest: return "honest";
    case PolicyKind::free_rider: return "free_rider";
    case PolicyKind::colluder: return "colluder";
    case PolicyKind::exaggerator: return "exaggerator";
    case PolicyKind::saboteur: return "saboteur";
  }
  return "unknown";
}

inline std::optional<PolicyKind> policy_from_string(std::string_view s) {
  for (PolicyKind k : kPolicyKinds) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

struct PolicyParams {
  double answer_accuracy = 0.9;
  double submission_probability = 1.0;
  double report_bias = 0.0;  // added to reports about collusion partners
};

// --- aggregation ---

enum class AggregationMode { non_cooperative, k_cluster, reputation_weighted };

inline constexpr AggregationMode kAggregationModes[] = {
    AggregationMode::non_cooperative, AggregationMode::k_cluster,
    AggregationMode::reputation_weighted};

inline std::string_view to_string(AggregationMode m) {
  switch (m) {
    case AggregationMode::non_cooperative: return "non_cooperative";
    case AggregationMode::k_cluster: return "k_cluster";
    case AggregationMode::reputation_weighted: return "reputation_weighted";
  }
  return "unknown";
}

inline std::optional<AggregationMode> aggregation_from_string(std::string_view s) {
  for (AggregationMode m : kAggregationModes) {
    if (to_string(m) == s) return m;
  }
  return std::nullopt;
}

// Group answers by value; ties resolve to the smallest answer, which favors
// no agent in particular.
namespace detail {

inline int argmax_answer(const std::map<int, double>& tallies) {
  int best = 0;
  double best_weight = -1.0;
  for (const auto& [answer, weight] : tallies) {  // ascending answer order
    if (weight > best_weight) {
      best = answer;
      best_weight = weight;
    }
  }
  return best;
}

}  // namespace detail

inline int aggregate_answers(const std::map<AgentId, int>& answers,
                             const std::map<AgentId, double>& reputations, AggregationMode mode,
                             std::mt19937_64& rng, int k_clusters = 2) {
  if (answers.empty()) fail(Errc::no_answers, "no answers to aggregate");
  if (mode == AggregationMode::non_cooperative) {
    std::uniform_int_distribution<std::size_t> pick(0, answers.size() - 1);
    auto it = answers.begin();
    std::advance(it, pick(rng));
    return it->second;
  }
  if (mode == AggregationMode::k_cluster) {
    std::vector<AgentId> ids;
    for (const auto& [id, a] : answers) ids.push_back(id);
    std::shuffle(ids.begin(), ids.end(), rng);
    std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, k_clusters)),
                                          ids.size());
    std::map<int, double> cluster_votes, global_votes;
    for (const auto& [id, answer] : answers) global_votes[answer] += 1.0;
    for (std::size_t c = 0; c < k; ++c) {
      std::map<int, double> votes;
      for (std::size_t i = c; i < ids.size(); i += k) votes[answers.at(ids[i])] += 1.0;
      cluster_votes[detail::argmax_answer(votes)] += 1.0;
    }
    // Ties between cluster outputs fall back to the overall vote count.
    int best = 0;
    double best_w = -1.0, best_g = -1.0;
    for (const auto& [answer, w] : cluster_votes) {
      double g = global_votes[answer];
      if (w > best_w || (w == best_w && g > best_g)) {
        best = answer;
        best_w = w;
        best_g = g;
      }
    }
    return best;
  }
  std::map<int, double> votes;
  for (const auto& [id, answer] : answers) {
    auto it = reputations.find(id);
    votes[answer] += it == reputations.end() ? 0.5 : it->second;
  }
  return detail::argmax_answer(votes);
}

// --- detection metrics ---

struct AgentEpoch {
  AgentId agent;
  Epoch epoch = 0;
  auto operator<=>(const AgentEpoch&) const = default;
};

struct DetectionMetrics {
  int tp = 0, fp = 0, fn = 0, tn = 0;
  double precision = 1.0, recall = 1.0, f1 = 1.0;
};

inline DetectionMetrics evaluate_detection(const std::set<AgentEpoch>& alerted,
                                           const std::map<AgentEpoch, bool>& labels) {
  for (const AgentEpoch& ae : alerted) {
    if (labels.count(ae) == 0) {
      fail(Errc::label_mismatch, "alert for unlabeled pair " + ae.agent + "@" +
                                     std::to_string(ae.epoch));
    }
  }
  DetectionMetrics m;
  for (const auto& [ae, positive] : labels) {
    bool predicted = alerted.count(ae) > 0;
    if (predicted && positive) ++m.tp;
    else if (predicted && !positive) ++m.fp;
    else if (!predicted && positive) ++m.fn;
    else ++m.tn;
  }
  // Vacuous perfection when there is nothing to find and nothing was claimed.
  if (m.tp + m.fp == 0 && m.tp + m.fn == 0) return m;
  m.precision = m.tp + m.fp > 0 ? static_cast<double>(m.tp) / (m.tp + m.fp) : 0.0;
  m.recall = m.tp + m.fn > 0 ? static_cast<double>(m.tp) / (m.tp + m.fn) : 0.0;
  m.f1 = m.precision + m.recall > 0.0
             ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  return m;
}

// --- configuration ---

struct ForecastConfig {
  bool enabled = true;
  std::size_t window = 5;
  forecast::ScheduleKind schedule = forecast::ScheduleKind::cosine;
  int T = 100;
  double beta_min = 1e-4;
  double beta_max = 0.02;
  int t_star = 5;
  int K = 4;
  double percentile = 95.0;
  double warmup_fraction = 0.3;
  std::size_t train_epochs = 30;
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  forecast::FeatureParams features;
};

struct ScenarioConfig {
  std::uint64_t seed = 0;
  int n_agents = 8;
  int n_epochs = 20;
  int tasks_per_epoch = 4;
  int coalition_size = 4;
  std::int64_t initial_stake = 100;
  std::map<PolicyKind, int> policy_mix = {{PolicyKind::honest, 8}};
  std::map<PolicyKind, PolicyParams> policies = default_policies();
  AggregationMode aggregation_mode = AggregationMode::reputation_weighted;
  int k_clusters = 2;
  bool auto_dispute = true;
  arbitration::Params arbitration;
  reputation::Params reputation;
  ForecastConfig forecasting;

  static std::map<PolicyKind, PolicyParams> default_policies() {
    return {
        {PolicyKind::honest, {0.9, 1.0, 0.0}},
        {PolicyKind::free_rider, {0.9, 0.0, 0.0}},
        {PolicyKind::colluder, {0.9, 1.0, 0.5}},
        {PolicyKind::exaggerator, {0.9, 1.0, 0.0}},
        {PolicyKind::saboteur, {0.3, 1.0, 0.0}},
    };
  }

  // Training needs at least one full window of honest epochs, so the warm-up
  // never shrinks below the window when the forecaster is on.
  int warmup_epochs() const {
    int w = static_cast<int>(std::ceil(warmup_fraction_clamped() * n_epochs));
    int floor = forecasting.enabled ? static_cast<int>(forecasting.window) : 1;
    return std::max(w, floor);
  }

 private:
  double warmup_fraction_clamped() const {
    return std::clamp(forecasting.warmup_fraction, 0.0, 1.0);
  }
};

inline nlohmann::ordered_json default_config_json() {
  nlohmann::ordered_json j;
  j["seed"] = 0;
  j["n_agents"] = 8;
  j["n_epochs"] = 20;
  j["tasks_per_epoch"] = 4;
  j["coalition_size"] = 4;
  j["initial_stake"] = 100;
  j["policy_mix"] = {{"honest", 8}, {"free_rider", 0}, {"colluder", 0},
                     {"exaggerator", 0}, {"saboteur", 0}};
  nlohmann::ordered_json pols;
  for (const auto& [kind, p] : ScenarioConfig::default_policies()) {
    nlohmann::ordered_json pj;
    pj["answer_accuracy"] = p.answer_accuracy;
    pj["submission_probability"] = p.submission_probability;
    pj["report_bias"] = p.report_bias;
    pols[std::string(to_string(kind))] = std::move(pj);
  }
  j["policies"] = std::move(pols);
  j["aggregation_mode"] = "reputation_weighted";
  j["k_clusters"] = 2;
  j["auto_dispute"] = true;
  j["arbitration"] = {{"min_stake", 100}, {"slash_percent", 10},
                      {"penalty_per_true_verdict", 5}, {"frivolous_fee", 1},
                      {"strike_limit", 3}};
  j["reputation"] = {{"decay", 0.95}, {"prior_alpha", 1.0}, {"prior_beta", 1.0},
                     {"tolerance", 0.15}, {"quorum", 3}, {"reward_tokens", 1},
                     {"slash_tokens", 5}, {"consensus", "median"}};
  j["forecasting"] = {{"enabled", true},     {"window", 5},
                      {"schedule", "cosine"}, {"T", 100},
                      {"beta_min", 1e-4},    {"beta_max", 0.02},
                      {"t_star", 5},         {"K", 4},
                      {"percentile", 95.0},  {"warmup_fraction", 0.3},
                      {"train_epochs", 30},  {"learning_rate", 1e-3},
                      {"batch_size", 32},    {"ema", 0.8},
                      {"interaction_norm", 10.0}, {"stake_scale", 20.0}};
  return j;
}

// Rejects keys the schema does not know; typos in configs and --set overrides
// surface as errors instead of silently doing nothing.
inline void check_config_keys(const nlohmann::json& schema, const nlohmann::json& doc,
                              const std::string& path) {
  if (!doc.is_object()) return;
  for (const auto& [key, value] : doc.items()) {
    std::string here = path.empty() ? key : path + "." + key;
    if (!schema.is_object() || !schema.contains(key)) {
      fail(Errc::invalid_config, "unknown config key: " + here);
    }
    check_config_keys(schema.at(key), value, here);
  }
}

inline ScenarioConfig config_from_json(const nlohmann::json& doc) {
  check_config_keys(default_config_json(), doc, "");
  nlohmann::json j = default_config_json();
  j.merge_patch(doc);
  ScenarioConfig c;
  try {
    c.seed = j.at("seed").get<std::uint64_t>();
    c.n_agents = j.at("n_agents").get<int>();
    c.n_epochs = j.at("n_epochs").get<int>();
    c.tasks_per_epoch = j.at("tasks_per_epoch").get<int>();
    c.coalition_size = j.at("coalition_size").get<int>();
    c.initial_stake = j.at("initial_stake").get<std::int64_t>();
    c.policy_mix.clear();
    for (const auto& [name, count] : j.at("policy_mix").items()) {
      auto kind = policy_from_string(name);
      if (!kind) fail(Errc::invalid_config, "unknown policy: " + name);
      c.policy_mix[*kind] = count.get<int>();
    }
    for (const auto& [name, pj] : j.at("policies").items()) {
      auto kind = policy_from_string(name);
      if (!kind) fail(Errc::invalid_config, "unknown policy: " + name);
      PolicyParams& p = c.policies[*kind];
      p.answer_accuracy = pj.at("answer_accuracy").get<double>();
      p.submission_probability = pj.at("submission_probability").get<double>();
      p.report_bias = pj.at("report_bias").get<double>();
    }
    auto mode = aggregation_from_string(j.at("aggregation_mode").get<std::string>());
    if (!mode) fail(Errc::invalid_config, "unknown aggregation_mode");
    c.aggregation_mode = *mode;
    c.k_clusters = j.at("k_clusters").get<int>();
    c.auto_dispute = j.at("auto_dispute").get<bool>();
    const auto& arb = j.at("arbitration");
    c.arbitration.min_stake = arb.at("min_stake").get<std::int64_t>();
    c.arbitration.slash_percent = arb.at("slash_percent").get<std::int64_t>();
    c.arbitration.penalty_per_true_verdict = arb.at("penalty_per_true_verdict").get<std::int64_t>();
    c.arbitration.frivolous_fee = arb.at("frivolous_fee").get<std::int64_t>();
    c.arbitration.strike_limit = arb.at("strike_limit").get<int>();
    c.arbitration.key_seed = c.seed;
    const auto& rep = j.at("reputation");
    c.reputation.decay = rep.at("decay").get<double>();
    c.reputation.prior_alpha = rep.at("prior_alpha").get<double>();
    c.reputation.prior_beta = rep.at("prior_beta").get<double>();
    c.reputation.tolerance = rep.at("tolerance").get<double>();
    c.reputation.quorum = rep.at("quorum").get<int>();
    c.reputation.reward_tokens = rep.at("reward_tokens").get<std::int64_t>();
    c.reputation.slash_tokens = rep.at("slash_tokens").get<std::int64_t>();
    std::string consensus = rep.at("consensus").get<std::string>();
    if (consensus == "median") {
      c.reputation.consensus = reputation::ConsensusStat::median;
    } else if (consensus == "mean") {
      c.reputation.consensus = reputation::ConsensusStat::mean;
    } else {
      fail(Errc::invalid_config, "consensus must be median or mean");
    }
    c.reputation.key_seed = c.seed;
    const auto& fc = j.at("forecasting");
    c.forecasting.enabled = fc.at("enabled").get<bool>();
    c.forecasting.window = fc.at("window").get<std::size_t>();
    std::string sched = fc.at("schedule").get<std::string>();
    if (sched == "linear") {
      c.forecasting.schedule = forecast::ScheduleKind::linear;
    } else if (sched == "cosine") {
      c.forecasting.schedule = forecast::ScheduleKind::cosine;
    } else {
      fail(Errc::invalid_config, "schedule must be linear or cosine");
    }
    c.forecasting.T = fc.at("T").get<int>();
    c.forecasting.beta_min = fc.at("beta_min").get<double>();
    c.forecasting.beta_max = fc.at("beta_max").get<double>();
    c.forecasting.t_star = fc.at("t_star").get<int>();
    c.forecasting.K = fc.at("K").get<int>();
    c.forecasting.percentile = fc.at("percentile").get<double>();
    c.forecasting.warmup_fraction = fc.at("warmup_fraction").get<double>();
    c.forecasting.train_epochs = fc.at("train_epochs").get<std::size_t>();
    c.forecasting.learning_rate = fc.at("learning_rate").get<double>();
    c.forecasting.batch_size = fc.at("batch_size").get<std::size_t>();
    c.forecasting.features.ema = fc.at("ema").get<double>();
    c.forecasting.features.interaction_norm = fc.at("interaction_norm").get<double>();
    c.forecasting.features.stake_scale = fc.at("stake_scale").get<double>();
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::invalid_config, std::string("bad config value: ") + e.what());
  }
  if (c.n_agents < 1 || c.n_epochs < 1 || c.tasks_per_epoch < 0 || c.coalition_size < 2) {
    fail(Errc::invalid_config, "population or schedule sizes out of range");
  }
  int mix_total = 0;
  for (const auto& [kind, count] : c.policy_mix) {
    if (count < 0) fail(Errc::invalid_config, "negative policy count");
    mix_total += count;
  }
  if (mix_total != c.n_agents) {
    fail(Errc::invalid_config, "policy_mix sums to " + std::to_string(mix_total) +
                                   ", expected n_agents = " + std::to_string(c.n_agents));
  }
  if (c.forecasting.window < 1) fail(Errc::invalid_config, "forecasting window must be >= 1");
  return c;
}

// --- report ---

struct ReputationRow {
  Epoch epoch = 0;
  AgentId agent;
  double alpha = 0.0, beta = 0.0, reputation = 0.0;
};

struct EventRow {
  Epoch epoch = 0;
  std::string type;
  AgentId agent;
  std::int64_t tokens = 0;
  std::string detail;
};

struct DetectionRow {
  AgentId agent;
  Epoch epoch = 0;
  double anomaly_score = 0.0;
  double deviation_probability = 0.0;
  forecast::AlertAction action = forecast::AlertAction::none;
  bool label = false;
};

struct AggregationStat {
  AggregationMode mode = AggregationMode::non_cooperative;
  int correct = 0;
  int total = 0;
  double accuracy() const { return total > 0 ? static_cast<double>(correct) / total : 0.0; }
};

struct SimulationReport {
  std::vector<ReputationRow> reputation_rows;
  std::vector<EventRow> events;
  std::vector<DetectionRow> detection_rows;
  DetectionMetrics detection;
  std::array<AggregationStat, 3> aggregation;
  arbitration::TokenAudit audit;
  std::map<AgentId, PolicyKind> policy_of;
  std::map<AgentId, std::int64_t> final_stakes;
  std::map<AgentId, double> final_reputations;
  int warmup_epochs = 0;
  std::size_t n_disputes = 0;
  std::size_t n_resolutions = 0;
  std::vector<crypto::Hash32> resolution_event_ids;
  std::vector<crypto::Hash32> epoch_report_event_ids;
};

struct SimulationRun {
  ScenarioConfig config;
  ledger::Ledger ledger;
  SimulationReport report;
};

// --- the harness ---

namespace detail {

class Scenario {
 public:
  explicit Scenario(const ScenarioConfig& config)
      : cfg_(config),
        contract_(run_.ledger, cfg_.arbitration),
        engine_(run_.ledger, cfg_.reputation),
        sim_keys_(crypto::KeyPair::from_seed(crypto::derive_seed(cfg_.seed, 0x51b))),
        rng_tasks_(crypto::derive_seed(cfg_.seed, 1)),
        rng_policy_(crypto::derive_seed(cfg_.seed, 2)),
        rng_coalition_(crypto::derive_seed(cfg_.seed, 3)),
        rng_agg_(crypto::derive_seed(cfg_.seed, 4)) {
    run_.config = cfg_;
    run_.ledger.register_key(kSimId, sim_keys_.public_key);
    canonical::KvMap ev;
    ev["event"] = "registration";
    ev["agent"] = kSimId;
    ev["public_key"] = crypto::to_hex(sim_keys_.public_key);
    append_sim_record(ledger::RecordKind::report, ev, 0);
  }

  SimulationRun run() {
    setup_population();
    warmup_end_ = cfg_.warmup_epochs();
    run_.report.warmup_epochs = warmup_end_;
    for (int m = 0; m < 3; ++m) run_.report.aggregation[m].mode = kAggregationModes[m];
    for (Epoch e = 0; e < static_cast<Epoch>(cfg_.n_epochs); ++e) {
      run_epoch(e);
    }
    finalize();
    return std::move(run_);
  }

 private:
  static constexpr const char* kSimId = "__sim__";

  struct Agent {
    AgentId id;
    PolicyKind policy = PolicyKind::honest;
    crypto::KeyPair keys;
    std::optional<AgentId> partner;  // colluders only
    bool will_submit = true;
  };

  void setup_population() {
    int index = 0;
    for (PolicyKind kind : kPolicyKinds) {
      auto it = cfg_.policy_mix.find(kind);
      int count = it == cfg_.policy_mix.end() ? 0 : it->second;
      for (int i = 0; i < count; ++i, ++index) {
        Agent a;
        char buf[24];
        std::snprintf(buf, sizeof(buf), "agent-%02d", index);
        a.id = buf;
        a.policy = kind;
        a.keys = crypto::KeyPair::from_seed(crypto::derive_seed(cfg_.seed, 100 + index));
        agents_.emplace(a.id, std::move(a));
      }
    }
    // Colluders pair up in id order; an odd straggler pairs with the first.
    std::vector<AgentId> colluders;
    for (auto& [id, a] : agents_) {
      if (a.policy == PolicyKind::colluder) colluders.push_back(id);
    }
    for (std::size_t i = 0; i + 1 < colluders.size(); i += 2) {
      agents_.at(colluders[i]).partner = colluders[i + 1];
      agents_.at(colluders[i + 1]).partner = colluders[i];
    }
    if (colluders.size() % 2 == 1 && colluders.size() > 1) {
      agents_.at(colluders.back()).partner = colluders.front();
    }
    for (auto& [id, a] : agents_) {
      std::set<std::string> caps(kTaskTypes.begin(), kTaskTypes.end());
      if (a.policy == PolicyKind::exaggerator) caps = {kTaskTypes.front()};
      contract_.register_agent(id, a.keys.public_key, cfg_.initial_stake, caps);
      run_.report.policy_of[id] = a.policy;
    }
  }

  void run_epoch(Epoch e) {
    engine_.set_epoch(e);
    if (cfg_.auto_dispute && e >= 1) watchdog_scan(e - 1);
    decide_submissions(e);
    heartbeats(e);
    for (int t = 0; t < cfg_.tasks_per_epoch; ++t) run_task(e, t);
    const arbitration::EpochReport& rep = contract_.close_epoch(e);
    record_epoch_events(rep);
    snapshot_reputations(e);
    if (cfg_.forecasting.enabled) forecasting_phase(e);
  }

  void decide_submissions(Epoch e) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& [id, a] : agents_) {
      double p = cfg_.policies.at(a.policy).submission_probability;
      double draw = u(rng_policy_);  // drawn for every agent to keep streams aligned
      a.will_submit = e < static_cast<Epoch>(warmup_end_) || a.policy == PolicyKind::honest ||
                      draw < p;
    }
  }

  void heartbeats(Epoch e) {
    for (auto& [id, a] : agents_) {
      if (suspended(id) || !a.will_submit) continue;
      canonical::KvMap kv;
      kv["status"] = "ok";
      submit(a, e, ledger::RecordKind::action_log, kv);
    }
  }

  bool suspended(const AgentId& id) const {
    return contract_.privilege_of(id) == arbitration::Privilege::suspended;
  }

  // Coalition pool: active accounts not banned from coalitions.
  std::vector<AgentId> eligible_for_coalition() const {
    std::vector<AgentId> out;
    for (const auto& [id, acc] : contract_.accounts()) {
      if (acc.privilege_at(contract_.current_epoch()) == arbitration::Privilege::active &&
          !acc.coalition_banned) {
        out.push_back(id);
      }
    }
    return out;
  }

  std::vector<AgentId> sample_weighted(std::vector<AgentId> pool, std::size_t k) {
    std::vector<AgentId> picked;
    while (picked.size() < k && !pool.empty()) {
      double total = 0.0;
      std::vector<double> weights(pool.size());
      for (std::size_t i = 0; i < pool.size(); ++i) {
        weights[i] = std::max(engine_.reputation_of(pool[i]), 1e-6);
        total += weights[i];
      }
      std::uniform_real_distribution<double> u(0.0, total);
      double draw = u(rng_coalition_);
      std::size_t chosen = pool.size() - 1;
      for (std::size_t i = 0; i < pool.size(); ++i) {
        if (draw < weights[i]) {
          chosen = i;
          break;
        }
        draw -= weights[i];
      }
      picked.push_back(pool[chosen]);
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(chosen));
    }
    return picked;
  }

  void run_task(Epoch e, int task_index) {
    std::vector<AgentId> pool = eligible_for_coalition();
    if (pool.size() < 2) return;
    std::string task_id = "task-" + std::to_string(e) + "-" + std::to_string(task_index);
    std::uniform_int_distribution<std::size_t> type_dist(0, kTaskTypes.size() - 1);
    std::uniform_int_distribution<int> coin(0, 1);
    int truth = coin(rng_tasks_);

    std::vector<AgentId> members = sample_weighted(pool, static_cast<std::size_t>(
                                                             std::min<std::size_t>(
                                                                 pool.size(),
                                                                 static_cast<std::size_t>(
                                                                     cfg_.coalition_size))));
    const AgentId subject = members.front();  // highest-weight draw leads the task
    Agent& subj = agents_.at(subject);
    bool live = e >= static_cast<Epoch>(warmup_end_);  // policies act after warm-up

    std::string task_type = kTaskTypes[type_dist(rng_tasks_)];
    if (!live && subj.policy == PolicyKind::exaggerator) {
      task_type = kTaskTypes.front();  // stays within declared capability in warm-up
    }

    canonical::KvMap coalition;
    coalition["task"] = task_id;
    std::string member_csv;
    for (const AgentId& m : members) {
      if (!member_csv.empty()) member_csv += ",";
      member_csv += m;
    }
    coalition["members"] = member_csv;
    append_sim_record(ledger::RecordKind::coalition_event, coalition, e);

    // Everyone in the coalition answers; accuracy is the policy's only lever
    // during warm-up.
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::map<AgentId, int> answers;
    for (const AgentId& m : members) {
      const Agent& a = agents_.at(m);
      double acc = cfg_.policies.at(a.policy).answer_accuracy;
      if (!live && (a.policy == PolicyKind::saboteur)) {
        acc = cfg_.policies.at(PolicyKind::honest).answer_accuracy;
      }
      answers[m] = u(rng_tasks_) < acc ? truth : 1 - truth;
    }
    std::map<AgentId, double> reputations;
    for (const AgentId& m : members) reputations[m] = engine_.reputation_of(m);
    for (int m = 0; m < 3; ++m) {
      int decision = aggregate_answers(answers, reputations, kAggregationModes[m], rng_agg_,
                                       cfg_.k_clusters);
      run_.report.aggregation[m].total += 1;
      if (decision == truth) run_.report.aggregation[m].correct += 1;
    }

    // Subject executes the task and (if submitting) records it on-chain.
    bool success = answers.at(subject) == truth;
    ledger::Tick assigned = next_tick();
    ledger::Tick deadline = assigned + 10;
    std::uniform_int_distribution<ledger::Tick> on_time(2, 8), late(12, 16);
    ledger::Tick completion =
        assigned + ((live && subj.policy == PolicyKind::saboteur) ? late(rng_tasks_)
                                                                  : on_time(rng_tasks_));
    if (subj.will_submit && !suspended(subject)) {
      canonical::KvMap assign;
      assign["task"] = task_id;
      assign["task_type"] = task_type;
      submit(subj, e, ledger::RecordKind::task_assignment, assign);
      canonical::KvMap outcome;
      outcome["task"] = task_id;
      outcome["success"] = success ? "1" : "0";
      outcome["assigned_tick"] = std::to_string(assigned);
      outcome["deadline_tick"] = std::to_string(deadline);
      outcome["completion_tick"] = std::to_string(completion);
      submit(subj, e, ledger::RecordKind::cooperation_outcome, outcome);
    }

    // Peer report round on the subject's performance.
    double q_true = success ? 0.9 : 0.2;
    std::normal_distribution<double> noise(0.0, 0.03);
    std::map<AgentId, double> reports;
    for (const AgentId& m : members) {
      if (m == subject) continue;
      const Agent& a = agents_.at(m);
      double value = std::clamp(q_true + noise(rng_tasks_), 0.0, 1.0);
      if (live && a.policy == PolicyKind::colluder && a.partner && *a.partner == subject) {
        value = std::clamp(q_true + cfg_.policies.at(a.policy).report_bias, 0.0, 1.0);
      }
      reports[m] = value;
    }
    if (!reports.empty()) {
      reputation::ReportRound round = engine_.collect(task_id, subject, reports);
      engine_.apply_payoffs(round, contract_);
    }

    // Context-weighted task score feeds the subject's posterior.
    reputation::TaskFeatures feat;
    feat.completion = success ? 1.0 : 0.0;
    double latency = std::clamp(
        static_cast<double>(completion - assigned) / static_cast<double>(deadline - assigned),
        0.0, 1.0);
    feat.timeliness = 1.0 - latency;
    feat.resource_contribution = std::clamp(0.5 + noise(rng_tasks_) * 4.0, 0.0, 1.0);
    feat.peer_feedback = reports.empty() ? q_true : engine_.collect(task_id, subject, reports).consensus;
    engine_.update(subject, reputation::score_task(feat, reputation::ContextWeights{}));
  }

  // Scans the sealed records of `epoch` for rule evidence and routes it into
  // a dispute per offending agent.
  void watchdog_scan(Epoch epoch) {
    ledger::QueryFilter f;
    f.epoch_range = {epoch, epoch};
    std::map<AgentId, std::vector<crypto::Hash32>> r1, r2;
    for (const ledger::BehaviorRecord& r : run_.ledger.query(f)) {
      const arbitration::AgentAccount* acc = contract_.find_account(r.agent_id);
      if (acc == nullptr) continue;
      canonical::KvMap kv = r.payload_map();
      if (r.kind == ledger::RecordKind::task_assignment) {
        auto it = kv.find("task_type");
        if (it != kv.end() && acc->declared_capabilities.count(it->second) == 0) {
          r1[r.agent_id].push_back(r.record_id);
        }
      } else if (r.kind == ledger::RecordKind::cooperation_outcome) {
        auto ct = kv.find("completion_tick");
        auto dt = kv.find("deadline_tick");
        if (ct != kv.end() && dt != kv.end() &&
            canonical::parse_i64(ct->second) > canonical::parse_i64(dt->second)) {
          r2[r.agent_id].push_back(r.record_id);
        }
      }
    }
    std::set<AgentId> offenders;
    for (const auto& [id, ids] : r1) offenders.insert(id);
    for (const auto& [id, ids] : r2) offenders.insert(id);
    for (const AgentId& id : offenders) {
      std::vector<crypto::Hash32> evidence = r1[id];
      evidence.insert(evidence.end(), r2[id].begin(), r2[id].end());
      if (evidence.size() > 4) evidence.resize(4);
      arbitration::ClaimKind kind = !r1[id].empty()
                                        ? arbitration::ClaimKind::capability_violation
                                        : arbitration::ClaimKind::deadline_violation;
      const arbitration::Dispute& d = contract_.open_system_dispute(id, kind, evidence);
      contract_.evaluate_evidence(d.dispute_id);
      const arbitration::Resolution& res = contract_.resolve_dispute(d.dispute_id);
      EventRow row;
      row.epoch = contract_.current_epoch();
      row.type = "resolution";
      row.agent = id;
      row.tokens = -res.penalty_tokens;
      row.detail = "dispute=" + std::to_string(res.dispute_id) +
                   " suspension=" + std::to_string(res.suspension_epochs);
      run_.report.events.push_back(std::move(row));
    }
  }

  void record_epoch_events(const arbitration::EpochReport& rep) {
    for (const auto& [agent, tokens] : rep.slashes) {
      run_.report.events.push_back({rep.epoch, "slash", agent, -tokens, ""});
    }
    for (const AgentId& agent : rep.revocations) {
      run_.report.events.push_back({rep.epoch, "revocation", agent, 0, "restricted"});
    }
    run_.report.epoch_report_event_ids.push_back(rep.event_record_id);
  }

  void snapshot_reputations(Epoch e) {
    for (const auto& [id, acc] : contract_.accounts()) {
      const reputation::ReputationProfile& p = engine_.profile(id);
      run_.report.reputation_rows.push_back({e, id, p.alpha, p.beta, reputation::reputation(p)});
    }
  }

  void forecasting_phase(Epoch e) {
    const ForecastConfig& fc = cfg_.forecasting;
    std::size_t W = fc.window;
    if (e + 1 == static_cast<Epoch>(warmup_end_)) {
      std::vector<forecast::Matrix> training;
      for (const auto& [id, a] : agents_) {
        for (Epoch end = W - 1; end <= e; ++end) {
          if (auto traj = try_featurize(id, end)) training.push_back(std::move(traj->x));
        }
      }
      if (training.size() < 20) return;  // not enough honest windows to calibrate
      schedule_ = forecast::build_schedule(fc.schedule, fc.T, fc.beta_min, fc.beta_max);
      forecast::TrainConfig tc;
      tc.learning_rate = fc.learning_rate;
      tc.batch_size = fc.batch_size;
      tc.epochs = fc.train_epochs;
      tc.seed = crypto::derive_seed(cfg_.seed, 5);
      model_ = forecast::train_denoiser(training, *schedule_, tc).model;
      std::vector<double> scores;
      for (std::size_t i = 0; i < training.size(); ++i) {
        scores.push_back(forecast::anomaly_score(model_.value(), training[i], *schedule_,
                                                 fc.t_star, fc.K,
                                                 crypto::derive_seed(cfg_.seed, 600000 + i)));
      }
      calibration_ = forecast::calibrate_threshold(std::move(scores), fc.percentile);
      return;
    }
    if (!model_ || e < static_cast<Epoch>(warmup_end_)) return;
    std::map<AgentId, double> scores;
    std::size_t index = 0;
    for (const auto& [id, a] : agents_) {
      ++index;
      auto traj = try_featurize(id, e);
      if (!traj) continue;
      double score = forecast::anomaly_score(
          model_.value(), traj->x, *schedule_, fc.t_star, fc.K,
          crypto::derive_seed(cfg_.seed, 700000 + index * 10000 + e));
      scores[id] = score;
    }
    std::vector<forecast::Alert> alerts =
        forecast::forecast_and_enforce(scores, calibration_, e, contract_, run_.ledger);
    std::map<AgentId, const forecast::Alert*> alert_of;
    for (const forecast::Alert& a : alerts) alert_of[a.agent_id] = &a;
    for (const auto& [id, score] : scores) {
      DetectionRow row;
      row.agent = id;
      row.epoch = e;
      row.anomaly_score = score;
      row.deviation_probability = forecast::deviation_probability(calibration_, score);
      auto it = alert_of.find(id);
      row.action = it == alert_of.end() ? forecast::AlertAction::none : it->second->action;
      row.label = agents_.at(id).policy != PolicyKind::honest;
      run_.report.detection_rows.push_back(row);
      if (row.action != forecast::AlertAction::none) {
        run_.report.events.push_back({e, "alert", id, 0,
                                      std::string(forecast::to_string(row.action))});
      }
    }
    // Escalations opened by the alert pipeline get judged immediately.
    std::vector<std::uint64_t> open_ids;
    for (const auto& [id, d] : contract_.disputes()) {
      if (d.status == arbitration::DisputeStatus::open) open_ids.push_back(id);
    }
    for (std::uint64_t id : open_ids) {
      contract_.evaluate_evidence(id);
      contract_.resolve_dispute(id);
    }
  }

  std::optional<forecast::BehaviorTrajectory> try_featurize(const AgentId& id, Epoch end) {
    try {
      return forecast::featurize(run_.ledger, id, cfg_.forecasting.window, end,
                                 cfg_.forecasting.features);
    } catch (const Error& err) {
      if (err.code() == Errc::empty_window) return std::nullopt;
      throw;
    }
  }

  void finalize() {
    SimulationReport& rep = run_.report;
    std::set<AgentEpoch> alerted;
    std::map<AgentEpoch, bool> labels;
    for (const DetectionRow& row : rep.detection_rows) {
      labels[{row.agent, row.epoch}] = row.label;
      if (row.action != forecast::AlertAction::none) alerted.insert({row.agent, row.epoch});
    }
    rep.detection = evaluate_detection(alerted, labels);
    rep.audit = contract_.audit();
    for (const auto& [id, acc] : contract_.accounts()) {
      rep.final_stakes[id] = acc.stake;
      rep.final_reputations[id] = engine_.reputation_of(id);
    }
    rep.n_disputes = contract_.disputes().size();
    rep.n_resolutions = contract_.resolutions().size();
    for (const auto& [id, res] : contract_.resolutions()) {
      rep.resolution_event_ids.push_back(res.event_record_id);
    }
    std::sort(rep.events.begin(), rep.events.end(), [](const EventRow& a, const EventRow& b) {
      return std::tie(a.epoch, a.type, a.agent) < std::tie(b.epoch, b.type, b.agent);
    });
  }

  void submit(const Agent& a, Epoch e, ledger::RecordKind kind, const canonical::KvMap& kv) {
    ledger::BehaviorRecord rec = ledger::make_record(a.id, e, kind, kv, next_tick(), a.keys);
    contract_.submit_behavior(a.id, e, rec);
  }

  void append_sim_record(ledger::RecordKind kind, const canonical::KvMap& kv, Epoch e) {
    ledger::BehaviorRecord rec = ledger::make_record(kSimId, e, kind, kv, next_tick(), sim_keys_);
    run_.ledger.append_record(rec);
  }

  ledger::Tick next_tick() { return tick_++; }

  static inline const std::vector<std::string> kTaskTypes = {"navigation", "vision",
                                                             "manipulation", "planning"};

  ScenarioConfig cfg_;
  SimulationRun run_;
  arbitration::ArbitrationContract contract_;
  reputation::ReputationEngine engine_;
  crypto::KeyPair sim_keys_;
  std::map<AgentId, Agent> agents_;
  std::mt19937_64 rng_tasks_, rng_policy_, rng_coalition_, rng_agg_;
  int warmup_end_ = 0;
  ledger::Tick tick_ = 1;
  std::optional<forecast::NoiseSchedule> schedule_;
  std::optional<forecast::DenoiserModel> model_;
  forecast::ThresholdCalibration calibration_;
};

}  // namespace detail

inline SimulationRun run_scenario(const ScenarioConfig& config) {
  detail::Scenario scenario(config);
  return scenario.run();
}

// --- report serialization ---

inline void write_report(const SimulationRun& run, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream os(dir / name, std::ios::binary);
    if (!os) fail(Errc::io_error, std::string("cannot write ") + name);
    return os;
  };
  {
    std::ofstream os = open("reputations.csv");
    os << "epoch,agent_id,alpha,beta,reputation\n";
    for (const ReputationRow& r : run.report.reputation_rows) {
      os << r.epoch << "," << r.agent << "," << canonical::format_double(r.alpha) << ","
         << canonical::format_double(r.beta) << "," << canonical::format_double(r.reputation)
         << "\n";
    }
  }
  {
    std::ofstream os = open("events.csv");
    os << "epoch,type,agent,tokens,detail\n";
    for (const EventRow& r : run.report.events) {
      os << r.epoch << "," << r.type << "," << r.agent << "," << r.tokens << "," << r.detail
         << "\n";
    }
  }
  {
    std::ofstream os = open("detection.csv");
    os << "agent_id,epoch,anomaly_score,deviation_probability,action,label\n";
    for (const DetectionRow& r : run.report.detection_rows) {
      os << r.agent << "," << r.epoch << "," << canonical::format_double(r.anomaly_score) << ","
         << canonical::format_double(r.deviation_probability) << ","
         << forecast::to_string(r.action) << "," << (r.label ? 1 : 0) << "\n";
    }
  }
  {
    std::ofstream os = open("aggregation.csv");
    os << "mode,correct,total,accuracy\n";
    for (const AggregationStat& s : run.report.aggregation) {
      os << to_string(s.mode) << "," << s.correct << "," << s.total << ","
         << canonical::format_double(s.accuracy()) << "\n";
    }
  }
  {
    nlohmann::ordered_json j;
    j["seed"] = run.config.seed;
    j["n_agents"] = run.config.n_agents;
    j["n_epochs"] = run.config.n_epochs;
    j["tasks_per_epoch"] = run.config.tasks_per_epoch;
    j["warmup_epochs"] = run.report.warmup_epochs;
    j["aggregation_mode"] = std::string(to_string(run.config.aggregation_mode));
    nlohmann::ordered_json det;
    det["tp"] = run.report.detection.tp;
    det["fp"] = run.report.detection.fp;
    det["fn"] = run.report.detection.fn;
    det["tn"] = run.report.detection.tn;
    det["precision"] = run.report.detection.precision;
    det["recall"] = run.report.detection.recall;
    det["f1"] = run.report.detection.f1;
    j["detection"] = std::move(det);
    nlohmann::ordered_json agg;
    for (const AggregationStat& s : run.report.aggregation) {
      agg[std::string(to_string(s.mode))] = s.accuracy();
    }
    j["aggregation_accuracy"] = std::move(agg);
    nlohmann::ordered_json audit;
    audit["deposits"] = run.report.audit.deposits;
    audit["minted"] = run.report.audit.minted;
    audit["stakes_sum"] = run.report.audit.stakes_sum;
    audit["sink"] = run.report.audit.sink;
    audit["balanced"] = run.report.audit.balanced;
    j["token_audit"] = std::move(audit);
    nlohmann::ordered_json counts;
    counts["records"] = run.ledger.record_count();
    counts["blocks"] = run.ledger.blocks().size();
    counts["disputes"] = run.report.n_disputes;
    counts["resolutions"] = run.report.n_resolutions;
    j["counts"] = std::move(counts);
    nlohmann::ordered_json agents = nlohmann::ordered_json::object();
    for (const auto& [id, policy] : run.report.policy_of) {
      nlohmann::ordered_json a;
      a["policy"] = std::string(to_string(policy));
      a["final_stake"] = run.report.final_stakes.at(id);
      a["final_reputation"] = run.report.final_reputations.at(id);
      agents[id] = std::move(a);
    }
    j["agents"] = std::move(agents);
    std::ofstream os = open("summary.json");
    os << j.dump(2) << "\n";
  }
  {
    std::ofstream os = open("ledger.jsonl");
    run.ledger.export_records(os);
  }
  {
    std::ofstream os = open("blocks.json");
    run.ledger.export_blocks(os);
  }
}

}  // namespace regulus::sim
