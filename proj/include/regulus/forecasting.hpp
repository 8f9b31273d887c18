#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "regulus/arbitration.hpp"
#include "regulus/canonical.hpp"
#include "regulus/denoiser.hpp"
#include "regulus/errors.hpp"
#include "regulus/ledger.hpp"
#include "regulus/matrix.hpp"
#include "regulus/schedule.hpp"

// Behavior featurization from ledger state, anomaly-score calibration, and
// the alert pipeline that turns deviation probabilities into contract
// countermeasures.

namespace regulus::forecast {

using ledger::AgentId;
using ledger::Epoch;

inline constexpr std::size_t kFeatureDim = 6;

inline constexpr std::string_view kFeatureNames[kFeatureDim] = {
    "task_completion_rate",          "mean_response_latency_normalized",
    "interaction_frequency_normalized", "stake_delta_normalized",
    "report_deviation",              "coalition_co_occurrence",
};

struct BehaviorTrajectory {
  AgentId agent_id;
  Epoch window_start_epoch = 0;
  Matrix x;  // W rows (epochs) by 6 feature columns
};

struct FeatureParams {
  double ema = 0.8;               // persistence of the smoothed channels
  double interaction_norm = 10.0;  // records per epoch that saturate channel 2
  double stake_scale = 20.0;       // token delta that saturates channel 3
};

namespace detail {

inline double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// Latency of one cooperation outcome as a fraction of its allowed time.
inline std::optional<double> outcome_latency(const canonical::KvMap& kv) {
  auto a = kv.find("assigned_tick");
  auto d = kv.find("deadline_tick");
  auto c = kv.find("completion_tick");
  if (a == kv.end() || d == kv.end() || c == kv.end()) return std::nullopt;
  double assigned = static_cast<double>(canonical::parse_i64(a->second));
  double deadline = static_cast<double>(canonical::parse_i64(d->second));
  double completion = static_cast<double>(canonical::parse_i64(c->second));
  if (deadline <= assigned) return std::nullopt;
  return clamp01((completion - assigned) / (deadline - assigned));
}

inline std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    std::size_t comma = s.find(',', pos);
    if (comma == std::string::npos) comma = s.size();
    if (comma > pos) out.push_back(s.substr(pos, comma - pos));
    pos = comma + 1;
  }
  return out;
}

}  // namespace detail

// Builds the (W x 6) trajectory for `agent` over epochs [e-W+1, e] from
// sealed ledger state only. Epochs where the agent wrote nothing become
// all-zero rows; a window with no agent records at all is an error.
inline BehaviorTrajectory featurize(const ledger::Ledger& led, const AgentId& agent,
                                    std::size_t W, Epoch e, const FeatureParams& params = {}) {
  if (!led.has_key(agent)) fail(Errc::unknown_agent, "no registered key for " + agent);
  if (W < 1 || e + 1 < W) fail(Errc::invalid_range, "window does not fit before epoch");
  Epoch start = e + 1 - W;
  ledger::QueryFilter filter;
  filter.epoch_range = {start, e};
  std::vector<ledger::BehaviorRecord> records = led.query(filter);

  struct EpochBucket {
    std::size_t own_count = 0;
    double completion_sum = 0.0, latency_sum = 0.0;
    std::size_t outcome_count = 0;
    std::int64_t stake_delta = 0;
    double report_dev_sum = 0.0;
    std::size_t report_count = 0;
  };
  std::vector<EpochBucket> buckets(W);
  std::vector<std::set<AgentId>> coalitions;  // co-members across the window

  const std::string delta_key = "delta_" + agent;
  const std::string report_key = "r_" + agent;
  for (const auto& r : records) {
    EpochBucket& b = buckets[r.epoch - start];
    canonical::KvMap kv = r.payload_map();
    if (r.agent_id == agent) {
      b.own_count += 1;
      if (r.kind == ledger::RecordKind::cooperation_outcome) {
        auto s = kv.find("success");
        b.completion_sum += (s != kv.end() && s->second == "1") ? 1.0 : 0.0;
        if (auto lat = detail::outcome_latency(kv)) b.latency_sum += *lat;
        b.outcome_count += 1;
      }
    }
    if (r.kind == ledger::RecordKind::coalition_event) {
      auto m = kv.find("members");
      if (m != kv.end()) {
        std::vector<std::string> members = detail::split_csv(m->second);
        if (std::find(members.begin(), members.end(), agent) != members.end()) {
          std::set<AgentId> others(members.begin(), members.end());
          others.erase(agent);
          coalitions.push_back(std::move(others));
        }
      }
    }
    if (r.kind == ledger::RecordKind::report) {
      auto d = kv.find(delta_key);
      if (d != kv.end()) b.stake_delta += canonical::parse_i64(d->second);
      auto ev = kv.find("event");
      if (ev != kv.end() && ev->second == "report_round") {
        auto own = kv.find(report_key);
        auto cons = kv.find("consensus");
        if (own != kv.end() && cons != kv.end()) {
          b.report_dev_sum += std::abs(canonical::parse_double(own->second) -
                                       canonical::parse_double(cons->second));
          b.report_count += 1;
        }
      }
    }
  }

  bool any_own = false;
  for (const auto& b : buckets) any_own |= b.own_count > 0;
  if (!any_own) fail(Errc::empty_window, agent + " wrote no records in the window");

  // Modal-partner co-occurrence: the fraction of the agent's coalitions this
  // window that include its most frequent partner.
  double co_occurrence = 0.0;
  if (!coalitions.empty()) {
    std::map<AgentId, std::size_t> partner_counts;
    for (const auto& c : coalitions) {
      for (const auto& p : c) partner_counts[p] += 1;
    }
    std::size_t best = 0;
    for (const auto& [p, n] : partner_counts) best = std::max(best, n);
    co_occurrence = static_cast<double>(best) / static_cast<double>(coalitions.size());
  }

  BehaviorTrajectory traj;
  traj.agent_id = agent;
  traj.window_start_epoch = start;
  traj.x = Matrix(W, kFeatureDim);
  double ema_completion = 0.0, ema_latency = 0.0;
  for (std::size_t i = 0; i < W; ++i) {
    const EpochBucket& b = buckets[i];
    double raw_completion =
        b.outcome_count > 0 ? b.completion_sum / static_cast<double>(b.outcome_count) : 0.0;
    double raw_latency =
        b.outcome_count > 0 ? b.latency_sum / static_cast<double>(b.outcome_count) : 0.0;
    if (i == 0) {
      ema_completion = raw_completion;
      ema_latency = raw_latency;
    } else {
      ema_completion = params.ema * ema_completion + (1.0 - params.ema) * raw_completion;
      ema_latency = params.ema * ema_latency + (1.0 - params.ema) * raw_latency;
    }
    if (b.own_count == 0) continue;  // silent epochs stay all-zero
    traj.x.at(i, 0) = ema_completion;
    traj.x.at(i, 1) = ema_latency;
    traj.x.at(i, 2) = std::min(1.0, static_cast<double>(b.own_count) / params.interaction_norm);
    traj.x.at(i, 3) = detail::clamp01(
        0.5 + static_cast<double>(b.stake_delta) / (2.0 * params.stake_scale));
    traj.x.at(i, 4) =
        b.report_count > 0 ? b.report_dev_sum / static_cast<double>(b.report_count) : 0.0;
    traj.x.at(i, 5) = co_occurrence;
  }
  return traj;
}

// --- threshold calibration ---

struct ThresholdCalibration {
  std::vector<double> honest_scores;  // sorted ascending
  double percentile = 95.0;
  double threshold = 0.0;

  bool calibrated() const { return !honest_scores.empty(); }
};

inline ThresholdCalibration calibrate_threshold(std::vector<double> honest_scores,
                                                double percentile = 95.0) {
  if (honest_scores.size() < 20) {
    fail(Errc::insufficient_calibration_data,
         "need at least 20 scores, got " + std::to_string(honest_scores.size()));
  }
  if (!(percentile > 0.0 && percentile <= 100.0)) {
    fail(Errc::invalid_range, "percentile outside (0, 100]");
  }
  std::sort(honest_scores.begin(), honest_scores.end());
  ThresholdCalibration cal;
  cal.percentile = percentile;
  // Nearest-rank order statistic: the ceil(p/100 * n)-th smallest.
  std::size_t n = honest_scores.size();
  auto rank = static_cast<std::size_t>(
      std::ceil(percentile / 100.0 * static_cast<double>(n)));
  rank = std::clamp<std::size_t>(rank, 1, n);
  cal.threshold = honest_scores[rank - 1];
  cal.honest_scores = std::move(honest_scores);
  return cal;
}

// Empirical CDF position of a score among the honest calibration scores.
inline double deviation_probability(const ThresholdCalibration& cal, double score) {
  if (!cal.calibrated()) fail(Errc::not_calibrated, "no calibration scores");
  auto it = std::upper_bound(cal.honest_scores.begin(), cal.honest_scores.end(), score);
  return static_cast<double>(it - cal.honest_scores.begin()) /
         static_cast<double>(cal.honest_scores.size());
}

// --- alerts ---

enum class AlertAction { none, raise_alert, restrict_participation, escalate_to_arbitration };

inline std::string_view to_string(AlertAction a) {
  switch (a) {
    case AlertAction::none: return "none";
    case AlertAction::raise_alert: return "raise_alert";
    case AlertAction::restrict_participation: return "restrict_participation";
    case AlertAction::escalate_to_arbitration: return "escalate_to_arbitration";
  }
  return "unknown";
}

struct Alert {
  AgentId agent_id;
  Epoch epoch = 0;
  double anomaly_score = 0.0;
  double deviation_probability = 0.0;
  AlertAction action = AlertAction::none;
};

inline AlertAction classify_deviation(double p) {
  if (p >= 0.999) return AlertAction::escalate_to_arbitration;
  if (p >= 0.99) return AlertAction::restrict_participation;
  if (p >= 0.95) return AlertAction::raise_alert;
  return AlertAction::none;
}

// Pure banding: one Alert per agent whose deviation probability clears the
// lowest cutpoint.
inline std::vector<Alert> forecast_alerts(const std::map<AgentId, double>& scores,
                                          const ThresholdCalibration& cal, Epoch epoch) {
  if (!cal.calibrated()) fail(Errc::not_calibrated, "no calibration scores");
  std::vector<Alert> alerts;
  for (const auto& [agent, score] : scores) {
    double p = deviation_probability(cal, score);
    AlertAction action = classify_deviation(p);
    if (action == AlertAction::none) continue;
    alerts.push_back({agent, epoch, score, p, action});
  }
  return alerts;
}

// Alert pipeline with contract wiring: records every alert on the ledger,
// restricts or escalates as the band demands. Escalations open a system
// dispute citing the agent's most recent sealed records as evidence.
inline std::vector<Alert> forecast_and_enforce(const std::map<AgentId, double>& scores,
                                               const ThresholdCalibration& cal, Epoch epoch,
                                               arbitration::ArbitrationContract& contract,
                                               const ledger::Ledger& led) {
  std::vector<Alert> alerts = forecast_alerts(scores, cal, epoch);
  for (const Alert& a : alerts) {
    contract.record_alert(a.agent_id, a.epoch, a.anomaly_score, a.deviation_probability,
                          to_string(a.action));
    if (a.action == AlertAction::restrict_participation) {
      contract.restrict_agent(a.agent_id);
    } else if (a.action == AlertAction::escalate_to_arbitration) {
      ledger::QueryFilter f;
      f.agent_id = a.agent_id;
      std::vector<ledger::BehaviorRecord> own = led.query(f);
      std::vector<ledger::Hash32> evidence;
      for (std::size_t i = own.size() > 3 ? own.size() - 3 : 0; i < own.size(); ++i) {
        evidence.push_back(own[i].record_id);
      }
      contract.open_system_dispute(a.agent_id, arbitration::ClaimKind::contradiction,
                                   std::move(evidence));
    }
  }
  return alerts;
}

// --- per-feature z-score baseline ---

class ZScoreBaseline {
 public:
  void fit(const std::vector<Matrix>& dataset) {
    if (dataset.empty()) fail(Errc::empty_dataset, "no trajectories to fit");
    std::size_t d = dataset.front().cols;
    mean_.assign(d, 0.0);
    std_.assign(d, 0.0);
    std::size_t n = 0;
    for (const Matrix& m : dataset) {
      if (m.cols != d) fail(Errc::inconsistent_shapes, "trajectories have mixed widths");
      for (std::size_t r = 0; r < m.rows; ++r) {
        for (std::size_t c = 0; c < d; ++c) mean_[c] += m.at(r, c);
      }
      n += m.rows;
    }
    for (double& v : mean_) v /= static_cast<double>(n);
    for (const Matrix& m : dataset) {
      for (std::size_t r = 0; r < m.rows; ++r) {
        for (std::size_t c = 0; c < d; ++c) {
          double diff = m.at(r, c) - mean_[c];
          std_[c] += diff * diff;
        }
      }
    }
    for (double& v : std_) v = std::max(std::sqrt(v / static_cast<double>(n)), 1e-9);
  }

  double score(const Matrix& m) const {
    if (mean_.empty()) fail(Errc::not_calibrated, "baseline has not been fit");
    if (m.cols != mean_.size()) fail(Errc::shape_mismatch, "width differs from fit data");
    double sum = 0.0;
    for (std::size_t r = 0; r < m.rows; ++r) {
      for (std::size_t c = 0; c < m.cols; ++c) {
        double z = (m.at(r, c) - mean_[c]) / std_[c];
        sum += z * z;
      }
    }
    return sum / static_cast<double>(m.size());
  }

 private:
  std::vector<double> mean_, std_;
};

}  // namespace regulus::forecast
