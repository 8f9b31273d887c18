#pragma once

#include <algorithm>
#include <cmath>
#include <string_view>
#include <vector>

#include "regulus/errors.hpp"
#include "regulus/matrix.hpp"

// Forward-process noise schedules. Steps are 1-based: betas[t-1] is the noise
// added at step t, alpha_bars[t-1] the surviving signal fraction after t steps.

namespace regulus::forecast {

enum class ScheduleKind { linear, cosine };

inline std::string_view to_string(ScheduleKind k) {
  return k == ScheduleKind::linear ? "linear" : "cosine";
}

struct NoiseSchedule {
  ScheduleKind kind = ScheduleKind::linear;
  int T = 0;
  std::vector<double> betas;
  std::vector<double> alphas;
  std::vector<double> alpha_bars;

  double beta(int t) const { return betas[static_cast<std::size_t>(t - 1)]; }
  double alpha(int t) const { return alphas[static_cast<std::size_t>(t - 1)]; }
  // alpha_bar(0) == 1 by convention (no noise applied yet).
  double alpha_bar(int t) const {
    return t == 0 ? 1.0 : alpha_bars[static_cast<std::size_t>(t - 1)];
  }
};

inline NoiseSchedule build_schedule(ScheduleKind kind, int T, double beta_min = 1e-4,
                                    double beta_max = 0.02) {
  if (T < 1) fail(Errc::invalid_range, "T must be at least 1");
  if (!(beta_min > 0.0) || beta_min > beta_max || !(beta_max < 1.0)) {
    fail(Errc::invalid_range, "need 0 < beta_min <= beta_max < 1");
  }
  NoiseSchedule s;
  s.kind = kind;
  s.T = T;
  s.betas.resize(static_cast<std::size_t>(T));
  if (kind == ScheduleKind::linear) {
    for (int t = 0; t < T; ++t) {
      s.betas[static_cast<std::size_t>(t)] =
          T == 1 ? beta_min : beta_min + (beta_max - beta_min) * t / (T - 1);
    }
  } else {
    // Squared-cosine signal profile with offset s = 0.008; betas are the
    // per-step decay of that profile, clipped into [beta_min, 0.999].
    const double offset = 0.008;
    auto profile = [&](double t) {
      double v = std::cos((t / T + offset) / (1.0 + offset) * M_PI / 2.0);
      return v * v;
    };
    double prev = 1.0;  // profile(0)/profile(0)
    for (int t = 1; t <= T; ++t) {
      double cur = profile(static_cast<double>(t)) / profile(0.0);
      double beta = 1.0 - cur / prev;
      s.betas[static_cast<std::size_t>(t - 1)] = std::clamp(beta, beta_min, 0.999);
      prev = cur;
    }
  }
  s.alphas.resize(s.betas.size());
  s.alpha_bars.resize(s.betas.size());
  double bar = 1.0;
  for (std::size_t i = 0; i < s.betas.size(); ++i) {
    s.alphas[i] = 1.0 - s.betas[i];
    bar *= s.alphas[i];
    s.alpha_bars[i] = bar;
  }
  return s;
}

// Closed-form single-shot noising: x_t = sqrt(abar_t) x0 + sqrt(1-abar_t) eps.
inline Matrix forward_diffuse(const Matrix& x0, int t, const Matrix& epsilon,
                              const NoiseSchedule& schedule) {
  if (!x0.same_shape(epsilon)) fail(Errc::shape_mismatch, "noise shape differs from input");
  if (t < 1 || t > schedule.T) {
    fail(Errc::step_out_of_range, "t = " + std::to_string(t) + " outside [1, " +
                                      std::to_string(schedule.T) + "]");
  }
  double abar = schedule.alpha_bar(t);
  double signal = std::sqrt(abar);
  double noise = std::sqrt(1.0 - abar);
  Matrix out(x0.rows, x0.cols);
  for (std::size_t i = 0; i < x0.data.size(); ++i) {
    out.data[i] = signal * x0.data[i] + noise * epsilon.data[i];
  }
  return out;
}

}  // namespace regulus::forecast
