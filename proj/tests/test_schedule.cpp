#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "regulus/schedule.hpp"

#include "support.hpp"

using namespace regulus;
using forecast::Matrix;
using forecast::NoiseSchedule;
using forecast::ScheduleKind;

TEST_CASE("linear schedule interpolates betas between the endpoints") {
  NoiseSchedule s = forecast::build_schedule(ScheduleKind::linear, 4);
  REQUIRE(s.T == 4);
  REQUIRE(s.betas.size() == 4);
  CHECK(s.beta(1) == Catch::Approx(0.0001).margin(1e-15));
  CHECK(s.beta(2) == Catch::Approx(0.006733333333333334).margin(1e-15));
  CHECK(s.beta(3) == Catch::Approx(0.013366666666666667).margin(1e-15));
  CHECK(s.beta(4) == Catch::Approx(0.02).margin(1e-15));
  for (int t = 1; t <= 4; ++t) CHECK(s.alpha(t) == Catch::Approx(1.0 - s.beta(t)).margin(1e-15));
  CHECK(s.alpha_bar(0) == 1.0);
  CHECK(s.alpha_bar(4) == Catch::Approx(0.96029416315756).epsilon(1e-12));

  NoiseSchedule one = forecast::build_schedule(ScheduleKind::linear, 1);
  CHECK(one.beta(1) == Catch::Approx(0.0001).margin(1e-15));
}

TEST_CASE("terminal signal fractions match closed-form references") {
  // Values computed independently from the squared-cosine profile with
  // offset 0.008 and the linear ramp 1e-4..0.02.
  CHECK(forecast::build_schedule(ScheduleKind::cosine, 100).alpha_bar(100) ==
        Catch::Approx(2.4285722793500615e-07).epsilon(1e-9));
  CHECK(forecast::build_schedule(ScheduleKind::cosine, 1000).alpha_bar(1000) ==
        Catch::Approx(2.4278335309345942e-09).epsilon(1e-9));
  CHECK(forecast::build_schedule(ScheduleKind::linear, 1000).alpha_bar(1000) ==
        Catch::Approx(4.0358297653756754e-05).epsilon(1e-9));
}

TEST_CASE("signal fraction decreases strictly and betas stay clipped") {
  for (ScheduleKind kind : {ScheduleKind::linear, ScheduleKind::cosine}) {
    for (int T : {4, 100, 1000}) {
      NoiseSchedule s = forecast::build_schedule(kind, T);
      double prev = 1.0;
      for (int t = 1; t <= T; ++t) {
        CHECK(s.alpha_bar(t) < prev);
        CHECK(s.alpha_bar(t) > 0.0);
        CHECK(s.beta(t) > 0.0);
        CHECK(s.beta(t) <= 0.999);
        prev = s.alpha_bar(t);
      }
    }
  }
}

TEST_CASE("schedule construction rejects bad parameters") {
  CHECK_THROWS_MATCHES(forecast::build_schedule(ScheduleKind::linear, 0), Error,
                       ErrorMatcher(Errc::invalid_range));
  CHECK_THROWS_MATCHES(forecast::build_schedule(ScheduleKind::linear, -3), Error,
                       ErrorMatcher(Errc::invalid_range));
  CHECK_THROWS_MATCHES(forecast::build_schedule(ScheduleKind::linear, 10, 0.0, 0.02), Error,
                       ErrorMatcher(Errc::invalid_range));
  CHECK_THROWS_MATCHES(forecast::build_schedule(ScheduleKind::linear, 10, 0.05, 0.02), Error,
                       ErrorMatcher(Errc::invalid_range));
  CHECK_THROWS_MATCHES(forecast::build_schedule(ScheduleKind::linear, 10, 1e-4, 1.0), Error,
                       ErrorMatcher(Errc::invalid_range));
}

TEST_CASE("single-shot noising matches the closed form elementwise") {
  NoiseSchedule s = forecast::build_schedule(ScheduleKind::linear, 10);
  Matrix x0(2, 3);
  Matrix eps(2, 3);
  for (std::size_t i = 0; i < x0.data.size(); ++i) {
    x0.data[i] = 0.5 * static_cast<double>(i) - 1.0;
    eps.data[i] = 0.25 * static_cast<double>(i);
  }
  int t = 7;
  Matrix xt = forecast::forward_diffuse(x0, t, eps, s);
  double abar = s.alpha_bar(t);
  for (std::size_t i = 0; i < x0.data.size(); ++i) {
    CHECK(xt.data[i] == Catch::Approx(std::sqrt(abar) * x0.data[i] +
                                      std::sqrt(1.0 - abar) * eps.data[i])
                            .margin(1e-12));
  }
}

TEST_CASE("noised samples have the predicted mean and variance") {
  NoiseSchedule s = forecast::build_schedule(ScheduleKind::cosine, 100);
  const int t = 50;
  const double c = 1.7;
  const double abar = s.alpha_bar(t);
  std::mt19937_64 rng(1234);
  const int n = 10000;
  Matrix x0(1, 1);
  x0.at(0, 0) = c;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    Matrix eps = forecast::gaussian_matrix(1, 1, rng);
    double v = forecast::forward_diffuse(x0, t, eps, s).at(0, 0);
    sum += v;
    sum_sq += v * v;
  }
  double mean = sum / n;
  double var = sum_sq / n - mean * mean;
  CHECK(mean == Catch::Approx(std::sqrt(abar) * c).epsilon(0.10));
  CHECK(var == Catch::Approx(1.0 - abar).epsilon(0.10));
}

TEST_CASE("noising validates step index and shapes") {
  NoiseSchedule s = forecast::build_schedule(ScheduleKind::linear, 5);
  Matrix x(2, 2), eps(2, 2), wrong(2, 3);
  CHECK_THROWS_MATCHES(forecast::forward_diffuse(x, 0, eps, s), Error,
                       ErrorMatcher(Errc::step_out_of_range));
  CHECK_THROWS_MATCHES(forecast::forward_diffuse(x, 6, eps, s), Error,
                       ErrorMatcher(Errc::step_out_of_range));
  CHECK_THROWS_MATCHES(forecast::forward_diffuse(x, 3, wrong, s), Error,
                       ErrorMatcher(Errc::shape_mismatch));
  CHECK_NOTHROW(forecast::forward_diffuse(x, 5, eps, s));
}
