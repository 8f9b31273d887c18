#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "regulus/denoiser.hpp"

#include "support.hpp"

using namespace regulus;
using forecast::DenoiserModel;
using forecast::Matrix;
using forecast::NoiseSchedule;
using forecast::ScheduleKind;
using forecast::TrainConfig;

namespace {

Matrix constant_trajectory(std::size_t W, std::size_t d, double value) {
  Matrix m(W, d);
  for (double& v : m.data) v = value;
  return m;
}

// Learnable toy case: many copies of one constant trajectory. The dataset is
// large enough that per-epoch loss estimates (fresh noise each pass) do not
// drown the true downward trend.
forecast::TrainResult train_toy(std::uint64_t seed, std::size_t epochs = 10) {
  NoiseSchedule schedule = forecast::build_schedule(ScheduleKind::linear, 100);
  std::vector<Matrix> dataset(512, constant_trajectory(8, 2, 0.5));
  TrainConfig config;
  config.learning_rate = 1e-2;
  config.epochs = epochs;
  config.seed = seed;
  return forecast::train_denoiser(dataset, schedule, config);
}

}  // namespace

TEST_CASE("time embeddings are sinusoid pairs over a frequency ladder") {
  double out[forecast::kTimeEmbedDim];
  forecast::embed_time(7, out);
  for (std::size_t k = 0; k < forecast::kTimeEmbedDim / 2; ++k) {
    double freq = std::pow(10000.0, -static_cast<double>(k) / 16.0);
    CHECK(out[2 * k] == Catch::Approx(std::sin(7 * freq)).margin(1e-15));
    CHECK(out[2 * k + 1] == Catch::Approx(std::cos(7 * freq)).margin(1e-15));
  }
  forecast::embed_time(0, out);
  for (std::size_t k = 0; k < forecast::kTimeEmbedDim / 2; ++k) {
    CHECK(out[2 * k] == 0.0);
    CHECK(out[2 * k + 1] == 1.0);
  }
}

TEST_CASE("the model predicts noise with the trajectory's shape") {
  DenoiserModel model(4, 3, 42);
  CHECK(model.window() == 4);
  CHECK(model.feature_dim() == 3);
  Matrix x = constant_trajectory(4, 3, 0.2);
  Matrix eps_hat = model.predict(x, 1);
  CHECK(eps_hat.rows == 4);
  CHECK(eps_hat.cols == 3);
  for (double v : eps_hat.data) CHECK(std::isfinite(v));

  // Same seed, same weights, same output; different seeds differ.
  DenoiserModel twin(4, 3, 42);
  CHECK(model == twin);
  CHECK(model.predict(x, 5).data == twin.predict(x, 5).data);
  DenoiserModel other(4, 3, 43);
  CHECK_FALSE(model == other);

  Matrix wrong = constant_trajectory(3, 4, 0.2);
  CHECK_THROWS_MATCHES(model.predict(wrong, 1), Error, ErrorMatcher(Errc::shape_mismatch));
}

TEST_CASE("checkpoints survive a save and load round trip bitwise") {
  DenoiserModel model(6, 2, 7);
  std::stringstream buf;
  model.save(buf);
  DenoiserModel back = DenoiserModel::load(buf);
  CHECK(model == back);
  Matrix x = constant_trajectory(6, 2, -0.3);
  CHECK(model.predict(x, 9).data == back.predict(x, 9).data);

  // Serialized form itself is stable.
  std::stringstream again;
  back.save(again);
  CHECK(buf.str() == again.str());
}

TEST_CASE("checkpoint loading rejects malformed streams") {
  {
    std::stringstream bad("JUNKJUNKJUNK");
    CHECK_THROWS_MATCHES(DenoiserModel::load(bad), Error, ErrorMatcher(Errc::parse_error));
  }
  {
    DenoiserModel model(4, 2, 1);
    std::stringstream buf;
    model.save(buf);
    std::string bytes = buf.str();
    std::stringstream truncated(bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_MATCHES(DenoiserModel::load(truncated), Error,
                         ErrorMatcher(Errc::parse_error));
  }
  {
    DenoiserModel model(4, 2, 1);
    std::stringstream buf;
    model.save(buf);
    std::string bytes = buf.str();
    bytes[4] = 9;  // version field
    std::stringstream versioned(bytes);
    CHECK_THROWS_MATCHES(DenoiserModel::load(versioned), Error,
                         ErrorMatcher(Errc::parse_error));
  }
  {
    std::stringstream empty;
    CHECK_THROWS_MATCHES(DenoiserModel::load(empty), Error, ErrorMatcher(Errc::parse_error));
  }
}

TEST_CASE("training on a constant dataset drives the loss down monotonically") {
  forecast::TrainResult result = train_toy(0);
  REQUIRE(result.loss_curve.size() == 10);
  for (std::size_t i = 1; i < result.loss_curve.size(); ++i) {
    CHECK(result.loss_curve[i] < result.loss_curve[i - 1]);
  }
  for (double loss : result.loss_curve) CHECK(std::isfinite(loss));
}

TEST_CASE("training is bitwise reproducible for a fixed seed") {
  forecast::TrainResult a = train_toy(12, 4);
  forecast::TrainResult b = train_toy(12, 4);
  CHECK(a.loss_curve == b.loss_curve);
  CHECK(a.model == b.model);
  std::stringstream sa, sb;
  a.model.save(sa);
  b.model.save(sb);
  CHECK(sa.str() == sb.str());

  forecast::TrainResult c = train_toy(13, 4);
  CHECK(a.loss_curve != c.loss_curve);
}

TEST_CASE("training validates its dataset") {
  NoiseSchedule schedule = forecast::build_schedule(ScheduleKind::linear, 10);
  TrainConfig config;
  CHECK_THROWS_MATCHES(forecast::train_denoiser({}, schedule, config), Error,
                       ErrorMatcher(Errc::empty_dataset));
  std::vector<Matrix> mixed{constant_trajectory(4, 2, 0.0), constant_trajectory(4, 3, 0.0)};
  CHECK_THROWS_MATCHES(forecast::train_denoiser(mixed, schedule, config), Error,
                       ErrorMatcher(Errc::inconsistent_shapes));
}

TEST_CASE("reverse sampling validates the start step and is seed-deterministic") {
  NoiseSchedule schedule = forecast::build_schedule(ScheduleKind::linear, 20);
  DenoiserModel model(4, 2, 3);
  Matrix x = constant_trajectory(4, 2, 1.0);
  CHECK_THROWS_MATCHES(forecast::denoise_trajectory(model, x, 0, schedule, 1), Error,
                       ErrorMatcher(Errc::step_out_of_range));
  CHECK_THROWS_MATCHES(forecast::denoise_trajectory(model, x, 21, schedule, 1), Error,
                       ErrorMatcher(Errc::step_out_of_range));
  Matrix a = forecast::denoise_trajectory(model, x, 10, schedule, 77);
  Matrix b = forecast::denoise_trajectory(model, x, 10, schedule, 77);
  Matrix c = forecast::denoise_trajectory(model, x, 10, schedule, 78);
  CHECK(a.data == b.data);
  CHECK(a.data != c.data);
  CHECK(a.rows == 4);
  CHECK(a.cols == 2);
}

TEST_CASE("anomaly scores are deterministic and flag out-of-distribution inputs") {
  forecast::TrainResult result = train_toy(5, 8);
  NoiseSchedule schedule = forecast::build_schedule(ScheduleKind::linear, 100);
  int t_star = forecast::default_t_star(schedule);
  CHECK(t_star == 5);

  Matrix in_dist = constant_trajectory(8, 2, 0.5);
  Matrix out_dist = constant_trajectory(8, 2, 6.0);
  double s_in = forecast::anomaly_score(result.model, in_dist, schedule, t_star, 3, 11);
  double s_in_again = forecast::anomaly_score(result.model, in_dist, schedule, t_star, 3, 11);
  double s_out = forecast::anomaly_score(result.model, out_dist, schedule, t_star, 3, 11);
  CHECK(s_in == s_in_again);
  CHECK(s_in >= 0.0);
  CHECK(s_out > s_in);

  CHECK_THROWS_MATCHES(
      forecast::anomaly_score(result.model, in_dist, schedule, t_star, 0, 11), Error,
      ErrorMatcher(Errc::invalid_range));
  CHECK_THROWS_MATCHES(
      forecast::anomaly_score(result.model, in_dist, schedule, 0, 3, 11), Error,
      ErrorMatcher(Errc::step_out_of_range));
}
