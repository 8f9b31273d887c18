#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <vector>

#include "regulus/crypto.hpp"
#include "regulus/errors.hpp"
#include "regulus/matrix.hpp"
#include "regulus/schedule.hpp"

// Time-conditioned feedforward denoiser trained with the standard DDPM
// noise-prediction objective, plus ancestral reverse sampling and the
// reconstruction-error anomaly score. Everything is seed-deterministic.

namespace regulus::forecast {

inline constexpr std::size_t kTimeEmbedDim = 32;

// Sinusoidal step embedding, 16 frequency pairs.
inline void embed_time(int t, double* out) {
  for (std::size_t k = 0; k < kTimeEmbedDim / 2; ++k) {
    double freq = std::pow(10000.0, -static_cast<double>(k) / (kTimeEmbedDim / 2.0));
    out[2 * k] = std::sin(t * freq);
    out[2 * k + 1] = std::cos(t * freq);
  }
}

struct TrainConfig {
  double learning_rate = 1e-3;
  double momentum = 0.9;
  std::size_t batch_size = 32;
  std::size_t epochs = 30;
  std::uint64_t seed = 0;
};

class DenoiserModel {
 public:
  DenoiserModel() = default;

  DenoiserModel(std::size_t W, std::size_t d, std::uint64_t seed, std::size_t hidden = 128)
      : W_(W), d_(d), hidden_(hidden), in_(W * d + kTimeEmbedDim), out_(W * d) {
    std::mt19937_64 rng(crypto::splitmix64(seed ^ 0x6d6f64656cULL));
    init_layer(w1_, b1_, in_, hidden_, rng);
    init_layer(w2_, b2_, hidden_, hidden_, rng);
    init_layer(w3_, b3_, hidden_, out_, rng);
  }

  std::size_t window() const { return W_; }
  std::size_t feature_dim() const { return d_; }
  std::size_t hidden() const { return hidden_; }

  // Predicted noise for a noised trajectory at step t.
  Matrix predict(const Matrix& x_t, int t) const {
    check_shape(x_t);
    std::vector<double> in(in_), h1, h2, y;
    fill_input(x_t, t, in);
    forward(in, h1, h2, y);
    Matrix out(W_, d_);
    out.data = std::move(y);
    return out;
  }

  // --- training ---

  struct Workspace {
    std::vector<double> in, h1, h2, y;        // forward activations
    std::vector<double> dy, dh2, dh1;         // backward deltas
    std::vector<double> gw1, gb1, gw2, gb2, gw3, gb3;   // grad accumulators
    std::vector<double> vw1, vb1, vw2, vb2, vw3, vb3;   // momentum velocities
  };

  Workspace make_workspace() const {
    Workspace ws;
    ws.in.resize(in_);
    ws.gw1.assign(w1_.size(), 0.0);
    ws.gb1.assign(b1_.size(), 0.0);
    ws.gw2.assign(w2_.size(), 0.0);
    ws.gb2.assign(b2_.size(), 0.0);
    ws.gw3.assign(w3_.size(), 0.0);
    ws.gb3.assign(b3_.size(), 0.0);
    ws.vw1.assign(w1_.size(), 0.0);
    ws.vb1.assign(b1_.size(), 0.0);
    ws.vw2.assign(w2_.size(), 0.0);
    ws.vb2.assign(b2_.size(), 0.0);
    ws.vw3.assign(w3_.size(), 0.0);
    ws.vb3.assign(b3_.size(), 0.0);
    return ws;
  }

  void zero_grads(Workspace& ws) const {
    auto zero = [](std::vector<double>& v) { std::fill(v.begin(), v.end(), 0.0); };
    zero(ws.gw1);
    zero(ws.gb1);
    zero(ws.gw2);
    zero(ws.gb2);
    zero(ws.gw3);
    zero(ws.gb3);
  }

  // Forward + backward for one (x_t, t, target noise) sample; gradients of the
  // per-sample mean squared error, scaled by `scale`, accumulate into ws.
  // Returns the per-sample loss.
  double accumulate(const Matrix& x_t, int t, const Matrix& target, double scale,
                    Workspace& ws) const {
    fill_input(x_t, t, ws.in);
    forward(ws.in, ws.h1, ws.h2, ws.y);
    double loss = 0.0;
    ws.dy.resize(out_);
    for (std::size_t i = 0; i < out_; ++i) {
      double diff = ws.y[i] - target.data[i];
      loss += diff * diff;
      ws.dy[i] = 2.0 * diff / static_cast<double>(out_) * scale;
    }
    loss /= static_cast<double>(out_);
    backward(ws);
    return loss;
  }

  void apply_sgd(Workspace& ws, double lr, double momentum) {
    auto step = [&](std::vector<double>& w, std::vector<double>& g, std::vector<double>& v) {
      for (std::size_t i = 0; i < w.size(); ++i) {
        v[i] = momentum * v[i] + g[i];
        w[i] -= lr * v[i];
      }
    };
    step(w1_, ws.gw1, ws.vw1);
    step(b1_, ws.gb1, ws.vb1);
    step(w2_, ws.gw2, ws.vw2);
    step(b2_, ws.gb2, ws.vb2);
    step(w3_, ws.gw3, ws.vw3);
    step(b3_, ws.gb3, ws.vb3);
  }

  bool finite() const {
    auto ok = [](const std::vector<double>& v) {
      for (double x : v) {
        if (!std::isfinite(x)) return false;
      }
      return true;
    };
    return ok(w1_) && ok(b1_) && ok(w2_) && ok(b2_) && ok(w3_) && ok(b3_);
  }

  // --- checkpoint format: "RGLS", version, layer dims, then f64 params ---

  void save(std::ostream& os) const {
    os.write("RGLS", 4);
    put_u32(os, 1);  // version
    put_u32(os, static_cast<std::uint32_t>(W_));
    put_u32(os, static_cast<std::uint32_t>(d_));
    put_u32(os, 3);  // layer count
    put_u32(os, static_cast<std::uint32_t>(in_));
    put_u32(os, static_cast<std::uint32_t>(hidden_));
    put_u32(os, static_cast<std::uint32_t>(hidden_));
    put_u32(os, static_cast<std::uint32_t>(hidden_));
    put_u32(os, static_cast<std::uint32_t>(hidden_));
    put_u32(os, static_cast<std::uint32_t>(out_));
    for (const auto* v : {&w1_, &b1_, &w2_, &b2_, &w3_, &b3_}) {
      for (double x : *v) put_f64(os, x);
    }
    if (!os) fail(Errc::io_error, "checkpoint write failed");
  }

  static DenoiserModel load(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::string_view(magic, 4) != "RGLS") {
      fail(Errc::parse_error, "not a model checkpoint (bad magic)");
    }
    if (get_u32(is) != 1) fail(Errc::parse_error, "unsupported checkpoint version");
    DenoiserModel m;
    m.W_ = get_u32(is);
    m.d_ = get_u32(is);
    if (get_u32(is) != 3) fail(Errc::parse_error, "unexpected layer count");
    std::size_t dims[6];
    for (auto& v : dims) v = get_u32(is);
    m.in_ = dims[0];
    m.hidden_ = dims[1];
    m.out_ = dims[5];
    if (m.in_ != m.W_ * m.d_ + kTimeEmbedDim || m.out_ != m.W_ * m.d_ ||
        dims[2] != m.hidden_ || dims[3] != m.hidden_ || dims[4] != m.hidden_) {
      fail(Errc::parse_error, "checkpoint layer dims are inconsistent");
    }
    auto read_vec = [&](std::vector<double>& v, std::size_t n) {
      v.resize(n);
      for (double& x : v) x = get_f64(is);
    };
    read_vec(m.w1_, m.hidden_ * m.in_);
    read_vec(m.b1_, m.hidden_);
    read_vec(m.w2_, m.hidden_ * m.hidden_);
    read_vec(m.b2_, m.hidden_);
    read_vec(m.w3_, m.out_ * m.hidden_);
    read_vec(m.b3_, m.out_);
    if (!is) fail(Errc::parse_error, "checkpoint truncated");
    return m;
  }

  bool operator==(const DenoiserModel& o) const {
    return W_ == o.W_ && d_ == o.d_ && hidden_ == o.hidden_ && w1_ == o.w1_ && b1_ == o.b1_ &&
           w2_ == o.w2_ && b2_ == o.b2_ && w3_ == o.w3_ && b3_ == o.b3_;
  }

 private:
  void check_shape(const Matrix& x) const {
    if (x.rows != W_ || x.cols != d_) {
      fail(Errc::shape_mismatch, "trajectory shape does not match the model");
    }
  }

  static void init_layer(std::vector<double>& w, std::vector<double>& b, std::size_t in,
                         std::size_t out, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(in)));
    w.resize(out * in);
    for (double& x : w) x = dist(rng);
    b.assign(out, 0.0);
  }

  void fill_input(const Matrix& x_t, int t, std::vector<double>& in) const {
    check_shape(x_t);
    std::copy(x_t.data.begin(), x_t.data.end(), in.begin());
    embed_time(t, in.data() + x_t.data.size());
  }

  void forward(const std::vector<double>& in, std::vector<double>& h1, std::vector<double>& h2,
               std::vector<double>& y) const {
    affine(w1_, b1_, in, h1);
    relu(h1);
    affine(w2_, b2_, h1, h2);
    relu(h2);
    affine(w3_, b3_, h2, y);
  }

  void backward(Workspace& ws) const {
    // dL/dW3 = dy h2^T; propagate through the two ReLU hidden layers.
    accumulate_affine(ws.dy, ws.h2, ws.gw3, ws.gb3);
    backprop(w3_, ws.dy, ws.h2, ws.dh2);
    accumulate_affine(ws.dh2, ws.h1, ws.gw2, ws.gb2);
    backprop(w2_, ws.dh2, ws.h1, ws.dh1);
    accumulate_affine(ws.dh1, ws.in, ws.gw1, ws.gb1);
  }

  static void affine(const std::vector<double>& w, const std::vector<double>& b,
                     const std::vector<double>& in, std::vector<double>& out) {
    std::size_t n_out = b.size(), n_in = in.size();
    out.resize(n_out);
    for (std::size_t i = 0; i < n_out; ++i) {
      double acc = b[i];
      const double* row = w.data() + i * n_in;
      for (std::size_t j = 0; j < n_in; ++j) acc += row[j] * in[j];
      out[i] = acc;
    }
  }

  static void relu(std::vector<double>& v) {
    for (double& x : v) x = x > 0.0 ? x : 0.0;
  }

  static void accumulate_affine(const std::vector<double>& delta, const std::vector<double>& in,
                                std::vector<double>& gw, std::vector<double>& gb) {
    std::size_t n_out = delta.size(), n_in = in.size();
    for (std::size_t i = 0; i < n_out; ++i) {
      gb[i] += delta[i];
      double* row = gw.data() + i * n_in;
      for (std::size_t j = 0; j < n_in; ++j) row[j] += delta[i] * in[j];
    }
  }

  // delta_in = W^T delta_out, gated by the ReLU activation (act > 0).
  static void backprop(const std::vector<double>& w, const std::vector<double>& delta,
                       const std::vector<double>& act, std::vector<double>& out) {
    std::size_t n_out = delta.size(), n_in = act.size();
    out.assign(n_in, 0.0);
    for (std::size_t i = 0; i < n_out; ++i) {
      const double* row = w.data() + i * n_in;
      for (std::size_t j = 0; j < n_in; ++j) out[j] += row[j] * delta[i];
    }
    for (std::size_t j = 0; j < n_in; ++j) {
      if (act[j] <= 0.0) out[j] = 0.0;
    }
  }

  static void put_u32(std::ostream& os, std::uint32_t v) {
    char buf[4];
    for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>(v >> (8 * i));
    os.write(buf, 4);
  }

  static std::uint32_t get_u32(std::istream& is) {
    unsigned char buf[4];
    is.read(reinterpret_cast<char*>(buf), 4);
    if (!is) fail(Errc::parse_error, "checkpoint truncated");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
    return v;
  }

  static void put_f64(std::ostream& os, double x) {
    auto bits = std::bit_cast<std::uint64_t>(x);
    char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>(bits >> (8 * i));
    os.write(buf, 8);
  }

  static double get_f64(std::istream& is) {
    unsigned char buf[8];
    is.read(reinterpret_cast<char*>(buf), 8);
    if (!is) fail(Errc::parse_error, "checkpoint truncated");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return std::bit_cast<double>(bits);
  }

  std::size_t W_ = 0, d_ = 0, hidden_ = 0, in_ = 0, out_ = 0;
  std::vector<double> w1_, b1_, w2_, b2_, w3_, b3_;
};

struct TrainResult {
  DenoiserModel model;
  std::vector<double> loss_curve;  // one mean loss per pass over the dataset
};

inline TrainResult train_denoiser(const std::vector<Matrix>& dataset,
                                  const NoiseSchedule& schedule, const TrainConfig& config) {
  if (dataset.empty()) fail(Errc::empty_dataset, "no trajectories to train on");
  for (const Matrix& m : dataset) {
    if (!m.same_shape(dataset.front())) {
      fail(Errc::inconsistent_shapes, "trajectories have mixed shapes");
    }
  }
  std::size_t W = dataset.front().rows, d = dataset.front().cols;
  TrainResult result;
  result.model = DenoiserModel(W, d, config.seed);
  DenoiserModel::Workspace ws = result.model.make_workspace();
  std::mt19937_64 rng(crypto::splitmix64(config.seed ^ 0x747261696eULL));
  std::uniform_int_distribution<int> step_dist(1, schedule.T);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      std::size_t stop = std::min(order.size(), start + config.batch_size);
      result.model.zero_grads(ws);
      double scale = 1.0 / static_cast<double>(stop - start);
      for (std::size_t i = start; i < stop; ++i) {
        int t = step_dist(rng);
        Matrix eps = gaussian_matrix(W, d, rng);
        Matrix x_t = forward_diffuse(dataset[order[i]], t, eps, schedule);
        epoch_loss += result.model.accumulate(x_t, t, eps, scale, ws);
        ++seen;
      }
      result.model.apply_sgd(ws, config.learning_rate, config.momentum);
    }
    epoch_loss /= static_cast<double>(seen);
    if (!std::isfinite(epoch_loss) || !result.model.finite()) {
      fail(Errc::non_finite_loss, "training diverged at epoch " + std::to_string(epoch));
    }
    result.loss_curve.push_back(epoch_loss);
  }
  return result;
}

// Ancestral reverse sampling from t_start down to 1; fresh noise comes from
// the seeded stream, none at the final step.
inline Matrix denoise_trajectory(const DenoiserModel& model, const Matrix& x_t, int t_start,
                                 const NoiseSchedule& schedule, std::uint64_t noise_seed) {
  if (t_start < 1 || t_start > schedule.T) {
    fail(Errc::step_out_of_range, "t_start outside [1, T]");
  }
  std::mt19937_64 rng(crypto::splitmix64(noise_seed ^ 0x64656e6f69736ULL));
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix x = x_t;
  for (int t = t_start; t >= 1; --t) {
    Matrix eps_hat = model.predict(x, t);
    double abar = schedule.alpha_bar(t);
    double coef = schedule.beta(t) / std::sqrt(1.0 - abar);
    double inv_sqrt_alpha = 1.0 / std::sqrt(schedule.alpha(t));
    for (std::size_t i = 0; i < x.data.size(); ++i) {
      x.data[i] = inv_sqrt_alpha * (x.data[i] - coef * eps_hat.data[i]);
    }
    if (t > 1) {
      double abar_prev = schedule.alpha_bar(t - 1);
      double var = (1.0 - abar_prev) / (1.0 - abar) * schedule.beta(t);
      double sigma = std::sqrt(var);
      for (double& v : x.data) v += sigma * dist(rng);
    }
  }
  return x;
}

// Mean reconstruction error per entry over K independent noise seeds.
inline double anomaly_score(const DenoiserModel& model, const Matrix& trajectory,
                            const NoiseSchedule& schedule, int t_star, int K,
                            std::uint64_t seed) {
  if (K < 1) fail(Errc::invalid_range, "K must be at least 1");
  if (t_star < 1 || t_star > schedule.T) fail(Errc::step_out_of_range, "t_star outside [1, T]");
  double sum = 0.0;
  for (int k = 0; k < K; ++k) {
    std::mt19937_64 rng(crypto::derive_seed(seed, static_cast<std::uint64_t>(2 * k)));
    Matrix eps = gaussian_matrix(trajectory.rows, trajectory.cols, rng);
    Matrix x_t = forward_diffuse(trajectory, t_star, eps, schedule);
    Matrix rec = denoise_trajectory(model, x_t, t_star, schedule,
                                    crypto::derive_seed(seed, static_cast<std::uint64_t>(2 * k + 1)));
    sum += squared_distance(rec, trajectory) / static_cast<double>(trajectory.size());
  }
  return sum / static_cast<double>(K);
}

inline int default_t_star(const NoiseSchedule& schedule) { return std::max(1, schedule.T / 20); }

}  // namespace regulus::forecast
