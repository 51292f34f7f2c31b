// Copyright 2026 the idlma authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "idlma/core.hpp"
#include "idlma/network.hpp"
#include "idlma/source_model.hpp"

namespace idlma {

// ---------------------------------------------------------------------------
// Training losses
// ---------------------------------------------------------------------------

/// Itakura-Saito loss between the squared scale estimate and the target
/// power, summed over all slots; both sides are offset by delta:
///   sum [ q/u - log(q/u) - 1 ],  q = t + delta, u = sigma_hat^2 + delta.
inline double loss_gauss(const Grid& sigma_hat, const Grid& target_power, double delta) {
  if (sigma_hat.rows() != target_power.rows() || sigma_hat.cols() != target_power.cols())
    throw ConfigError("loss_gauss: grid shapes disagree");
  if ((sigma_hat < 0.0).any() || (target_power < 0.0).any())
    throw ConfigError("loss_gauss: inputs must be nonnegative");
  if (delta < 0.0) throw ConfigError("loss_gauss: delta must be nonnegative");
  const Grid ratio = (target_power + delta) / (sigma_hat.square() + delta);
  return (ratio - ratio.log() - 1.0).sum();
}

/// d loss_gauss / d sigma_hat, elementwise.
inline Grid loss_gauss_gradient(const Grid& sigma_hat, const Grid& target_power,
                                double delta) {
  const Grid u = sigma_hat.square() + delta;
  const Grid ratio = (target_power + delta) / u;
  return 2.0 * sigma_hat * (1.0 - ratio) / u;
}

/// Marginal-likelihood loss, summed over all slots; shares its slot term
/// with the separation cost:
///   sum [ log(r_hat^2 + delta)
///         + (1 + nu/2) log(1 + 2 (t + delta) / (nu (r_hat^2 + delta))) ].
inline double loss_eb(const Grid& r_hat, const Grid& nu_hat, const Grid& target_power,
                      double delta) {
  if (r_hat.rows() != target_power.rows() || r_hat.cols() != target_power.cols() ||
      nu_hat.rows() != target_power.rows() || nu_hat.cols() != target_power.cols())
    throw ConfigError("loss_eb: grid shapes disagree");
  if ((r_hat < 0.0).any() || (target_power < 0.0).any())
    throw ConfigError("loss_eb: r and target power must be nonnegative");
  if ((nu_hat <= 0.0).any()) throw ConfigError("loss_eb: nu must be positive");
  if (delta < 0.0) throw ConfigError("loss_eb: delta must be nonnegative");
  double loss = 0.0;
  for (Eigen::Index j = 0; j < r_hat.cols(); ++j)
    for (Eigen::Index i = 0; i < r_hat.rows(); ++i)
      loss += detail::eb_slot_term(target_power(i, j) + delta,
                                   r_hat(i, j) * r_hat(i, j) + delta, nu_hat(i, j));
  return loss;
}

struct EbLossGradients {
  Grid d_r;   // d loss / d r_hat
  Grid d_nu;  // d loss / d nu_hat
};

inline EbLossGradients loss_eb_gradient(const Grid& r_hat, const Grid& nu_hat,
                                        const Grid& target_power, double delta) {
  const Grid u = r_hat.square() + delta;
  const Grid q = target_power + delta;
  const Grid g = 1.0 + 2.0 * q / (nu_hat * u);
  const Grid half_nu1 = 1.0 + 0.5 * nu_hat;
  EbLossGradients out;
  out.d_r = 2.0 * r_hat * (1.0 / u - half_nu1 * 2.0 * q / (g * nu_hat * u.square()));
  out.d_nu = 0.5 * g.log() - half_nu1 * 2.0 * q / (g * nu_hat.square() * u);
  return out;
}

// ---------------------------------------------------------------------------
// Small-power behavior of the marginal-likelihood loss
// ---------------------------------------------------------------------------

/// Per-slot limit of loss_eb when both the target power and r_hat^2 are far
/// below delta: log(delta) + (1 + nu/2) log(1 + 2/nu).
inline double small_power_loss(double nu, double delta) {
  if (!(nu > 0.0) || !(delta > 0.0))
    throw ConfigError("small_power_loss: nu and delta must be positive");
  return std::log(delta) + (1.0 + 0.5 * nu) * std::log1p(2.0 / nu);
}

/// Derivative of small_power_loss w.r.t. nu: (1/2) log(1 + 2/nu) - 1/nu.
/// Strictly negative for every nu > 0, so the loss keeps rewarding larger
/// nu in silent regions - the blow-up the anchor representation guards
/// against.
inline double small_power_loss_derivative(double nu) {
  if (!(nu > 0.0)) throw ConfigError("small_power_loss_derivative: nu must be positive");
  return 0.5 * std::log1p(2.0 / nu) - 1.0 / nu;
}

inline std::vector<double> small_power_loss_derivative_grid(std::span<const double> nus) {
  std::vector<double> out;
  out.reserve(nus.size());
  for (double nu : nus) out.push_back(small_power_loss_derivative(nu));
  return out;
}

// ---------------------------------------------------------------------------
// Desk-scale training
// ---------------------------------------------------------------------------

/// One training pair: complex spectrograms of a target source and an
/// interferer on the same grid. Minibatch samples mix them with random gains.
struct TrainingPair {
  ComplexGrid target;
  ComplexGrid interferer;

  void validate() const {
    if (target.rows() < 1 || target.cols() < 1)
      throw ConfigError("training pair: empty target grid");
    if (target.rows() != interferer.rows() || target.cols() != interferer.cols())
      throw ConfigError("training pair: target/interferer grids must match");
  }
};

using TrainingSet = std::vector<TrainingPair>;

struct TrainConfig {
  double learning_rate = 2e-3;
  int epochs = 200;
  int batch_size = 16;
  double weight_decay = 1e-5;
  double grad_clip_norm = 10.0;
  double dropout_rate = 0.3;
  int context_frames = 3;
  int hidden_width = 64;
  AnchorSet anchors;
  double delta = kDefaultDelta;
  std::uint64_t rng_seed = 0;
  bool clipped_nu = false;
  int steps_per_epoch = 0;      // 0: one nominal pass, ceil(total frames / batch)
  int validation_samples = 64;  // fixed held-out draws for the loss curve

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
    if (!(grad_clip_norm > 0.0)) throw ConfigError("grad_clip_norm must be positive");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
      throw ConfigError("dropout_rate must lie in [0, 1)");
    if (context_frames < 0) throw ConfigError("context_frames must be >= 0");
    if (hidden_width < 1) throw ConfigError("hidden_width must be >= 1");
    anchors.validate();
    if (!(delta > 0.0)) throw ConfigError("delta must be positive");
    if (steps_per_epoch < 0) throw ConfigError("steps_per_epoch must be >= 0");
    if (validation_samples < 1) throw ConfigError("validation_samples must be >= 1");
  }
};

/// Epoch 0 records the pre-training validation loss.
struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  NetworkParams params;
  std::vector<EpochRecord> curve;
};

inline void write_loss_curve_csv(const std::string& path,
                                 const std::vector<EpochRecord>& curve) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open loss curve for writing: " + path);
  out << "epoch,train_loss,val_loss\n";
  out.precision(17);
  for (const auto& rec : curve)
    out << rec.epoch << ',' << rec.train_loss << ',' << rec.val_loss << '\n';
  if (!out) throw IoError("failed while writing loss curve: " + path);
}

namespace detail {

struct SampleDraw {
  size_t pair = 0;
  Eigen::Index frame = 0;
  double gain_target = 1.0;
  double gain_interferer = 0.0;
};

/// Beta(shape, 1) via inverse CDF: F(x) = x^shape, so X = U^{1/shape}.
inline double sample_beta_shape_one(std::mt19937_64& rng, double shape) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  return std::pow(unif(rng), 1.0 / shape);
}

inline SampleDraw draw_sample(std::mt19937_64& rng, const TrainingSet& data) {
  std::uniform_int_distribution<size_t> pair_dist(0, data.size() - 1);
  SampleDraw d;
  d.pair = pair_dist(rng);
  std::uniform_int_distribution<Eigen::Index> frame_dist(0, data[d.pair].target.cols() - 1);
  d.frame = frame_dist(rng);
  std::uniform_real_distribution<double> gain_dist(0.05, 1.0);
  d.gain_target = gain_dist(rng);
  d.gain_interferer = sample_beta_shape_one(rng, 0.1);
  return d;
}

/// Feature column: context-stacked magnitude of the gain-mixed spectrogram
/// around the drawn frame, plus the target power column.
inline void materialize_sample(const TrainingSet& data, const SampleDraw& d, int context,
                               Eigen::Ref<Eigen::VectorXd> feature,
                               Eigen::Ref<Eigen::VectorXd> target_power) {
  const TrainingPair& pair = data[d.pair];
  const Eigen::Index I = pair.target.rows();
  const Eigen::Index J = pair.target.cols();
  feature.setZero();
  for (int o = -context; o <= context; ++o) {
    const Eigen::Index src = d.frame + o;
    if (src < 0 || src >= J) continue;
    const Eigen::ArrayXd mag =
        (d.gain_target * pair.target.col(src) + d.gain_interferer * pair.interferer.col(src))
            .abs();
    feature.segment(static_cast<Eigen::Index>(o + context) * I, I) = mag.matrix();
  }
  target_power = (d.gain_target * pair.target.col(d.frame)).abs2().matrix();
}

struct Batch {
  Eigen::MatrixXd features;      // (2c+1) I x B
  Eigen::MatrixXd target_power;  // I x B
};

inline Batch materialize_batch(const TrainingSet& data, std::span<const SampleDraw> draws,
                               int context) {
  const Eigen::Index I = data.front().target.rows();
  Batch b;
  b.features.resize((2 * context + 1) * I, static_cast<Eigen::Index>(draws.size()));
  b.target_power.resize(I, static_cast<Eigen::Index>(draws.size()));
  for (size_t s = 0; s < draws.size(); ++s)
    materialize_sample(data, draws[s], context, b.features.col(static_cast<Eigen::Index>(s)),
                       b.target_power.col(static_cast<Eigen::Index>(s)));
  return b;
}

/// Mean per-sample loss of a forward cache against a batch, and the matching
/// head-output gradients.
inline double batch_loss_and_head_grads(NetworkKind kind, const ForwardCache& cache,
                                        const Batch& batch, double delta,
                                        Eigen::MatrixXd& d_scale, Eigen::MatrixXd& d_nu) {
  const auto B = static_cast<double>(batch.features.cols());
  const Grid scale = cache.scale.array();
  const Grid target = batch.target_power.array();
  if (kind == NetworkKind::gauss) {
    const double loss = loss_gauss(scale, target, delta) / B;
    d_scale = (loss_gauss_gradient(scale, target, delta) / B).matrix();
    d_nu.resize(0, 0);
    return loss;
  }
  const Grid nu = cache.nu.array();
  const double loss = loss_eb(scale, nu, target, delta) / B;
  EbLossGradients g = loss_eb_gradient(scale, nu, target, delta);
  d_scale = (g.d_r / B).matrix();
  d_nu = (g.d_nu / B).matrix();
  return loss;
}

}  // namespace detail

/// One descent step: clipped gradients plus weight decay, applied in place.
/// Decay is added after clipping, so on a zero-gradient problem every step
/// scales the parameters by exactly (1 - lr * wd).
inline void apply_sgd_step(NetworkParams& params, const Gradients& grads,
                           double learning_rate, double weight_decay) {
  auto update = [&](std::vector<FcBlock>& blocks, const std::vector<FcBlock>& gs) {
    if (blocks.size() != gs.size())
      throw ConfigError("apply_sgd_step: gradient structure mismatch");
    for (size_t l = 0; l < blocks.size(); ++l) {
      blocks[l].W -= learning_rate * (gs[l].W + weight_decay * blocks[l].W);
      blocks[l].b -= learning_rate * (gs[l].b + weight_decay * blocks[l].b);
    }
  };
  update(params.trunk, grads.trunk);
  update(params.scale_head, grads.scale_head);
  update(params.rho_head, grads.rho_head);
}

/// Plain seeded gradient descent on the chosen loss: minibatches are drawn by
/// sampling a pair, a frame, a target gain ~ Uniform[0.05, 1], and an
/// interferer gain ~ Beta(0.1, 1); gradients are clipped to a global norm
/// bound, then weight decay is added. Epoch 0 of the returned curve is the
/// pre-training validation loss.
inline TrainResult train(const TrainingSet& data, NetworkKind kind, const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw ConfigError("train: dataset is empty");
  Eigen::Index total_frames = 0;
  const Eigen::Index I = data.front().target.rows();
  for (const auto& pair : data) {
    pair.validate();
    if (pair.target.rows() != I)
      throw ConfigError("train: all pairs must share the bin count");
    total_frames += pair.target.cols();
  }

  std::mt19937_64 rng(cfg.rng_seed);
  std::mt19937_64 val_rng(cfg.rng_seed ^ 0x76616c6964617465ULL);  // independent stream

  NetworkParams params =
      init_network(kind, static_cast<int>(I), cfg.context_frames, cfg.hidden_width,
                   cfg.anchors, cfg.dropout_rate, cfg.clipped_nu, cfg.rng_seed);

  std::vector<detail::SampleDraw> val_draws(static_cast<size_t>(cfg.validation_samples));
  for (auto& d : val_draws) d = detail::draw_sample(val_rng, data);
  const detail::Batch val_batch = detail::materialize_batch(data, val_draws, cfg.context_frames);

  const auto validation_loss = [&]() {
    const ForwardCache cache = forward(params, val_batch.features);
    Eigen::MatrixXd unused_scale, unused_nu;
    return detail::batch_loss_and_head_grads(kind, cache, val_batch, cfg.delta,
                                             unused_scale, unused_nu);
  };

  const int steps = cfg.steps_per_epoch > 0
                        ? cfg.steps_per_epoch
                        : static_cast<int>((total_frames + cfg.batch_size - 1) / cfg.batch_size);

  TrainResult result;
  {
    const double v0 = validation_loss();
    result.curve.push_back({0, v0, v0});
  }

  std::vector<detail::SampleDraw> draws(static_cast<size_t>(cfg.batch_size));
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double epoch_loss = 0.0;
    for (int step = 0; step < steps; ++step) {
      for (auto& d : draws) d = detail::draw_sample(rng, data);
      const detail::Batch batch = detail::materialize_batch(data, draws, cfg.context_frames);
      const ForwardCache cache = forward(params, batch.features, true, &rng);
      Eigen::MatrixXd d_scale, d_nu;
      const double loss = detail::batch_loss_and_head_grads(kind, cache, batch, cfg.delta,
                                                            d_scale, d_nu);
      if (!std::isfinite(loss))
        throw NumericalError("training loss became non-finite at epoch " +
                             std::to_string(epoch));
      epoch_loss += loss;

      Gradients grads = backward(params, cache, d_scale, d_nu);
      clip_gradients(grads, cfg.grad_clip_norm);
      apply_sgd_step(params, grads, cfg.learning_rate, cfg.weight_decay);
    }
    result.curve.push_back({epoch, epoch_loss / steps, validation_loss()});
  }
  result.params = std::move(params);
  return result;
}

/// Seeded synthetic dataset of band-disjoint pairs: the target lives in the
/// lower frequency bins, the interferer in the upper ones, with random
/// complex entries. Trivially separable, which makes loss decrease a sharp
/// check on the optimizer.
inline TrainingSet make_toy_dataset(int bins, int frames, int pairs, std::uint64_t seed) {
  if (bins < 2 || frames < 1 || pairs < 1)
    throw ConfigError("make_toy_dataset: need bins >= 2, frames >= 1, pairs >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> mag(0.2, 1.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  const Eigen::Index split = bins / 2;
  TrainingSet data;
  data.reserve(static_cast<size_t>(pairs));
  for (int p = 0; p < pairs; ++p) {
    TrainingPair pair;
    pair.target = ComplexGrid::Zero(bins, frames);
    pair.interferer = ComplexGrid::Zero(bins, frames);
    for (Eigen::Index j = 0; j < frames; ++j) {
      for (Eigen::Index i = 0; i < split; ++i)
        pair.target(i, j) = std::polar(mag(rng), phase(rng));
      for (Eigen::Index i = split; i < bins; ++i)
        pair.interferer(i, j) = std::polar(mag(rng), phase(rng));
    }
    data.push_back(std::move(pair));
  }
  return data;
}

}  // namespace idlma
