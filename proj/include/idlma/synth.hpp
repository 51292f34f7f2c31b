// Copyright 2026 the idlma authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "idlma/core.hpp"
#include "idlma/wav.hpp"

namespace idlma {

/// Pure sinusoid of `samples` samples.
inline Eigen::ArrayXd sine_wave(double freq_hz, int sample_rate, Eigen::Index samples,
                                double amplitude = 1.0, double phase = 0.0) {
  if (sample_rate < 1) throw ConfigError("sine_wave: sample rate must be positive");
  if (samples < 1) throw ConfigError("sine_wave: need at least one sample");
  Eigen::ArrayXd t = Eigen::ArrayXd::LinSpaced(samples, 0.0, static_cast<double>(samples - 1));
  return amplitude * (2.0 * std::numbers::pi * freq_hz / sample_rate * t + phase).sin();
}

/// Band-limited random source: a sum of sinusoids at random frequencies in
/// [lo_hz, hi_hz) with random phases, each slowly amplitude-modulated so the
/// short-time power profile varies across frames. Normalized to unit RMS.
inline Eigen::ArrayXd bandlimited_source(double lo_hz, double hi_hz, int sample_rate,
                                         Eigen::Index samples, int tones,
                                         std::mt19937_64& rng) {
  if (!(lo_hz >= 0.0) || !(hi_hz > lo_hz) || hi_hz > sample_rate / 2.0)
    throw ConfigError("bandlimited_source: need 0 <= lo < hi <= Nyquist");
  if (tones < 1) throw ConfigError("bandlimited_source: need at least one tone");
  if (samples < 1) throw ConfigError("bandlimited_source: need at least one sample");
  std::uniform_real_distribution<double> freq(lo_hz, hi_hz);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> env_rate(0.3, 1.5);  // Hz
  Eigen::ArrayXd t = Eigen::ArrayXd::LinSpaced(samples, 0.0, static_cast<double>(samples - 1)) /
                     static_cast<double>(sample_rate);
  Eigen::ArrayXd out = Eigen::ArrayXd::Zero(samples);
  for (int k = 0; k < tones; ++k) {
    const Eigen::ArrayXd carrier =
        (2.0 * std::numbers::pi * freq(rng) * t + phase(rng)).sin();
    const Eigen::ArrayXd envelope =
        0.55 + 0.45 * (2.0 * std::numbers::pi * env_rate(rng) * t + phase(rng)).sin();
    out += envelope * carrier;
  }
  const double rms = std::sqrt(out.square().mean());
  if (rms > 0.0) out /= rms;
  return out;
}

/// Random square mixing matrix with an exact requested condition number:
/// A = Q1 diag(s) Q2^T with Q1, Q2 random orthogonal and singular values
/// spaced geometrically from 1 down to 1/cond.
inline Eigen::MatrixXd random_mixing_matrix(int n, double condition_number,
                                            std::mt19937_64& rng) {
  if (n < 1) throw ConfigError("random_mixing_matrix: n must be >= 1");
  if (!(condition_number >= 1.0))
    throw ConfigError("random_mixing_matrix: condition number must be >= 1");
  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto random_orthogonal = [&] {
    Eigen::MatrixXd g(n, n);
    for (Eigen::Index r = 0; r < n; ++r)
      for (Eigen::Index c = 0; c < n; ++c) g(r, c) = gauss(rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ();
    // Fix the sign convention so Q is a deterministic function of g.
    const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Eigen::Index c = 0; c < n; ++c)
      if (r(c, c) < 0.0) q.col(c) = -q.col(c);
    return q;
  };
  Eigen::VectorXd sv(n);
  for (Eigen::Index k = 0; k < n; ++k)
    sv(k) = n == 1 ? 1.0
                   : std::pow(condition_number,
                              -static_cast<double>(k) / static_cast<double>(n - 1));
  // Two separate statements: operand evaluation order inside one expression
  // is unspecified, which would break seeded determinism.
  const Eigen::MatrixXd q1 = random_orthogonal();
  const Eigen::MatrixXd q2 = random_orthogonal();
  return q1 * sv.asDiagonal() * q2.transpose();
}

/// Instantaneous mixing: columns of `sources` are mixed as x = A s per
/// sample, giving one output channel per row of A.
inline Waveform apply_instantaneous_mixing(const Eigen::ArrayXXd& sources,
                                           const Eigen::MatrixXd& A, int sample_rate) {
  if (A.cols() != sources.cols())
    throw ConfigError("apply_instantaneous_mixing: matrix width must equal source count");
  Waveform mix;
  mix.sample_rate = sample_rate;
  mix.samples = (sources.matrix() * A.transpose()).array();
  return mix;
}

/// Random exponentially decaying FIR filters, filters[m][n] being the path
/// from source n to channel m. The leading tap is kept dominant so short
/// filters stay well-conditioned.
inline std::vector<std::vector<Eigen::ArrayXd>> random_fir_filters(int channels, int sources,
                                                                   int taps,
                                                                   std::mt19937_64& rng) {
  if (channels < 1 || sources < 1) throw ConfigError("random_fir_filters: bad dimensions");
  if (taps < 1 || taps > 64) throw ConfigError("random_fir_filters: taps must be in [1, 64]");
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double tau = static_cast<double>(taps) / 4.0;
  std::vector<std::vector<Eigen::ArrayXd>> filters(static_cast<size_t>(channels));
  for (int m = 0; m < channels; ++m) {
    filters[static_cast<size_t>(m)].resize(static_cast<size_t>(sources));
    for (int n = 0; n < sources; ++n) {
      Eigen::ArrayXd h(taps);
      h(0) = (m == n ? 1.0 : 0.5) + 0.1 * gauss(rng);
      for (int t = 1; t < taps; ++t)
        h(t) = 0.3 * gauss(rng) * std::exp(-static_cast<double>(t) / tau);
      filters[static_cast<size_t>(m)][static_cast<size_t>(n)] = h;
    }
  }
  return filters;
}

/// FIR convolutive mixing, truncated to the source length.
inline Waveform apply_fir_mixing(const Eigen::ArrayXXd& sources,
                                 const std::vector<std::vector<Eigen::ArrayXd>>& filters,
                                 int sample_rate) {
  const auto M = static_cast<Eigen::Index>(filters.size());
  if (M < 1) throw ConfigError("apply_fir_mixing: no channels");
  const Eigen::Index N = sources.cols();
  const Eigen::Index L = sources.rows();
  Waveform mix;
  mix.sample_rate = sample_rate;
  mix.samples = Eigen::ArrayXXd::Zero(L, M);
  for (Eigen::Index m = 0; m < M; ++m) {
    const auto& row = filters[static_cast<size_t>(m)];
    if (static_cast<Eigen::Index>(row.size()) != N)
      throw ConfigError("apply_fir_mixing: filter grid must be channels x sources");
    for (Eigen::Index n = 0; n < N; ++n) {
      const Eigen::ArrayXd& h = row[static_cast<size_t>(n)];
      for (Eigen::Index t = 0; t < h.size(); ++t)
        if (h(t) != 0.0)
          mix.samples.col(m).tail(L - t) += h(t) * sources.col(n).head(L - t);
    }
  }
  return mix;
}

}  // namespace idlma
