// Copyright 2026 the idlma authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <unsupported/Eigen/FFT>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "idlma/core.hpp"
#include "idlma/wav.hpp"

namespace idlma {

enum class WindowKind { hamming, hann };

inline std::string to_string(WindowKind k) {
  return k == WindowKind::hamming ? "hamming" : "hann";
}

inline WindowKind window_kind_from_string(const std::string& s) {
  if (s == "hamming") return WindowKind::hamming;
  if (s == "hann") return WindowKind::hann;
  throw ConfigError("unknown window kind: " + s);
}

/// Analysis/synthesis configuration. The defaults are a 512 ms window with a
/// 256 ms hop at 8 kHz (4096/2048 samples).
struct StftConfig {
  int window_length = 4096;
  int hop_length = 2048;
  WindowKind window_kind = WindowKind::hamming;

  int bins() const { return window_length / 2 + 1; }

  void validate() const {
    if (window_length < 2) throw ConfigError("window_length must be >= 2");
    if (hop_length < 1 || hop_length > window_length)
      throw ConfigError("hop_length must satisfy 0 < hop <= window_length");
  }
};

/// One-sided complex spectrogram of a single channel or source.
/// `source_samples` remembers the pre-analysis signal length so synthesis can
/// trim the zero-padding exactly.
struct ComplexSpectrogram {
  ComplexGrid data;  // bins x frames
  int sample_rate = 0;
  Eigen::Index source_samples = 0;

  Eigen::Index bins() const { return data.rows(); }
  Eigen::Index frames() const { return data.cols(); }
};

/// Periodic (DFT-even) window of length L.
inline Eigen::ArrayXd make_window(WindowKind kind, int length) {
  Eigen::ArrayXd w(length);
  const double step = 2.0 * std::numbers::pi / length;
  for (int k = 0; k < length; ++k) {
    const double c = std::cos(step * k);
    w[k] = kind == WindowKind::hamming ? 0.54 - 0.46 * c : 0.5 - 0.5 * c;
  }
  return w;
}

namespace detail {

/// Steady-state squared-window overlap coverage, one value per hop residue.
/// cov[r] = sum_q w^2[r + qH].
inline Eigen::ArrayXd overlap_coverage(const Eigen::ArrayXd& window, int hop) {
  Eigen::ArrayXd cov = Eigen::ArrayXd::Zero(hop);
  for (int k = 0; k < window.size(); ++k) cov[k % hop] += window[k] * window[k];
  return cov;
}

}  // namespace detail

/// Rejects window/hop pairs whose squared-window overlap-add coverage has
/// (near-)zeros; those configurations cannot be inverted by normalized
/// overlap-add.
inline void check_reconstruction_condition(const StftConfig& cfg) {
  cfg.validate();
  const Eigen::ArrayXd cov =
      detail::overlap_coverage(make_window(cfg.window_kind, cfg.window_length), cfg.hop_length);
  if (cov.minCoeff() <= 1e-8 * cov.maxCoeff())
    throw ConfigError("window/hop pair violates the overlap-add reconstruction condition");
}

inline Eigen::Index stft_frame_count(Eigen::Index signal_length, const StftConfig& cfg) {
  // Signal occupies [L, L+S) of the padded timeline; the last frame must
  // start at or after the last sample.
  return (cfg.window_length + signal_length - 1) / cfg.hop_length + 1;
}

/// Windowed short-time Fourier transform of one channel, one-sided spectrum
/// (window_length/2 + 1 bins). The signal is zero-padded by one full window
/// on both ends so every sample receives complete overlap-add coverage.
inline ComplexSpectrogram stft_channel(const Eigen::Ref<const Eigen::ArrayXd>& samples,
                                       int sample_rate, const StftConfig& cfg) {
  check_reconstruction_condition(cfg);
  const Eigen::Index S = samples.size();
  const int L = cfg.window_length;
  const int H = cfg.hop_length;
  if (S < L) throw ConfigError("signal shorter than one analysis window");

  const Eigen::Index J = stft_frame_count(S, cfg);
  const Eigen::Index padded_len = (J - 1) * H + L;
  Eigen::ArrayXd padded = Eigen::ArrayXd::Zero(padded_len);
  padded.segment(L, S) = samples;

  const Eigen::ArrayXd window = make_window(cfg.window_kind, L);
  const int bins = cfg.bins();

  ComplexSpectrogram spec;
  spec.data.resize(bins, J);
  spec.sample_rate = sample_rate;
  spec.source_samples = S;

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> frame(static_cast<size_t>(L));
  std::vector<cdouble> freq;
  for (Eigen::Index t = 0; t < J; ++t) {
    for (int k = 0; k < L; ++k) frame[static_cast<size_t>(k)] = padded[t * H + k] * window[k];
    fft.fwd(freq, frame);
    for (int k = 0; k < bins; ++k) spec.data(k, t) = freq[static_cast<size_t>(k)];
  }
  return spec;
}

/// Inverse STFT by synthesis-windowed overlap-add with squared-window
/// normalization; exact up to rounding for any configuration accepted by
/// check_reconstruction_condition.
inline Eigen::ArrayXd istft_channel(const ComplexSpectrogram& spec, const StftConfig& cfg) {
  check_reconstruction_condition(cfg);
  const int L = cfg.window_length;
  const int H = cfg.hop_length;
  if (spec.bins() != cfg.bins())
    throw ConfigError("spectrogram has " + std::to_string(spec.bins()) +
                      " bins, config expects " + std::to_string(cfg.bins()));
  if (spec.source_samples < L)
    throw ConfigError("spectrogram is missing a valid source_samples field");
  const Eigen::Index S = spec.source_samples;
  const Eigen::Index J = spec.frames();
  if (J != stft_frame_count(S, cfg))
    throw ConfigError("spectrogram frame count " + std::to_string(J) +
                      " inconsistent with source_samples " + std::to_string(S));

  const Eigen::ArrayXd window = make_window(cfg.window_kind, L);
  const Eigen::Index padded_len = (J - 1) * H + L;
  Eigen::ArrayXd acc = Eigen::ArrayXd::Zero(padded_len);
  Eigen::ArrayXd norm = Eigen::ArrayXd::Zero(padded_len);

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<cdouble> freq(static_cast<size_t>(cfg.bins()));
  std::vector<double> frame;
  for (Eigen::Index t = 0; t < J; ++t) {
    for (int k = 0; k < cfg.bins(); ++k) freq[static_cast<size_t>(k)] = spec.data(k, t);
    fft.inv(frame, freq, L);
    for (int k = 0; k < L; ++k) {
      acc[t * H + k] += frame[static_cast<size_t>(k)] * window[k];
      norm[t * H + k] += window[k] * window[k];
    }
  }
  Eigen::ArrayXd out(S);
  for (Eigen::Index n = 0; n < S; ++n) out[n] = acc[L + n] / norm[L + n];
  return out;
}

/// Per-channel STFT of a multichannel waveform.
inline std::vector<ComplexSpectrogram> stft(const Waveform& wave, const StftConfig& cfg) {
  wave.validate();
  std::vector<ComplexSpectrogram> out;
  out.reserve(static_cast<size_t>(wave.channels()));
  for (Eigen::Index c = 0; c < wave.channels(); ++c)
    out.push_back(stft_channel(wave.samples.col(c), wave.sample_rate, cfg));
  return out;
}

/// Synthesizes a multichannel waveform from per-channel spectrograms.
inline Waveform istft(const std::vector<ComplexSpectrogram>& specs, const StftConfig& cfg) {
  if (specs.empty()) throw ConfigError("istft needs at least one spectrogram");
  Waveform wave;
  wave.sample_rate = specs.front().sample_rate;
  wave.samples.resize(specs.front().source_samples, static_cast<Eigen::Index>(specs.size()));
  for (size_t c = 0; c < specs.size(); ++c) {
    if (specs[c].source_samples != specs.front().source_samples ||
        specs[c].sample_rate != specs.front().sample_rate)
      throw ConfigError("istft: channel spectrograms disagree on length or rate");
    wave.samples.col(static_cast<Eigen::Index>(c)) = istft_channel(specs[c], cfg);
  }
  return wave;
}

/// Elementwise |.|.
inline Grid magnitude(const ComplexSpectrogram& spec) { return spec.data.abs(); }
inline Grid magnitude(const ComplexGrid& grid) { return grid.abs(); }

/// Elementwise |.|^2.
inline Grid power(const ComplexSpectrogram& spec) { return spec.data.abs2(); }
inline Grid power(const ComplexGrid& grid) { return grid.abs2(); }

}  // namespace idlma
