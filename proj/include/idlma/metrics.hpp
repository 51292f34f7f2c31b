// Copyright 2026 the idlma authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "idlma/core.hpp"

namespace idlma {

inline constexpr double kDefaultSdrCeilingDb = 80.0;

/// Scale-invariant signal-to-distortion ratio in dB:
///   10 log10(||a s||^2 / ||a s - s_hat||^2),  a = <s_hat, s> / ||s||^2.
/// A perfect (or perfectly scaled) estimate is capped at `ceiling_db`; a zero
/// estimate yields -infinity.
inline double si_sdr(const Eigen::ArrayXd& estimate, const Eigen::ArrayXd& reference,
                     double ceiling_db = kDefaultSdrCeilingDb) {
  if (estimate.size() != reference.size())
    throw ConfigError("si_sdr: estimate and reference lengths differ");
  const double ref_energy = reference.square().sum();
  if (!(ref_energy > 0.0)) throw ConfigError("si_sdr: reference signal is zero");
  const double alpha = (estimate * reference).sum() / ref_energy;
  const double signal = alpha * alpha * ref_energy;
  if (!(signal > 0.0)) return -std::numeric_limits<double>::infinity();
  const double noise = (alpha * reference - estimate).square().sum();
  if (!(noise > 0.0)) return ceiling_db;
  return std::min(10.0 * std::log10(signal / noise), ceiling_db);
}

/// Scalar-projection SDR in dB:
///   10 log10(||s||^2 / ||s - b s_hat||^2),  b = <s, s_hat> / ||s_hat||^2.
/// Unlike si_sdr this measures distortion against the unscaled reference, so
/// it is sensitive to how much of the reference the estimate explains.
inline double scalar_projection_sdr(const Eigen::ArrayXd& estimate,
                                    const Eigen::ArrayXd& reference,
                                    double ceiling_db = kDefaultSdrCeilingDb) {
  if (estimate.size() != reference.size())
    throw ConfigError("scalar_projection_sdr: estimate and reference lengths differ");
  const double ref_energy = reference.square().sum();
  if (!(ref_energy > 0.0))
    throw ConfigError("scalar_projection_sdr: reference signal is zero");
  const double est_energy = estimate.square().sum();
  if (!(est_energy > 0.0)) return -std::numeric_limits<double>::infinity();
  const double beta = (reference * estimate).sum() / est_energy;
  const double noise = (reference - beta * estimate).square().sum();
  if (!(noise > 0.0)) return ceiling_db;
  return std::min(10.0 * std::log10(ref_energy / noise), ceiling_db);
}

/// Permutation-aligned separation metrics. permutation[k] is the index of
/// the estimate assigned to reference k; improvements are present only when
/// the report was computed against a mixture baseline.
struct MetricsReport {
  std::vector<int> permutation;
  std::vector<double> si_sdr_db;
  std::vector<double> sp_sdr_db;
  std::vector<double> si_sdr_improvement_db;
  std::vector<double> sp_sdr_improvement_db;
  double mean_si_sdr_db = 0.0;
  double mean_sp_sdr_db = 0.0;
  double mean_si_sdr_improvement_db = 0.0;
  double mean_sp_sdr_improvement_db = 0.0;
};

/// Exhaustive permutation alignment (up to 4 sources): picks the assignment
/// maximizing mean SI-SDR, breaking ties toward the lexicographically
/// smallest permutation. When `mixture_channels` is non-null, improvement
/// columns are filled relative to the unprocessed mixture channels, which are
/// themselves aligned to the references by their own best permutation (so a
/// do-nothing separator scores exactly 0 dB improvement).
inline MetricsReport best_permutation_metrics(
    const std::vector<Eigen::ArrayXd>& estimates,
    const std::vector<Eigen::ArrayXd>& references,
    const std::vector<Eigen::ArrayXd>* mixture_channels = nullptr,
    double ceiling_db = kDefaultSdrCeilingDb) {
  const size_t N = references.size();
  if (estimates.size() != N)
    throw ConfigError("best_permutation_metrics: estimate/reference count mismatch");
  if (N == 0) throw ConfigError("best_permutation_metrics: no sources");
  if (N > 4)
    throw ConfigError("best_permutation_metrics: exhaustive search supports up to 4 sources");

  // Pairwise scores once; permutation search reuses them.
  std::vector<std::vector<double>> si(N, std::vector<double>(N));
  std::vector<std::vector<double>> sp(N, std::vector<double>(N));
  for (size_t k = 0; k < N; ++k)
    for (size_t e = 0; e < N; ++e) {
      si[k][e] = si_sdr(estimates[e], references[k], ceiling_db);
      sp[k][e] = scalar_projection_sdr(estimates[e], references[k], ceiling_db);
    }

  std::vector<int> perm(N);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  double best_mean = -std::numeric_limits<double>::infinity();
  do {
    double mean = 0.0;
    for (size_t k = 0; k < N; ++k) mean += si[k][static_cast<size_t>(perm[k])];
    mean /= static_cast<double>(N);
    if (mean > best_mean) {  // strict: first (smallest) permutation wins ties
      best_mean = mean;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  MetricsReport report;
  report.permutation = best;
  for (size_t k = 0; k < N; ++k) {
    report.si_sdr_db.push_back(si[k][static_cast<size_t>(best[k])]);
    report.sp_sdr_db.push_back(sp[k][static_cast<size_t>(best[k])]);
  }
  report.mean_si_sdr_db = best_mean;
  report.mean_sp_sdr_db =
      std::accumulate(report.sp_sdr_db.begin(), report.sp_sdr_db.end(), 0.0) /
      static_cast<double>(N);

  if (mixture_channels) {
    const MetricsReport baseline =
        best_permutation_metrics(*mixture_channels, references, nullptr, ceiling_db);
    for (size_t k = 0; k < N; ++k) {
      report.si_sdr_improvement_db.push_back(report.si_sdr_db[k] - baseline.si_sdr_db[k]);
      report.sp_sdr_improvement_db.push_back(report.sp_sdr_db[k] - baseline.sp_sdr_db[k]);
    }
    report.mean_si_sdr_improvement_db =
        std::accumulate(report.si_sdr_improvement_db.begin(),
                        report.si_sdr_improvement_db.end(), 0.0) /
        static_cast<double>(N);
    report.mean_sp_sdr_improvement_db =
        std::accumulate(report.sp_sdr_improvement_db.begin(),
                        report.sp_sdr_improvement_db.end(), 0.0) /
        static_cast<double>(N);
  }
  return report;
}

}  // namespace idlma
