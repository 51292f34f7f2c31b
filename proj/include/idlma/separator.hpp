// Copyright 2026 the idlma authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <atomic>
#include <cmath>
#include <string>
#include <vector>

#include "idlma/core.hpp"
#include "idlma/source_model.hpp"
#include "idlma/stft.hpp"

namespace idlma {

/// Per-frequency demixing matrices W_i. Row n of W_i is the Hermitian
/// transpose of the demixing filter for source n (y_ij = W_i x_ij).
struct DemixingStack {
  std::vector<Eigen::MatrixXcd> matrices;

  static DemixingStack identity(Eigen::Index bins, int sources) {
    DemixingStack w;
    w.matrices.assign(static_cast<size_t>(bins),
                      Eigen::MatrixXcd::Identity(sources, sources));
    return w;
  }

  Eigen::Index bins() const { return static_cast<Eigen::Index>(matrices.size()); }
  int sources() const {
    return matrices.empty() ? 0 : static_cast<int>(matrices.front().rows());
  }
};

enum class Variant { gauss, student_t_fixed_nu, empirical_bayes };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::gauss: return "gauss";
    case Variant::student_t_fixed_nu: return "t";
    case Variant::empirical_bayes: return "eb";
  }
  return "unknown";
}

inline Variant variant_from_string(const std::string& s) {
  if (s == "gauss") return Variant::gauss;
  if (s == "t" || s == "student_t" || s == "student_t_fixed_nu")
    return Variant::student_t_fixed_nu;
  if (s == "eb" || s == "empirical_bayes") return Variant::empirical_bayes;
  throw ConfigError("unknown separation variant: " + s);
}

struct SeparationConfig {
  Variant variant = Variant::gauss;
  int spatial_iters = 100;
  int model_refresh_period = 10;
  double fixed_nu = 0.0;  // required > 0 for the fixed-nu Student's-t variant
  double eps = default_eps();
  double delta = kDefaultDelta;
  int reference_channel = 0;
  int threads = 1;

  void validate(int sources) const {
    if (spatial_iters < 1) throw ConfigError("spatial_iters must be >= 1");
    if (model_refresh_period < 1) throw ConfigError("model_refresh_period must be >= 1");
    if (!(eps > 0.0)) throw ConfigError("eps must be positive");
    if (!(delta > 0.0)) throw ConfigError("delta must be positive");
    if (variant == Variant::student_t_fixed_nu && !(fixed_nu > 0.0))
      throw ConfigError("the fixed-nu variant requires fixed_nu > 0");
    if (reference_channel < 0 || reference_channel >= sources)
      throw ConfigError("reference_channel out of range");
    if (threads < 1) throw ConfigError("threads must be >= 1");
  }
};

/// Cost evaluated after the spatial update of an iteration, and again after
/// the hyperparameter refresh (identical when no refresh ran).
struct CostRecord {
  int iteration = 0;
  double cost = 0.0;
  double cost_after_refresh = 0.0;
};

struct SeparationDiagnostics {
  long regularization_events = 0;
};

struct SeparationState {
  DemixingStack W;
  std::vector<ComplexSpectrogram> Y;          // raw demixed sources, y = W x
  std::vector<ComplexSpectrogram> projected;  // back-projected source images
  std::vector<GaussSourceEstimate> gauss_estimates;  // per source (gauss variant)
  std::vector<EbSourceEstimate> eb_estimates;        // per source (t / eb variants)
  std::vector<CostRecord> cost_trace;
  SeparationDiagnostics diagnostics;
};

namespace detail {

/// Per-frequency channel matrices: entry i is an M x J matrix whose column j
/// is the observation vector x_ij.
using FreqStack = std::vector<Eigen::MatrixXcd>;

inline FreqStack to_freq_major(const std::vector<ComplexSpectrogram>& specs) {
  if (specs.empty()) throw ConfigError("expected at least one channel spectrogram");
  const Eigen::Index I = specs.front().bins();
  const Eigen::Index J = specs.front().frames();
  for (const auto& s : specs)
    if (s.bins() != I || s.frames() != J)
      throw ConfigError("channel spectrograms must share dimensions");
  FreqStack stack(static_cast<size_t>(I));
  const auto M = static_cast<Eigen::Index>(specs.size());
  for (Eigen::Index i = 0; i < I; ++i) {
    auto& slab = stack[static_cast<size_t>(i)];
    slab.resize(M, J);
    for (Eigen::Index m = 0; m < M; ++m) slab.row(m) = specs[static_cast<size_t>(m)].data.row(i);
  }
  return stack;
}

inline std::vector<ComplexSpectrogram> from_freq_major(const FreqStack& stack,
                                                       const ComplexSpectrogram& like) {
  const auto I = static_cast<Eigen::Index>(stack.size());
  const Eigen::Index N = stack.empty() ? 0 : stack.front().rows();
  const Eigen::Index J = stack.empty() ? 0 : stack.front().cols();
  std::vector<ComplexSpectrogram> specs(static_cast<size_t>(N));
  for (Eigen::Index n = 0; n < N; ++n) {
    auto& s = specs[static_cast<size_t>(n)];
    s.data.resize(I, J);
    s.sample_rate = like.sample_rate;
    s.source_samples = like.source_samples;
  }
  for (Eigen::Index i = 0; i < I; ++i)
    for (Eigen::Index n = 0; n < N; ++n)
      specs[static_cast<size_t>(n)].data.row(i) = stack[static_cast<size_t>(i)].row(n);
  return specs;
}

/// I x J complex grid of source n gathered from a frequency-major stack.
inline ComplexGrid gather_source(const FreqStack& stack, Eigen::Index n) {
  const auto I = static_cast<Eigen::Index>(stack.size());
  const Eigen::Index J = stack.front().cols();
  ComplexGrid grid(I, J);
  for (Eigen::Index i = 0; i < I; ++i) grid.row(i) = stack[static_cast<size_t>(i)].row(n);
  return grid;
}

inline double log_abs_det(const Eigen::MatrixXcd& m) {
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu(m);
  const double a = std::abs(lu.determinant());
  if (!(a > 1e-12) || !std::isfinite(a))
    throw NumericalError("demixing matrix is (near-)singular: |det| = " + std::to_string(a));
  return std::log(a);
}

}  // namespace detail

/// y_ij = W_i x_ij for every frequency and frame.
inline std::vector<ComplexSpectrogram> apply_demixing(
    const DemixingStack& W, const std::vector<ComplexSpectrogram>& X) {
  const auto Xf = detail::to_freq_major(X);
  if (W.bins() != static_cast<Eigen::Index>(Xf.size()))
    throw ConfigError("demixing stack and spectrograms disagree on bin count");
  detail::FreqStack Yf(Xf.size());
  for (size_t i = 0; i < Xf.size(); ++i) {
    if (W.matrices[i].cols() != Xf[i].rows())
      throw ConfigError("demixing matrix size does not match channel count");
    Yf[i] = W.matrices[i] * Xf[i];
  }
  return detail::from_freq_major(Yf, X.front());
}

/// Negative log-likelihood of the Gaussian model (constants dropped):
/// sum_{i,j,n} (log sigma^2 + |w^H x|^2 / sigma^2) - 2J sum_i log|det W_i|.
inline double gauss_cost(const DemixingStack& W, const std::vector<ComplexSpectrogram>& X,
                         const std::vector<Grid>& sigma) {
  const auto Y = apply_demixing(W, X);
  const Eigen::Index J = X.front().frames();
  if (sigma.size() != Y.size())
    throw ConfigError("gauss_cost: one sigma grid per source required");
  double cost = 0.0;
  for (size_t n = 0; n < Y.size(); ++n) {
    if ((sigma[n] <= 0.0).any()) throw ConfigError("gauss_cost: sigma must be positive");
    const Grid s2 = sigma[n].square();
    cost += (s2.log() + Y[n].data.abs2() / s2).sum();
  }
  for (const auto& w : W.matrices) cost -= 2.0 * static_cast<double>(J) * detail::log_abs_det(w);
  return cost;
}

/// Negative marginal log-likelihood of the empirical-Bayes model (constants
/// dropped); also the fixed-nu Student's-t cost when nu is constant.
inline double eb_cost(const DemixingStack& W, const std::vector<ComplexSpectrogram>& X,
                      const std::vector<EbSourceEstimate>& est) {
  const auto Y = apply_demixing(W, X);
  const Eigen::Index J = X.front().frames();
  if (est.size() != Y.size())
    throw ConfigError("eb_cost: one estimate per source required");
  double cost = 0.0;
  for (size_t n = 0; n < Y.size(); ++n) {
    const Grid& r = est[n].r;
    const Grid& nu = est[n].nu;
    if ((r <= 0.0).any() || (nu <= 0.0).any())
      throw ConfigError("eb_cost: r and nu must be positive");
    const Grid p = Y[n].data.abs2();
    for (Eigen::Index i = 0; i < p.rows(); ++i)
      for (Eigen::Index j = 0; j < p.cols(); ++j)
        cost += detail::eb_slot_term(p(i, j), r(i, j) * r(i, j), nu(i, j));
  }
  for (const auto& w : W.matrices) cost -= 2.0 * static_cast<double>(J) * detail::log_abs_det(w);
  return cost;
}

/// Surrogate weights of the majorized cost at the current separated signals:
/// xi = nu/(nu+2) r^2 + 2/(nu+2) |y|^2, a convex combination of the model
/// power and the observed power with reliability nu/(nu+2).
inline Grid xi_weights(const ComplexGrid& separated, const Grid& r, const Grid& nu) {
  if (r.rows() != separated.rows() || r.cols() != separated.cols() ||
      nu.rows() != separated.rows() || nu.cols() != separated.cols())
    throw ConfigError("xi_weights: grid dimensions disagree");
  const Grid reliability = nu / (nu + 2.0);
  return reliability * r.square() + (1.0 - reliability) * separated.abs2();
}

/// U_in = (1/J) sum_j x_ij x_ij^H / xi_ij for one frequency; xi holds the
/// per-frame weights of source n at that frequency.
inline Eigen::MatrixXcd weighted_covariance(const Eigen::MatrixXcd& X_i,
                                            const Eigen::Ref<const Eigen::ArrayXd>& xi) {
  if (xi.size() != X_i.cols())
    throw ConfigError("weighted_covariance: weight count must equal frame count");
  if ((xi <= 0.0).any())
    throw ConfigError("weighted_covariance: weights must be positive");
  const Eigen::VectorXd inv = (1.0 / xi).matrix() / static_cast<double>(X_i.cols());
  Eigen::MatrixXcd U = X_i * inv.asDiagonal() * X_i.adjoint();
  U = 0.5 * (U + Eigen::MatrixXcd(U.adjoint()));  // exact Hermitian symmetry
  return U;
}

/// One iterative-projection row update:
///   w_n <- (W_i U_in)^{-1} e_n,  w_n <- w_n / sqrt(w_n^H U_in w_n).
/// A singular system falls back once to U + 1e-10 (tr U / N) I and bumps the
/// regularization counter.
inline void ip_update(Eigen::MatrixXcd& W_i, const Eigen::MatrixXcd& U, int n,
                      std::atomic<long>* regularization_events = nullptr) {
  const auto N = W_i.rows();
  if (U.rows() != N || U.cols() != N || n < 0 || n >= N)
    throw ConfigError("ip_update: dimension mismatch");

  const auto try_solve = [&](const Eigen::MatrixXcd& Ueff, Eigen::VectorXcd& z,
                             double& denom) {
    Eigen::FullPivLU<Eigen::MatrixXcd> lu(W_i * Ueff);
    if (!lu.isInvertible()) return false;
    z = lu.solve(Eigen::VectorXcd::Unit(N, n));
    denom = std::real(z.dot(Ueff * z));
    return z.allFinite() && std::isfinite(denom) && denom > 0.0;
  };

  Eigen::VectorXcd z;
  double denom = 0.0;
  if (!try_solve(U, z, denom)) {
    if (regularization_events) regularization_events->fetch_add(1, std::memory_order_relaxed);
    const double scale = std::real(U.trace()) / static_cast<double>(N);
    const Eigen::MatrixXcd Ureg =
        U + 1e-10 * scale * Eigen::MatrixXcd::Identity(N, N);
    if (!try_solve(Ureg, z, denom))
      throw NumericalError("ip_update: singular weighted covariance even after regularization");
  }
  W_i.row(n) = (z / std::sqrt(denom)).adjoint();
}

/// Rescales each separated source to its image at the reference channel:
/// y'_ijn = [W_i^{-1}]_{ref,n} y_ijn, so that sum_n y'_ijn = x_ij,ref.
inline std::vector<ComplexSpectrogram> back_project(const DemixingStack& W,
                                                    const std::vector<ComplexSpectrogram>& Y,
                                                    int reference_channel) {
  const int N = W.sources();
  if (reference_channel < 0 || reference_channel >= N)
    throw ConfigError("back_project: reference channel out of range");
  if (static_cast<Eigen::Index>(Y.size()) != N)
    throw ConfigError("back_project: expected one spectrogram per source");
  const Eigen::Index I = W.bins();
  for (const auto& y : Y)
    if (y.bins() != I) throw ConfigError("back_project: bin count mismatch");

  std::vector<ComplexSpectrogram> projected = Y;
  for (Eigen::Index i = 0; i < I; ++i) {
    const auto& Wi = W.matrices[static_cast<size_t>(i)];
    Eigen::FullPivLU<Eigen::MatrixXcd> lu(Wi);
    if (!lu.isInvertible())
      throw NumericalError("back_project: singular demixing matrix at bin " + std::to_string(i));
    const Eigen::MatrixXcd Winv = lu.inverse();
    for (int n = 0; n < N; ++n)
      projected[static_cast<size_t>(n)].data.row(i) *= Winv(reference_channel, n);
  }
  return projected;
}

namespace detail {

struct Hyperparams {
  std::vector<Grid> scale;  // sigma (gauss) or r (t / eb), clamped to >= eps
  std::vector<Grid> nu;     // empty in the gauss variant
  std::vector<std::vector<Grid>> rho;  // optional anchor weights per source
};

inline void refresh_hyperparams(const std::vector<SourceModelPtr>& models,
                                const FreqStack& Yf, const SeparationConfig& cfg,
                                Hyperparams& hp) {
  const auto N = static_cast<Eigen::Index>(models.size());
  for (Eigen::Index n = 0; n < N; ++n) {
    const ComplexGrid Yn = gather_source(Yf, n);
    const auto& model = *models[static_cast<size_t>(n)];
    auto& scale = hp.scale[static_cast<size_t>(n)];
    switch (cfg.variant) {
      case Variant::gauss:
        scale = clamp_scale(model.refresh_gauss(Yn).sigma, cfg.eps);
        break;
      case Variant::student_t_fixed_nu: {
        // Scale comes from whichever head the provider has; nu is global.
        if (model.kind() == SourceModel::Kind::gauss)
          scale = clamp_scale(model.refresh_gauss(Yn).sigma, cfg.eps);
        else
          scale = clamp_scale(model.refresh_eb(Yn).r, cfg.eps);
        hp.nu[static_cast<size_t>(n)] =
            Grid::Constant(Yn.rows(), Yn.cols(), cfg.fixed_nu);
        break;
      }
      case Variant::empirical_bayes: {
        EbSourceEstimate est = model.refresh_eb(Yn);
        scale = clamp_scale(est.r, cfg.eps);
        if (est.nu.rows() != Yn.rows() || est.nu.cols() != Yn.cols())
          throw ConfigError("provider returned a nu grid of the wrong shape");
        if (!est.nu.allFinite() || (est.nu <= 0.0).any())
          throw NumericalError("provider returned a non-positive or non-finite nu grid");
        hp.nu[static_cast<size_t>(n)] = std::move(est.nu);
        hp.rho[static_cast<size_t>(n)] = std::move(est.rho);
        break;
      }
    }
    if (!scale.allFinite())
      throw NumericalError("provider returned a non-finite scale grid");
  }
}

inline double cost_from_power(const std::vector<Grid>& Ypow, const Hyperparams& hp,
                              const DemixingStack& W, const SeparationConfig& cfg,
                              Eigen::Index J) {
  double cost = 0.0;
  for (size_t n = 0; n < Ypow.size(); ++n) {
    if (cfg.variant == Variant::gauss) {
      const Grid s2 = hp.scale[n].square();
      cost += (s2.log() + Ypow[n] / s2).sum();
    } else {
      const Grid& r = hp.scale[n];
      const Grid& nu = hp.nu[n];
      const Grid& p = Ypow[n];
      for (Eigen::Index i = 0; i < p.rows(); ++i)
        for (Eigen::Index j = 0; j < p.cols(); ++j)
          cost += eb_slot_term(p(i, j), r(i, j) * r(i, j), nu(i, j));
    }
  }
  for (const auto& w : W.matrices) cost -= 2.0 * static_cast<double>(J) * log_abs_det(w);
  if (!std::isfinite(cost))
    throw NumericalError("separation cost became non-finite");
  return cost;
}

}  // namespace detail

/// Full alternating separation loop: per-iteration surrogate weights, one
/// iterative-projection sweep over every (frequency, source), demixed-signal
/// update, periodic hyperparameter refresh, and final back-projection.
inline SeparationState separate(const std::vector<ComplexSpectrogram>& X,
                                const std::vector<SourceModelPtr>& models,
                                const SeparationConfig& cfg) {
  const auto M = static_cast<Eigen::Index>(X.size());
  const auto N = static_cast<Eigen::Index>(models.size());
  if (N < 1) throw ConfigError("separate: at least one source model required");
  if (M != N)
    throw ConfigError("separate: requires as many channels as sources (got " +
                      std::to_string(M) + " channels, " + std::to_string(N) + " sources)");
  cfg.validate(static_cast<int>(N));
  for (const auto& m : models) {
    if (!m) throw ConfigError("separate: null source model");
    if (cfg.variant == Variant::gauss && m->kind() != SourceModel::Kind::gauss)
      throw ConfigError("separate: the gauss variant needs gauss-kind providers");
    if (cfg.variant == Variant::empirical_bayes && m->kind() != SourceModel::Kind::eb)
      throw ConfigError("separate: the eb variant needs eb-kind providers");
  }

  const auto Xf = detail::to_freq_major(X);
  const auto I = static_cast<Eigen::Index>(Xf.size());
  const Eigen::Index J = Xf.front().cols();

  DemixingStack W = DemixingStack::identity(I, static_cast<int>(N));
  detail::FreqStack Yf = Xf;  // identity initialization: Y = X

  detail::Hyperparams hp;
  hp.scale.resize(static_cast<size_t>(N));
  hp.nu.resize(static_cast<size_t>(N));
  hp.rho.resize(static_cast<size_t>(N));
  detail::refresh_hyperparams(models, Yf, cfg, hp);

  std::vector<Grid> Ypow(static_cast<size_t>(N));
  const auto recompute_power = [&] {
    for (Eigen::Index n = 0; n < N; ++n)
      Ypow[static_cast<size_t>(n)] = detail::gather_source(Yf, n).abs2();
  };
  recompute_power();

  std::atomic<long> reg_events{0};
  std::vector<CostRecord> trace;
  trace.reserve(static_cast<size_t>(cfg.spatial_iters) + 1);
  {
    const double c0 = detail::cost_from_power(Ypow, hp, W, cfg, J);
    trace.push_back({0, c0, c0});
  }

  std::vector<Grid> xi(static_cast<size_t>(N));
  for (int iter = 1; iter <= cfg.spatial_iters; ++iter) {
    // Surrogate weights from the current signals and hyperparameters.
    for (Eigen::Index n = 0; n < N; ++n) {
      auto& xn = xi[static_cast<size_t>(n)];
      if (cfg.variant == Variant::gauss) {
        xn = hp.scale[static_cast<size_t>(n)].square();
      } else {
        const Grid reliability =
            hp.nu[static_cast<size_t>(n)] / (hp.nu[static_cast<size_t>(n)] + 2.0);
        xn = reliability * hp.scale[static_cast<size_t>(n)].square() +
             (1.0 - reliability) * Ypow[static_cast<size_t>(n)];
      }
    }

    // One IP sweep; frequencies are independent.
    parallel_for(I, cfg.threads, [&](std::ptrdiff_t i) {
      auto& Wi = W.matrices[static_cast<size_t>(i)];
      for (Eigen::Index n = 0; n < N; ++n) {
        const Eigen::MatrixXcd U = weighted_covariance(
            Xf[static_cast<size_t>(i)], xi[static_cast<size_t>(n)].row(i).transpose());
        ip_update(Wi, U, static_cast<int>(n), &reg_events);
      }
      detail::log_abs_det(Wi);  // enforce nonsingularity after the sweep
      Yf[static_cast<size_t>(i)] = Wi * Xf[static_cast<size_t>(i)];
    });
    recompute_power();

    CostRecord rec;
    rec.iteration = iter;
    rec.cost = detail::cost_from_power(Ypow, hp, W, cfg, J);
    rec.cost_after_refresh = rec.cost;
    if (iter % cfg.model_refresh_period == 0 && iter < cfg.spatial_iters) {
      detail::refresh_hyperparams(models, Yf, cfg, hp);
      rec.cost_after_refresh = detail::cost_from_power(Ypow, hp, W, cfg, J);
    }
    trace.push_back(rec);
  }

  SeparationState state;
  state.W = std::move(W);
  state.Y = detail::from_freq_major(Yf, X.front());
  state.projected = back_project(state.W, state.Y, cfg.reference_channel);
  state.cost_trace = std::move(trace);
  state.diagnostics.regularization_events = reg_events.load();
  if (cfg.variant == Variant::gauss) {
    for (Eigen::Index n = 0; n < N; ++n)
      state.gauss_estimates.push_back({hp.scale[static_cast<size_t>(n)]});
  } else {
    for (Eigen::Index n = 0; n < N; ++n)
      state.eb_estimates.push_back({hp.scale[static_cast<size_t>(n)],
                                    hp.nu[static_cast<size_t>(n)],
                                    hp.rho[static_cast<size_t>(n)]});
  }
  return state;
}

}  // namespace idlma
