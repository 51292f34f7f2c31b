// Copyright 2026 the idlma authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "idlma/core.hpp"
#include "idlma/stft.hpp"

namespace idlma {

/// Ordered positive anchor values whose convex combinations represent the
/// degrees-of-freedom estimate. Default set: {1, 10, 100, 1000}.
struct AnchorSet {
  std::vector<double> values{1.0, 10.0, 100.0, 1000.0};

  double min() const { return values.front(); }
  double max() const { return values.back(); }
  size_t size() const { return values.size(); }

  void validate() const {
    if (values.empty()) throw ConfigError("anchor set must be non-empty");
    double prev = 0.0;
    for (double v : values) {
      if (v <= prev) throw ConfigError("anchors must be strictly increasing and positive");
      prev = v;
    }
  }
};

/// Shape/scale parameters of the inverse-gamma prior over the per-slot
/// Gaussian variance.
struct InverseGammaParams {
  double a = 1.0;  // shape
  double b = 1.0;  // scale

  void validate() const {
    if (!(a > 0.0) || !(b > 0.0))
      throw ConfigError("inverse gamma parameters must be positive");
  }
};

/// Density of the inverse-gamma prior at variance v:
///   p(v; a, b) = b^a / Gamma(a) * v^{-(a+1)} * exp(-b / v).
inline double inverse_gamma_pdf(double v, const InverseGammaParams& p) {
  p.validate();
  if (!(v > 0.0)) throw ConfigError("inverse_gamma_pdf requires v > 0");
  const double log_pdf =
      p.a * std::log(p.b) - std::lgamma(p.a) - (p.a + 1.0) * std::log(v) - p.b / v;
  return std::exp(log_pdf);
}

/// Marginal density of one complex observation with the variance integrated
/// out against the inverse-gamma prior:
///   p(y; a, b) = a b^a / (pi (|y|^2 + b)^{a+1}),
/// a complex Student's-t with scale r^2 = b/a and degrees of freedom nu = 2a.
inline double marginal_density(double y_power, double a, double b) {
  InverseGammaParams{a, b}.validate();
  if (y_power < 0.0) throw ConfigError("marginal_density requires |y|^2 >= 0");
  const double log_pdf = std::log(a) + a * std::log(b) -
                         std::log(std::numbers::pi) -
                         (a + 1.0) * std::log(y_power + b);
  return std::exp(log_pdf);
}

namespace detail {

/// Slot term of the Student's-t / empirical-Bayes negative log-likelihood:
/// log r^2 + (1 + nu/2) log(1 + 2 p / (nu r^2)), with p the slot power.
/// Shared by the separation cost and the DNN training loss so the two stay
/// consistent.
inline double eb_slot_term(double power, double r_squared, double nu) {
  return std::log(r_squared) + (1.0 + 0.5 * nu) * std::log1p(2.0 * power / (nu * r_squared));
}

}  // namespace detail

/// Collapses one slot's anchor weights to a degrees-of-freedom value,
/// nu = sum_k rho_k * anchor_k. The weights must lie on the simplex.
inline double anchor_combine(std::span<const double> rho, const AnchorSet& anchors) {
  anchors.validate();
  if (rho.size() != anchors.size())
    throw ConfigError("anchor weight count does not match anchor set size");
  double sum = 0.0, nu = 0.0;
  for (size_t k = 0; k < rho.size(); ++k) {
    if (rho[k] < 0.0 || rho[k] > 1.0)
      throw ConfigError("anchor weights must lie in [0, 1]");
    sum += rho[k];
    nu += rho[k] * anchors.values[k];
  }
  if (std::abs(sum - 1.0) > 1e-4)
    throw ConfigError("anchor weights must sum to 1 (got " + std::to_string(sum) + ")");
  return nu;
}

/// Elementwise max(raw, eps); the scale floor applied to every estimated
/// magnitude grid before it enters a cost denominator.
inline Grid clamp_scale(const Grid& raw, double eps) {
  if (!(eps > 0.0)) throw ConfigError("clamp_scale requires eps > 0");
  return raw.max(eps);
}

/// Per-slot scale grid for the Gaussian source model.
struct GaussSourceEstimate {
  Grid sigma;  // bins x frames, every entry >= eps
};

/// Per-slot (scale, degrees-of-freedom) grids for the Student's-t /
/// empirical-Bayes source model. `rho` optionally carries the anchor weights
/// that produced `nu`, one grid per anchor.
struct EbSourceEstimate {
  Grid r;
  Grid nu;
  std::vector<Grid> rho;
};

/// A per-source hyperparameter provider. Providers are immutable after
/// construction; refresh derives a fresh estimate from the current separated
/// spectrogram of the source they model.
class SourceModel {
 public:
  enum class Kind { gauss, eb };

  virtual ~SourceModel() = default;
  virtual Kind kind() const = 0;

  virtual GaussSourceEstimate refresh_gauss(const ComplexGrid& /*separated*/) const {
    throw ConfigError("source model does not provide Gaussian estimates");
  }
  virtual EbSourceEstimate refresh_eb(const ComplexGrid& /*separated*/) const {
    throw ConfigError("source model does not provide empirical-Bayes estimates");
  }

 protected:
  static void require_shape(const ComplexGrid& separated, Eigen::Index bins,
                            Eigen::Index frames) {
    if (separated.rows() != bins || separated.cols() != frames)
      throw ConfigError("separated spectrogram grid does not match the source model (" +
                        std::to_string(separated.rows()) + "x" +
                        std::to_string(separated.cols()) + " vs " + std::to_string(bins) +
                        "x" + std::to_string(frames) + ")");
  }
};

using SourceModelPtr = std::shared_ptr<const SourceModel>;

/// Gaussian oracle: sigma = max(|truth|, eps). Simulates a perfect
/// magnitude estimator for harness runs.
class OracleGaussModel final : public SourceModel {
 public:
  OracleGaussModel(const ComplexGrid& truth, double eps)
      : sigma_(clamp_scale(truth.abs(), eps)) {}

  Kind kind() const override { return Kind::gauss; }

  GaussSourceEstimate refresh_gauss(const ComplexGrid& separated) const override {
    require_shape(separated, sigma_.rows(), sigma_.cols());
    return GaussSourceEstimate{sigma_};
  }

 private:
  Grid sigma_;
};

/// Empirical-Bayes oracle: r = max(|truth|, eps) and a constant
/// degrees-of-freedom grid (defaults to the largest anchor).
class OracleEbModel final : public SourceModel {
 public:
  OracleEbModel(const ComplexGrid& truth, double eps, double nu_value)
      : r_(clamp_scale(truth.abs(), eps)),
        nu_(Grid::Constant(r_.rows(), r_.cols(), nu_value)) {
    if (!(nu_value > 0.0)) throw ConfigError("oracle nu must be positive");
  }

  Kind kind() const override { return Kind::eb; }

  EbSourceEstimate refresh_eb(const ComplexGrid& separated) const override {
    require_shape(separated, r_.rows(), r_.cols());
    return EbSourceEstimate{r_, nu_, {}};
  }

 private:
  Grid r_;
  Grid nu_;
};

/// Serves grids loaded from a hyperparameter file; refresh returns them
/// unchanged. Carries either a sigma grid (gauss kind) or (r, nu) grids.
class StaticGridModel final : public SourceModel {
 public:
  static std::shared_ptr<const StaticGridModel> gauss(Grid sigma) {
    auto m = std::shared_ptr<StaticGridModel>(new StaticGridModel());
    m->kind_ = Kind::gauss;
    m->scale_ = std::move(sigma);
    return m;
  }

  static std::shared_ptr<const StaticGridModel> eb(Grid r, Grid nu) {
    if (r.rows() != nu.rows() || r.cols() != nu.cols())
      throw ConfigError("static model: r and nu grids must have equal dimensions");
    if ((nu <= 0.0).any()) throw ConfigError("static model: nu grid must be positive");
    auto m = std::shared_ptr<StaticGridModel>(new StaticGridModel());
    m->kind_ = Kind::eb;
    m->scale_ = std::move(r);
    m->nu_ = std::move(nu);
    return m;
  }

  Kind kind() const override { return kind_; }

  GaussSourceEstimate refresh_gauss(const ComplexGrid& separated) const override {
    if (kind_ != Kind::gauss) return SourceModel::refresh_gauss(separated);
    require_shape(separated, scale_.rows(), scale_.cols());
    return GaussSourceEstimate{scale_};
  }

  EbSourceEstimate refresh_eb(const ComplexGrid& separated) const override {
    if (kind_ != Kind::eb) return SourceModel::refresh_eb(separated);
    require_shape(separated, scale_.rows(), scale_.cols());
    return EbSourceEstimate{scale_, nu_, {}};
  }

 private:
  StaticGridModel() = default;

  Kind kind_ = Kind::gauss;
  Grid scale_;
  Grid nu_;
};

}  // namespace idlma
