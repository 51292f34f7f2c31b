// Copyright 2026 the idlma authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Independent test oracles. Everything here is deliberately implemented from
// first principles (scalar loops, textbook formulas, recursive definitions)
// rather than through the library under test, so agreement between the two is
// meaningful evidence.

#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace oracles {

// ---------------------------------------------------------------------------
// Adaptive Simpson quadrature
// ---------------------------------------------------------------------------

namespace detail {

inline double simpson(const std::function<double(double)>& f, double a, double m, double b,
                      double fa, double fm, double fb) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

inline double adaptive_step(const std::function<double(double)>& f, double a, double b,
                            double fa, double fm, double fb, double whole, double tol,
                            int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = simpson(f, a, lm, m, fa, flm, fm);
  const double right = simpson(f, m, rm, b, fm, frm, fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol)
    return left + right + delta / 15.0;
  return adaptive_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adaptive_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace detail

/// Recursive adaptive Simpson integration of f over [a, b].
inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                               double tol = 1e-12, int max_depth = 48) {
  const double m = 0.5 * (a + b);
  const double fa = f(a), fm = f(m), fb = f(b);
  const double whole = detail::simpson(f, a, m, b, fa, fm, fb);
  return detail::adaptive_step(f, a, b, fa, fm, fb, whole, tol, max_depth);
}

// ---------------------------------------------------------------------------
// Reference densities (textbook forms, no shared code with the library)
// ---------------------------------------------------------------------------

/// Circular complex Gaussian density at squared magnitude y_power, variance v.
inline double complex_gauss_pdf(double y_power, double v) {
  return std::exp(-y_power / v) / (std::numbers::pi * v);
}

/// Inverse gamma density at v with shape a and scale b.
inline double inv_gamma_pdf(double v, double a, double b) {
  return std::pow(b, a) / std::tgamma(a) * std::pow(v, -(a + 1.0)) * std::exp(-b / v);
}

/// Marginal density of a complex observation with inverse-gamma variance,
/// computed by quadrature of the variance integral. The substitution
/// u = 1/v maps the integral onto u^a-weighted exponential decay, which the
/// adaptive rule handles well; the upper limit is chosen so the neglected
/// tail is far below the comparison tolerance.
inline double marginal_by_quadrature(double y_power, double a, double b,
                                     double tol = 1e-12) {
  const auto integrand = [&](double u) {
    if (u <= 0.0) return 0.0;
    const double v = 1.0 / u;
    // p(y | v) * p(v; a, b) * |dv/du|, with dv/du = -1/u^2.
    return complex_gauss_pdf(y_power, v) * inv_gamma_pdf(v, a, b) / (u * u);
  };
  const double rate = y_power + b;
  const double upper = (a + 60.0) / rate;  // e^{-rate u} u^{a} tail is negligible here
  // The integral can be as small as 1e-10, so treat `tol` as relative: learn
  // the magnitude with a coarse pass, then refine against a matching
  // absolute tolerance.
  const double coarse = adaptive_simpson(integrand, 0.0, upper, 1e-15);
  const double scaled = std::max(std::abs(coarse) * tol, 1e-300);
  return adaptive_simpson(integrand, 0.0, upper, scaled);
}

// ---------------------------------------------------------------------------
// Naive DFT
// ---------------------------------------------------------------------------

/// Direct O(N^2) discrete Fourier transform.
inline std::vector<std::complex<double>> naive_dft(const std::vector<double>& x) {
  const size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (size_t k = 0; k < n; ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (size_t t = 0; t < n; ++t) {
      const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) *
                           static_cast<double>(t) / static_cast<double>(n);
      acc += x[t] * std::complex<double>(std::cos(angle), std::sin(angle));
    }
    out[k] = acc;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Brute-force permutation search
// ---------------------------------------------------------------------------

namespace detail {

inline void permutations_rec(std::vector<int>& current, std::vector<bool>& used,
                             size_t n, std::vector<std::vector<int>>& out) {
  if (current.size() == n) {
    out.push_back(current);
    return;
  }
  for (size_t v = 0; v < n; ++v) {
    if (used[v]) continue;
    used[v] = true;
    current.push_back(static_cast<int>(v));
    permutations_rec(current, used, n, out);
    current.pop_back();
    used[v] = false;
  }
}

}  // namespace detail

/// All permutations of {0..n-1} in lexicographic order, generated recursively.
inline std::vector<std::vector<int>> all_permutations(size_t n) {
  std::vector<std::vector<int>> out;
  std::vector<int> current;
  std::vector<bool> used(n, false);
  detail::permutations_rec(current, used, n, out);
  return out;
}

/// Assignment maximizing the mean of score[k][perm[k]]; first maximizer in
/// lexicographic order wins ties.
inline std::vector<int> best_permutation(const std::vector<std::vector<double>>& score) {
  const size_t n = score.size();
  std::vector<int> best;
  double best_mean = -std::numeric_limits<double>::infinity();
  for (const auto& perm : all_permutations(n)) {
    double mean = 0.0;
    for (size_t k = 0; k < n; ++k) mean += score[k][static_cast<size_t>(perm[k])];
    mean /= static_cast<double>(n);
    if (mean > best_mean) {
      best_mean = mean;
      best = perm;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Determinant by cofactor expansion
// ---------------------------------------------------------------------------

inline std::complex<double> cofactor_det(const Eigen::MatrixXcd& m) {
  const Eigen::Index n = m.rows();
  if (m.cols() != n) throw std::invalid_argument("cofactor_det: square matrices only");
  if (n == 1) return m(0, 0);
  std::complex<double> det(0.0, 0.0);
  double sign = 1.0;
  for (Eigen::Index c = 0; c < n; ++c) {
    Eigen::MatrixXcd minor(n - 1, n - 1);
    for (Eigen::Index r = 1; r < n; ++r) {
      Eigen::Index mc = 0;
      for (Eigen::Index cc = 0; cc < n; ++cc) {
        if (cc == c) continue;
        minor(r - 1, mc++) = m(r, cc);
      }
    }
    det += sign * m(0, c) * cofactor_det(minor);
    sign = -sign;
  }
  return det;
}

// ---------------------------------------------------------------------------
// Direct (scalar-loop) cost evaluation
// ---------------------------------------------------------------------------

/// Negative log-likelihood of the Gaussian model, computed with explicit
/// scalar loops: sum(log s^2 + |y|^2/s^2) - 2J sum log|det W_i|, where
/// y_ijn is accumulated as the literal matrix-vector product of row n.
inline double direct_gauss_cost(const std::vector<Eigen::MatrixXcd>& W,
                                const std::vector<Eigen::MatrixXcd>& X_by_freq,
                                const std::vector<Eigen::ArrayXXd>& sigma) {
  const size_t I = W.size();
  const auto J = X_by_freq.front().cols();
  const auto N = W.front().rows();
  double cost = 0.0;
  for (size_t i = 0; i < I; ++i) {
    for (Eigen::Index j = 0; j < J; ++j) {
      for (Eigen::Index n = 0; n < N; ++n) {
        std::complex<double> y(0.0, 0.0);
        for (Eigen::Index m = 0; m < N; ++m) y += W[i](n, m) * X_by_freq[i](m, j);
        const double s2 = sigma[static_cast<size_t>(n)](static_cast<Eigen::Index>(i), j) *
                          sigma[static_cast<size_t>(n)](static_cast<Eigen::Index>(i), j);
        cost += std::log(s2) + std::norm(y) / s2;
      }
    }
    cost -= 2.0 * static_cast<double>(J) * std::log(std::abs(cofactor_det(W[i])));
  }
  return cost;
}

/// Negative marginal log-likelihood with explicit scalar loops:
/// sum(log r^2 + (1 + nu/2) log(1 + 2|y|^2/(nu r^2))) - 2J sum log|det W_i|.
inline double direct_eb_cost(const std::vector<Eigen::MatrixXcd>& W,
                             const std::vector<Eigen::MatrixXcd>& X_by_freq,
                             const std::vector<Eigen::ArrayXXd>& r,
                             const std::vector<Eigen::ArrayXXd>& nu) {
  const size_t I = W.size();
  const auto J = X_by_freq.front().cols();
  const auto N = W.front().rows();
  double cost = 0.0;
  for (size_t i = 0; i < I; ++i) {
    for (Eigen::Index j = 0; j < J; ++j) {
      for (Eigen::Index n = 0; n < N; ++n) {
        std::complex<double> y(0.0, 0.0);
        for (Eigen::Index m = 0; m < N; ++m) y += W[i](n, m) * X_by_freq[i](m, j);
        const double rr = r[static_cast<size_t>(n)](static_cast<Eigen::Index>(i), j);
        const double vv = nu[static_cast<size_t>(n)](static_cast<Eigen::Index>(i), j);
        cost += std::log(rr * rr) +
                (1.0 + vv / 2.0) * std::log(1.0 + 2.0 * std::norm(y) / (vv * rr * rr));
      }
    }
    cost -= 2.0 * static_cast<double>(J) * std::log(std::abs(cofactor_det(W[i])));
  }
  return cost;
}

// ---------------------------------------------------------------------------
// Misc helpers
// ---------------------------------------------------------------------------

inline double rel_err(double actual, double expected) {
  const double denom = std::max(std::abs(expected), 1e-300);
  return std::abs(actual - expected) / denom;
}

/// Relative Frobenius distance between complex matrices.
inline double rel_frobenius(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b) {
  const double denom = std::max(b.norm(), 1e-300);
  return (a - b).norm() / denom;
}

}  // namespace oracles
