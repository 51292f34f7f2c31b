// Copyright 2026 the idlma authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace idlma {

using Grid = Eigen::ArrayXXd;          // I x J real grid (frequency x frame)
using ComplexGrid = Eigen::ArrayXXcd;  // I x J complex grid
using cdouble = std::complex<double>;

// Default numerical-stability constants used across the toolkit:
// scale floor eps = 10^(-1/2), loss offset delta = 1e-5.
inline constexpr double kDefaultDelta = 1e-5;
inline double default_eps() { return std::pow(10.0, -0.5); }

/// Invalid configuration or malformed input description (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Numerical failure during optimization (CLI exit code 3).
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// File I/O failure (CLI exit code 4).
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

/// Static-partition parallel loop over [0, n). Each index is processed by
/// exactly one worker and workers never share output slots, so results are
/// deterministic regardless of the thread count. The first exception thrown
/// by a worker is rethrown on the calling thread.
template <class Fn>
void parallel_for(std::ptrdiff_t n, int threads, Fn&& fn) {
  if (n <= 0) return;
  const int workers = static_cast<int>(
      std::max<std::ptrdiff_t>(1, std::min<std::ptrdiff_t>(threads, n)));
  if (workers == 1) {
    for (std::ptrdiff_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::mutex error_mutex;
  std::exception_ptr error;
  const std::ptrdiff_t chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const std::ptrdiff_t lo = w * chunk;
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn, &error_mutex, &error] {
      try {
        for (std::ptrdiff_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace idlma
