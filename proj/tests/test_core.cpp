// Copyright 2026 the idlma authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <atomic>
#include <cmath>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "idlma/core.hpp"

namespace {

TEST_CASE("default epsilon is ten to the minus one half", "[core]") {
  CHECK(idlma::default_eps() == Catch::Approx(std::pow(10.0, -0.5)).epsilon(1e-15));
  CHECK(idlma::default_eps() == Catch::Approx(0.31622776601683794).epsilon(1e-15));
}

TEST_CASE("default delta floor", "[core]") {
  CHECK(idlma::kDefaultDelta == 1e-5);
}

TEST_CASE("error types are distinguishable", "[core]") {
  CHECK_THROWS_AS(throw idlma::ConfigError("bad"), idlma::ConfigError);
  CHECK_THROWS_AS(throw idlma::NumericalError("bad"), idlma::NumericalError);
  CHECK_THROWS_AS(throw idlma::IoError("bad"), idlma::IoError);
  // All are runtime errors so they can be caught uniformly at the top level.
  CHECK_THROWS_AS(throw idlma::ConfigError("bad"), std::runtime_error);
}

TEST_CASE("parallel_for covers every index exactly once", "[core]") {
  for (int threads : {1, 2, 3, 8}) {
    std::vector<std::atomic<int>> hits(257);
    for (auto& h : hits) h.store(0);
    idlma::parallel_for(hits.size(), threads,
                        [&](size_t i) { hits[i].fetch_add(1); });
    for (const auto& h : hits) CHECK(h.load() == 1);
  }
}

TEST_CASE("parallel_for propagates worker exceptions", "[core]") {
  CHECK_THROWS_AS(idlma::parallel_for(16, 4,
                                      [&](size_t i) {
                                        if (i == 7) throw idlma::NumericalError("boom");
                                      }),
                  idlma::NumericalError);
}

TEST_CASE("parallel_for handles empty and tiny ranges", "[core]") {
  int count = 0;
  idlma::parallel_for(0, 4, [&](size_t) { ++count; });
  CHECK(count == 0);
  std::atomic<int> count2{0};
  idlma::parallel_for(1, 8, [&](size_t) { count2.fetch_add(1); });
  CHECK(count2.load() == 1);
}

}  // namespace
