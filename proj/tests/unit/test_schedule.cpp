#include <algorithm>
#include <cmath>
#include <optional>

#include "doctest.h"
#include "s2qn/errors.hpp"
#include "s2qn/rng.hpp"
#include "s2qn/schedule.hpp"

using namespace s2qn;

TEST_CASE("step-size rules") {
  schedule::AlphaRule constant{schedule::AlphaKind::constant, 0.3, 0.0};
  CHECK(constant.at(0) == 0.3);
  CHECK(constant.at(100) == 0.3);

  schedule::AlphaRule poly{schedule::AlphaKind::polynomial, 0.5, 0.5};
  CHECK(poly.at(0) == 0.5);
  CHECK(poly.at(3) == doctest::Approx(0.25).epsilon(1e-15));  // 0.5 / sqrt(4)
}

TEST_CASE("geometric batch growth doubles from eight to sixty-four") {
  schedule::BatchRule rule{schedule::BatchKind::geometric, 8, 2.0};
  CHECK(schedule::batch_size(rule, 0, 100000) == 8);
  CHECK(schedule::batch_size(rule, 3, 100000) == 64);
  // Capped at the dataset.
  CHECK(schedule::batch_size(rule, 3, 50) == 50);
}

TEST_CASE("superlinear batch growth accelerates") {
  schedule::BatchRule rule{schedule::BatchKind::superlinear, 4, 1.5};
  const std::int64_t big = 1'000'000'000;
  double prev_ratio = 0.0;
  // Stay below the dataset cap: once sizes saturate the ratio collapses to 1.
  for (std::int64_t k = 0; k + 1 <= 12; ++k) {
    const auto a = schedule::batch_size(rule, k, big);
    const auto b = schedule::batch_size(rule, k + 1, big);
    REQUIRE(a >= 1);
    REQUIRE(b >= a);  // nondecreasing
    REQUIRE(b < big);
    // The growth *ratio* must not shrink; ceil() gives one unit of slack.
    const double ratio =
        static_cast<double>(b) / static_cast<double>(a);
    CHECK(ratio >= prev_ratio - 1.0 / static_cast<double>(a));
    prev_ratio = ratio;
  }
}

TEST_CASE("regularizer middle branch is exactly the inverse step size") {
  // Previous gradient norm inside [r1, r2]: factor 1.
  CHECK(schedule::lambda_k(0.5, 0.1, 1e-3, 1.0) == 10.0);
  // k = 0: no previous gradient, same branch.
  CHECK(schedule::lambda_k(std::nullopt, 0.1, 1e-3, 1.0) == 10.0);
}

TEST_CASE("regularizer small-gradient branch") {
  // 2 r1 / (|g| + r1) / alpha with r1=1, |g|=0.5, alpha=0.1:
  // (2 / 1.5) * 10 = 13.333...
  CHECK(schedule::lambda_k(0.5, 0.1, 1.0, 10.0) ==
        doctest::Approx(40.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("regularizer large-gradient branch") {
  // 2 |g| / (|g| + r2) / alpha with |g|=3, r2=1, alpha=0.1: 1.5 * 10 = 15.
  CHECK(schedule::lambda_k(3.0, 0.1, 1e-3, 1.0) ==
        doctest::Approx(15.0).epsilon(1e-15));
}

TEST_CASE("regularizer is continuous at both thresholds") {
  const double r1 = 1e-2, r2 = 2.0, alpha = 0.25;
  const double at_r1 = schedule::lambda_k(r1, alpha, r1, r2);
  const double below = schedule::lambda_k(r1 * (1.0 - 1e-13), alpha, r1, r2);
  CHECK(std::abs(at_r1 - below) <= 1e-12 * at_r1);
  CHECK(at_r1 == 1.0 / alpha);  // the factor is exactly 1 at |g| = r1

  const double at_r2 = schedule::lambda_k(r2, alpha, r1, r2);
  const double above = schedule::lambda_k(r2 * (1.0 + 1e-13), alpha, r1, r2);
  CHECK(std::abs(at_r2 - above) <= 1e-12 * at_r2);
  CHECK(at_r2 == 1.0 / alpha);
}

TEST_CASE("lambda times alpha stays inside (0, 2)") {
  rng::Stream s(21);
  for (int trial = 0; trial < 200; ++trial) {
    const double alpha = 1e-3 + s.next_double();
    const double g = std::exp(4.0 * (s.next_double() - 0.5));
    const double lam = schedule::lambda_k(g, alpha, 1e-2, 1.5);
    CHECK(lam * alpha > 0.0);
    CHECK(lam * alpha < 2.0);
  }
}

TEST_CASE("theory step bound worked values") {
  CHECK(schedule::theory_alpha_bound(1.0, 1.0, 1.0, 2.0) == 1.0 / 16.0);
  CHECK(schedule::theory_alpha_bound(4.0, 1.0, 0.1, 10.0) ==
        doctest::Approx(5e-4).epsilon(1e-15));
}

TEST_CASE("threshold validation") {
  CHECK_NOTHROW(schedule::validate_thresholds(1e-3, 1.0));
  CHECK_THROWS_AS(schedule::validate_thresholds(1.0, 1.0), ConfigError);
  CHECK_THROWS_AS(schedule::validate_thresholds(2.0, 1.0), ConfigError);
  CHECK_THROWS_AS(schedule::validate_thresholds(0.0, 1.0), ConfigError);
}

TEST_CASE("derived stream seeds separate purposes and iterations") {
  const auto g0 = rng::derive_seed(7, 0, 1);
  CHECK(g0 == rng::derive_seed(7, 0, 1));
  CHECK(g0 != rng::derive_seed(7, 1, 1));
  CHECK(g0 != rng::derive_seed(7, 0, 2));
  CHECK(g0 != rng::derive_seed(8, 0, 1));
  CHECK(rng::derive_seed(7, 0, 3, 1) != rng::derive_seed(7, 0, 3, 2));
}

TEST_CASE("without-replacement draws are unique and bounded") {
  rng::Stream s(22);
  auto idx = s.sample_without_replacement(50, 20);
  REQUIRE(idx.size() == 20);
  std::sort(idx.begin(), idx.end());
  CHECK(std::adjacent_find(idx.begin(), idx.end()) == idx.end());
  CHECK(idx.front() >= 0);
  CHECK(idx.back() < 50);

  // Asking for everything returns everything.
  auto all = s.sample_without_replacement(10, 10);
  std::sort(all.begin(), all.end());
  for (int i = 0; i < 10; ++i) CHECK(all[static_cast<std::size_t>(i)] == i);
}

TEST_CASE("streams replay bit for bit") {
  rng::Stream a(99), b(99);
  for (int i = 0; i < 32; ++i) CHECK(a.next_u64() == b.next_u64());
  for (int i = 0; i < 32; ++i) CHECK(a.next_gaussian() == b.next_gaussian());
}
