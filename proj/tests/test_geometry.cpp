#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "latentslam/frame.hpp"
#include "latentslam/geometry.hpp"
#include "latentslam/rng.hpp"

using namespace latentslam;

TEST_CASE("wrap_angle anchors") {
  CHECK(wrap_angle(0.0) == 0.0);
  CHECK(wrap_angle(2.0 * kPi) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(wrap_angle(-1.5 * kPi) == doctest::Approx(0.5 * kPi).epsilon(1e-12));
  CHECK(wrap_angle(kPi) == doctest::Approx(-kPi));  // half-open interval
  CHECK_THROWS_AS(wrap_angle(std::numeric_limits<double>::quiet_NaN()), std::invalid_argument);
  CHECK_THROWS_AS(wrap_angle(std::numeric_limits<double>::infinity()), std::invalid_argument);
}

TEST_CASE("wrap_angle properties") {
  std::mt19937_64 gen(42);
  for (int i = 0; i < 2000; ++i) {
    const double x = uniform_range(gen, -50.0, 50.0);
    const double w = wrap_angle(x);
    CHECK(w >= -kPi);
    CHECK(w < kPi);
    CHECK(wrap_angle(w) == doctest::Approx(w).epsilon(1e-12));  // idempotent
    const int k = static_cast<int>(uniform_range(gen, -5.0, 5.0));
    CHECK(wrap_angle(x + 2.0 * kPi * k) == doctest::Approx(w).epsilon(1e-9));
    // congruence mod 2pi
    const double r = std::remainder(w - x, 2.0 * kPi);
    CHECK(std::abs(r) < 1e-9);
  }
}

TEST_CASE("pose composition round trips") {
  std::mt19937_64 gen(7);
  for (int i = 0; i < 500; ++i) {
    const Pose2D a(uniform_range(gen, -10, 10), uniform_range(gen, -10, 10), uniform_range(gen, -4, 4));
    const Pose2D b(uniform_range(gen, -10, 10), uniform_range(gen, -10, 10), uniform_range(gen, -4, 4));
    const Pose2D rel = between(a, b);
    const Pose2D back = compose(a, rel);
    CHECK(back.x == doctest::Approx(b.x).epsilon(1e-9));
    CHECK(back.y == doctest::Approx(b.y).epsilon(1e-9));
    CHECK(wrap_angle(back.theta - b.theta) == doctest::Approx(0.0).epsilon(1e-9));

    const Pose2D ident = compose(inverse(a), a);
    CHECK(ident.x == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(ident.y == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(ident.theta == doctest::Approx(0.0).epsilon(1e-9));
  }
}

TEST_CASE("odometry delta validation") {
  CHECK_THROWS_AS(OdometryDelta(std::numeric_limits<double>::infinity(), 0, 0), std::invalid_argument);
  const OdometryDelta d(0.1, -0.05, 3.0 * kPi);
  CHECK(d.dtheta == doctest::Approx(kPi).epsilon(1e-12));  // wrapped
}

TEST_CASE("observation validation") {
  CHECK_THROWS_AS(Observation(ImageShape{2, 2, 1}, {0.0, 0.5, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(Observation(ImageShape{2, 2, 1}, {0.0, 0.5, 1.0, 1.5}), std::invalid_argument);
  const Observation ok(ImageShape{2, 2, 1}, {0.0, 0.25, 0.5, 1.0});
  CHECK(ok.at(1, 1, 0) == 1.0);
}
