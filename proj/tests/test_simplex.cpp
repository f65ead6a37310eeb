#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "ssme/rng.hpp"
#include "ssme/simplex.hpp"

using namespace ssme;

namespace {

std::vector<double> random_simplex(int k, rng::Stream& s) {
  std::vector<double> p(k);
  double total = 0.0;
  for (int i = 0; i < k; ++i) {
    p[i] = -std::log(1.0 - s.next_double());
    total += p[i];
  }
  for (double& v : p) v /= total;
  return p;
}

}  // namespace

TEST_CASE("round trip over random interior points") {
  rng::Stream stream(2024);
  for (int k = 2; k <= 10; ++k) {
    for (int rep = 0; rep < 10000 / (k * k); ++rep) {
      const auto p = clip_simplex(random_simplex(k, stream), 1e-4);
      const auto back = alr_inverse(alr(p));
      REQUIRE(back.size() == p.size());
      for (int i = 0; i < k; ++i) REQUIRE(back[i] == doctest::Approx(p[i]).epsilon(1e-9));
    }
  }
}

TEST_CASE("uniform point maps to the origin") {
  const std::vector<double> p = {0.25, 0.25, 0.25, 0.25};
  for (double s : alr(p)) CHECK(s == doctest::Approx(0.0));
}

TEST_CASE("alr is monotone in the first coordinate") {
  double prev = -1e300;
  for (double p1 : {0.01, 0.1, 0.3, 0.6, 0.9, 0.99}) {
    const double s = alr({p1, 1.0 - p1})[0];
    CHECK(s > prev);
    prev = s;
  }
}

TEST_CASE("binary alr is the logit") {
  for (double p1 : {0.2, 0.5, 0.73}) {
    CHECK(alr({p1, 1.0 - p1})[0] ==
          doctest::Approx(std::log(p1 / (1.0 - p1))).epsilon(1e-12));
  }
}

TEST_CASE("inverse is overflow-safe at extreme scores") {
  const auto p = alr_inverse({1000.0});
  CHECK(p[0] == doctest::Approx(1.0));
  CHECK(p[1] >= 0.0);
  const auto q = alr_inverse({-1000.0});
  CHECK(q[1] == doctest::Approx(1.0));
  CHECK(std::isfinite(q[0]));
}

TEST_CASE("clip floors zeros then renormalizes") {
  const auto p = clip_simplex({1.0, 0.0}, 1e-6);
  CHECK(p[0] + p[1] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(p[1] >= 1e-7);
  CHECK(p[0] > 0.999);
}

TEST_CASE("alr rejects zero entries") {
  CHECK_THROWS_AS(alr({1.0, 0.0}), std::domain_error);
  CHECK_THROWS_AS(alr({0.0, 1.0}), std::domain_error);
}

TEST_CASE("profile_to_score concatenates per-classifier transforms") {
  ProbabilityProfile prof;
  prof.values = {{0.5, 0.5}, {0.9, 0.1}};
  const auto sv = profile_to_score(prof);
  REQUIRE(sv.values.size() == 2);
  CHECK(sv.m == 2);
  CHECK(sv.k == 2);
  CHECK(sv.values[0] == doctest::Approx(0.0));
  CHECK(sv.values[1] == doctest::Approx(std::log(9.0)).epsilon(1e-9));
}

TEST_CASE("profile_to_score clips saturated rows instead of throwing") {
  ProbabilityProfile prof;
  prof.values = {{1.0, 0.0}};
  const auto sv = profile_to_score(prof);
  CHECK(std::isfinite(sv.values[0]));
  CHECK(sv.values[0] > 0.0);
}
