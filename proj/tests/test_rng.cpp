#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <map>
#include <vector>

#include "doctest.h"
#include "ssme/rng.hpp"

using namespace ssme;

TEST_CASE("derive is deterministic and order-sensitive") {
  CHECK(rng::derive(42, 1) == rng::derive(42, 1));
  CHECK(rng::derive(42, 1) != rng::derive(42, 2));
  CHECK(rng::derive(42, 1, 2) != rng::derive(42, 2, 1));
  CHECK(rng::derive(42, 1, 2, 3) == rng::derive(rng::derive(42, 1, 2), 3));
}

TEST_CASE("stream uniforms live in [0,1) with near-uniform mean") {
  rng::Stream s(123);
  double total = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double u = s.next_double();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    total += u;
  }
  CHECK(total / 100000 == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("next_below is unbiased over a small modulus") {
  rng::Stream s(7);
  std::vector<int> counts(5, 0);
  for (int i = 0; i < 50000; ++i) ++counts[s.next_below(5)];
  for (int c : counts) CHECK(std::abs(c - 10000) < 500);
}

TEST_CASE("gaussian moments") {
  rng::Stream s(99);
  double mean = 0.0, var = 0.0;
  const int n = 200000;
  std::vector<double> draws(n);
  for (int i = 0; i < n; ++i) {
    draws[i] = s.next_gaussian();
    mean += draws[i];
  }
  mean /= n;
  for (double d : draws) var += (d - mean) * (d - mean);
  var /= n;
  CHECK(mean == doctest::Approx(0.0).epsilon(0.02));
  CHECK(std::abs(mean) < 0.01);
  CHECK(var == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("categorical draw frequencies match weights") {
  const std::vector<double> w = {0.2, 0.5, 0.3};
  std::map<int, int> counts;
  const int n = 50000;
  for (int i = 0; i < n; ++i) ++counts[rng::categorical_draw(w, rng::derive(5, i))];
  CHECK(counts[0] / double(n) == doctest::Approx(0.2).epsilon(0.05));
  CHECK(counts[1] / double(n) == doctest::Approx(0.5).epsilon(0.05));
  CHECK(counts[2] / double(n) == doctest::Approx(0.3).epsilon(0.05));
}

TEST_CASE("categorical draw skips zero-weight cells") {
  const std::vector<double> w = {0.0, 1.0, 0.0};
  for (int i = 0; i < 100; ++i)
    CHECK(rng::categorical_draw(w, rng::derive(11, i)) == 1);
}

TEST_CASE("distinct seeds decorrelate streams") {
  rng::Stream a(1), b(2);
  int equal = 0;
  for (int i = 0; i < 1000; ++i) equal += a.next_u64() == b.next_u64();
  CHECK(equal == 0);
}
