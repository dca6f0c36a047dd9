/* Copyright 2026 The annofuse Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "annofuse/rng.hpp"

using annofuse::Rng;

TEST_CASE("fnv1a64 matches the published test vectors") {
  CHECK(annofuse::fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(annofuse::fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(annofuse::fnv1a64("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("mix64 separates nearby seeds") {
  CHECK(annofuse::mix64(0) != annofuse::mix64(1));
  CHECK(annofuse::mix64(1, 2) != annofuse::mix64(2, 1));
  CHECK(annofuse::mix64(0, 0) != 0);
}

TEST_CASE("identical seeds give identical streams") {
  Rng a(123);
  Rng b(123);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("different seeds give different streams") {
  Rng a(123);
  Rng b(124);
  int same = 0;
  for (int i = 0; i < 100; ++i) {
    if (a.next_u64() == b.next_u64()) ++same;
  }
  CHECK(same == 0);
}

TEST_CASE("next_unit stays in the half-open unit interval") {
  Rng rng(7);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.next_unit();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("uniform respects its bounds") {
  Rng rng(8);
  for (int i = 0; i < 10000; ++i) {
    const double v = rng.uniform(2.5, 7.5);
    CHECK(v >= 2.5);
    CHECK(v < 7.5);
  }
}

TEST_CASE("below covers its range without bias at small n") {
  Rng rng(9);
  int counts[5] = {0, 0, 0, 0, 0};
  for (int i = 0; i < 50000; ++i) ++counts[rng.below(5)];
  for (int c : counts) {
    CHECK(c > 9000);
    CHECK(c < 11000);
  }
  CHECK(rng.below(1) == 0);
}

TEST_CASE("bernoulli hits its rate") {
  Rng rng(10);
  int hits = 0;
  for (int i = 0; i < 100000; ++i) {
    if (rng.bernoulli(0.3)) ++hits;
  }
  CHECK(hits > 29000);
  CHECK(hits < 31000);
  CHECK_FALSE(Rng(1).bernoulli(0.0));
  CHECK(Rng(1).bernoulli(1.0));
}

TEST_CASE("normal has roughly standard moments") {
  Rng rng(11);
  const int n = 100000;
  double sum = 0.0;
  double sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(var - 1.0) < 0.03);
}

TEST_CASE("gamma matches its analytic moments") {
  for (double shape : {0.5, 2.0, 4.5}) {
    Rng rng(12);
    const int n = 100000;
    double sum = 0.0;
    double sq = 0.0;
    for (int i = 0; i < n; ++i) {
      const double x = rng.gamma(shape);
      CHECK(x >= 0.0);
      sum += x;
      sq += x * x;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    CHECK(mean == Catch::Approx(shape).epsilon(0.03));
    CHECK(var == Catch::Approx(shape).epsilon(0.08));
  }
}

TEST_CASE("beta stays in range and matches its mean") {
  Rng rng(13);
  const double a = 3.8;
  const double b = 2.2;
  const int n = 100000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.beta(a, b);
    CHECK(x >= 0.0);
    CHECK(x <= 1.0);
    sum += x;
  }
  CHECK(sum / n == Catch::Approx(a / (a + b)).epsilon(0.01));
}

TEST_CASE("poisson matches its mean and handles zero") {
  Rng rng(14);
  const double lambda = 2.0;
  const int n = 100000;
  long sum = 0;
  for (int i = 0; i < n; ++i) sum += rng.poisson(lambda);
  CHECK(static_cast<double>(sum) / n == Catch::Approx(lambda).epsilon(0.02));
  CHECK(Rng(1).poisson(0.0) == 0);
}
