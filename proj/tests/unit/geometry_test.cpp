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

#include "annofuse/geometry.hpp"
#include "annofuse/rng.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"

using annofuse::Box;
using annofuse::iou;

TEST_CASE("box construction rejects out-of-order corners") {
  CHECK_THROWS_AS(Box(10, 0, 0, 10), annofuse::ValidationError);
  CHECK_THROWS_AS(Box(0, 10, 10, 0), annofuse::ValidationError);
  CHECK_NOTHROW(Box(0, 0, 0, 0));
  CHECK_NOTHROW(Box(1.5, 2.5, 1.5, 9.0));
}

TEST_CASE("box geometry accessors") {
  Box b(2, 3, 12, 7);
  CHECK(b.width() == 10.0);
  CHECK(b.height() == 4.0);
  CHECK(b.area() == 40.0);
  CHECK(Box(5, 5, 5, 9).area() == 0.0);
}

TEST_CASE("intersection area") {
  CHECK(annofuse::intersection_area(Box(0, 0, 10, 10), Box(5, 0, 15, 10)) == 50.0);
  CHECK(annofuse::intersection_area(Box(0, 0, 10, 10), Box(20, 20, 30, 30)) == 0.0);
  CHECK(annofuse::intersection_area(Box(0, 0, 10, 10), Box(10, 0, 20, 10)) == 0.0);
}

TEST_CASE("iou on identical boxes is one") {
  CHECK(iou(Box(0, 0, 10, 10), Box(0, 0, 10, 10)) == 1.0);
}

TEST_CASE("iou on disjoint boxes is zero") {
  CHECK(iou(Box(0, 0, 10, 10), Box(20, 20, 30, 30)) == 0.0);
}

TEST_CASE("iou half-overlap worked case") {
  // Intersection 50, union 150.
  CHECK(iou(Box(0, 0, 10, 10), Box(5, 0, 15, 10)) == Catch::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("iou of coincident zero-area boxes is zero") {
  CHECK(iou(Box(5, 5, 5, 5), Box(5, 5, 5, 5)) == 0.0);
  CHECK(iou(Box(0, 0, 0, 10), Box(0, 0, 0, 10)) == 0.0);
}

TEST_CASE("iou is symmetric and bounded on random boxes") {
  annofuse::Rng rng(41);
  for (int i = 0; i < 2000; ++i) {
    const Box a = testgen::random_box(rng);
    const Box b = testgen::random_box(rng);
    const double ab = iou(a, b);
    CHECK(ab == iou(b, a));
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
    CHECK(ab == Catch::Approx(testref::iou_ref(a, b)).margin(1e-12));
  }
}

TEST_CASE("iou of a positive-area box with itself is one") {
  annofuse::Rng rng(42);
  for (int i = 0; i < 200; ++i) {
    const Box a = testgen::random_box(rng);
    CHECK(iou(a, a) == 1.0);
  }
}
