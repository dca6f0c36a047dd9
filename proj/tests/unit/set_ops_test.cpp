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

#include "annofuse/rng.hpp"
#include "annofuse/set_ops.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"

using annofuse::Annotation;
using annofuse::AnnotationSet;
using annofuse::Box;
using annofuse::Source;

namespace {

Annotation ann(double x1, double y1, double x2, double y2, int cat, double score,
               Source src = Source::initial) {
  return Annotation(Box(x1, y1, x2, y2), cat, score, src);
}

AnnotationSet one(const char* image, std::vector<Annotation> anns) {
  AnnotationSet s;
  s[image] = std::move(anns);
  return s;
}

}  // namespace

TEST_CASE("set operations reject thresholds outside (0,1]") {
  const AnnotationSet s = one("img", {ann(0, 0, 10, 10, 1, 0.9)});
  CHECK_THROWS_AS(annofuse::subtract(s, s, 0.0, false), annofuse::ValidationError);
  CHECK_THROWS_AS(annofuse::preserve(s, s, 1.5, false), annofuse::ValidationError);
  CHECK_THROWS_AS(annofuse::expand(s, s, s, -0.1, false), annofuse::ValidationError);
  CHECK_THROWS_AS(annofuse::shrink(s, s, s, 0.0, false), annofuse::ValidationError);
  CHECK_NOTHROW(annofuse::subtract(s, s, 1.0, false));
}

TEST_CASE("subtract removes coincident candidates and keeps disjoint ones") {
  const AnnotationSet ref = one("img", {ann(0, 0, 10, 10, 1, 1.0, Source::ground_truth)});

  CHECK(annofuse::subtract(AnnotationSet{}, ref, 0.7, false).empty());

  const AnnotationSet coincident = one("img", {ann(0, 0, 10, 10, 2, 0.9)});
  CHECK(annofuse::subtract(coincident, ref, 0.7, false).empty());

  const AnnotationSet disjoint = one("img", {ann(50, 50, 60, 60, 2, 0.9)});
  const AnnotationSet kept = annofuse::subtract(disjoint, ref, 0.7, false);
  CHECK(annofuse::total_annotations(kept) == 1);
}

TEST_CASE("subtract passes candidates through on images absent from the reference") {
  const AnnotationSet cands = one("only_here", {ann(0, 0, 10, 10, 1, 0.9)});
  const AnnotationSet ref = one("elsewhere", {ann(0, 0, 10, 10, 1, 1.0)});
  CHECK(annofuse::same_contents(annofuse::subtract(cands, ref, 0.5, false), cands));
}

TEST_CASE("subtract threshold comparison is strict") {
  // IoU exactly 1/3; at t = 1/3 the candidate survives.
  const AnnotationSet cands = one("img", {ann(5, 0, 15, 10, 1, 0.9)});
  const AnnotationSet ref = one("img", {ann(0, 0, 10, 10, 1, 1.0)});
  CHECK(annofuse::total_annotations(annofuse::subtract(cands, ref, 1.0 / 3.0, false)) == 1);
  CHECK(annofuse::subtract(cands, ref, 0.3, false).empty());
}

TEST_CASE("class-aware subtract ignores other-category references") {
  const AnnotationSet cands = one("img", {ann(0, 0, 10, 10, 2, 0.9)});
  const AnnotationSet ref = one("img", {ann(0, 0, 10, 10, 1, 1.0)});
  CHECK(annofuse::subtract(cands, ref, 0.5, true).size() == 1);
  CHECK(annofuse::subtract(cands, ref, 0.5, false).empty());
}

TEST_CASE("preserve keeps only confirmed candidates") {
  const AnnotationSet ref = one("img", {ann(0, 0, 10, 10, 1, 0.8)});

  CHECK(annofuse::preserve(AnnotationSet{}, ref, 0.5, false).empty());
  CHECK(annofuse::preserve(ref, AnnotationSet{}, 0.5, false).empty());

  const AnnotationSet cand = one("img", {ann(0, 0, 10, 10, 2, 0.35, Source::expand)});
  const AnnotationSet kept = annofuse::preserve(cand, ref, 0.5, false);
  REQUIRE(annofuse::total_annotations(kept) == 1);
  CHECK(kept.at("img")[0].score == 0.35);
  CHECK(kept.at("img")[0].source == Source::expand);
}

TEST_CASE("expand with empty predictions returns initial unchanged") {
  const AnnotationSet initial = one("img", {ann(0, 0, 10, 10, 1, 0.9)});
  CHECK(annofuse::same_contents(annofuse::expand(initial, AnnotationSet{}, AnnotationSet{}, 0.7, false), initial));
}

TEST_CASE("expand adds unsuppressed predictions with the expand tag") {
  const AnnotationSet pred = one("img", {ann(0, 0, 10, 10, 1, 0.9)});
  const AnnotationSet out = annofuse::expand(AnnotationSet{}, pred, AnnotationSet{}, 0.7, false);
  REQUIRE(annofuse::total_annotations(out) == 1);
  CHECK(out.at("img")[0].source == Source::expand);
  CHECK(out.at("img")[0].score == 0.9);
}

TEST_CASE("expand does not add predictions coincident with initial annotations") {
  const AnnotationSet initial = one("img", {ann(0, 0, 10, 10, 1, 0.9)});
  const AnnotationSet pred = one("img", {ann(0, 0, 10, 10, 1, 0.8)});
  const AnnotationSet out = annofuse::expand(initial, pred, AnnotationSet{}, 0.7, false);
  CHECK(annofuse::same_contents(out, initial));
}

TEST_CASE("expand does not add predictions coincident with ground truth") {
  const AnnotationSet gt = one("img", {ann(0, 0, 10, 10, 1, 1.0, Source::ground_truth)});
  const AnnotationSet pred = one("img", {ann(0, 0, 10, 10, 2, 0.8)});
  CHECK(annofuse::expand(AnnotationSet{}, pred, gt, 0.7, false).empty());
}

TEST_CASE("shrink with empty predictions yields the empty set") {
  const AnnotationSet current = one("img", {ann(0, 0, 10, 10, 1, 0.9)});
  CHECK(annofuse::shrink(current, AnnotationSet{}, AnnotationSet{}, 0.5, false).empty());
}

TEST_CASE("shrink preserves annotations confirmed by a prediction") {
  const AnnotationSet current = one("img", {ann(0, 0, 10, 10, 1, 0.9)});
  const AnnotationSet pred = one("img", {ann(1, 0, 11, 10, 1, 0.7)});
  const AnnotationSet out = annofuse::shrink(current, pred, AnnotationSet{}, 0.5, false);
  REQUIRE(annofuse::total_annotations(out) == 1);
  CHECK(out.at("img")[0].score == 0.9);
}

TEST_CASE("shrink drops annotations whose confirming prediction sits on ground truth") {
  // The prediction overlaps both the current annotation and a gt box; the
  // inner subtraction removes it from the reference, so nothing confirms.
  const AnnotationSet current = one("img", {ann(0, 0, 10, 10, 1, 0.9)});
  const AnnotationSet pred = one("img", {ann(0, 0, 10, 10, 1, 0.7)});
  const AnnotationSet gt = one("img", {ann(0, 0, 10, 10, 2, 1.0, Source::ground_truth)});
  CHECK(annofuse::shrink(current, pred, gt, 0.5, false).empty());
  CHECK(annofuse::total_annotations(annofuse::shrink(current, pred, AnnotationSet{}, 0.5, false)) == 1);
}

TEST_CASE("set operations agree with the brute-force references") {
  annofuse::Rng rng(11);
  for (double t : {0.3, 0.5, 0.6, 0.7}) {
    for (bool aware : {false, true}) {
      for (int i = 0; i < 60; ++i) {
        const AnnotationSet a = testgen::random_set(rng, 4, 12, 3);
        const AnnotationSet b = testgen::random_set(rng, 4, 12, 3);
        const AnnotationSet g = testgen::random_set(rng, 4, 8, 3);

        CHECK(annofuse::same_contents(annofuse::subtract(a, b, t, aware), testref::subtract_ref(a, b, t, aware)));
        CHECK(annofuse::same_contents(annofuse::preserve(a, b, t, aware), testref::preserve_ref(a, b, t, aware)));
        CHECK(annofuse::same_contents(annofuse::expand(a, b, g, t, aware), testref::expand_ref(a, b, g, t, aware)));
        CHECK(annofuse::same_contents(annofuse::shrink(a, b, g, t, aware), testref::shrink_ref(a, b, g, t, aware)));
      }
    }
  }
}

TEST_CASE("expand superset and shrink subset laws") {
  annofuse::Rng rng(12);
  for (int i = 0; i < 300; ++i) {
    const AnnotationSet a = testgen::random_set(rng, 3, 10, 3);
    const AnnotationSet b = testgen::random_set(rng, 3, 10, 3);
    const AnnotationSet g = testgen::random_set(rng, 3, 6, 3);
    const double t = 0.3 + 0.4 * rng.next_unit();

    CHECK(annofuse::is_subset_of(a, annofuse::expand(a, b, g, t, false)));
    CHECK(annofuse::is_subset_of(annofuse::shrink(a, b, g, t, false), a));
  }
}

TEST_CASE("expand and shrink are idempotent in their prediction argument") {
  annofuse::Rng rng(13);
  for (int i = 0; i < 200; ++i) {
    const AnnotationSet a = testgen::random_set(rng, 3, 10, 3);
    const AnnotationSet b = testgen::random_set(rng, 3, 10, 3);
    const AnnotationSet g = testgen::random_set(rng, 3, 6, 3);
    const double t = 0.3 + 0.4 * rng.next_unit();

    const AnnotationSet once = annofuse::expand(a, b, g, t, false);
    CHECK(annofuse::same_contents(annofuse::expand(once, b, g, t, false), once));

    const AnnotationSet shrunk = annofuse::shrink(a, b, g, t, false);
    CHECK(annofuse::same_contents(annofuse::shrink(shrunk, b, g, t, false), shrunk));
  }
}
