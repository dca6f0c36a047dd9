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
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "annofuse/annotations.hpp"
#include "annofuse/errors.hpp"
#include "annofuse/parallel.hpp"

namespace annofuse {

// IoU-thresholded set algebra over annotation sets. Comparisons are strict
// (an annotation interacts with a reference only when IoU > t), and by
// default class-agnostic: the reference sets mix category ranges, and the
// per-category restriction is opt-in via class_aware.

namespace detail {

inline void check_iou_threshold(double t, const char* op) {
  if (!(t > 0.0) || t > 1.0) {
    throw ValidationError(std::string(op) + ": IoU threshold must lie in (0,1], got " + std::to_string(t));
  }
}

inline bool overlaps_any(const Annotation& cand, const AnnotationList& refs, double t, bool class_aware) {
  for (const Annotation& r : refs) {
    if (class_aware && r.category != cand.category) continue;
    if (iou(cand.box, r.box) > t) return true;
  }
  return false;
}

template <typename Keep>
AnnotationSet filter_per_image(const AnnotationSet& candidates, const AnnotationSet& reference, Keep keep) {
  std::vector<const std::pair<const ImageId, AnnotationList>*> entries;
  entries.reserve(candidates.size());
  for (const auto& entry : candidates) entries.push_back(&entry);

  static const AnnotationList kEmpty;
  std::vector<AnnotationList> results(entries.size());
  parallel_for(entries.size(), [&](std::size_t i) {
    const auto& [img, anns] = *entries[i];
    auto it = reference.find(img);
    const AnnotationList& refs = it == reference.end() ? kEmpty : it->second;
    AnnotationList kept;
    for (const Annotation& a : anns) {
      if (keep(a, refs)) kept.push_back(a);
    }
    results[i] = std::move(kept);
  });

  AnnotationSet out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (!results[i].empty()) out.emplace(entries[i]->first, std::move(results[i]));
  }
  return out;
}

}  // namespace detail

/// Removes every candidate that has IoU > t with some reference annotation.
/// Images absent from the reference pass all their candidates through.
inline AnnotationSet subtract(const AnnotationSet& candidates, const AnnotationSet& reference, double t,
                              bool class_aware = false) {
  detail::check_iou_threshold(t, "subtract");
  return detail::filter_per_image(candidates, reference, [&](const Annotation& a, const AnnotationList& refs) {
    return !detail::overlaps_any(a, refs, t, class_aware);
  });
}

/// Keeps every candidate that has IoU > t with at least one reference
/// annotation, with its original score and provenance. An image with no
/// reference annotations preserves nothing.
inline AnnotationSet preserve(const AnnotationSet& candidates, const AnnotationSet& reference, double t,
                              bool class_aware = false) {
  detail::check_iou_threshold(t, "preserve");
  return detail::filter_per_image(candidates, reference, [&](const Annotation& a, const AnnotationList& refs) {
    return detail::overlaps_any(a, refs, t, class_aware);
  });
}

/// Expanding update: keeps the current set and adds those new predictions
/// that do not overlap (IoU > t_e) any existing ground-truth or current
/// annotation. Added annotations are tagged Source::expand and keep the new
/// detector's score. The result is always a superset of `initial`.
inline AnnotationSet expand(const AnnotationSet& initial, const AnnotationSet& new_preds,
                            const AnnotationSet& existing_gt, double t_e, bool class_aware = false) {
  detail::check_iou_threshold(t_e, "expand");
  const AnnotationSet reference = set_union(existing_gt, initial);
  AnnotationSet additions = subtract(new_preds, reference, t_e, class_aware);
  for (auto& [img, anns] : additions) {
    for (Annotation& a : anns) a.source = Source::expand;
  }
  return set_union(initial, additions);
}

/// Shrinking update: keeps only those current annotations confirmed by a new
/// prediction (IoU > t_s), where predictions overlapping existing ground
/// truth are first discarded from the confirming set. The result is always a
/// subset of `current`, with scores and provenance unchanged.
inline AnnotationSet shrink(const AnnotationSet& current, const AnnotationSet& new_preds,
                            const AnnotationSet& existing_gt, double t_s, bool class_aware = false) {
  detail::check_iou_threshold(t_s, "shrink");
  const AnnotationSet confirmers = subtract(new_preds, existing_gt, t_s, class_aware);
  return preserve(current, confirmers, t_s, class_aware);
}

}  // namespace annofuse
