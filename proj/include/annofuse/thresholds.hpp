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

#include <algorithm>
#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "annofuse/annotations.hpp"
#include "annofuse/errors.hpp"
#include "annofuse/metrics.hpp"

namespace annofuse {

/// Per-category confidence thresholds with a fallback for unseen categories.
struct ThresholdTable {
  std::map<CategoryId, double> per_category;
  double default_threshold = 0.01;

  double threshold_for(CategoryId cat) const {
    auto it = per_category.find(cat);
    return it == per_category.end() ? default_threshold : it->second;
  }
};

/// Keeps annotations whose score is strictly above their category threshold.
inline AnnotationSet filter_confidence(const AnnotationSet& dets, const ThresholdTable& table) {
  AnnotationSet out;
  for (const auto& [img, anns] : dets) {
    AnnotationList kept;
    for (const Annotation& a : anns) {
      if (a.score > table.threshold_for(a.category)) kept.push_back(a);
    }
    if (!kept.empty()) out.emplace(img, std::move(kept));
  }
  return out;
}

/// Uniform-threshold convenience.
inline AnnotationSet filter_confidence(const AnnotationSet& dets, double threshold) {
  ThresholdTable table;
  table.default_threshold = threshold;
  return filter_confidence(dets, table);
}

struct AdaptiveThresholdResult {
  ThresholdTable table;
  /// Categories that fell back to the default threshold: no detections to
  /// search over, or no ground truth to score against.
  std::vector<CategoryId> fell_back;
};

namespace detail {

/// F1 of the detections at or above `cut` against the category's ground
/// truth. The candidate's own detections count as kept here; the ties go to
/// the boundary so that each observed score names one achievable operating
/// point.
inline double f1_at_candidate(const AnnotationSet& dets, const AnnotationSet& gt, double cut, double match_iou) {
  AnnotationSet kept;
  for (const auto& [img, anns] : dets) {
    AnnotationList filtered;
    for (const Annotation& a : anns) {
      if (a.score >= cut) filtered.push_back(a);
    }
    if (!filtered.empty()) kept.emplace(img, std::move(filtered));
  }
  const MatchReport report = match_tp_fp(kept, gt, match_iou);
  // Single division over integer counts: cuts with equal rational F1 compare
  // equal as doubles, so the ascending sweep really does keep the lowest.
  const long denom = 2 * report.tp + report.fp + report.fn;
  if (denom <= 0) return 0.0;
  return 2.0 * static_cast<double>(report.tp) / static_cast<double>(denom);
}

}  // namespace detail

/// Chooses, per category, the confidence threshold whose filtered detection
/// set maximizes F1 on the validation pair. Candidates are the distinct
/// observed scores of the category; ties resolve to the lowest candidate.
/// Categories with no detections (or no ground truth) keep the default and
/// are listed in `fell_back`.
inline AdaptiveThresholdResult adaptive_thresholds(const AnnotationSet& val_dets, const AnnotationSet& val_gt,
                                                   double match_iou, double default_threshold = 0.01) {
  AdaptiveThresholdResult result;
  result.table.default_threshold = default_threshold;

  std::set<CategoryId> cats = categories_of(val_gt);
  const std::set<CategoryId> det_cats = categories_of(val_dets);
  cats.insert(det_cats.begin(), det_cats.end());

  for (CategoryId cat : cats) {
    const std::set<CategoryId> only{cat};
    const AnnotationSet dets_c = restrict_to_categories(val_dets, only);
    const AnnotationSet gt_c = restrict_to_categories(val_gt, only);
    if (total_annotations(dets_c) == 0 || total_annotations(gt_c) == 0) {
      result.table.per_category[cat] = default_threshold;
      result.fell_back.push_back(cat);
      continue;
    }
    std::set<double> candidates;
    for (const auto& [img, anns] : dets_c) {
      for (const Annotation& a : anns) candidates.insert(a.score);
    }
    double best_cut = default_threshold;
    double best_f1 = -1.0;
    for (double cut : candidates) {  // ascending, so ties keep the lowest
      const double f1 = detail::f1_at_candidate(dets_c, gt_c, cut, match_iou);
      if (f1 > best_f1) {
        best_f1 = f1;
        best_cut = cut;
      }
    }
    result.table.per_category[cat] = best_cut;
  }
  return result;
}

/// Classification target vector, length K+1 with background at index 0.
using TargetVector = std::vector<double>;

/// Soft target for a pseudo-annotation of category j with confidence s:
/// background gets 1-s, category j gets s, everything else 0.
inline TargetVector soft_target(int category_j, double score, int num_categories) {
  if (category_j < 1 || category_j > num_categories) {
    throw ValidationError("soft_target: category index " + std::to_string(category_j) + " out of [1, " +
                          std::to_string(num_categories) + "]");
  }
  if (score < 0.0 || score > 1.0) {
    throw ValidationError("soft_target: score out of [0,1]: " + std::to_string(score));
  }
  TargetVector y(static_cast<std::size_t>(num_categories) + 1, 0.0);
  y[0] = 1.0 - score;
  y[static_cast<std::size_t>(category_j)] = score;
  return y;
}

/// One-hot target at category j; identical to soft_target with score 1.
inline TargetVector hard_target(int category_j, int num_categories) {
  return soft_target(category_j, 1.0, num_categories);
}

}  // namespace annofuse
