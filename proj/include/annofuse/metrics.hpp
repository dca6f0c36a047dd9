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
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "annofuse/annotations.hpp"
#include "annofuse/errors.hpp"

namespace annofuse {

// Detection evaluation: greedy class-aware TP/FP matching, precision/recall
// and their relative deltas, all-point interpolated AP, and TP/FP score
// histograms.

/// Outcome of one detection after matching. matched_gt is the index of the
/// matched ground-truth annotation within its image's list, or -1 for a FP.
struct DetectionOutcome {
  ImageId image;
  CategoryId category = 0;
  double score = 0.0;
  bool is_tp = false;
  int matched_gt = -1;
};

struct CategoryCounts {
  long tp = 0;
  long fp = 0;
  long fn = 0;
  long gt_total = 0;
};

struct MatchReport {
  double match_iou = 0.5;
  /// Ordered by image id, then category, then descending score.
  std::vector<DetectionOutcome> detections;
  std::map<CategoryId, CategoryCounts> per_category;
  long tp = 0;
  long fp = 0;
  long fn = 0;
};

/// Greedy matching: per image and category, detections in descending score
/// order claim the unmatched ground-truth box of highest IoU >= match_iou.
/// Each ground-truth box is matched at most once; leftovers count as FN.
/// Ties in score break by input order, ties in IoU by gt input order.
inline MatchReport match_tp_fp(const AnnotationSet& dets, const AnnotationSet& gt, double match_iou) {
  if (!(match_iou > 0.0) || match_iou > 1.0) {
    throw ValidationError("match_tp_fp: match IoU must lie in (0,1], got " + std::to_string(match_iou));
  }
  MatchReport report;
  report.match_iou = match_iou;

  std::set<ImageId> images;
  for (const auto& [img, anns] : dets) images.insert(img);
  for (const auto& [img, anns] : gt) images.insert(img);

  static const AnnotationList kEmpty;
  for (const ImageId& img : images) {
    auto dit = dets.find(img);
    auto git = gt.find(img);
    const AnnotationList& dlist = dit == dets.end() ? kEmpty : dit->second;
    const AnnotationList& glist = git == gt.end() ? kEmpty : git->second;

    std::set<CategoryId> cats;
    for (const Annotation& a : dlist) cats.insert(a.category);
    for (const Annotation& a : glist) cats.insert(a.category);

    for (CategoryId cat : cats) {
      std::vector<std::size_t> det_idx;
      for (std::size_t i = 0; i < dlist.size(); ++i) {
        if (dlist[i].category == cat) det_idx.push_back(i);
      }
      std::stable_sort(det_idx.begin(), det_idx.end(),
                       [&](std::size_t a, std::size_t b) { return dlist[a].score > dlist[b].score; });

      std::vector<std::size_t> gt_idx;
      for (std::size_t i = 0; i < glist.size(); ++i) {
        if (glist[i].category == cat) gt_idx.push_back(i);
      }

      CategoryCounts& counts = report.per_category[cat];
      counts.gt_total += static_cast<long>(gt_idx.size());

      std::vector<bool> gt_used(glist.size(), false);
      for (std::size_t di : det_idx) {
        double best_iou = 0.0;
        int best_gt = -1;
        for (std::size_t gi : gt_idx) {
          if (gt_used[gi]) continue;
          const double v = iou(dlist[di].box, glist[gi].box);
          if (v > best_iou) {
            best_iou = v;
            best_gt = static_cast<int>(gi);
          }
        }
        DetectionOutcome outcome;
        outcome.image = img;
        outcome.category = cat;
        outcome.score = dlist[di].score;
        if (best_gt >= 0 && best_iou >= match_iou) {
          gt_used[static_cast<std::size_t>(best_gt)] = true;
          outcome.is_tp = true;
          outcome.matched_gt = best_gt;
          ++counts.tp;
          ++report.tp;
        } else {
          ++counts.fp;
          ++report.fp;
        }
        report.detections.push_back(std::move(outcome));
      }
      for (std::size_t gi : gt_idx) {
        if (!gt_used[gi]) {
          ++counts.fn;
          ++report.fn;
        }
      }
    }
  }
  return report;
}

/// Precision is 1.0 by convention when there are no detections (flagged via
/// by_convention); recall is undefined when there is no ground truth.
struct PrecisionRecall {
  double precision = 1.0;
  bool precision_by_convention = false;
  std::optional<double> recall;
};

inline PrecisionRecall precision_recall(const MatchReport& report) {
  PrecisionRecall pr;
  const long det_total = report.tp + report.fp;
  if (det_total == 0) {
    pr.precision = 1.0;
    pr.precision_by_convention = true;
  } else {
    pr.precision = static_cast<double>(report.tp) / static_cast<double>(det_total);
  }
  const long gt_total = report.tp + report.fn;
  if (gt_total > 0) {
    pr.recall = static_cast<double>(report.tp) / static_cast<double>(gt_total);
  }
  return pr;
}

/// Relative change of recall and precision, in percent. A component is left
/// unset when the old value is zero or undefined.
struct PRDelta {
  std::optional<double> delta_recall_pct;
  std::optional<double> delta_precision_pct;
  PrecisionRecall old_pr;
  PrecisionRecall new_pr;
};

inline PRDelta delta_pr(const AnnotationSet& new_set, const AnnotationSet& old_set, const AnnotationSet& true_gt,
                        double match_iou) {
  PRDelta delta;
  delta.old_pr = precision_recall(match_tp_fp(old_set, true_gt, match_iou));
  delta.new_pr = precision_recall(match_tp_fp(new_set, true_gt, match_iou));
  if (!delta.old_pr.precision_by_convention && delta.old_pr.precision > 0.0) {
    delta.delta_precision_pct = 100.0 * (delta.new_pr.precision - delta.old_pr.precision) / delta.old_pr.precision;
  }
  if (delta.old_pr.recall.has_value() && *delta.old_pr.recall > 0.0 && delta.new_pr.recall.has_value()) {
    delta.delta_recall_pct = 100.0 * (*delta.new_pr.recall - *delta.old_pr.recall) / *delta.old_pr.recall;
  }
  return delta;
}

/// All-point interpolated average precision: the area under the precision
/// envelope of the score-ranked PR curve. Intended for the annotations of a
/// single category; matching is class-aware either way.
inline double average_precision(const AnnotationSet& dets, const AnnotationSet& gt, double match_iou) {
  const MatchReport report = match_tp_fp(dets, gt, match_iou);
  const long gt_total = report.tp + report.fn;
  if (gt_total == 0) {
    throw ValidationError("average_precision: ground truth is empty");
  }
  if (report.detections.empty()) return 0.0;

  std::vector<const DetectionOutcome*> ranked;
  ranked.reserve(report.detections.size());
  for (const DetectionOutcome& d : report.detections) ranked.push_back(&d);
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const DetectionOutcome* a, const DetectionOutcome* b) { return a->score > b->score; });

  const std::size_t n = ranked.size();
  std::vector<double> precision(n), recall(n);
  long cum_tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (ranked[i]->is_tp) ++cum_tp;
    precision[i] = static_cast<double>(cum_tp) / static_cast<double>(i + 1);
    recall[i] = static_cast<double>(cum_tp) / static_cast<double>(gt_total);
  }
  // Precision envelope: max precision at any rank at or beyond i.
  for (std::size_t i = n - 1; i > 0; --i) {
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return ap;
}

struct HistogramBin {
  double low = 0.0;
  double high = 0.0;
  long tp = 0;
  long fp = 0;
};

using Histogram = std::vector<HistogramBin>;

/// Uniform bins over [0,1]; each matched detection is counted once in its
/// score bin under its TP/FP label. Scores of exactly 1.0 land in the last
/// bin. Bin sums conserve the report's total TP and FP counts.
inline Histogram score_histogram(const MatchReport& report, int bins) {
  if (bins < 1) {
    throw ValidationError("score_histogram: bin count must be >= 1, got " + std::to_string(bins));
  }
  Histogram hist(static_cast<std::size_t>(bins));
  for (int b = 0; b < bins; ++b) {
    hist[b].low = static_cast<double>(b) / bins;
    hist[b].high = static_cast<double>(b + 1) / bins;
  }
  for (const DetectionOutcome& d : report.detections) {
    int b = static_cast<int>(d.score * bins);
    b = std::clamp(b, 0, bins - 1);
    if (d.is_tp) {
      ++hist[b].tp;
    } else {
      ++hist[b].fp;
    }
  }
  return hist;
}

/// Fraction of true positives with score strictly above score_cut.
/// Unset when the report holds no TP at all.
inline std::optional<double> fraction_above(const MatchReport& report, double score_cut) {
  long tp_total = 0;
  long above = 0;
  for (const DetectionOutcome& d : report.detections) {
    if (!d.is_tp) continue;
    ++tp_total;
    if (d.score > score_cut) ++above;
  }
  if (tp_total == 0) return std::nullopt;
  return static_cast<double>(above) / static_cast<double>(tp_total);
}

struct CategoryEval {
  CategoryId id = 0;
  std::optional<double> ap;  // unset when the category has no ground truth
  double precision = 1.0;
  bool precision_by_convention = false;
  std::optional<double> recall;
  long tp = 0;
  long fp = 0;
  long fn = 0;
};

/// Full evaluation product: per-category AP rows, mAP over categories present
/// in the ground truth, aggregate precision/recall, and the score histogram.
struct EvalReport {
  double match_iou = 0.5;
  std::optional<double> map;
  std::vector<CategoryEval> categories;      // sorted by category id
  std::vector<CategoryId> excluded_no_gt;    // present in detections, absent from gt
  PrecisionRecall aggregate;
  Histogram histogram;
};

inline EvalReport evaluate(const AnnotationSet& dets, const AnnotationSet& gt, double match_iou, int bins = 20) {
  EvalReport report;
  report.match_iou = match_iou;

  const MatchReport matches = match_tp_fp(dets, gt, match_iou);
  report.aggregate = precision_recall(matches);
  report.histogram = score_histogram(matches, bins);

  double ap_sum = 0.0;
  std::size_t ap_count = 0;
  for (const auto& [cat, counts] : matches.per_category) {
    CategoryEval row;
    row.id = cat;
    row.tp = counts.tp;
    row.fp = counts.fp;
    row.fn = counts.fn;
    const long det_total = counts.tp + counts.fp;
    if (det_total == 0) {
      row.precision = 1.0;
      row.precision_by_convention = true;
    } else {
      row.precision = static_cast<double>(counts.tp) / static_cast<double>(det_total);
    }
    if (counts.gt_total > 0) {
      row.recall = static_cast<double>(counts.tp) / static_cast<double>(counts.gt_total);
      const std::set<CategoryId> only{cat};
      row.ap = average_precision(restrict_to_categories(dets, only), restrict_to_categories(gt, only), match_iou);
      ap_sum += *row.ap;
      ++ap_count;
    } else {
      report.excluded_no_gt.push_back(cat);
    }
    report.categories.push_back(std::move(row));
  }
  if (ap_count > 0) report.map = ap_sum / static_cast<double>(ap_count);
  return report;
}

}  // namespace annofuse
