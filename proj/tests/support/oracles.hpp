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

// Reference implementations used only by tests. Everything here is written
// straight from the operation definitions, favoring the dumbest possible
// O(n^2) form so results can be trusted independently of the library code.

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "annofuse/annotations.hpp"
#include "annofuse/dataset.hpp"

namespace testref {

using annofuse::Annotation;
using annofuse::AnnotationList;
using annofuse::AnnotationSet;
using annofuse::CategoryId;
using annofuse::ImageId;

inline double iou_ref(const annofuse::Box& a, const annofuse::Box& b) {
  const double ix = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double iy = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = ix * iy;
  const double uni = (a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

inline bool class_match(const Annotation& a, const Annotation& b, bool class_aware) {
  return !class_aware || a.category == b.category;
}

inline AnnotationList nms_list_ref(const AnnotationList& dets, double threshold, bool per_class) {
  std::vector<bool> gone(dets.size(), false);
  AnnotationList keep;
  for (;;) {
    int best = -1;
    for (std::size_t i = 0; i < dets.size(); ++i) {
      if (gone[i]) continue;
      if (best < 0 || dets[i].score > dets[static_cast<std::size_t>(best)].score)
        best = static_cast<int>(i);
    }
    if (best < 0) break;
    const std::size_t b = static_cast<std::size_t>(best);
    gone[b] = true;
    keep.push_back(dets[b]);
    for (std::size_t i = 0; i < dets.size(); ++i) {
      if (gone[i]) continue;
      if (per_class && dets[i].category != dets[b].category) continue;
      if (iou_ref(dets[i].box, dets[b].box) > threshold) gone[i] = true;
    }
  }
  return keep;
}

inline AnnotationSet nms_ref(const AnnotationSet& dets, double threshold, bool per_class) {
  AnnotationSet out;
  for (const auto& [image, anns] : dets) {
    AnnotationList kept = nms_list_ref(anns, threshold, per_class);
    if (!kept.empty()) out.emplace(image, std::move(kept));
  }
  return out;
}

inline AnnotationSet subtract_ref(const AnnotationSet& candidates, const AnnotationSet& reference,
                                  double threshold, bool class_aware) {
  AnnotationSet out;
  for (const auto& [image, anns] : candidates) {
    AnnotationList kept;
    auto ref = reference.find(image);
    for (const Annotation& a : anns) {
      bool removed = false;
      if (ref != reference.end())
        for (const Annotation& r : ref->second)
          if (class_match(a, r, class_aware) && iou_ref(a.box, r.box) > threshold) {
            removed = true;
            break;
          }
      if (!removed) kept.push_back(a);
    }
    if (!kept.empty()) out.emplace(image, std::move(kept));
  }
  return out;
}

inline AnnotationSet preserve_ref(const AnnotationSet& candidates, const AnnotationSet& reference,
                                  double threshold, bool class_aware) {
  AnnotationSet out;
  for (const auto& [image, anns] : candidates) {
    AnnotationList kept;
    auto ref = reference.find(image);
    for (const Annotation& a : anns) {
      bool confirmed = false;
      if (ref != reference.end())
        for (const Annotation& r : ref->second)
          if (class_match(a, r, class_aware) && iou_ref(a.box, r.box) > threshold) {
            confirmed = true;
            break;
          }
      if (confirmed) kept.push_back(a);
    }
    if (!kept.empty()) out.emplace(image, std::move(kept));
  }
  return out;
}

inline bool same_box_cat(const Annotation& a, const Annotation& b) {
  return a.category == b.category && a.box.x1 == b.box.x1 && a.box.y1 == b.box.y1 && a.box.x2 == b.box.x2 &&
         a.box.y2 == b.box.y2;
}

inline AnnotationSet expand_ref(const AnnotationSet& initial, const AnnotationSet& preds,
                                const AnnotationSet& gt, double threshold, bool class_aware) {
  // Additions: predictions far (by IoU) from every existing box, whether
  // human annotation or current machine annotation.
  AnnotationSet out = initial;
  for (const auto& [image, anns] : preds) {
    for (const Annotation& p : anns) {
      bool blocked = false;
      auto g = gt.find(image);
      if (g != gt.end())
        for (const Annotation& r : g->second)
          if (class_match(p, r, class_aware) && iou_ref(p.box, r.box) > threshold) {
            blocked = true;
            break;
          }
      auto i = initial.find(image);
      if (!blocked && i != initial.end())
        for (const Annotation& r : i->second)
          if (class_match(p, r, class_aware) && iou_ref(p.box, r.box) > threshold) {
            blocked = true;
            break;
          }
      if (blocked) continue;
      Annotation added = p;
      added.source = annofuse::Source::expand;
      AnnotationList& slot = out[image];
      bool duplicate = false;
      for (const Annotation& e : slot)
        if (same_box_cat(e, added)) {
          duplicate = true;
          break;
        }
      if (!duplicate) slot.push_back(added);
    }
  }
  for (auto it = out.begin(); it != out.end();)
    it = it->second.empty() ? out.erase(it) : std::next(it);
  return out;
}

inline AnnotationSet shrink_ref(const AnnotationSet& current, const AnnotationSet& preds,
                                const AnnotationSet& gt, double threshold, bool class_aware) {
  const AnnotationSet confirmers = subtract_ref(preds, gt, threshold, class_aware);
  return preserve_ref(current, confirmers, threshold, class_aware);
}

struct MatchCountsRef {
  long tp = 0;
  long fp = 0;
  long fn = 0;
};

/// Independent greedy matcher: per image and category, detections by
/// descending score claim the unmatched ground-truth box of highest IoU at
/// or above the threshold.
inline MatchCountsRef match_ref(const AnnotationSet& dets, const AnnotationSet& gt, double match_iou) {
  MatchCountsRef counts;
  std::set<ImageId> images;
  for (const auto& [image, anns] : dets) images.insert(image);
  for (const auto& [image, anns] : gt) images.insert(image);
  for (const ImageId& image : images) {
    std::map<CategoryId, std::vector<const Annotation*>> det_by_cat;
    std::map<CategoryId, std::vector<const Annotation*>> gt_by_cat;
    if (auto it = dets.find(image); it != dets.end())
      for (const Annotation& a : it->second) det_by_cat[a.category].push_back(&a);
    if (auto it = gt.find(image); it != gt.end())
      for (const Annotation& a : it->second) gt_by_cat[a.category].push_back(&a);
    std::set<CategoryId> cats;
    for (const auto& [c, v] : det_by_cat) cats.insert(c);
    for (const auto& [c, v] : gt_by_cat) cats.insert(c);
    for (CategoryId cat : cats) {
      std::vector<const Annotation*> ds = det_by_cat[cat];
      std::stable_sort(ds.begin(), ds.end(),
                       [](const Annotation* a, const Annotation* b) { return a->score > b->score; });
      const std::vector<const Annotation*>& gs = gt_by_cat[cat];
      std::vector<bool> claimed(gs.size(), false);
      for (const Annotation* d : ds) {
        int best = -1;
        double best_iou = 0.0;
        for (std::size_t k = 0; k < gs.size(); ++k) {
          if (claimed[k]) continue;
          const double v = iou_ref(d->box, gs[k]->box);
          if (v >= match_iou && v > best_iou) {
            best_iou = v;
            best = static_cast<int>(k);
          }
        }
        if (best >= 0) {
          claimed[static_cast<std::size_t>(best)] = true;
          ++counts.tp;
        } else {
          ++counts.fp;
        }
      }
      for (bool c : claimed)
        if (!c) ++counts.fn;
    }
  }
  return counts;
}

inline double f1_ref(const AnnotationSet& dets, const AnnotationSet& gt, double cut, double match_iou) {
  AnnotationSet filtered;
  for (const auto& [image, anns] : dets) {
    AnnotationList kept;
    for (const Annotation& a : anns)
      if (a.score >= cut) kept.push_back(a);
    if (!kept.empty()) filtered.emplace(image, std::move(kept));
  }
  const MatchCountsRef m = match_ref(filtered, gt, match_iou);
  const double denom = static_cast<double>(2 * m.tp + m.fp + m.fn);
  if (denom <= 0.0) return 0.0;
  return 2.0 * static_cast<double>(m.tp) / denom;
}

/// Exhaustive best-F1 threshold: try every distinct observed score as the
/// keep-at-or-above cut, lowest cut wins ties; no scores means fall back.
inline double best_threshold_ref(const AnnotationSet& dets, const AnnotationSet& gt, double match_iou,
                                 double fallback) {
  std::set<double> candidates;
  for (const auto& [image, anns] : dets)
    for (const Annotation& a : anns) candidates.insert(a.score);
  if (candidates.empty()) return fallback;
  double best_cut = 0.0;
  double best_f1 = -1.0;
  for (double cut : candidates) {
    const double f1 = f1_ref(dets, gt, cut, match_iou);
    if (f1 > best_f1) {
      best_f1 = f1;
      best_cut = cut;
    }
  }
  return best_cut;
}

/// Average precision from first principles: rank all detections by
/// descending score, mark TP/FP with the greedy matcher semantics, then sum
/// recall steps times the best precision at or past each rank. Assumes
/// distinct scores (generators guarantee that).
inline double ap_ref(const AnnotationSet& dets, const AnnotationSet& gt, double match_iou) {
  long gt_total = 0;
  for (const auto& [image, anns] : gt) gt_total += static_cast<long>(anns.size());

  struct Ranked {
    double score;
    ImageId image;
    std::size_t index;  // position within its image list
  };
  std::vector<Ranked> ranked;
  for (const auto& [image, anns] : dets)
    for (std::size_t i = 0; i < anns.size(); ++i) ranked.push_back({anns[i].score, image, i});
  std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) { return a.score > b.score; });
  if (ranked.empty()) return 0.0;

  // Replay the greedy matching per image and category to label each ranked
  // detection. Claim order within a (image, category) group follows score,
  // which matches the global rank order when scores are distinct.
  std::map<ImageId, std::vector<bool>> claimed;
  for (const auto& [image, anns] : gt) claimed[image] = std::vector<bool>(anns.size(), false);
  std::vector<bool> is_tp(ranked.size(), false);
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    const Annotation& d = dets.at(ranked[r].image)[ranked[r].index];
    auto g = gt.find(ranked[r].image);
    if (g == gt.end()) continue;
    int best = -1;
    double best_iou = 0.0;
    for (std::size_t k = 0; k < g->second.size(); ++k) {
      if (claimed[ranked[r].image][k]) continue;
      if (g->second[k].category != d.category) continue;
      const double v = iou_ref(d.box, g->second[k].box);
      if (v >= match_iou && v > best_iou) {
        best_iou = v;
        best = static_cast<int>(k);
      }
    }
    if (best >= 0) {
      claimed[ranked[r].image][static_cast<std::size_t>(best)] = true;
      is_tp[r] = true;
    }
  }

  std::vector<double> precision(ranked.size());
  std::vector<double> recall(ranked.size());
  long tp = 0;
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    if (is_tp[r]) ++tp;
    precision[r] = static_cast<double>(tp) / static_cast<double>(r + 1);
    recall[r] = gt_total > 0 ? static_cast<double>(tp) / static_cast<double>(gt_total) : 0.0;
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    double best_later = 0.0;
    for (std::size_t j = r; j < ranked.size(); ++j) best_later = std::max(best_later, precision[j]);
    ap += (recall[r] - prev_recall) * best_later;
    prev_recall = recall[r];
  }
  return ap;
}

}  // namespace testref
