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
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "annofuse/errors.hpp"
#include "annofuse/geometry.hpp"

namespace annofuse {

using CategoryId = int;
using ImageId = std::string;

/// Where an annotation came from. Ground truth is hand-labeled; the other
/// tags track which pipeline step produced a pseudo-annotation.
enum class Source { ground_truth, initial, expand, preserved };

inline const char* to_string(Source s) {
  switch (s) {
    case Source::ground_truth: return "ground_truth";
    case Source::initial: return "initial";
    case Source::expand: return "expand";
    case Source::preserved: return "preserved";
  }
  return "unknown";
}

inline Source source_from_string(const std::string& s) {
  if (s == "ground_truth") return Source::ground_truth;
  if (s == "initial") return Source::initial;
  if (s == "expand") return Source::expand;
  if (s == "preserved") return Source::preserved;
  throw ValidationError("unknown annotation source tag: '" + s + "'");
}

/// One box + category + confidence. Ground-truth annotations carry score 1.
struct Annotation {
  Box box;
  CategoryId category = 0;
  double score = 1.0;
  Source source = Source::ground_truth;

  Annotation() = default;
  Annotation(Box b, CategoryId cat, double s, Source src) : box(b), category(cat), score(s), source(src) {
    if (score < 0.0 || score > 1.0) {
      throw ValidationError("annotation score out of [0,1]: " + std::to_string(score));
    }
    if (box.area() <= 0.0) {
      throw ValidationError("annotation box has non-positive area");
    }
  }

  friend bool operator==(const Annotation& a, const Annotation& b) = default;
};

using AnnotationList = std::vector<Annotation>;

/// Per-image realization of an annotation set symbol: image id -> annotations.
/// std::map keeps iteration order deterministic.
using AnnotationSet = std::map<ImageId, AnnotationList>;

inline std::size_t total_annotations(const AnnotationSet& s) {
  std::size_t n = 0;
  for (const auto& [id, anns] : s) n += anns.size();
  return n;
}

/// Drops images whose list is empty; two sets with the same contents then
/// compare equal regardless of how many empty entries they accumulated.
inline AnnotationSet normalized(AnnotationSet s) {
  for (auto it = s.begin(); it != s.end();) {
    it = it->second.empty() ? s.erase(it) : std::next(it);
  }
  return s;
}

namespace detail {

inline auto ann_sort_key(const Annotation& a) {
  return std::make_tuple(a.category, a.box.x1, a.box.y1, a.box.x2, a.box.y2, a.score,
                         static_cast<int>(a.source));
}

inline bool same_box_category(const Annotation& a, const Annotation& b) {
  return a.category == b.category && a.box == b.box;
}

}  // namespace detail

/// Order-insensitive multiset equality of two annotation sets.
inline bool same_contents(const AnnotationSet& a, const AnnotationSet& b) {
  const AnnotationSet na = normalized(a);
  const AnnotationSet nb = normalized(b);
  if (na.size() != nb.size()) return false;
  auto ita = na.begin();
  auto itb = nb.begin();
  for (; ita != na.end(); ++ita, ++itb) {
    if (ita->first != itb->first) return false;
    AnnotationList la = ita->second;
    AnnotationList lb = itb->second;
    if (la.size() != lb.size()) return false;
    auto by_key = [](const Annotation& x, const Annotation& y) {
      return detail::ann_sort_key(x) < detail::ann_sort_key(y);
    };
    std::sort(la.begin(), la.end(), by_key);
    std::sort(lb.begin(), lb.end(), by_key);
    if (la != lb) return false;
  }
  return true;
}

/// True when every annotation of `inner` appears in `outer` (multiset-wise).
inline bool is_subset_of(const AnnotationSet& inner, const AnnotationSet& outer) {
  for (const auto& [img, anns] : inner) {
    auto it = outer.find(img);
    if (it == outer.end()) {
      if (!anns.empty()) return false;
      continue;
    }
    std::vector<bool> used(it->second.size(), false);
    for (const Annotation& a : anns) {
      bool found = false;
      for (std::size_t i = 0; i < it->second.size(); ++i) {
        if (!used[i] && it->second[i] == a) {
          used[i] = true;
          found = true;
          break;
        }
      }
      if (!found) return false;
    }
  }
  return true;
}

/// Appends `extra` to `base` image by image, skipping annotations whose
/// (box, category) pair is already present. First occurrence wins, which
/// keeps union idempotent and the no-duplicate invariant intact.
inline AnnotationSet set_union(const AnnotationSet& base, const AnnotationSet& extra) {
  AnnotationSet out = base;
  for (const auto& [img, anns] : extra) {
    AnnotationList& dst = out[img];
    for (const Annotation& a : anns) {
      const bool dup = std::any_of(dst.begin(), dst.end(), [&](const Annotation& e) {
        return detail::same_box_category(e, a);
      });
      if (!dup) dst.push_back(a);
    }
  }
  return normalized(out);
}

/// Keeps only annotations whose category is in `cats`.
inline AnnotationSet restrict_to_categories(const AnnotationSet& s, const std::set<CategoryId>& cats) {
  AnnotationSet out;
  for (const auto& [img, anns] : s) {
    AnnotationList kept;
    for (const Annotation& a : anns) {
      if (cats.count(a.category) > 0) kept.push_back(a);
    }
    if (!kept.empty()) out.emplace(img, std::move(kept));
  }
  return out;
}

inline std::set<CategoryId> categories_of(const AnnotationSet& s) {
  std::set<CategoryId> cats;
  for (const auto& [img, anns] : s) {
    for (const Annotation& a : anns) cats.insert(a.category);
  }
  return cats;
}

/// Greedy non-maximum suppression in descending score order. A kept box
/// suppresses any remaining box with IoU strictly above `iou_threshold`;
/// with `per_class` only boxes of the same category interact. Score ties
/// break by input order, so the result is deterministic. Output is in
/// descending score order.
inline AnnotationList nms(const AnnotationList& dets, double iou_threshold, bool per_class) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });

  AnnotationList kept;
  kept.reserve(dets.size());
  for (std::size_t idx : order) {
    const Annotation& cand = dets[idx];
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Annotation& k) {
      if (per_class && k.category != cand.category) return false;
      return iou(k.box, cand.box) > iou_threshold;
    });
    if (!suppressed) kept.push_back(cand);
  }
  return kept;
}

/// Per-image NMS over a whole set.
inline AnnotationSet nms(const AnnotationSet& dets, double iou_threshold, bool per_class) {
  AnnotationSet out;
  for (const auto& [img, anns] : dets) {
    AnnotationList kept = nms(anns, iou_threshold, per_class);
    if (!kept.empty()) out.emplace(img, std::move(kept));
  }
  return out;
}

}  // namespace annofuse
