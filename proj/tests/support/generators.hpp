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

#include <cmath>
#include <cstdio>
#include <set>
#include <string>
#include <vector>

#include "annofuse/dataset.hpp"
#include "annofuse/rng.hpp"

namespace testgen {

using annofuse::Annotation;
using annofuse::AnnotationList;
using annofuse::AnnotationSet;
using annofuse::Box;
using annofuse::Category;
using annofuse::CategoryId;
using annofuse::Dataset;
using annofuse::ImageId;
using annofuse::ImageInfo;
using annofuse::Rng;

/// Coordinates are quantized to eighths: dyadic values round-trip exactly
/// through the (x, y, w, h) arithmetic of the COCO boundary.
inline double eighths(double v) { return std::round(v * 8.0) / 8.0; }

inline Box random_box(Rng& rng, double extent = 100.0, double min_size = 2.0, double max_size = 30.0) {
  const double w = eighths(rng.uniform(min_size, max_size));
  const double h = eighths(rng.uniform(min_size, max_size));
  const double x = eighths(rng.uniform(0.0, extent - w));
  const double y = eighths(rng.uniform(0.0, extent - h));
  return Box(x, y, x + w, y + h);
}

inline AnnotationList random_list(Rng& rng, int count, int num_categories) {
  AnnotationList out;
  for (int i = 0; i < count; ++i) {
    const CategoryId cat = static_cast<CategoryId>(rng.below(static_cast<std::uint64_t>(num_categories))) + 1;
    out.push_back(Annotation(random_box(rng), cat, rng.next_unit(), annofuse::Source::initial));
  }
  return out;
}

inline AnnotationSet random_set(Rng& rng, int num_images, int max_per_image, int num_categories) {
  AnnotationSet out;
  for (int i = 0; i < num_images; ++i) {
    const int count = static_cast<int>(rng.below(static_cast<std::uint64_t>(max_per_image) + 1));
    if (count == 0) continue;
    char name[16];
    std::snprintf(name, sizeof(name), "img_%03d", i);
    out.emplace(name, random_list(rng, count, num_categories));
  }
  return out;
}

inline std::string padded(const char* prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%04d", prefix, i);
  return buf;
}

/// Random but always-valid dataset for I/O round-trip checks: some string
/// and some numeric image ids, scores across the range, mixed provenance.
inline Dataset random_dataset(Rng& rng, int num_images, int num_categories, int max_per_image) {
  Dataset d;
  d.label = "gen";
  for (int c = 1; c <= num_categories; ++c) d.categories.push_back({c, padded("cat_", c)});
  for (int i = 0; i < num_images; ++i) {
    ImageInfo im;
    im.id = (i % 3 == 0) ? std::to_string(1000 + i) : padded("frame_", i);
    im.file_name = padded("img_", i) + ".jpg";
    im.width = 640.0;
    im.height = 480.0;
    d.images.push_back(im);
  }
  static const annofuse::Source kSources[] = {annofuse::Source::ground_truth, annofuse::Source::initial,
                                              annofuse::Source::expand, annofuse::Source::preserved};
  for (const ImageInfo& im : d.images) {
    const int count = static_cast<int>(rng.below(static_cast<std::uint64_t>(max_per_image) + 1));
    AnnotationList anns;
    for (int k = 0; k < count; ++k) {
      const CategoryId cat = static_cast<CategoryId>(rng.below(static_cast<std::uint64_t>(num_categories))) + 1;
      const annofuse::Source src = kSources[rng.below(4)];
      const double score = src == annofuse::Source::ground_truth ? 1.0 : rng.next_unit();
      anns.push_back(Annotation(random_box(rng, 400.0), cat, score, src));
    }
    if (!anns.empty()) d.annotations.emplace(im.id, std::move(anns));
  }
  return d;
}

/// A dataset pair for pipeline scenarios: `visible` carries labels for the
/// `own` categories only, `truth` carries labels for every category in the
/// table. Boxes are placed in distinct grid cells with an inset, so all
/// ground-truth boxes in an image are pairwise disjoint (IoU exactly 0).
struct Scene {
  Dataset visible;
  Dataset truth;
};

inline Scene make_scene(const std::string& label, int images, const std::vector<Category>& table,
                        const std::set<CategoryId>& own, int per_category_per_image, std::uint64_t seed) {
  constexpr double kWidth = 640.0;
  constexpr double kHeight = 480.0;
  constexpr int kCols = 8;
  constexpr int kRows = 6;
  constexpr double kCell = 80.0;
  const int total = static_cast<int>(table.size()) * per_category_per_image;
  if (total > kCols * kRows) throw std::runtime_error("scene: too many boxes per image for the grid");

  Scene scene;
  scene.truth.label = label + "-truth";
  scene.truth.categories = table;
  scene.visible.label = label;
  for (const Category& c : table)
    if (own.count(c.id)) scene.visible.categories.push_back(c);

  Rng rng(annofuse::mix64(seed, annofuse::fnv1a64(label)));
  for (int i = 0; i < images; ++i) {
    const ImageId id = padded("img_", i);
    ImageInfo im;
    im.id = id;
    im.file_name = id + ".jpg";
    im.width = kWidth;
    im.height = kHeight;
    scene.truth.images.push_back(im);
    scene.visible.images.push_back(im);

    std::vector<int> cells(kCols * kRows);
    for (int c = 0; c < kCols * kRows; ++c) cells[static_cast<std::size_t>(c)] = c;
    for (std::size_t k = cells.size() - 1; k > 0; --k) {
      const std::size_t j = static_cast<std::size_t>(rng.below(k + 1));
      std::swap(cells[k], cells[j]);
    }

    AnnotationList all;
    int next_cell = 0;
    for (const Category& cat : table) {
      for (int k = 0; k < per_category_per_image; ++k) {
        const int cell = cells[static_cast<std::size_t>(next_cell++)];
        const double cx = static_cast<double>(cell % kCols) * kCell;
        const double cy = static_cast<double>(cell / kCols) * kCell;
        const double size = eighths(rng.uniform(24.0, 60.0));
        const double x = eighths(cx + rng.uniform(8.0, kCell - 8.0 - size));
        const double y = eighths(cy + rng.uniform(8.0, kCell - 8.0 - size));
        all.push_back(Annotation(Box(x, y, x + size, y + size), cat.id, 1.0, annofuse::Source::ground_truth));
      }
    }
    scene.truth.annotations.emplace(id, all);
    AnnotationList visible;
    for (const Annotation& a : all)
      if (own.count(a.category)) visible.push_back(a);
    if (!visible.empty()) scene.visible.annotations.emplace(id, std::move(visible));
  }
  return scene;
}

}  // namespace testgen
