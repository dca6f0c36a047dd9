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
#include <cctype>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "annofuse/annotations.hpp"
#include "annofuse/errors.hpp"
#include "annofuse/rng.hpp"

namespace annofuse {

struct ImageInfo {
  ImageId id;
  std::string file_name;
  double width = 0.0;
  double height = 0.0;
};

struct Category {
  CategoryId id = 0;
  std::string name;
};

/// A detection dataset: image table, category table, and per-image
/// annotations. The label names the dataset in merged outputs and in
/// namespaced image ids.
struct Dataset {
  std::string label;
  std::vector<ImageInfo> images;
  std::vector<Category> categories;
  AnnotationSet annotations;

  const ImageInfo* find_image(const ImageId& id) const {
    for (const ImageInfo& im : images)
      if (im.id == id) return &im;
    return nullptr;
  }

  const Category* find_category(CategoryId id) const {
    for (const Category& c : categories)
      if (c.id == id) return &c;
    return nullptr;
  }

  const Category* find_category(const std::string& name) const {
    for (const Category& c : categories)
      if (c.name == name) return &c;
    return nullptr;
  }

  std::vector<ImageId> image_ids() const {
    std::vector<ImageId> out;
    out.reserve(images.size());
    for (const ImageInfo& im : images) out.push_back(im.id);
    return out;
  }
};

/// Structural checks beyond what Annotation construction enforces: unique
/// ids and names, and no annotation referring to an unknown image or
/// category. Each failure mode gets its own message so CLI users can tell a
/// dangling id from a bad table.
inline void validate(const Dataset& d) {
  std::set<ImageId> image_ids;
  for (const ImageInfo& im : d.images) {
    if (im.id.empty()) throw ValidationError("dataset '" + d.label + "': empty image id");
    if (!image_ids.insert(im.id).second)
      throw ValidationError("dataset '" + d.label + "': duplicate image id '" + im.id + "'");
  }
  std::set<CategoryId> category_ids;
  std::set<std::string> category_names;
  for (const Category& c : d.categories) {
    if (c.name.empty()) throw ValidationError("dataset '" + d.label + "': empty category name");
    if (!category_ids.insert(c.id).second)
      throw ValidationError("dataset '" + d.label + "': duplicate category id " + std::to_string(c.id));
    if (!category_names.insert(c.name).second)
      throw ValidationError("dataset '" + d.label + "': duplicate category name '" + c.name + "'");
  }
  for (const auto& [image, anns] : d.annotations) {
    if (!image_ids.count(image))
      throw ValidationError("dataset '" + d.label + "': annotation refers to unknown image id '" + image + "'");
    for (const Annotation& a : anns) {
      if (!category_ids.count(a.category))
        throw ValidationError("dataset '" + d.label + "': annotation on image '" + image +
                              "' refers to unknown category id " + std::to_string(a.category));
      if (a.score < 0.0 || a.score > 1.0)
        throw ValidationError("dataset '" + d.label + "': annotation score outside [0, 1]");
      if (a.box.width() <= 0.0 || a.box.height() <= 0.0)
        throw ValidationError("dataset '" + d.label + "': annotation box has non-positive area");
    }
  }
}

/// How source-dataset categories map into a merged category table. Merged
/// ids are assigned 1..N in first-appearance order, so the table doubles as
/// the dense index space used by training targets.
struct CategoryMapping {
  std::vector<Category> merged;
  // (dataset label, source category id) -> merged category id
  std::map<std::pair<std::string, CategoryId>, CategoryId> to_merged;

  CategoryId merged_id(const std::string& label, CategoryId source) const {
    auto it = to_merged.find({label, source});
    if (it == to_merged.end())
      throw ValidationError("no merged category for dataset '" + label + "' id " + std::to_string(source));
    return it->second;
  }

  const Category* find_merged(const std::string& name) const {
    for (const Category& c : merged)
      if (c.name == name) return &c;
    return nullptr;
  }
};

namespace detail {

inline std::string lowercase(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

inline std::string apply_alias(const std::string& name, const std::map<std::string, std::string>& aliases) {
  auto it = aliases.find(name);
  return it == aliases.end() ? name : it->second;
}

}  // namespace detail

/// Builds the unified category table for a list of datasets. Names equal
/// after alias substitution share one merged category; names that collide
/// only under case folding are rejected so near-misses surface instead of
/// silently splitting a class.
inline CategoryMapping unify_categories(const std::vector<const Dataset*>& datasets,
                                        const std::map<std::string, std::string>& aliases = {}) {
  CategoryMapping mapping;
  std::map<std::string, CategoryId> by_name;
  std::map<std::string, std::string> by_folded;  // folded name -> canonical spelling
  for (const Dataset* d : datasets) {
    for (const Category& c : d->categories) {
      const std::string name = detail::apply_alias(c.name, aliases);
      const std::string folded = detail::lowercase(name);
      auto fit = by_folded.find(folded);
      if (fit != by_folded.end() && fit->second != name)
        throw ValidationError("category names '" + fit->second + "' and '" + name +
                              "' differ only by case; add an alias to unify or rename");
      by_folded.emplace(folded, name);
      auto it = by_name.find(name);
      CategoryId merged_id;
      if (it == by_name.end()) {
        merged_id = static_cast<CategoryId>(mapping.merged.size()) + 1;
        mapping.merged.push_back({merged_id, name});
        by_name.emplace(name, merged_id);
      } else {
        merged_id = it->second;
      }
      mapping.to_merged[{d->label, c.id}] = merged_id;
    }
  }
  return mapping;
}

/// One input to a merge: a dataset plus annotations generated for it.
/// Generated annotations are keyed by original image ids and already carry
/// merged-space category ids, since they may name categories the source
/// dataset itself lacks.
struct MergePart {
  Dataset dataset;
  AnnotationSet generated;
};

struct MergeResult {
  Dataset dataset;
  CategoryMapping mapping;
};

/// Merges datasets into one: categories unified by name, image ids
/// namespaced as "<label>/<original-id>", ground truth remapped into the
/// merged table and unioned with the generated annotations (exact
/// duplicates on the same image collapse).
inline MergeResult merge_datasets(const std::vector<MergePart>& parts,
                                  const std::map<std::string, std::string>& aliases = {}) {
  if (parts.empty()) throw ValidationError("merge requires at least one dataset");
  std::set<std::string> labels;
  std::vector<const Dataset*> sources;
  for (const MergePart& p : parts) {
    if (p.dataset.label.empty()) throw ValidationError("merge inputs need non-empty dataset labels");
    if (!labels.insert(p.dataset.label).second)
      throw ValidationError("duplicate dataset label '" + p.dataset.label + "' in merge");
    validate(p.dataset);
    sources.push_back(&p.dataset);
  }

  MergeResult out;
  out.mapping = unify_categories(sources, aliases);
  Dataset& merged = out.dataset;
  merged.categories = out.mapping.merged;
  {
    std::string joined;
    for (const MergePart& p : parts) {
      if (!joined.empty()) joined += "+";
      joined += p.dataset.label;
    }
    merged.label = joined;
  }

  const CategoryId max_id = static_cast<CategoryId>(merged.categories.size());
  for (const MergePart& p : parts) {
    const std::string& label = p.dataset.label;
    std::set<ImageId> own_images;
    for (const ImageInfo& im : p.dataset.images) {
      ImageInfo copy = im;
      copy.id = label + "/" + im.id;
      merged.images.push_back(copy);
      own_images.insert(im.id);
    }
    for (const auto& [image, anns] : p.dataset.annotations) {
      AnnotationList& slot = merged.annotations[label + "/" + image];
      for (Annotation a : anns) {
        a.category = out.mapping.merged_id(label, a.category);
        slot.push_back(a);
      }
    }
    for (const auto& [image, anns] : p.generated) {
      if (!own_images.count(image))
        throw ValidationError("generated annotations for '" + label + "' refer to unknown image id '" + image + "'");
      AnnotationList& slot = merged.annotations[label + "/" + image];
      for (const Annotation& a : anns) {
        if (a.category < 1 || a.category > max_id)
          throw ValidationError("generated annotation for '" + label + "' uses category id " +
                                std::to_string(a.category) + " outside the merged table");
        bool duplicate = false;
        for (const Annotation& existing : slot)
          if (detail::same_box_category(existing, a)) {
            duplicate = true;
            break;
          }
        if (!duplicate) slot.push_back(a);
      }
    }
  }
  merged.annotations = normalized(merged.annotations);
  return out;
}

/// Cuts a category-restricted subset out of a dataset: keeps only the named
/// categories, drops images left without annotations, and if more than
/// image_budget images remain samples that many deterministically from the
/// seed. Image and category ids are preserved.
inline Dataset carve_subset(const Dataset& d, const std::vector<std::string>& category_names,
                            std::size_t image_budget, std::uint64_t seed) {
  if (category_names.empty()) throw ValidationError("carve requires at least one category name");
  if (image_budget == 0) throw ValidationError("carve requires a positive image budget");
  std::set<CategoryId> keep;
  Dataset out;
  out.label = d.label;
  for (const std::string& name : category_names) {
    const Category* c = d.find_category(name);
    if (c == nullptr)
      throw ValidationError("dataset '" + d.label + "' has no category named '" + name + "'");
    keep.insert(c->id);
  }
  for (const Category& c : d.categories)
    if (keep.count(c.id)) out.categories.push_back(c);

  std::vector<std::size_t> eligible;  // indices into d.images
  for (std::size_t i = 0; i < d.images.size(); ++i) {
    auto it = d.annotations.find(d.images[i].id);
    if (it == d.annotations.end()) continue;
    bool any = false;
    for (const Annotation& a : it->second)
      if (keep.count(a.category)) {
        any = true;
        break;
      }
    if (any) eligible.push_back(i);
  }

  if (eligible.size() > image_budget) {
    // Fisher-Yates over the eligible list, then keep the first image_budget
    // entries in original dataset order.
    Rng rng(mix64(seed, fnv1a64(d.label)));
    for (std::size_t i = eligible.size() - 1; i > 0; --i) {
      const std::size_t j = static_cast<std::size_t>(rng.below(i + 1));
      std::swap(eligible[i], eligible[j]);
    }
    eligible.resize(image_budget);
    std::sort(eligible.begin(), eligible.end());
  }

  for (std::size_t i : eligible) {
    const ImageInfo& im = d.images[i];
    out.images.push_back(im);
    const AnnotationList& anns = d.annotations.at(im.id);
    AnnotationList kept;
    for (const Annotation& a : anns)
      if (keep.count(a.category)) kept.push_back(a);
    if (!kept.empty()) out.annotations.emplace(im.id, std::move(kept));
  }
  return out;
}

}  // namespace annofuse
