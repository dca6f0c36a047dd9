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
#include <cmath>
#include <set>
#include <vector>

#include <nlohmann/json.hpp>

#include "annofuse/dataset.hpp"
#include "annofuse/errors.hpp"
#include "annofuse/rng.hpp"

namespace annofuse {

struct ScoreDistribution {
  double alpha = 2.0;
  double beta = 2.0;
};

/// Error model for a synthetic detector. Misses are independent per object,
/// false positives arrive Poisson per image with log-uniform sizes, scores
/// come from Beta distributions, and box corners get Gaussian jitter
/// relative to box size.
struct DetectorProfile {
  double miss_rate = 0.0;
  double fp_per_image = 0.0;
  ScoreDistribution tp_score{3.8, 2.2};
  ScoreDistribution fp_score{1.5, 3.5};
  double localization_jitter = 0.05;
  std::uint64_t seed = 0;
};

/// Confident detector: finds most objects, scores them high (Beta mode near
/// 0.7), and hallucinates relatively many false boxes.
inline DetectorProfile hard_profile(std::uint64_t seed = 0) {
  DetectorProfile p;
  p.miss_rate = 0.15;
  p.fp_per_image = 2.0;
  p.tp_score = {3.8, 2.2};
  p.fp_score = {1.5, 3.5};
  p.localization_jitter = 0.05;
  p.seed = seed;
  return p;
}

/// Hesitant detector: misses more, scores everything low (Beta mode near
/// 0.15), and produces few false boxes.
inline DetectorProfile soft_profile(std::uint64_t seed = 0) {
  DetectorProfile p;
  p.miss_rate = 0.25;
  p.fp_per_image = 0.5;
  p.tp_score = {5.5, 26.5};
  p.fp_score = {1.2, 6.0};
  p.localization_jitter = 0.05;
  p.seed = seed;
  return p;
}

namespace detail {

inline void check_profile(const DetectorProfile& p) {
  if (p.miss_rate < 0.0 || p.miss_rate > 1.0) throw ValidationError("miss_rate must lie in [0, 1]");
  if (p.fp_per_image < 0.0) throw ValidationError("fp_per_image must be non-negative");
  if (p.tp_score.alpha <= 0.0 || p.tp_score.beta <= 0.0 || p.fp_score.alpha <= 0.0 || p.fp_score.beta <= 0.0)
    throw ValidationError("score distribution shape parameters must be positive");
  if (p.localization_jitter < 0.0) throw ValidationError("localization_jitter must be non-negative");
}

inline Box jitter_box(const Box& box, double jitter, double width, double height, Rng& rng) {
  // Draw order is fixed (x1, y1, x2, y2) so seeded runs reproduce exactly.
  const double dx1 = rng.normal() * jitter * box.width();
  const double dy1 = rng.normal() * jitter * box.height();
  const double dx2 = rng.normal() * jitter * box.width();
  const double dy2 = rng.normal() * jitter * box.height();
  double x1 = std::clamp(box.x1 + dx1, 0.0, width);
  double y1 = std::clamp(box.y1 + dy1, 0.0, height);
  double x2 = std::clamp(box.x2 + dx2, 0.0, width);
  double y2 = std::clamp(box.y2 + dy2, 0.0, height);
  if (x2 - x1 <= 0.0 || y2 - y1 <= 0.0) {
    // Degenerate after clipping; fall back to the source box clipped to the
    // image so the detection stays usable.
    x1 = std::clamp(box.x1, 0.0, width);
    y1 = std::clamp(box.y1, 0.0, height);
    x2 = std::clamp(box.x2, 0.0, width);
    y2 = std::clamp(box.y2, 0.0, height);
  }
  return Box(x1, y1, x2, y2);
}

}  // namespace detail

/// Runs the synthetic detector over the listed images of a ground-truth
/// dataset, emitting detections only for the given categories. Each image
/// draws from its own seed stream derived from (profile.seed, image id), so
/// output is independent of image order and of which subset is requested.
inline AnnotationSet simulate_detector(const Dataset& truth, const std::set<CategoryId>& categories,
                                       const DetectorProfile& profile, const std::vector<ImageId>& images) {
  detail::check_profile(profile);
  if (categories.empty()) throw ValidationError("simulated detector needs a non-empty category set");
  const std::vector<CategoryId> category_list(categories.begin(), categories.end());
  AnnotationSet out;
  for (const ImageId& id : images) {
    const ImageInfo* info = truth.find_image(id);
    if (info == nullptr) throw ValidationError("simulation requested for unknown image id '" + id + "'");
    if (info->width <= 0.0 || info->height <= 0.0)
      throw ValidationError("image '" + id + "' needs positive width and height for simulation");
    Rng rng(mix64(profile.seed, fnv1a64(id)));
    AnnotationList dets;

    if (auto it = truth.annotations.find(id); it != truth.annotations.end()) {
      for (const Annotation& gt : it->second) {
        if (!categories.count(gt.category)) continue;
        if (rng.bernoulli(profile.miss_rate)) continue;
        const Box box = detail::jitter_box(gt.box, profile.localization_jitter, info->width, info->height, rng);
        if (box.width() <= 0.0 || box.height() <= 0.0) continue;
        const double score = rng.beta(profile.tp_score.alpha, profile.tp_score.beta);
        dets.push_back(Annotation(box, gt.category, score, Source::initial));
      }
    }

    const int fp_count = rng.poisson(profile.fp_per_image);
    const double min_dim = std::min(info->width, info->height);
    const double size_lo = 0.05 * min_dim;
    const double size_hi = 0.40 * min_dim;
    for (int k = 0; k < fp_count; ++k) {
      const double w = std::exp(rng.uniform(std::log(size_lo), std::log(size_hi)));
      const double h = std::exp(rng.uniform(std::log(size_lo), std::log(size_hi)));
      const double x1 = rng.uniform(0.0, info->width - w);
      const double y1 = rng.uniform(0.0, info->height - h);
      const double score = rng.beta(profile.fp_score.alpha, profile.fp_score.beta);
      const CategoryId category = category_list[static_cast<std::size_t>(rng.below(category_list.size()))];
      dets.push_back(Annotation(Box(x1, y1, x1 + w, y1 + h), category, score, Source::initial));
    }
    if (!dets.empty()) out.emplace(id, std::move(dets));
  }
  return out;
}

inline AnnotationSet simulate_detector(const Dataset& truth, const std::set<CategoryId>& categories,
                                       const DetectorProfile& profile) {
  return simulate_detector(truth, categories, profile, truth.image_ids());
}

/// Profile from JSON: an optional "preset" ("hard" or "soft") supplies the
/// base values, explicit fields override. Unknown keys are rejected so
/// typos do not silently fall back to defaults.
inline DetectorProfile profile_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("detector profile must be a JSON object");
  DetectorProfile p;
  if (auto it = j.find("preset"); it != j.end()) {
    if (!it->is_string()) throw ConfigError("profile 'preset' must be a string");
    const std::string preset = it->get<std::string>();
    if (preset == "hard")
      p = hard_profile();
    else if (preset == "soft")
      p = soft_profile();
    else
      throw ConfigError("unknown detector preset '" + preset + "' (expected 'hard' or 'soft')");
  }
  static const std::set<std::string> known = {"preset",        "miss_rate",           "fp_per_image", "tp_score",
                                             "fp_score",      "localization_jitter", "seed"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) throw ConfigError("unknown detector profile key '" + it.key() + "'");
  auto read_dist = [&](const char* key, ScoreDistribution& dist) {
    auto it = j.find(key);
    if (it == j.end()) return;
    if (!it->is_object() || !it->contains("alpha") || !it->contains("beta"))
      throw ConfigError(std::string("profile '") + key + "' must be {\"alpha\": ..., \"beta\": ...}");
    dist.alpha = (*it)["alpha"].get<double>();
    dist.beta = (*it)["beta"].get<double>();
  };
  if (auto it = j.find("miss_rate"); it != j.end()) p.miss_rate = it->get<double>();
  if (auto it = j.find("fp_per_image"); it != j.end()) p.fp_per_image = it->get<double>();
  read_dist("tp_score", p.tp_score);
  read_dist("fp_score", p.fp_score);
  if (auto it = j.find("localization_jitter"); it != j.end()) p.localization_jitter = it->get<double>();
  if (auto it = j.find("seed"); it != j.end()) p.seed = it->get<std::uint64_t>();
  try {
    detail::check_profile(p);
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("invalid detector profile: ") + e.what());
  }
  return p;
}

inline nlohmann::json profile_to_json(const DetectorProfile& p) {
  nlohmann::json j;
  j["miss_rate"] = p.miss_rate;
  j["fp_per_image"] = p.fp_per_image;
  j["tp_score"] = {{"alpha", p.tp_score.alpha}, {"beta", p.tp_score.beta}};
  j["fp_score"] = {{"alpha", p.fp_score.alpha}, {"beta", p.fp_score.beta}};
  j["localization_jitter"] = p.localization_jitter;
  j["seed"] = p.seed;
  return j;
}

}  // namespace annofuse
