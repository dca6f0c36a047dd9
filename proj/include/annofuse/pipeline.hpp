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

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "annofuse/coco_io.hpp"
#include "annofuse/dataset.hpp"
#include "annofuse/errors.hpp"
#include "annofuse/manifest.hpp"
#include "annofuse/metrics.hpp"
#include "annofuse/oracle.hpp"
#include "annofuse/report_io.hpp"
#include "annofuse/set_ops.hpp"
#include "annofuse/simulator.hpp"
#include "annofuse/thresholds.hpp"

namespace annofuse {

enum class Mechanism { self_annotated, cross_annotated };
enum class Sequence { expand_then_shrink, shrink_then_expand };
enum class ThresholdMode { fixed, adaptive };

inline const char* to_string(Mechanism m) {
  return m == Mechanism::self_annotated ? "self_annotated" : "cross_annotated";
}

inline const char* to_string(Sequence s) {
  return s == Sequence::expand_then_shrink ? "expand_then_shrink" : "shrink_then_expand";
}

inline const char* to_string(ThresholdMode m) { return m == ThresholdMode::fixed ? "fixed" : "adaptive"; }

inline Mechanism mechanism_from_string(const std::string& s) {
  if (s == "self_annotated") return Mechanism::self_annotated;
  if (s == "cross_annotated") return Mechanism::cross_annotated;
  throw ConfigError("unknown mechanism '" + s + "' (expected 'self_annotated' or 'cross_annotated')");
}

inline Sequence sequence_from_string(const std::string& s) {
  if (s == "expand_then_shrink") return Sequence::expand_then_shrink;
  if (s == "shrink_then_expand") return Sequence::shrink_then_expand;
  throw ConfigError("unknown sequence '" + s + "' (expected 'expand_then_shrink' or 'shrink_then_expand')");
}

inline ThresholdMode threshold_mode_from_string(const std::string& s) {
  if (s == "fixed") return ThresholdMode::fixed;
  if (s == "adaptive") return ThresholdMode::adaptive;
  throw ConfigError("unknown threshold mode '" + s + "' (expected 'fixed' or 'adaptive')");
}

/// How a stage binding obtains detections: a results file, the synthetic
/// detector, or ground truth passthrough.
enum class DetectorKind { file, simulator, truth };

struct DetectorConfig {
  DetectorKind kind = DetectorKind::simulator;
  std::string path;                       // file kind
  nlohmann::json profile;                 // simulator kind, raw JSON
  bool explicit_seed = false;             // profile carried its own seed
  std::vector<std::string> categories;    // optional explicit range, by name
  std::string val_detections;             // adaptive validation pair (file kind)
  std::string val_ground_truth;
};

struct StageBinding {
  std::string target;
  std::string source;  // optional; names the dataset the detector was built from
  DetectorConfig detector;
};

struct DatasetRef {
  std::string label;
  std::string path;
  std::string truth;  // optional reference annotations for simulation and reports
};

struct PipelineConfig {
  Mechanism mechanism = Mechanism::cross_annotated;
  Sequence sequence = Sequence::expand_then_shrink;
  double expand_iou = 0.7;
  double shrink_iou = 0.5;
  double nms_iou = 0.6;
  double match_iou = 0.5;
  ThresholdMode threshold_mode = ThresholdMode::fixed;
  double default_threshold = 0.01;
  bool class_aware = false;
  int histogram_bins = 20;
  std::uint64_t seed = 0;
  bool record_timings = false;
  std::map<std::string, std::string> aliases;
  std::vector<DatasetRef> datasets;
  std::vector<StageBinding> initial;
  std::vector<StageBinding> expand_bindings;
  std::vector<StageBinding> shrink_bindings;
};

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) throw ConfigError("unknown key '" + it.key() + "' in " + where);
}

inline DetectorConfig detector_from_json(const nlohmann::json& j, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": 'detector' must be an object");
  check_keys(j, {"kind", "path", "profile", "categories", "validation"}, where + ".detector");
  DetectorConfig d;
  auto kind_it = j.find("kind");
  if (kind_it == j.end() || !kind_it->is_string()) throw ConfigError(where + ": detector needs a 'kind' string");
  const std::string kind = kind_it->get<std::string>();
  if (kind == "file")
    d.kind = DetectorKind::file;
  else if (kind == "simulator")
    d.kind = DetectorKind::simulator;
  else if (kind == "truth")
    d.kind = DetectorKind::truth;
  else
    throw ConfigError(where + ": unknown detector kind '" + kind + "'");

  if (auto it = j.find("path"); it != j.end()) {
    if (!it->is_string()) throw ConfigError(where + ": detector 'path' must be a string");
    d.path = it->get<std::string>();
  }
  if (auto it = j.find("profile"); it != j.end()) {
    if (!it->is_object()) throw ConfigError(where + ": detector 'profile' must be an object");
    d.profile = *it;
    d.explicit_seed = it->contains("seed");
  }
  if (auto it = j.find("categories"); it != j.end()) {
    if (!it->is_array()) throw ConfigError(where + ": detector 'categories' must be an array of names");
    for (const nlohmann::json& v : *it) {
      if (!v.is_string()) throw ConfigError(where + ": detector 'categories' must be an array of names");
      d.categories.push_back(v.get<std::string>());
    }
  }
  if (auto it = j.find("validation"); it != j.end()) {
    if (!it->is_object() || !it->contains("detections") || !it->contains("ground_truth"))
      throw ConfigError(where + ": 'validation' must be {\"detections\": ..., \"ground_truth\": ...}");
    d.val_detections = (*it)["detections"].get<std::string>();
    d.val_ground_truth = (*it)["ground_truth"].get<std::string>();
  }

  if (d.kind == DetectorKind::file && d.path.empty())
    throw ConfigError(where + ": file detector needs a 'path'");
  if (d.kind == DetectorKind::simulator && d.profile.is_null())
    throw ConfigError(where + ": simulator detector needs a 'profile'");
  return d;
}

inline nlohmann::json detector_to_json(const DetectorConfig& d) {
  nlohmann::json j;
  switch (d.kind) {
    case DetectorKind::file: j["kind"] = "file"; break;
    case DetectorKind::simulator: j["kind"] = "simulator"; break;
    case DetectorKind::truth: j["kind"] = "truth"; break;
  }
  if (!d.path.empty()) j["path"] = d.path;
  if (!d.profile.is_null()) j["profile"] = d.profile;
  if (!d.categories.empty()) j["categories"] = d.categories;
  if (!d.val_detections.empty())
    j["validation"] = {{"detections", d.val_detections}, {"ground_truth", d.val_ground_truth}};
  return j;
}

inline std::vector<StageBinding> bindings_from_json(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError("'" + where + "' must be an array of stage bindings");
  std::vector<StageBinding> out;
  for (const nlohmann::json& rec : j) {
    if (!rec.is_object()) throw ConfigError(where + ": bindings must be objects");
    check_keys(rec, {"target", "source", "detector"}, where + " binding");
    StageBinding b;
    auto target = rec.find("target");
    if (target == rec.end() || !target->is_string()) throw ConfigError(where + ": binding needs a 'target' label");
    b.target = target->get<std::string>();
    if (auto it = rec.find("source"); it != rec.end()) {
      if (!it->is_string()) throw ConfigError(where + ": binding 'source' must be a string");
      b.source = it->get<std::string>();
    }
    auto det = rec.find("detector");
    if (det == rec.end()) throw ConfigError(where + ": binding needs a 'detector'");
    b.detector = detector_from_json(*det, where);
    out.push_back(std::move(b));
  }
  return out;
}

inline nlohmann::json bindings_to_json(const std::vector<StageBinding>& bindings) {
  nlohmann::json j = nlohmann::json::array();
  for (const StageBinding& b : bindings) {
    nlohmann::json rec;
    rec["target"] = b.target;
    if (!b.source.empty()) rec["source"] = b.source;
    rec["detector"] = detector_to_json(b.detector);
    j.push_back(std::move(rec));
  }
  return j;
}

}  // namespace detail

inline PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("pipeline config must be a JSON object");
  detail::check_keys(j,
                     {"mechanism", "sequence", "t_e", "t_s", "nms_iou", "match_iou", "threshold",
                      "class_aware", "histogram_bins", "seed", "record_timings", "aliases", "datasets", "initial",
                      "expand", "shrink"},
                     "pipeline config");
  PipelineConfig cfg;
  if (auto it = j.find("mechanism"); it != j.end()) cfg.mechanism = mechanism_from_string(it->get<std::string>());
  if (auto it = j.find("sequence"); it != j.end()) cfg.sequence = sequence_from_string(it->get<std::string>());
  if (auto it = j.find("t_e"); it != j.end()) cfg.expand_iou = it->get<double>();
  if (auto it = j.find("t_s"); it != j.end()) cfg.shrink_iou = it->get<double>();
  if (auto it = j.find("nms_iou"); it != j.end()) cfg.nms_iou = it->get<double>();
  if (auto it = j.find("match_iou"); it != j.end()) cfg.match_iou = it->get<double>();
  if (auto it = j.find("threshold"); it != j.end()) {
    if (!it->is_object()) throw ConfigError("'threshold' must be an object");
    detail::check_keys(*it, {"mode", "t_c"}, "threshold");
    if (auto m = it->find("mode"); m != it->end())
      cfg.threshold_mode = threshold_mode_from_string(m->get<std::string>());
    if (auto d = it->find("t_c"); d != it->end()) cfg.default_threshold = d->get<double>();
  }
  if (auto it = j.find("class_aware"); it != j.end()) cfg.class_aware = it->get<bool>();
  if (auto it = j.find("histogram_bins"); it != j.end()) cfg.histogram_bins = it->get<int>();
  if (auto it = j.find("seed"); it != j.end()) cfg.seed = it->get<std::uint64_t>();
  if (auto it = j.find("record_timings"); it != j.end()) cfg.record_timings = it->get<bool>();
  if (auto it = j.find("aliases"); it != j.end()) {
    if (!it->is_object()) throw ConfigError("'aliases' must be an object of name -> canonical name");
    for (auto a = it->begin(); a != it->end(); ++a) {
      if (!a.value().is_string()) throw ConfigError("'aliases' values must be strings");
      cfg.aliases[a.key()] = a.value().get<std::string>();
    }
  }
  auto datasets = j.find("datasets");
  if (datasets == j.end() || !datasets->is_array())
    throw ConfigError("pipeline config needs a 'datasets' array");
  for (const nlohmann::json& rec : *datasets) {
    if (!rec.is_object()) throw ConfigError("'datasets' entries must be objects");
    detail::check_keys(rec, {"label", "path", "truth"}, "dataset entry");
    DatasetRef ref;
    auto label = rec.find("label");
    auto path = rec.find("path");
    if (label == rec.end() || !label->is_string() || path == rec.end() || !path->is_string())
      throw ConfigError("'datasets' entries need 'label' and 'path' strings");
    ref.label = label->get<std::string>();
    ref.path = path->get<std::string>();
    if (auto t = rec.find("truth"); t != rec.end()) {
      if (!t->is_string()) throw ConfigError("dataset 'truth' must be a string path");
      ref.truth = t->get<std::string>();
    }
    cfg.datasets.push_back(std::move(ref));
  }
  if (auto it = j.find("initial"); it != j.end()) cfg.initial = detail::bindings_from_json(*it, "initial");
  if (auto it = j.find("expand"); it != j.end()) cfg.expand_bindings = detail::bindings_from_json(*it, "expand");
  if (auto it = j.find("shrink"); it != j.end()) cfg.shrink_bindings = detail::bindings_from_json(*it, "shrink");
  return cfg;
}

inline nlohmann::json pipeline_config_to_json(const PipelineConfig& cfg) {
  nlohmann::json j;
  j["mechanism"] = to_string(cfg.mechanism);
  j["sequence"] = to_string(cfg.sequence);
  j["t_e"] = cfg.expand_iou;
  j["t_s"] = cfg.shrink_iou;
  j["nms_iou"] = cfg.nms_iou;
  j["match_iou"] = cfg.match_iou;
  j["threshold"] = {{"mode", to_string(cfg.threshold_mode)}, {"t_c", cfg.default_threshold}};
  j["class_aware"] = cfg.class_aware;
  j["histogram_bins"] = cfg.histogram_bins;
  j["seed"] = cfg.seed;
  j["record_timings"] = cfg.record_timings;
  if (!cfg.aliases.empty()) {
    nlohmann::json a = nlohmann::json::object();
    for (const auto& [name, canonical] : cfg.aliases) a[name] = canonical;
    j["aliases"] = std::move(a);
  }
  j["datasets"] = nlohmann::json::array();
  for (const DatasetRef& ref : cfg.datasets) {
    nlohmann::json rec = {{"label", ref.label}, {"path", ref.path}};
    if (!ref.truth.empty()) rec["truth"] = ref.truth;
    j["datasets"].push_back(std::move(rec));
  }
  j["initial"] = detail::bindings_to_json(cfg.initial);
  j["expand"] = detail::bindings_to_json(cfg.expand_bindings);
  j["shrink"] = detail::bindings_to_json(cfg.shrink_bindings);
  return j;
}

inline PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = read_json_file(path);
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
  return pipeline_config_from_json(j);
}

inline void validate(const PipelineConfig& cfg) {
  auto in_unit = [](double v) { return v > 0.0 && v <= 1.0; };
  if (!in_unit(cfg.expand_iou)) throw ConfigError("expand_iou must lie in (0, 1]");
  if (!in_unit(cfg.shrink_iou)) throw ConfigError("shrink_iou must lie in (0, 1]");
  if (!in_unit(cfg.nms_iou)) throw ConfigError("nms_iou must lie in (0, 1]");
  if (!in_unit(cfg.match_iou)) throw ConfigError("match_iou must lie in (0, 1]");
  if (cfg.default_threshold < 0.0 || cfg.default_threshold >= 1.0)
    throw ConfigError("threshold default must lie in [0, 1)");
  if (cfg.histogram_bins < 1) throw ConfigError("histogram_bins must be >= 1");
  if (cfg.datasets.empty()) throw ConfigError("pipeline needs at least one dataset");
  std::set<std::string> labels;
  for (const DatasetRef& ref : cfg.datasets) {
    if (ref.label.empty()) throw ConfigError("dataset labels must be non-empty");
    if (!labels.insert(ref.label).second) throw ConfigError("duplicate dataset label '" + ref.label + "'");
    if (ref.path.empty()) throw ConfigError("dataset '" + ref.label + "' needs a path");
  }
  if (cfg.initial.empty()) throw ConfigError("pipeline needs at least one initial-stage binding");
  auto check_bindings = [&](const std::vector<StageBinding>& bindings, const char* stage) {
    for (const StageBinding& b : bindings) {
      if (!labels.count(b.target))
        throw ConfigError(std::string(stage) + " binding targets unknown dataset '" + b.target + "'");
      if (!b.source.empty() && !labels.count(b.source))
        throw ConfigError(std::string(stage) + " binding names unknown source dataset '" + b.source + "'");
      if (cfg.threshold_mode == ThresholdMode::adaptive) {
        if (b.detector.kind == DetectorKind::file && b.detector.val_detections.empty())
          throw ConfigError(std::string(stage) + " binding for '" + b.target +
                            "': adaptive thresholds need a 'validation' pair for file detectors");
        if (b.detector.kind == DetectorKind::simulator && b.source.empty())
          throw ConfigError(std::string(stage) + " binding for '" + b.target +
                            "': adaptive thresholds need a 'source' dataset for simulator detectors");
      }
    }
  };
  check_bindings(cfg.initial, "initial");
  check_bindings(cfg.expand_bindings, "expand");
  check_bindings(cfg.shrink_bindings, "shrink");
}

/// The shared filter applied to every detector's raw output before it
/// enters the set algebra: per-category confidence cut, then per-class
/// suppression of overlapping boxes, then tagging as machine annotations.
inline AnnotationSet run_initial_labeling(const AnnotationSet& raw, const ThresholdTable& thresholds,
                                          double nms_iou) {
  AnnotationSet kept = nms(filter_confidence(raw, thresholds), nms_iou, /*per_class=*/true);
  for (auto& [image, anns] : kept)
    for (Annotation& a : anns) a.source = Source::initial;
  return kept;
}

struct SequenceOutcome {
  AnnotationSet after_first;
  AnnotationSet after_second;
};

/// Applies the configured two-step revision to an initial annotation set,
/// given already-filtered prediction sets for each step.
inline SequenceOutcome apply_sequence(const AnnotationSet& initial, const AnnotationSet& first_preds,
                                      const AnnotationSet& second_preds, const AnnotationSet& gt,
                                      const PipelineConfig& cfg) {
  SequenceOutcome out;
  if (cfg.sequence == Sequence::expand_then_shrink) {
    out.after_first = expand(initial, first_preds, gt, cfg.expand_iou, cfg.class_aware);
    out.after_second = shrink(out.after_first, second_preds, gt, cfg.shrink_iou, cfg.class_aware);
  } else {
    out.after_first = shrink(initial, first_preds, gt, cfg.shrink_iou, cfg.class_aware);
    out.after_second = expand(out.after_first, second_preds, gt, cfg.expand_iou, cfg.class_aware);
  }
  return out;
}

struct StageRecord {
  int index = 0;
  std::string name;  // "initial", "expand" or "shrink"
  std::map<std::string, AnnotationSet> predictions;  // filtered detector output per target
  std::map<std::string, AnnotationSet> annotations;  // machine annotations after this stage
  std::map<std::string, EvalReport> quality;         // vs truth, when available
  std::map<std::string, PRDelta> delta_vs_initial;   // stages after the first
  std::map<std::string, PRDelta> delta_vs_previous;
};

struct PipelineResult {
  PipelineConfig config;
  std::vector<std::string> notes;
  CategoryMapping mapping;
  std::vector<std::string> labels;                       // config order
  std::map<std::string, Dataset> inputs;                 // as loaded
  std::map<std::string, AnnotationSet> gt_merged;        // ground truth in merged category ids
  std::map<std::string, AnnotationSet> truth_merged;     // reference annotations, merged ids
  std::map<std::string, std::set<CategoryId>> missing;   // merged ids absent from each dataset
  std::map<std::string, ThresholdTable> tables;          // effective per-target thresholds
  std::map<std::string, std::vector<std::string>> fallback_categories;  // adaptive fallbacks, by name
  std::vector<StageRecord> stages;
  MergeResult merged;  // final merged dataset
};

namespace detail {

struct PipelineContext {
  const PipelineConfig* cfg = nullptr;
  std::filesystem::path base_dir;
  PipelineResult* result = nullptr;
  std::map<std::string, std::string> input_files;  // display path -> digest
};

inline std::filesystem::path resolve_path(const PipelineContext& ctx, const std::string& path) {
  std::filesystem::path p(path);
  return p.is_absolute() ? p : ctx.base_dir / p;
}

inline std::filesystem::path record_input(PipelineContext& ctx, const std::string& path) {
  const std::filesystem::path resolved = resolve_path(ctx, path);
  ctx.input_files[path] = digest_file(resolved);
  return resolved;
}

/// Translates a dataset's category ids into merged ids by name, honoring
/// the configured aliases. Used for truth files, whose tables may differ
/// from the training datasets'.
inline std::map<CategoryId, CategoryId> name_translation(const Dataset& d, const CategoryMapping& mapping,
                                                         const std::map<std::string, std::string>& aliases) {
  std::map<CategoryId, CategoryId> translate;
  for (const Category& c : d.categories) {
    const Category* m = mapping.find_merged(apply_alias(c.name, aliases));
    if (m == nullptr)
      throw ValidationError("dataset '" + d.label + "' category '" + c.name +
                            "' does not appear in the merged category table");
    translate[c.id] = m->id;
  }
  return translate;
}

inline AnnotationSet remap_categories(const AnnotationSet& set, const std::map<CategoryId, CategoryId>& translate,
                                      const std::string& what) {
  AnnotationSet out;
  for (const auto& [image, anns] : set) {
    AnnotationList mapped;
    for (Annotation a : anns) {
      auto it = translate.find(a.category);
      if (it == translate.end())
        throw ValidationError(what + ": category id " + std::to_string(a.category) + " has no translation");
      a.category = it->second;
      mapped.push_back(a);
    }
    out.emplace(image, std::move(mapped));
  }
  return out;
}

/// The binding's category range: the target's missing categories, narrowed
/// to what the source dataset can know about and to any explicit list.
inline std::set<CategoryId> binding_range(const PipelineContext& ctx, const StageBinding& b,
                                          const std::string& stage) {
  const PipelineResult& r = *ctx.result;
  std::set<CategoryId> range = r.missing.at(b.target);
  if (!b.source.empty()) {
    std::set<CategoryId> source_cats;
    for (const Category& c : r.inputs.at(b.source).categories)
      source_cats.insert(r.mapping.merged_id(b.source, c.id));
    std::set<CategoryId> narrowed;
    for (CategoryId id : range)
      if (source_cats.count(id)) narrowed.insert(id);
    range = std::move(narrowed);
  }
  if (!b.detector.categories.empty()) {
    std::set<CategoryId> wanted;
    for (const std::string& name : b.detector.categories) {
      const Category* c = r.mapping.find_merged(apply_alias(name, ctx.cfg->aliases));
      if (c == nullptr)
        throw ConfigError(stage + " binding for '" + b.target + "': category '" + name +
                          "' is not in the merged table");
      wanted.insert(c->id);
    }
    std::set<CategoryId> narrowed;
    for (CategoryId id : range)
      if (wanted.count(id)) narrowed.insert(id);
    range = std::move(narrowed);
  }
  if (range.empty())
    throw ConfigError(stage + " binding for '" + b.target + "' resolves to an empty category range");
  return range;
}

/// Dataset view used as simulation substrate: the images of `images_from`
/// with merged-space annotations attached.
inline Dataset merged_space_view(const Dataset& images_from, const CategoryMapping& mapping,
                                 AnnotationSet annotations) {
  Dataset d;
  d.label = images_from.label;
  d.images = images_from.images;
  d.categories = mapping.merged;
  d.annotations = std::move(annotations);
  return d;
}

inline std::uint64_t binding_seed(const PipelineContext& ctx, const StageBinding& b, const std::string& stage) {
  return mix64(ctx.cfg->seed, fnv1a64(stage + "|" + b.target + "|" + b.source));
}

inline std::unique_ptr<DetectorOracle> build_oracle(PipelineContext& ctx, const StageBinding& b,
                                                    const std::string& stage) {
  PipelineResult& r = *ctx.result;
  OracleDescriptor desc;
  desc.name = stage + ":" + b.target + (b.source.empty() ? "" : "<-" + b.source);
  desc.categories = binding_range(ctx, b, stage);

  switch (b.detector.kind) {
    case DetectorKind::file: {
      AnnotationSet dets = load_detections(record_input(ctx, b.detector.path));
      if (!b.source.empty()) {
        // A detector built from `source` speaks that dataset's category ids.
        std::map<CategoryId, CategoryId> translate;
        for (const Category& c : r.inputs.at(b.source).categories)
          translate[c.id] = r.mapping.merged_id(b.source, c.id);
        dets = remap_categories(dets, translate, "detections file '" + b.detector.path + "'");
      }
      return std::make_unique<FileOracle>(std::move(desc), std::move(dets));
    }
    case DetectorKind::simulator: {
      const DatasetRef* ref = nullptr;
      for (const DatasetRef& cand : ctx.cfg->datasets)
        if (cand.label == b.target) ref = &cand;
      if (ref == nullptr || ref->truth.empty())
        throw ConfigError(stage + " binding for '" + b.target +
                          "': simulator detectors need a 'truth' file on the target dataset");
      DetectorProfile profile = profile_from_json(b.detector.profile);
      if (!b.detector.explicit_seed) profile.seed = binding_seed(ctx, b, stage);
      Dataset substrate = merged_space_view(r.inputs.at(b.target), r.mapping, r.truth_merged.at(b.target));
      return std::make_unique<SimulatorOracle>(std::move(desc), std::move(substrate), profile);
    }
    case DetectorKind::truth: {
      const DatasetRef* ref = nullptr;
      for (const DatasetRef& cand : ctx.cfg->datasets)
        if (cand.label == b.target) ref = &cand;
      if (ref == nullptr || ref->truth.empty())
        throw ConfigError(stage + " binding for '" + b.target +
                          "': truth detectors need a 'truth' file on the target dataset");
      Dataset substrate = merged_space_view(r.inputs.at(b.target), r.mapping, r.truth_merged.at(b.target));
      return std::make_unique<GroundTruthOracle>(std::move(desc), std::move(substrate));
    }
  }
  throw ConfigError("unreachable detector kind");
}

/// Per-binding confidence table. Fixed mode is a flat default; adaptive
/// mode tunes per-category cuts on validation data appropriate to the
/// detector kind.
inline ThresholdTable binding_thresholds(PipelineContext& ctx, const StageBinding& b, const std::string& stage,
                                         const std::set<CategoryId>& range) {
  PipelineResult& r = *ctx.result;
  ThresholdTable table;
  table.default_threshold = ctx.cfg->default_threshold;
  if (ctx.cfg->threshold_mode == ThresholdMode::fixed) return table;

  auto record_fallbacks = [&](const std::vector<CategoryId>& ids) {
    for (CategoryId id : ids)
      for (const Category& c : r.mapping.merged)
        if (c.id == id) r.fallback_categories[b.target].push_back(c.name);
  };

  switch (b.detector.kind) {
    case DetectorKind::truth: {
      r.notes.push_back(stage + " binding for '" + b.target +
                        "': truth detector has nothing to tune; using the default threshold");
      return table;
    }
    case DetectorKind::file: {
      Dataset val_gt_ds = load_dataset(record_input(ctx, b.detector.val_ground_truth));
      const auto translate = name_translation(val_gt_ds, r.mapping, ctx.cfg->aliases);
      AnnotationSet val_gt = remap_categories(val_gt_ds.annotations, translate, "validation ground truth");
      AnnotationSet val_dets = remap_categories(load_detections(record_input(ctx, b.detector.val_detections)),
                                                translate, "validation detections");
      AdaptiveThresholdResult adaptive =
          adaptive_thresholds(val_dets, val_gt, ctx.cfg->match_iou, ctx.cfg->default_threshold);
      record_fallbacks(adaptive.fell_back);
      return adaptive.table;
    }
    case DetectorKind::simulator: {
      // Validate on the source dataset, where these categories have labels:
      // simulate the detector there and tune against the source ground truth.
      std::set<CategoryId> val_range;
      for (const Category& c : r.inputs.at(b.source).categories) {
        const CategoryId merged = r.mapping.merged_id(b.source, c.id);
        if (range.count(merged)) val_range.insert(merged);
      }
      if (val_range.empty()) {
        r.notes.push_back(stage + " binding for '" + b.target +
                          "': source '" + b.source + "' shares no categories with the binding range; " +
                          "using the default threshold");
        return table;
      }
      DetectorProfile profile = profile_from_json(b.detector.profile);
      profile.seed = mix64(b.detector.explicit_seed ? profile.seed : binding_seed(ctx, b, stage),
                           fnv1a64("validation"));
      Dataset substrate = merged_space_view(r.inputs.at(b.source), r.mapping, r.gt_merged.at(b.source));
      AnnotationSet val_dets = simulate_detector(substrate, val_range, profile);
      AnnotationSet val_gt = restrict_to_categories(r.gt_merged.at(b.source), val_range);
      AdaptiveThresholdResult adaptive =
          adaptive_thresholds(val_dets, val_gt, ctx.cfg->match_iou, ctx.cfg->default_threshold);
      record_fallbacks(adaptive.fell_back);
      return adaptive.table;
    }
  }
  return table;
}

/// Runs one stage's bindings: predict, filter, and union per target.
inline std::map<std::string, AnnotationSet> stage_predictions(PipelineContext& ctx,
                                                              const std::vector<StageBinding>& bindings,
                                                              const std::string& stage) {
  PipelineResult& r = *ctx.result;
  std::map<std::string, AnnotationSet> filtered_union;
  for (const StageBinding& b : bindings) {
    std::unique_ptr<DetectorOracle> oracle = build_oracle(ctx, b, stage);
    const std::set<CategoryId> range = oracle->descriptor().categories;
    AnnotationSet raw = oracle->predict(r.inputs.at(b.target).image_ids());
    check_prediction_range(raw, oracle->descriptor());
    const ThresholdTable table = binding_thresholds(ctx, b, stage, range);
    for (const auto& [cat, cut] : table.per_category) r.tables[b.target].per_category[cat] = cut;
    r.tables[b.target].default_threshold = table.default_threshold;
    AnnotationSet prepared = run_initial_labeling(raw, table, ctx.cfg->nms_iou);
    auto it = filtered_union.find(b.target);
    if (it == filtered_union.end())
      filtered_union.emplace(b.target, std::move(prepared));
    else
      it->second = set_union(it->second, prepared);
  }
  return filtered_union;
}

inline void record_stage_quality(PipelineContext& ctx, StageRecord& record,
                                 const std::map<std::string, AnnotationSet>& initial_state) {
  PipelineResult& r = *ctx.result;
  for (const std::string& label : r.labels) {
    if (r.truth_merged.find(label) == r.truth_merged.end()) continue;
    if (r.missing.at(label).empty()) continue;
    const AnnotationSet truth = restrict_to_categories(r.truth_merged.at(label), r.missing.at(label));
    if (truth.empty()) continue;
    const AnnotationSet& state = record.annotations[label];
    record.quality[label] = evaluate(state, truth, ctx.cfg->match_iou, ctx.cfg->histogram_bins);
    if (record.name != "initial") {
      auto init = initial_state.find(label);
      if (init != initial_state.end())
        record.delta_vs_initial[label] = delta_pr(state, init->second, truth, ctx.cfg->match_iou);
      const StageRecord& prev = r.stages[r.stages.size() - 1];
      auto prev_state = prev.annotations.find(label);
      if (prev_state != prev.annotations.end())
        record.delta_vs_previous[label] = delta_pr(state, prev_state->second, truth, ctx.cfg->match_iou);
    }
  }
}

}  // namespace detail

/// Runs the configured pipeline in memory: load datasets, unify categories,
/// produce initial machine annotations, apply the revision sequence, and
/// merge. Paths in the config resolve relative to base_dir.
inline PipelineResult run_pipeline(const PipelineConfig& cfg, const std::filesystem::path& base_dir = ".") {
  validate(cfg);
  PipelineResult result;
  result.config = cfg;
  detail::PipelineContext ctx;
  ctx.cfg = &result.config;
  ctx.base_dir = base_dir;
  ctx.result = &result;

  for (const DatasetRef& ref : cfg.datasets) {
    Dataset d = load_dataset(detail::record_input(ctx, ref.path), ref.label);
    result.labels.push_back(ref.label);
    result.inputs.emplace(ref.label, std::move(d));
  }
  {
    std::vector<const Dataset*> sources;
    for (const std::string& label : result.labels) sources.push_back(&result.inputs.at(label));
    result.mapping = unify_categories(sources, cfg.aliases);
  }
  for (const std::string& label : result.labels) {
    const Dataset& d = result.inputs.at(label);
    std::map<CategoryId, CategoryId> translate;
    std::set<CategoryId> own;
    for (const Category& c : d.categories) {
      const CategoryId merged = result.mapping.merged_id(label, c.id);
      translate[c.id] = merged;
      own.insert(merged);
    }
    result.gt_merged[label] = detail::remap_categories(d.annotations, translate, "dataset '" + label + "'");
    std::set<CategoryId>& missing = result.missing[label];
    for (const Category& c : result.mapping.merged)
      if (!own.count(c.id)) missing.insert(c.id);
  }
  for (const DatasetRef& ref : cfg.datasets) {
    if (ref.truth.empty()) continue;
    Dataset truth = load_dataset(detail::record_input(ctx, ref.truth), ref.label + "-truth");
    const auto translate = detail::name_translation(truth, result.mapping, cfg.aliases);
    AnnotationSet remapped =
        detail::remap_categories(truth.annotations, translate, "truth for dataset '" + ref.label + "'");
    // Keep the truth file's image table (with its sizes) for simulation,
    // but require it to cover the dataset's images.
    const Dataset& base = result.inputs.at(ref.label);
    for (const ImageInfo& im : base.images) {
      const ImageInfo* t = truth.find_image(im.id);
      if (t == nullptr)
        throw ValidationError("truth for dataset '" + ref.label + "' is missing image id '" + im.id + "'");
    }
    result.truth_merged[ref.label] = std::move(remapped);
    Dataset& input = result.inputs.at(ref.label);
    for (ImageInfo& im : input.images) {
      if (im.width > 0.0 && im.height > 0.0) continue;
      const ImageInfo* t = truth.find_image(im.id);
      if (t != nullptr) {
        im.width = t->width;
        im.height = t->height;
      }
    }
  }

  std::map<std::string, AnnotationSet> state;

  {
    StageRecord record;
    record.index = 1;
    record.name = "initial";
    record.predictions = detail::stage_predictions(ctx, cfg.initial, "initial");
    for (const auto& [target, preds] : record.predictions) state[target] = preds;
    record.annotations = state;
    detail::record_stage_quality(ctx, record, state);
    result.stages.push_back(std::move(record));
  }
  const std::map<std::string, AnnotationSet> initial_state = state;

  const bool expand_first = cfg.sequence == Sequence::expand_then_shrink;
  const std::vector<std::pair<std::string, const std::vector<StageBinding>*>> ops =
      expand_first ? std::vector<std::pair<std::string, const std::vector<StageBinding>*>>{
                         {"expand", &cfg.expand_bindings}, {"shrink", &cfg.shrink_bindings}}
                   : std::vector<std::pair<std::string, const std::vector<StageBinding>*>>{
                         {"shrink", &cfg.shrink_bindings}, {"expand", &cfg.expand_bindings}};

  int stage_index = 2;
  for (const auto& [op_name, bindings] : ops) {
    StageRecord record;
    record.index = stage_index++;
    record.name = op_name;
    record.predictions = detail::stage_predictions(ctx, *bindings, op_name);
    for (const auto& [target, preds] : record.predictions) {
      const AnnotationSet& gt = result.gt_merged.at(target);
      AnnotationSet& current = state[target];
      if (op_name == "expand")
        current = expand(current, preds, gt, cfg.expand_iou, cfg.class_aware);
      else
        current = shrink(current, preds, gt, cfg.shrink_iou, cfg.class_aware);
    }
    record.annotations = state;
    detail::record_stage_quality(ctx, record, initial_state);
    result.stages.push_back(std::move(record));
  }

  {
    std::vector<MergePart> parts;
    for (const std::string& label : result.labels) {
      MergePart part;
      part.dataset = result.inputs.at(label);
      auto it = state.find(label);
      if (it != state.end()) part.generated = it->second;
      parts.push_back(std::move(part));
    }
    result.merged = merge_datasets(parts, cfg.aliases);
  }

  for (const std::string& label : result.labels)
    if (result.tables.find(label) == result.tables.end())
      result.tables[label].default_threshold = cfg.default_threshold;

  // Stash the recorded input digests for the run-directory writer.
  result.notes.insert(result.notes.begin(),
                      "category table: " + std::to_string(result.mapping.merged.size()) + " merged categories");
  for (const auto& [display, digest] : ctx.input_files)
    result.notes.push_back("input " + display + " fnv1a64 " + digest);
  return result;
}

inline Dataset augmented_dataset(const PipelineResult& r, const std::string& label, const AnnotationSet& state) {
  Dataset d;
  d.label = label;
  d.images = r.inputs.at(label).images;
  d.categories = r.mapping.merged;
  d.annotations = r.gt_merged.at(label);
  for (const auto& [image, anns] : state) {
    AnnotationList& slot = d.annotations[image];
    for (const Annotation& a : anns) {
      bool duplicate = false;
      for (const Annotation& existing : slot)
        if (detail::same_box_category(existing, a)) {
          duplicate = true;
          break;
        }
      if (!duplicate) slot.push_back(a);
    }
  }
  d.annotations = normalized(d.annotations);
  return d;
}

inline nlohmann::json mapping_to_json(const CategoryMapping& mapping) {
  nlohmann::json j;
  j["categories"] = nlohmann::json::array();
  for (const Category& c : mapping.merged) j["categories"].push_back({{"id", c.id}, {"name", c.name}});
  j["sources"] = nlohmann::json::object();
  for (const auto& [key, merged] : mapping.to_merged) j["sources"][key.first][std::to_string(key.second)] = merged;
  return j;
}

/// Writes the canonical run directory: config echo, per-stage detections,
/// annotations and reports for every dataset, per-stage training manifests
/// with hard and soft target sidecars, the final merged dataset, and a
/// manifest listing everything. Output bytes depend only on the config and
/// inputs unless timing capture is enabled.
inline void write_run_directory(const PipelineResult& r, const std::filesystem::path& out_dir,
                                std::optional<double> wall_seconds = std::nullopt) {
  namespace fs = std::filesystem;
  const PipelineConfig& cfg = r.config;
  fs::create_directories(out_dir);
  RunManifest manifest;
  manifest.command = "pipeline";
  const nlohmann::json config_echo = pipeline_config_to_json(cfg);
  manifest.set_config(config_echo);
  if (cfg.record_timings) manifest.wall_seconds = wall_seconds;
  for (const std::string& note : r.notes) {
    // Input digests were collected as notes; mirror them into the manifest.
    const std::string prefix = "input ";
    if (note.rfind(prefix, 0) == 0) {
      const std::size_t space = note.rfind(" fnv1a64 ");
      if (space != std::string::npos)
        manifest.inputs[note.substr(prefix.size(), space - prefix.size())] = note.substr(space + 9);
    }
  }

  auto emit_json = [&](const fs::path& rel, const nlohmann::json& j) {
    fs::create_directories((out_dir / rel).parent_path());
    write_json_file(out_dir / rel, j);
    manifest.add_output(rel.generic_string());
  };

  emit_json("config.json", config_echo);

  for (const StageRecord& stage : r.stages) {
    const std::string stage_dir = "stage_" + std::to_string(stage.index);
    for (const std::string& label : r.labels) {
      const fs::path label_dir = fs::path(stage_dir) / label;
      auto preds = stage.predictions.find(label);
      emit_json(label_dir / "detections.json",
                detections_to_json(preds != stage.predictions.end() ? preds->second : AnnotationSet{}));
      auto anns = stage.annotations.find(label);
      const AnnotationSet& current = anns != stage.annotations.end() ? anns->second : AnnotationSet{};
      emit_json(label_dir / "annotations.json", detections_to_json(current));

      nlohmann::json report;
      report["stage"] = stage.name;
      report["annotations"] = total_annotations(current);
      auto quality = stage.quality.find(label);
      report["eval"] = quality != stage.quality.end()
                           ? eval_report_to_json(quality->second, &r.mapping.merged)
                           : nlohmann::json(nullptr);
      auto d0 = stage.delta_vs_initial.find(label);
      report["delta_vs_initial"] =
          d0 != stage.delta_vs_initial.end() ? pr_delta_to_json(d0->second) : nlohmann::json(nullptr);
      auto dp = stage.delta_vs_previous.find(label);
      report["delta_vs_previous"] =
          dp != stage.delta_vs_previous.end() ? pr_delta_to_json(dp->second) : nlohmann::json(nullptr);
      emit_json(label_dir / "report.json", report);

      if (stage.index == 1) {
        auto table = r.tables.find(label);
        if (table != r.tables.end()) {
          const fs::path rel = fs::path(stage_dir) / label / "thresholds.txt";
          fs::create_directories((out_dir / rel).parent_path());
          write_threshold_table(table->second, r.mapping.merged, out_dir / rel);
          manifest.add_output(rel.generic_string());
        }
      }
    }

    // Training manifests: one merged set under the joint-training mechanism,
    // one augmented set per dataset under the counterpart mechanism.
    const fs::path training = fs::path(stage_dir) / "training";
    if (cfg.mechanism == Mechanism::self_annotated) {
      std::vector<MergePart> parts;
      for (const std::string& label : r.labels) {
        MergePart part;
        part.dataset = r.inputs.at(label);
        auto it = stage.annotations.find(label);
        if (it != stage.annotations.end()) part.generated = it->second;
        parts.push_back(std::move(part));
      }
      const MergeResult merged = merge_datasets(parts, cfg.aliases);
      emit_json(training / "merged.json", dataset_to_json(merged.dataset));
      emit_json(training / "merged_targets_hard.json", targets_to_json(merged.dataset, /*hard=*/true));
      emit_json(training / "merged_targets_soft.json", targets_to_json(merged.dataset, /*hard=*/false));
    } else {
      for (const std::string& label : r.labels) {
        auto it = stage.annotations.find(label);
        const Dataset augmented =
            augmented_dataset(r, label, it != stage.annotations.end() ? it->second : AnnotationSet{});
        emit_json(training / (label + ".json"), dataset_to_json(augmented));
        emit_json(training / (label + "_targets_hard.json"), targets_to_json(augmented, /*hard=*/true));
        emit_json(training / (label + "_targets_soft.json"), targets_to_json(augmented, /*hard=*/false));
      }
    }
  }

  emit_json("final/merged.json", dataset_to_json(r.merged.dataset));
  emit_json("final/mapping.json", mapping_to_json(r.merged.mapping));

  nlohmann::json trace;
  trace["mechanism"] = to_string(cfg.mechanism);
  trace["sequence"] = to_string(cfg.sequence);
  trace["labels"] = r.labels;
  trace["notes"] = r.notes;
  trace["fallback_categories"] = nlohmann::json::object();
  for (const auto& [label, names] : r.fallback_categories) trace["fallback_categories"][label] = names;
  trace["stages"] = nlohmann::json::array();
  for (const StageRecord& stage : r.stages) {
    nlohmann::json rec;
    rec["index"] = stage.index;
    rec["name"] = stage.name;
    rec["targets"] = nlohmann::json::object();
    for (const auto& [label, anns] : stage.annotations) {
      auto preds = stage.predictions.find(label);
      rec["targets"][label] = {
          {"predictions", preds != stage.predictions.end() ? total_annotations(preds->second) : 0},
          {"annotations", total_annotations(anns)}};
    }
    trace["stages"].push_back(std::move(rec));
  }
  emit_json("trace.json", trace);

  std::sort(manifest.outputs.begin(), manifest.outputs.end());
  write_manifest(manifest, out_dir);
}

/// Convenience wrapper: run and persist in one call.
inline PipelineResult run_pipeline_to_directory(const PipelineConfig& cfg, const std::filesystem::path& base_dir,
                                                const std::filesystem::path& out_dir) {
  const auto started = std::chrono::steady_clock::now();
  PipelineResult result = run_pipeline(cfg, base_dir);
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  write_run_directory(result, out_dir, cfg.record_timings ? std::optional<double>(elapsed) : std::nullopt);
  return result;
}

inline PipelineResult run_self_annotated(PipelineConfig cfg, const std::filesystem::path& base_dir = ".") {
  cfg.mechanism = Mechanism::self_annotated;
  return run_pipeline(cfg, base_dir);
}

inline PipelineResult run_cross_annotated(PipelineConfig cfg, const std::filesystem::path& base_dir = ".") {
  cfg.mechanism = Mechanism::cross_annotated;
  return run_pipeline(cfg, base_dir);
}

}  // namespace annofuse
