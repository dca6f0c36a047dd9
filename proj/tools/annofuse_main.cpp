// Copyright 2026 The annofuse Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line frontend. Every subcommand is a thin shell over one library
// operation: load inputs, run it, write the outputs plus a manifest.json
// into --out. Exit codes: 0 success, 2 bad flags or config, 3 file I/O,
// 4 invalid data, 1 anything unexpected.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "annofuse/annofuse.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Collects outputs for one run directory and finishes with a manifest that
// digests the effective configuration and every input file.
class Emitter {
 public:
  Emitter(std::string command, fs::path out_dir) : out_dir_(std::move(out_dir)) {
    manifest_.command = std::move(command);
    std::error_code ec;
    fs::create_directories(out_dir_, ec);
    if (ec) throw annofuse::IoError("cannot create output directory " + out_dir_.string());
  }

  void input(const fs::path& path) { manifest_.add_input(path); }

  void write_json(const std::string& name, const json& j) {
    annofuse::write_json_file(out_dir_ / name, j);
    manifest_.add_output(name);
  }

  void write_text(const std::string& name, const std::string& text) {
    const fs::path path = out_dir_ / name;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw annofuse::IoError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw annofuse::IoError("failed while writing " + path.string());
    manifest_.add_output(name);
  }

  void finish(const json& effective) {
    manifest_.set_config(effective);
    std::sort(manifest_.outputs.begin(), manifest_.outputs.end());
    annofuse::write_manifest(manifest_, out_dir_);
  }

 private:
  annofuse::RunManifest manifest_;
  fs::path out_dir_;
};

std::pair<std::string, std::string> split_pair(const std::string& text, const char* flag) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == text.size())
    throw annofuse::ConfigError(std::string(flag) + " expects NAME=VALUE, got '" + text + "'");
  return {text.substr(0, eq), text.substr(eq + 1)};
}

// Ground truth for eval either names its categories (dataset object) or is a
// bare results array; remember which so reports can carry names.
struct GroundTruth {
  annofuse::AnnotationSet annotations;
  std::optional<annofuse::Dataset> dataset;
};

GroundTruth load_ground_truth(const fs::path& path) {
  const json j = annofuse::read_json_file(path);
  GroundTruth gt;
  if (j.is_array()) {
    gt.annotations = annofuse::detections_from_json(j, path.string());
    return gt;
  }
  if (j.is_object()) {
    gt.dataset = annofuse::dataset_from_json(j, path.stem().string(), path.string());
    gt.annotations = gt.dataset->annotations;
    return gt;
  }
  throw annofuse::ValidationError("malformed " + path.string() +
                                  ": expected a dataset object or a results array");
}

struct LabelArgs {
  fs::path detections;
  fs::path thresholds_file;
  fs::path categories_from;
  double t_c = 0.01;
  double nms_iou = 0.5;
  fs::path out;
};

struct PairedSetArgs {
  fs::path base;
  fs::path predictions;
  fs::path gt;
  double threshold = 0.0;
  bool class_aware = false;
  fs::path out;
};

struct ThresholdArgs {
  fs::path detections;
  fs::path gt;
  double match_iou = 0.5;
  double t_c = 0.01;
  fs::path out;
};

struct EvalArgs {
  fs::path detections;
  fs::path gt;
  double match_iou = 0.5;
  int bins = 20;
  fs::path out;
};

struct MergeArgs {
  std::vector<std::string> datasets;
  std::vector<std::string> aliases;
  std::vector<std::string> generated;
  fs::path out;
};

struct CarveArgs {
  fs::path dataset;
  std::vector<std::string> categories;
  std::size_t budget = 0;
  std::uint64_t seed = 0;
  fs::path out;
};

struct SimulateArgs {
  fs::path truth;
  std::string preset = "hard";
  fs::path profile;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::vector<std::string> categories;
  fs::path out;
};

struct PipelineArgs {
  fs::path config;
  fs::path out;
  std::string mechanism;
  std::string sequence;
  std::string threshold_mode;
  double t_e = 0.0, t_s = 0.0, t_c = 0.0, nms_iou = 0.0, match_iou = 0.0;
  int histogram_bins = 0;
  std::uint64_t seed = 0;
  bool class_aware = false;
  bool record_timings = false;
};

void run_label(const LabelArgs& a) {
  Emitter em("label", a.out);
  em.input(a.detections);
  const annofuse::AnnotationSet raw = annofuse::load_annotations_any(a.detections);

  annofuse::ThresholdTable table;
  json cfg{{"nms_iou", a.nms_iou}};
  if (!a.thresholds_file.empty()) {
    if (a.categories_from.empty())
      throw annofuse::ConfigError("--thresholds-file needs --categories-from to resolve names");
    em.input(a.thresholds_file);
    em.input(a.categories_from);
    const annofuse::Dataset names = annofuse::load_dataset(a.categories_from);
    table = annofuse::load_threshold_table(a.thresholds_file, names.categories);
    cfg["thresholds_file"] = a.thresholds_file.string();
  } else {
    table.default_threshold = a.t_c;
    cfg["t_c"] = a.t_c;
  }

  const annofuse::AnnotationSet labeled = annofuse::run_initial_labeling(raw, table, a.nms_iou);
  em.write_json("labeled.json", annofuse::detections_to_json(labeled));
  em.finish(cfg);
}

void run_expand(const PairedSetArgs& a) {
  Emitter em("expand", a.out);
  em.input(a.base);
  em.input(a.predictions);
  em.input(a.gt);
  const annofuse::AnnotationSet initial = annofuse::load_annotations_any(a.base);
  const annofuse::AnnotationSet preds = annofuse::load_annotations_any(a.predictions);
  const annofuse::AnnotationSet gt = annofuse::load_annotations_any(a.gt);
  const annofuse::AnnotationSet expanded =
      annofuse::expand(initial, preds, gt, a.threshold, a.class_aware);
  em.write_json("expanded.json", annofuse::detections_to_json(expanded));
  em.finish(json{{"t_e", a.threshold}, {"class_aware", a.class_aware}});
}

void run_shrink(const PairedSetArgs& a) {
  Emitter em("shrink", a.out);
  em.input(a.base);
  em.input(a.predictions);
  em.input(a.gt);
  const annofuse::AnnotationSet current = annofuse::load_annotations_any(a.base);
  const annofuse::AnnotationSet preds = annofuse::load_annotations_any(a.predictions);
  const annofuse::AnnotationSet gt = annofuse::load_annotations_any(a.gt);
  const annofuse::AnnotationSet shrunk =
      annofuse::shrink(current, preds, gt, a.threshold, a.class_aware);
  em.write_json("shrunk.json", annofuse::detections_to_json(shrunk));
  em.finish(json{{"t_s", a.threshold}, {"class_aware", a.class_aware}});
}

void run_threshold(const ThresholdArgs& a) {
  Emitter em("threshold", a.out);
  em.input(a.detections);
  em.input(a.gt);
  const annofuse::AnnotationSet dets = annofuse::load_annotations_any(a.detections);
  const annofuse::Dataset gt = annofuse::load_dataset(a.gt);
  const annofuse::AdaptiveThresholdResult result =
      annofuse::adaptive_thresholds(dets, gt.annotations, a.match_iou, a.t_c);
  for (annofuse::CategoryId id : result.fell_back) {
    const annofuse::Category* c = gt.find_category(id);
    std::cerr << "no usable threshold for category '" << (c ? c->name : std::to_string(id))
              << "', using the default\n";
  }
  em.write_text("thresholds.txt",
                annofuse::threshold_table_to_text(result.table, gt.categories));
  em.finish(json{{"match_iou", a.match_iou}, {"t_c", a.t_c}});
}

void run_eval(const EvalArgs& a, bool histogram_only) {
  Emitter em(histogram_only ? "histogram" : "eval", a.out);
  em.input(a.detections);
  em.input(a.gt);
  const annofuse::AnnotationSet dets = annofuse::load_annotations_any(a.detections);
  const GroundTruth gt = load_ground_truth(a.gt);
  const annofuse::EvalReport report =
      annofuse::evaluate(dets, gt.annotations, a.match_iou, a.bins);
  if (histogram_only) {
    em.write_text("histogram.csv", annofuse::histogram_to_csv(report.histogram));
  } else {
    const std::vector<annofuse::Category>* names =
        gt.dataset ? &gt.dataset->categories : nullptr;
    em.write_json("report.json", annofuse::eval_report_to_json(report, names));
  }
  em.finish(json{{"match_iou", a.match_iou}, {"histogram_bins", a.bins}});
}

void run_merge(const MergeArgs& a) {
  Emitter em("merge", a.out);
  std::vector<annofuse::MergePart> parts;
  std::map<std::string, std::size_t> index_of;
  json cfg{{"datasets", json::object()}};
  for (const std::string& entry : a.datasets) {
    auto [label, path] = split_pair(entry, "--dataset");
    em.input(path);
    annofuse::MergePart part;
    part.dataset = annofuse::load_dataset(path, label);
    index_of[label] = parts.size();
    parts.push_back(std::move(part));
    cfg["datasets"][label] = path;
  }
  for (const std::string& entry : a.generated) {
    auto [label, path] = split_pair(entry, "--generated");
    const auto it = index_of.find(label);
    if (it == index_of.end())
      throw annofuse::ConfigError("--generated names unknown dataset label '" + label + "'");
    em.input(path);
    parts[it->second].generated = annofuse::load_annotations_any(path);
    cfg["generated"][label] = path;
  }
  std::map<std::string, std::string> aliases;
  for (const std::string& entry : a.aliases) {
    auto [from, to] = split_pair(entry, "--alias");
    aliases[from] = to;
    cfg["aliases"][from] = to;
  }
  const annofuse::MergeResult merged = annofuse::merge_datasets(parts, aliases);
  em.write_json("merged.json", annofuse::dataset_to_json(merged.dataset));
  em.write_json("mapping.json", annofuse::mapping_to_json(merged.mapping));
  em.finish(cfg);
}

void run_carve(const CarveArgs& a) {
  Emitter em("carve", a.out);
  em.input(a.dataset);
  const annofuse::Dataset d = annofuse::load_dataset(a.dataset);
  const annofuse::Dataset carved = annofuse::carve_subset(d, a.categories, a.budget, a.seed);
  em.write_json("carved.json", annofuse::dataset_to_json(carved));
  em.finish(json{{"categories", a.categories},
                 {"budget", a.budget},
                 {"seed", a.seed}});
}

void run_simulate(const SimulateArgs& a) {
  Emitter em("simulate", a.out);
  em.input(a.truth);
  const annofuse::Dataset truth = annofuse::load_dataset(a.truth);

  annofuse::DetectorProfile profile;
  if (!a.profile.empty()) {
    em.input(a.profile);
    profile = annofuse::profile_from_json(annofuse::read_json_file(a.profile));
  } else if (a.preset == "hard") {
    profile = annofuse::hard_profile();
  } else if (a.preset == "soft") {
    profile = annofuse::soft_profile();
  } else {
    throw annofuse::ConfigError("unknown preset '" + a.preset + "', expected hard or soft");
  }
  if (a.seed_set) profile.seed = a.seed;

  std::set<annofuse::CategoryId> categories;
  if (a.categories.empty()) {
    for (const annofuse::Category& c : truth.categories) categories.insert(c.id);
  } else {
    for (const std::string& name : a.categories) {
      const annofuse::Category* c = truth.find_category(name);
      if (c == nullptr)
        throw annofuse::ValidationError("dataset '" + truth.label + "' has no category named '" +
                                        name + "'");
      categories.insert(c->id);
    }
  }

  const annofuse::AnnotationSet dets = annofuse::simulate_detector(truth, categories, profile);
  em.write_json("detections.json", annofuse::detections_to_json(dets));
  json cfg{{"profile", annofuse::profile_to_json(profile)}};
  if (!a.categories.empty()) cfg["categories"] = a.categories;
  em.finish(cfg);
}

void run_pipeline_command(const PipelineArgs& a, const CLI::App* sub) {
  annofuse::PipelineConfig cfg = annofuse::load_pipeline_config(a.config);
  if (sub->count("--mechanism")) cfg.mechanism = annofuse::mechanism_from_string(a.mechanism);
  if (sub->count("--sequence")) cfg.sequence = annofuse::sequence_from_string(a.sequence);
  if (sub->count("--threshold-mode"))
    cfg.threshold_mode = annofuse::threshold_mode_from_string(a.threshold_mode);
  if (sub->count("--t-e")) cfg.expand_iou = a.t_e;
  if (sub->count("--t-s")) cfg.shrink_iou = a.t_s;
  if (sub->count("--t-c")) cfg.default_threshold = a.t_c;
  if (sub->count("--nms-iou")) cfg.nms_iou = a.nms_iou;
  if (sub->count("--match-iou")) cfg.match_iou = a.match_iou;
  if (sub->count("--histogram-bins")) cfg.histogram_bins = a.histogram_bins;
  if (sub->count("--seed")) cfg.seed = a.seed;
  if (sub->count("--class-aware")) cfg.class_aware = a.class_aware;
  if (sub->count("--record-timings")) cfg.record_timings = a.record_timings;

  fs::path base = a.config.parent_path();
  if (base.empty()) base = ".";
  annofuse::run_pipeline_to_directory(cfg, base, a.out);
}

void add_out_option(CLI::App* sub, fs::path& out) {
  sub->add_option("--out", out, "output directory")->required();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cross-dataset annotation fusion toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(annofuse::kVersion));

  int threads = 0;
  app.add_option("--threads", threads, "worker thread cap, 0 means hardware default");

  const auto guarded = [&threads](std::function<void()> body) {
    return [&threads, body = std::move(body)]() {
      annofuse::set_worker_thread_cap(threads);
      body();
    };
  };

  {
    auto args = std::make_shared<LabelArgs>();
    CLI::App* sub = app.add_subcommand(
        "label", "confidence-filter and suppress raw detections into machine annotations");
    sub->add_option("--detections", args->detections, "raw detector output")->required();
    sub->add_option("--t-c", args->t_c, "confidence threshold when no table is given");
    sub->add_option("--thresholds-file", args->thresholds_file, "per-category threshold table");
    sub->add_option("--categories-from", args->categories_from,
                    "dataset whose category names resolve the table");
    sub->add_option("--nms-iou", args->nms_iou, "suppression overlap threshold");
    add_out_option(sub, args->out);
    sub->callback(guarded([args] { run_label(*args); }));
  }
  {
    auto args = std::make_shared<PairedSetArgs>();
    args->threshold = 0.7;
    CLI::App* sub = app.add_subcommand(
        "expand", "add predictions that overlap nothing in the ground truth or the initial set");
    sub->add_option("--initial", args->base, "current machine annotations")->required();
    sub->add_option("--predictions", args->predictions, "new detector output")->required();
    sub->add_option("--gt", args->gt, "ground-truth annotations or dataset")->required();
    sub->add_option("--t-e", args->threshold, "overlap threshold for novelty");
    sub->add_flag("--class-aware", args->class_aware, "compare overlaps only within a category");
    add_out_option(sub, args->out);
    sub->callback(guarded([args] { run_expand(*args); }));
  }
  {
    auto args = std::make_shared<PairedSetArgs>();
    args->threshold = 0.5;
    CLI::App* sub = app.add_subcommand(
        "shrink", "keep only machine annotations confirmed by another detector");
    sub->add_option("--current", args->base, "current machine annotations")->required();
    sub->add_option("--predictions", args->predictions, "confirming detector output")->required();
    sub->add_option("--gt", args->gt, "ground-truth annotations or dataset")->required();
    sub->add_option("--t-s", args->threshold, "overlap threshold for confirmation");
    sub->add_flag("--class-aware", args->class_aware, "compare overlaps only within a category");
    add_out_option(sub, args->out);
    sub->callback(guarded([args] { run_shrink(*args); }));
  }
  {
    auto args = std::make_shared<ThresholdArgs>();
    CLI::App* sub = app.add_subcommand(
        "threshold", "pick per-category confidence thresholds that maximize F1");
    sub->add_option("--detections", args->detections, "validation detector output")->required();
    sub->add_option("--gt", args->gt, "validation ground-truth dataset")->required();
    sub->add_option("--match-iou", args->match_iou, "overlap needed to count a match");
    sub->add_option("--t-c", args->t_c, "fallback threshold for categories that cannot be tuned");
    add_out_option(sub, args->out);
    sub->callback(guarded([args] { run_threshold(*args); }));
  }
  {
    auto args = std::make_shared<EvalArgs>();
    CLI::App* sub = app.add_subcommand("eval", "score detections against ground truth");
    sub->add_option("--detections", args->detections, "detector output")->required();
    sub->add_option("--gt", args->gt, "ground-truth annotations or dataset")->required();
    sub->add_option("--match-iou", args->match_iou, "overlap needed to count a match");
    sub->add_option("--bins", args->bins, "confidence histogram bin count");
    add_out_option(sub, args->out);
    sub->callback(guarded([args] { run_eval(*args, /*histogram_only=*/false); }));
  }
  {
    auto args = std::make_shared<EvalArgs>();
    CLI::App* sub = app.add_subcommand(
        "histogram", "write the confidence histogram of matched and unmatched detections");
    sub->add_option("--detections", args->detections, "detector output")->required();
    sub->add_option("--gt", args->gt, "ground-truth annotations or dataset")->required();
    sub->add_option("--match-iou", args->match_iou, "overlap needed to count a match");
    sub->add_option("--bins", args->bins, "histogram bin count");
    add_out_option(sub, args->out);
    sub->callback(guarded([args] { run_eval(*args, /*histogram_only=*/true); }));
  }
  {
    auto args = std::make_shared<MergeArgs>();
    CLI::App* sub = app.add_subcommand(
        "merge", "combine datasets under one category table with namespaced image ids");
    sub->add_option("--dataset", args->datasets, "LABEL=PATH dataset to merge")->required();
    sub->add_option("--alias", args->aliases, "FROM=TO category name alias");
    sub->add_option("--generated", args->generated,
                    "LABEL=PATH machine annotations in merged-category space");
    add_out_option(sub, args->out);
    sub->callback(guarded([args] { run_merge(*args); }));
  }
  {
    auto args = std::make_shared<CarveArgs>();
    CLI::App* sub = app.add_subcommand(
        "carve", "cut a category-restricted, budgeted subset out of a dataset");
    sub->add_option("--dataset", args->dataset, "source dataset")->required();
    sub->add_option("--categories", args->categories, "category names to keep")->required();
    sub->add_option("--budget", args->budget, "maximum images to keep")->required();
    sub->add_option("--seed", args->seed, "sampling seed");
    add_out_option(sub, args->out);
    sub->callback(guarded([args] { run_carve(*args); }));
  }
  {
    auto args = std::make_shared<SimulateArgs>();
    CLI::App* sub = app.add_subcommand(
        "simulate", "run the synthetic detector over a ground-truth dataset");
    sub->add_option("--truth", args->truth, "ground-truth dataset")->required();
    sub->add_option("--preset", args->preset, "detector preset, hard or soft");
    sub->add_option("--profile", args->profile, "detector profile JSON, overrides --preset");
    CLI::Option* seed = sub->add_option("--seed", args->seed, "override the profile seed");
    sub->add_option("--categories", args->categories,
                    "category names to detect, default all in the dataset");
    add_out_option(sub, args->out);
    sub->callback(guarded([args, seed] {
      args->seed_set = seed->count() > 0;
      run_simulate(*args);
    }));
  }
  {
    auto args = std::make_shared<PipelineArgs>();
    CLI::App* sub = app.add_subcommand(
        "pipeline", "run the full relabeling pipeline from a config file");
    sub->add_option("--config", args->config, "pipeline config JSON")->required();
    sub->add_option("--mechanism", args->mechanism, "override: self_annotated or cross_annotated");
    sub->add_option("--sequence", args->sequence,
                    "override: expand_then_shrink or shrink_then_expand");
    sub->add_option("--threshold-mode", args->threshold_mode, "override: fixed or adaptive");
    sub->add_option("--t-e", args->t_e, "override the expand overlap threshold");
    sub->add_option("--t-s", args->t_s, "override the shrink overlap threshold");
    sub->add_option("--t-c", args->t_c, "override the fixed confidence threshold");
    sub->add_option("--nms-iou", args->nms_iou, "override the suppression threshold");
    sub->add_option("--match-iou", args->match_iou, "override the evaluation match threshold");
    sub->add_option("--histogram-bins", args->histogram_bins, "override the histogram bin count");
    sub->add_option("--seed", args->seed, "override the pipeline seed");
    sub->add_option("--class-aware", args->class_aware,
                    "override category-restricted overlap matching");
    sub->add_option("--record-timings", args->record_timings,
                    "override wall-clock capture in the manifest");
    add_out_option(sub, args->out);
    sub->callback(guarded([args, sub] { run_pipeline_command(*args, sub); }));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const annofuse::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const annofuse::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const annofuse::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
