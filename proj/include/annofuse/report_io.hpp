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

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "annofuse/coco_io.hpp"
#include "annofuse/dataset.hpp"
#include "annofuse/errors.hpp"
#include "annofuse/metrics.hpp"
#include "annofuse/thresholds.hpp"

namespace annofuse {

namespace detail {

/// Shortest exact decimal form of a double, reused for CSV and text tables
/// so repeated runs emit identical bytes.
inline std::string number_text(double v) { return nlohmann::json(v).dump(); }

}  // namespace detail

inline nlohmann::json pr_to_json(const PrecisionRecall& pr) {
  nlohmann::json j;
  j["precision"] = pr.precision;
  j["precision_by_convention"] = pr.precision_by_convention;
  j["recall"] = pr.recall.has_value() ? nlohmann::json(*pr.recall) : nlohmann::json(nullptr);
  return j;
}

inline nlohmann::json pr_delta_to_json(const PRDelta& d) {
  nlohmann::json j;
  j["old"] = pr_to_json(d.old_pr);
  j["new"] = pr_to_json(d.new_pr);
  j["delta_recall_pct"] =
      d.delta_recall_pct.has_value() ? nlohmann::json(*d.delta_recall_pct) : nlohmann::json(nullptr);
  j["delta_precision_pct"] =
      d.delta_precision_pct.has_value() ? nlohmann::json(*d.delta_precision_pct) : nlohmann::json(nullptr);
  return j;
}

inline nlohmann::json histogram_to_json(const Histogram& hist) {
  nlohmann::json j = nlohmann::json::array();
  for (const HistogramBin& b : hist)
    j.push_back({{"low", b.low}, {"high", b.high}, {"tp", b.tp}, {"fp", b.fp}});
  return j;
}

inline std::string histogram_to_csv(const Histogram& hist) {
  std::string out = "bin_low,bin_high,tp,fp\n";
  for (const HistogramBin& b : hist) {
    out += detail::number_text(b.low);
    out += ',';
    out += detail::number_text(b.high);
    out += ',';
    out += std::to_string(b.tp);
    out += ',';
    out += std::to_string(b.fp);
    out += '\n';
  }
  return out;
}

inline void write_histogram_csv(const Histogram& hist, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << histogram_to_csv(hist);
  if (!out) throw IoError("failed while writing " + path.string());
}

/// Evaluation report as JSON. The leading "protocol" block pins the knobs
/// the numbers depend on; categories may be annotated with names when a
/// table is supplied.
inline nlohmann::json eval_report_to_json(const EvalReport& r, const std::vector<Category>* names = nullptr) {
  auto name_of = [&](CategoryId id) -> nlohmann::json {
    if (names != nullptr)
      for (const Category& c : *names)
        if (c.id == id) return nlohmann::json(c.name);
    return nlohmann::json(nullptr);
  };
  nlohmann::json j;
  j["protocol"] = {{"match_iou", r.match_iou}, {"histogram_bins", static_cast<int>(r.histogram.size())}};
  j["aggregate"] = pr_to_json(r.aggregate);
  j["map"] = r.map.has_value() ? nlohmann::json(*r.map) : nlohmann::json(nullptr);
  j["categories"] = nlohmann::json::array();
  for (const CategoryEval& c : r.categories) {
    nlohmann::json rec;
    rec["id"] = c.id;
    if (!name_of(c.id).is_null()) rec["name"] = name_of(c.id);
    rec["ap"] = c.ap.has_value() ? nlohmann::json(*c.ap) : nlohmann::json(nullptr);
    rec["precision"] = c.precision;
    rec["precision_by_convention"] = c.precision_by_convention;
    rec["recall"] = c.recall.has_value() ? nlohmann::json(*c.recall) : nlohmann::json(nullptr);
    rec["tp"] = c.tp;
    rec["fp"] = c.fp;
    rec["fn"] = c.fn;
    j["categories"].push_back(std::move(rec));
  }
  j["excluded_no_gt"] = r.excluded_no_gt;
  j["histogram"] = histogram_to_json(r.histogram);
  return j;
}

inline void write_eval_report(const EvalReport& r, const std::filesystem::path& path,
                              const std::vector<Category>* names = nullptr) {
  write_json_file(path, eval_report_to_json(r, names));
}

/// Threshold table text format: one "name<TAB>threshold" line per category
/// with an explicit entry, then a "default" line. Category names come from
/// the supplied table; an entry whose id has no name is an error.
inline std::string threshold_table_to_text(const ThresholdTable& table, const std::vector<Category>& categories) {
  std::string out;
  for (const Category& c : categories) {
    auto it = table.per_category.find(c.id);
    if (it == table.per_category.end()) continue;
    out += c.name;
    out += '\t';
    out += detail::number_text(it->second);
    out += '\n';
  }
  for (const auto& [id, value] : table.per_category) {
    bool named = false;
    for (const Category& c : categories)
      if (c.id == id) {
        named = true;
        break;
      }
    if (!named)
      throw ValidationError("threshold table entry for category id " + std::to_string(id) + " has no name");
  }
  out += "default\t";
  out += detail::number_text(table.default_threshold);
  out += '\n';
  return out;
}

inline void write_threshold_table(const ThresholdTable& table, const std::vector<Category>& categories,
                                  const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << threshold_table_to_text(table, categories);
  if (!out) throw IoError("failed while writing " + path.string());
}

inline ThresholdTable load_threshold_table(const std::filesystem::path& path,
                                           const std::vector<Category>& categories) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  ThresholdTable table;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": expected name<TAB>threshold");
    const std::string name = line.substr(0, tab);
    double value = 0.0;
    try {
      std::size_t used = 0;
      value = std::stod(line.substr(tab + 1), &used);
      if (used != line.size() - tab - 1) throw std::invalid_argument("trailing text");
    } catch (const std::exception&) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": threshold is not a number");
    }
    if (name == "default") {
      table.default_threshold = value;
      continue;
    }
    const Category* c = nullptr;
    for (const Category& cand : categories)
      if (cand.name == name) {
        c = &cand;
        break;
      }
    if (c == nullptr)
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": unknown category name '" + name +
                            "'");
    table.per_category[c->id] = value;
  }
  return table;
}

/// Per-annotation classification targets for a dataset, aligned with the
/// annotation ids that dataset_to_json assigns. Index 0 is background; the
/// class slot is the category's position in the dataset's table.
inline nlohmann::json targets_to_json(const Dataset& d, bool hard) {
  const int num_categories = static_cast<int>(d.categories.size());
  auto dense_index = [&](CategoryId id) {
    for (std::size_t i = 0; i < d.categories.size(); ++i)
      if (d.categories[i].id == id) return static_cast<int>(i) + 1;
    throw ValidationError("annotation category id " + std::to_string(id) + " missing from the category table");
  };
  nlohmann::json j;
  j["num_categories"] = num_categories;
  j["background_index"] = 0;
  j["kind"] = hard ? "hard" : "soft";
  j["targets"] = nlohmann::json::array();
  long long next_id = 1;
  for (const auto& [image, anns] : d.annotations) {
    for (const Annotation& a : anns) {
      const int slot = dense_index(a.category);
      const TargetVector target = hard ? hard_target(slot, num_categories) : soft_target(slot, a.score, num_categories);
      nlohmann::json rec;
      rec["annotation_id"] = next_id++;
      rec["image_id"] = detail::image_id_to_json(image);
      rec["category_id"] = a.category;
      rec["score"] = a.score;
      rec["target"] = target;
      j["targets"].push_back(std::move(rec));
    }
  }
  return j;
}

}  // namespace annofuse
