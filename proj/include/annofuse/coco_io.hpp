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
#include <string>

#include <nlohmann/json.hpp>

#include "annofuse/dataset.hpp"
#include "annofuse/errors.hpp"

namespace annofuse {

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const std::exception& e) {
    throw IoError("failed to parse " + path.string() + ": " + e.what());
  }
}

inline void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed while writing " + path.string());
}

namespace detail {

inline const nlohmann::json& require_key(const nlohmann::json& j, const char* key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) throw ValidationError("malformed " + where + ": missing key '" + key + "'");
  return *it;
}

inline double require_number(const nlohmann::json& j, const char* key, const std::string& where) {
  const nlohmann::json& v = require_key(j, key, where);
  if (!v.is_number()) throw ValidationError("malformed " + where + ": '" + key + "' must be a number");
  return v.get<double>();
}

inline std::string require_string(const nlohmann::json& j, const char* key, const std::string& where) {
  const nlohmann::json& v = require_key(j, key, where);
  if (!v.is_string()) throw ValidationError("malformed " + where + ": '" + key + "' must be a string");
  return v.get<std::string>();
}

inline ImageId image_id_from_json(const nlohmann::json& v, const std::string& where) {
  if (v.is_string()) {
    std::string s = v.get<std::string>();
    if (s.empty()) throw ValidationError("malformed " + where + ": empty image id");
    return s;
  }
  if (v.is_number_integer() || v.is_number_unsigned()) return std::to_string(v.get<long long>());
  throw ValidationError("malformed " + where + ": image id must be an integer or string");
}

/// Image ids are strings internally; an id that spells a plain decimal
/// integer is written back as a JSON number so COCO-style files keep
/// numeric ids through a round trip.
inline nlohmann::json image_id_to_json(const ImageId& id) {
  const bool digits = !id.empty() && id.size() <= 18 && id.find_first_not_of("0123456789") == std::string::npos;
  if (digits && (id.size() == 1 || id[0] != '0')) return nlohmann::json(std::stoll(id));
  return nlohmann::json(id);
}

inline nlohmann::json number_compact(double v) {
  const double r = std::floor(v);
  if (r == v && std::abs(v) < 9.0e15) return nlohmann::json(static_cast<long long>(v));
  return nlohmann::json(v);
}

inline Box box_from_coco(const nlohmann::json& rec, const std::string& where) {
  const nlohmann::json& b = require_key(rec, "bbox", where);
  if (!b.is_array() || b.size() != 4 || !b[0].is_number() || !b[1].is_number() || !b[2].is_number() ||
      !b[3].is_number())
    throw ValidationError("malformed " + where + ": 'bbox' must be [x, y, width, height]");
  const double x = b[0].get<double>();
  const double y = b[1].get<double>();
  const double w = b[2].get<double>();
  const double h = b[3].get<double>();
  if (w <= 0.0 || h <= 0.0) throw ValidationError(where + ": bbox has non-positive width or height");
  return Box(x, y, x + w, y + h);
}

inline nlohmann::json box_to_coco(const Box& box) {
  return nlohmann::json::array(
      {number_compact(box.x1), number_compact(box.y1), number_compact(box.width()), number_compact(box.height())});
}

inline double score_from_json(const nlohmann::json& rec, const std::string& where, bool required,
                              double fallback) {
  auto it = rec.find("score");
  if (it == rec.end()) {
    if (required) throw ValidationError("malformed " + where + ": missing key 'score'");
    return fallback;
  }
  if (!it->is_number()) throw ValidationError("malformed " + where + ": 'score' must be a number");
  const double s = it->get<double>();
  if (s < 0.0 || s > 1.0) throw ValidationError(where + ": score " + std::to_string(s) + " outside [0, 1]");
  return s;
}

inline Source source_from_json(const nlohmann::json& rec, Source fallback) {
  auto it = rec.find("source");
  if (it == rec.end()) return fallback;
  if (!it->is_string()) throw ValidationError("'source' must be a string when present");
  return source_from_string(it->get<std::string>());
}

}  // namespace detail

inline Dataset dataset_from_json(const nlohmann::json& j, const std::string& label, const std::string& where) {
  if (!j.is_object()) throw ValidationError("malformed " + where + ": expected a JSON object");
  Dataset d;
  d.label = label;
  const nlohmann::json& images = detail::require_key(j, "images", where);
  const nlohmann::json& categories = detail::require_key(j, "categories", where);
  const nlohmann::json& annotations = detail::require_key(j, "annotations", where);
  if (!images.is_array() || !categories.is_array() || !annotations.is_array())
    throw ValidationError("malformed " + where + ": 'images', 'annotations' and 'categories' must be arrays");

  for (const nlohmann::json& im : images) {
    if (!im.is_object()) throw ValidationError("malformed " + where + ": image entries must be objects");
    ImageInfo info;
    info.id = detail::image_id_from_json(detail::require_key(im, "id", where), where);
    if (auto it = im.find("file_name"); it != im.end() && it->is_string()) info.file_name = it->get<std::string>();
    if (auto it = im.find("width"); it != im.end() && it->is_number()) info.width = it->get<double>();
    if (auto it = im.find("height"); it != im.end() && it->is_number()) info.height = it->get<double>();
    d.images.push_back(std::move(info));
  }
  for (const nlohmann::json& cat : categories) {
    if (!cat.is_object()) throw ValidationError("malformed " + where + ": category entries must be objects");
    Category c;
    const nlohmann::json& id = detail::require_key(cat, "id", where);
    if (!id.is_number_integer() && !id.is_number_unsigned())
      throw ValidationError("malformed " + where + ": category ids must be integers");
    c.id = id.get<CategoryId>();
    c.name = detail::require_string(cat, "name", where);
    d.categories.push_back(std::move(c));
  }
  for (const nlohmann::json& rec : annotations) {
    if (!rec.is_object()) throw ValidationError("malformed " + where + ": annotation entries must be objects");
    const ImageId image = detail::image_id_from_json(detail::require_key(rec, "image_id", where), where);
    const nlohmann::json& cat = detail::require_key(rec, "category_id", where);
    if (!cat.is_number_integer() && !cat.is_number_unsigned())
      throw ValidationError("malformed " + where + ": 'category_id' must be an integer");
    const Box box = detail::box_from_coco(rec, where);
    const double score = detail::score_from_json(rec, where, /*required=*/false, /*fallback=*/1.0);
    const Source source = detail::source_from_json(rec, Source::ground_truth);
    d.annotations[image].push_back(Annotation(box, cat.get<CategoryId>(), score, source));
  }
  validate(d);
  return d;
}

inline nlohmann::json dataset_to_json(const Dataset& d) {
  nlohmann::json j;
  j["images"] = nlohmann::json::array();
  for (const ImageInfo& im : d.images) {
    nlohmann::json rec;
    rec["id"] = detail::image_id_to_json(im.id);
    if (!im.file_name.empty()) rec["file_name"] = im.file_name;
    if (im.width > 0.0) rec["width"] = detail::number_compact(im.width);
    if (im.height > 0.0) rec["height"] = detail::number_compact(im.height);
    j["images"].push_back(std::move(rec));
  }
  j["categories"] = nlohmann::json::array();
  for (const Category& c : d.categories) j["categories"].push_back({{"id", c.id}, {"name", c.name}});
  j["annotations"] = nlohmann::json::array();
  long long next_id = 1;
  for (const auto& [image, anns] : d.annotations) {
    for (const Annotation& a : anns) {
      nlohmann::json rec;
      rec["id"] = next_id++;
      rec["image_id"] = detail::image_id_to_json(image);
      rec["category_id"] = a.category;
      rec["bbox"] = detail::box_to_coco(a.box);
      rec["area"] = detail::number_compact(a.box.area());
      rec["iscrowd"] = 0;
      if (a.score != 1.0) rec["score"] = a.score;
      if (a.source != Source::ground_truth) rec["source"] = to_string(a.source);
      j["annotations"].push_back(std::move(rec));
    }
  }
  return j;
}

inline Dataset load_dataset(const std::filesystem::path& path, std::string label = "") {
  if (label.empty()) label = path.stem().string();
  return dataset_from_json(read_json_file(path), label, path.string());
}

inline void save_dataset(const Dataset& d, const std::filesystem::path& path) {
  write_json_file(path, dataset_to_json(d));
}

inline AnnotationSet detections_from_json(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array()) throw ValidationError("malformed " + where + ": expected a JSON array of detections");
  AnnotationSet out;
  for (const nlohmann::json& rec : j) {
    if (!rec.is_object()) throw ValidationError("malformed " + where + ": detection entries must be objects");
    const ImageId image = detail::image_id_from_json(detail::require_key(rec, "image_id", where), where);
    const nlohmann::json& cat = detail::require_key(rec, "category_id", where);
    if (!cat.is_number_integer() && !cat.is_number_unsigned())
      throw ValidationError("malformed " + where + ": 'category_id' must be an integer");
    const Box box = detail::box_from_coco(rec, where);
    const double score = detail::score_from_json(rec, where, /*required=*/true, /*fallback=*/0.0);
    const Source source = detail::source_from_json(rec, Source::initial);
    out[image].push_back(Annotation(box, cat.get<CategoryId>(), score, source));
  }
  return normalized(out);
}

inline nlohmann::json detections_to_json(const AnnotationSet& set) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& [image, anns] : set) {
    for (const Annotation& a : anns) {
      nlohmann::json rec;
      rec["image_id"] = detail::image_id_to_json(image);
      rec["category_id"] = a.category;
      rec["bbox"] = detail::box_to_coco(a.box);
      rec["score"] = a.score;
      if (a.source != Source::initial) rec["source"] = to_string(a.source);
      j.push_back(std::move(rec));
    }
  }
  return j;
}

inline AnnotationSet load_detections(const std::filesystem::path& path) {
  return detections_from_json(read_json_file(path), path.string());
}

inline void save_detections(const AnnotationSet& set, const std::filesystem::path& path) {
  write_json_file(path, detections_to_json(set));
}

/// Reads annotations from either file shape: a dataset object contributes
/// its ground truth, a results array is taken as-is.
inline AnnotationSet load_annotations_any(const std::filesystem::path& path) {
  const nlohmann::json j = read_json_file(path);
  if (j.is_array()) return detections_from_json(j, path.string());
  if (j.is_object()) return dataset_from_json(j, path.stem().string(), path.string()).annotations;
  throw ValidationError("malformed " + path.string() + ": expected a dataset object or a results array");
}

}  // namespace annofuse
