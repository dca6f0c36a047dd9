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
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "annofuse/coco_io.hpp"
#include "annofuse/errors.hpp"
#include "annofuse/rng.hpp"
#include "annofuse/version.hpp"

namespace annofuse {

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

inline std::string digest_bytes(const std::string& bytes) { return hex64(fnv1a64(bytes)); }

inline std::string digest_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for digesting");
  std::ostringstream buf;
  buf << in.rdbuf();
  return digest_bytes(buf.str());
}

/// Record of one tool invocation: what ran, a hash of the effective
/// parameters, digests of every input file, and the outputs written
/// relative to the run directory. Wall time is filled only when timing was
/// requested, so untimed runs stay byte-identical across repeats.
struct RunManifest {
  std::string command;
  std::string version = kVersion;
  std::string config_hash;
  std::map<std::string, std::string> inputs;
  std::vector<std::string> outputs;
  std::optional<double> wall_seconds;

  void add_input(const std::filesystem::path& path) { inputs[path.string()] = digest_file(path); }
  void add_output(const std::string& relative) { outputs.push_back(relative); }

  void set_config(const nlohmann::json& effective) { config_hash = digest_bytes(effective.dump()); }
};

inline nlohmann::json manifest_to_json(const RunManifest& m) {
  nlohmann::json j;
  j["tool"] = "annofuse";
  j["version"] = m.version;
  j["command"] = m.command;
  j["config_hash"] = m.config_hash;
  j["inputs"] = nlohmann::json::object();
  for (const auto& [path, digest] : m.inputs) j["inputs"][path] = digest;
  j["outputs"] = m.outputs;
  if (m.wall_seconds.has_value()) j["wall_seconds"] = *m.wall_seconds;
  return j;
}

/// Writes manifest.json into the run directory, after checking every listed
/// output actually exists there.
inline void write_manifest(const RunManifest& m, const std::filesystem::path& run_dir) {
  for (const std::string& rel : m.outputs)
    if (!std::filesystem::exists(run_dir / rel))
      throw ValidationError("manifest lists missing output '" + rel + "'");
  write_json_file(run_dir / "manifest.json", manifest_to_json(m));
}

}  // namespace annofuse
