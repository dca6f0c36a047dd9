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

#include <memory>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "annofuse/annotations.hpp"
#include "annofuse/dataset.hpp"
#include "annofuse/errors.hpp"
#include "annofuse/simulator.hpp"

namespace annofuse {

/// What a detector claims about itself: a tag for manifests and the
/// category ids it may emit.
struct OracleDescriptor {
  std::string name;
  std::set<CategoryId> categories;
};

/// Checks that predictions stay inside the declared category range.
inline void check_prediction_range(const AnnotationSet& preds, const OracleDescriptor& desc) {
  for (const auto& [image, anns] : preds)
    for (const Annotation& a : anns)
      if (!desc.categories.count(a.category))
        throw ValidationError("detector '" + desc.name + "' emitted category id " + std::to_string(a.category) +
                              " outside its declared range (image '" + image + "')");
}

/// A source of detections for a set of images. Implementations wrap a
/// results file, the synthetic detector, or ground truth itself; the
/// pipeline only sees this interface.
class DetectorOracle {
 public:
  virtual ~DetectorOracle() = default;
  virtual const OracleDescriptor& descriptor() const = 0;
  virtual AnnotationSet predict(const std::vector<ImageId>& images) const = 0;
};

/// Serves detections loaded from a results file. The whole set is range
/// checked up front; predict just selects the requested images.
class FileOracle : public DetectorOracle {
 public:
  FileOracle(OracleDescriptor desc, AnnotationSet all) : desc_(std::move(desc)), all_(std::move(all)) {
    check_prediction_range(all_, desc_);
  }

  const OracleDescriptor& descriptor() const override { return desc_; }

  AnnotationSet predict(const std::vector<ImageId>& images) const override {
    AnnotationSet out;
    for (const ImageId& id : images) {
      auto it = all_.find(id);
      if (it != all_.end() && !it->second.empty()) out.emplace(id, it->second);
    }
    return out;
  }

 private:
  OracleDescriptor desc_;
  AnnotationSet all_;
};

/// Runs the synthetic detector against a ground-truth dataset on demand.
class SimulatorOracle : public DetectorOracle {
 public:
  SimulatorOracle(OracleDescriptor desc, Dataset truth, DetectorProfile profile)
      : desc_(std::move(desc)), truth_(std::move(truth)), profile_(profile) {
    if (desc_.categories.empty()) throw ValidationError("simulator oracle needs a non-empty category range");
  }

  const OracleDescriptor& descriptor() const override { return desc_; }

  AnnotationSet predict(const std::vector<ImageId>& images) const override {
    return simulate_detector(truth_, desc_.categories, profile_, images);
  }

  const Dataset& truth() const { return truth_; }
  const DetectorProfile& profile() const { return profile_; }

 private:
  OracleDescriptor desc_;
  Dataset truth_;
  DetectorProfile profile_;
};

/// Perfect detector: answers with the ground truth itself at full
/// confidence. Useful as a fixed-point probe for the pipeline.
class GroundTruthOracle : public DetectorOracle {
 public:
  GroundTruthOracle(OracleDescriptor desc, Dataset truth) : desc_(std::move(desc)), truth_(std::move(truth)) {
    if (desc_.categories.empty()) throw ValidationError("ground-truth oracle needs a non-empty category range");
  }

  const OracleDescriptor& descriptor() const override { return desc_; }

  AnnotationSet predict(const std::vector<ImageId>& images) const override {
    AnnotationSet out;
    for (const ImageId& id : images) {
      auto it = truth_.annotations.find(id);
      if (it == truth_.annotations.end()) continue;
      AnnotationList kept;
      for (const Annotation& a : it->second)
        if (desc_.categories.count(a.category)) kept.push_back(Annotation(a.box, a.category, 1.0, Source::initial));
      if (!kept.empty()) out.emplace(id, std::move(kept));
    }
    return out;
  }

 private:
  OracleDescriptor desc_;
  Dataset truth_;
};

}  // namespace annofuse
