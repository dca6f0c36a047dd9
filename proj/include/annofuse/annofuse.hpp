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

// Umbrella header pulling in the whole library.

#ifndef ANNOFUSE_ANNOFUSE_HPP_
#define ANNOFUSE_ANNOFUSE_HPP_

#include "annofuse/annotations.hpp"
#include "annofuse/coco_io.hpp"
#include "annofuse/dataset.hpp"
#include "annofuse/errors.hpp"
#include "annofuse/geometry.hpp"
#include "annofuse/manifest.hpp"
#include "annofuse/metrics.hpp"
#include "annofuse/oracle.hpp"
#include "annofuse/parallel.hpp"
#include "annofuse/pipeline.hpp"
#include "annofuse/report_io.hpp"
#include "annofuse/rng.hpp"
#include "annofuse/set_ops.hpp"
#include "annofuse/simulator.hpp"
#include "annofuse/thresholds.hpp"
#include "annofuse/version.hpp"

#endif  // ANNOFUSE_ANNOFUSE_HPP_
