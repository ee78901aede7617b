// Copyright 2026 The GPViT-cpp Authors. All Rights Reserved.
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

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "gpvit/config.hpp"

namespace gpvit {

struct GradcheckOptions {
  std::uint64_t seed = 0;
  double step = 1e-5;
  double tolerance = 1e-4;
  // Denominator floor for the relative error |a - n| / max(|a|, |n|, floor),
  // so entries with vanishing gradients are judged on absolute error.
  double abs_floor = 1e-6;
  std::size_t max_params = 20000;
  // Zero the classifier weights and bias before checking.
  bool zero_head = false;
};

struct GradcheckBlock {
  std::string name;
  std::size_t entries = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  double max_abs_grad = 0.0;
};

struct GradcheckReport {
  std::string model;
  std::uint64_t seed = 0;
  double loss = 0.0;
  double tolerance = 0.0;
  std::vector<GradcheckBlock> blocks;
  double max_rel_error = 0.0;
  bool passed = false;
};

// Central finite differences vs reverse-mode gradients of a cross-entropy
// loss on one synthetic image, in double precision, over every parameter.
// Throws UsageError when the model exceeds max_params.
GradcheckReport run_gradcheck(const ModelConfig& cfg, const GradcheckOptions& opts);
std::string gradcheck_json(const GradcheckReport& report);

}  // namespace gpvit
