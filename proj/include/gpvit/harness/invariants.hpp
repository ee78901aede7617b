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

#include <cstdint>
#include <string>
#include <vector>

#include "gpvit/config.hpp"

namespace gpvit {

struct InvariantCheck {
  std::string suite;
  std::string name;
  bool passed = false;
  double value = 0.0;      // measured quantity
  double threshold = 0.0;  // bound it is compared against
  std::string detail;
};

struct InvariantReport {
  std::string model;
  std::vector<InvariantCheck> checks;

  bool passed() const;
  std::size_t failures() const;
};

struct InvariantOptions {
  std::vector<std::string> suites;  // names from invariant_suite_names(); empty is a usage error
  std::uint64_t seed = 0;
  // Fault injection: grouping softmax normalises over groups instead of tokens.
  bool flip_grouping_softmax = false;
};

// softmax, grouping, permutation, support, full-window, scaling, cost
std::vector<std::string> invariant_suite_names();

// Runs the selected suites in double precision against `cfg`.
InvariantReport run_invariants(const ModelConfig& cfg, const InvariantOptions& opts);
std::string invariants_json(const InvariantReport& report);

}  // namespace gpvit
