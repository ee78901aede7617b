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

namespace gpvit {

struct RunManifest {
  std::string command;
  std::string config;  // preset name or config path
  std::uint64_t seed = 0;
  std::string precision;
  std::string out_dir;
  std::string git_describe;
  double wall_time_seconds = 0.0;
  std::vector<std::string> artifacts;
};

// Version string captured at build time.
std::string git_describe();

std::string manifest_json(const RunManifest& manifest);
// Writes <out_dir>/manifest.json and returns its path.
std::string write_manifest(const RunManifest& manifest);

// Applies GPVIT_THREADS (if set) to the GEMM and OpenMP thread pools and
// returns the effective limit (0 when unset).
std::size_t configure_threads_from_env();

}  // namespace gpvit
