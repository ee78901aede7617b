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

#include "gpvit/harness/manifest.hpp"

#include <Eigen/Core>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#ifdef _OPENMP
#include <omp.h>
#endif

#include "gpvit/error.hpp"

#ifndef GPVIT_GIT_DESCRIBE
#define GPVIT_GIT_DESCRIBE "unknown"
#endif

namespace gpvit {

std::string git_describe() { return GPVIT_GIT_DESCRIBE; }

std::string manifest_json(const RunManifest& m) {
  nlohmann::json j;
  j["command"] = m.command;
  j["config"] = m.config;
  j["seed"] = m.seed;
  j["precision"] = m.precision;
  j["out_dir"] = m.out_dir;
  j["git_describe"] = m.git_describe;
  j["wall_time_seconds"] = m.wall_time_seconds;
  j["artifacts"] = m.artifacts;
  return j.dump(2) + "\n";
}

std::string write_manifest(const RunManifest& m) {
  std::filesystem::create_directories(m.out_dir);
  const std::string path = (std::filesystem::path(m.out_dir) / "manifest.json").string();
  RunManifest listed = m;
  listed.artifacts.push_back(path);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest '" + path + "'");
  out << manifest_json(listed);
  if (!out) throw IoError("failed writing manifest '" + path + "'");
  return path;
}

std::size_t configure_threads_from_env() {
  const char* env = std::getenv("GPVIT_THREADS");
  if (!env || !*env) return 0;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n <= 0) throw UsageError("GPVIT_THREADS must be a positive integer, got '" + std::string(env) + "'");
  Eigen::setNbThreads(static_cast<int>(n));
#ifdef _OPENMP
  omp_set_num_threads(static_cast<int>(n));
#endif
  return static_cast<std::size_t>(n);
}

}  // namespace gpvit
