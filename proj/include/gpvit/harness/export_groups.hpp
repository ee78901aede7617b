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

#include <string>
#include <vector>

#include "gpvit/image_io.hpp"
#include "gpvit/model.hpp"

namespace gpvit {

// Per GP block (file stem "groups_layer<i>"): an 8-bit PGM of the argmax
// group per token scaled as index * 255 / (M - 1), a colour-coded PPM, and
// a CSV of the raw weights (one row per head and group, one column per
// token). The image must match the configured input size. Returns the paths
// written, in order.
template <typename T>
std::vector<std::string> export_groups(const Model<T>& model, const Image& image, const std::string& out_dir);

Image group_map_pgm(const std::vector<std::size_t>& argmax, GridShape grid, std::size_t groups);
Image group_map_ppm(const std::vector<std::size_t>& argmax, GridShape grid, std::size_t groups);

}  // namespace gpvit
