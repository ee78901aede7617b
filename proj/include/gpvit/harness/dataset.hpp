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
#include <vector>

#include "gpvit/tensor.hpp"

namespace gpvit {

// Class k draws pattern k mod 4 (horizontal stripes, vertical stripes,
// checkerboard, disk) in colour k of a fixed palette over a dark background,
// with a per-sample random phase or centre and Gaussian pixel noise.
struct DatasetSpec {
  std::size_t classes = 8;
  std::size_t samples_per_class = 8;
  std::size_t image_size = 32;
  std::uint64_t seed = 0;
  double noise = 0.05;
};

template <typename T>
struct Dataset {
  std::vector<Tensor<T>> images;  // [S x S x 3], values in [0, 1]
  std::vector<std::size_t> labels;

  std::size_t size() const { return labels.size(); }
};

template <typename T>
Dataset<T> make_synthetic_dataset(const DatasetSpec& spec);

}  // namespace gpvit
