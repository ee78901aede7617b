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

#include "gpvit/tensor.hpp"

namespace gpvit {

struct GridShape {
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t tokens() const { return height * width; }
  bool operator==(const GridShape&) const = default;
};

// N x C image features together with the Ht x Wt grid they were laid out on
// (row-major: token index = row * Wt + col).
template <typename T>
struct TokenMap {
  Tensor<T> features;
  GridShape grid;

  std::size_t tokens() const { return features.dim(0); }
  std::size_t channels() const { return features.dim(1); }
};

// Throws ShapeError unless features are [grid.tokens() x C].
template <typename T>
void check_token_map(const TokenMap<T>& x, const char* where);

}  // namespace gpvit
