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

#include "gpvit/tensor.hpp"

namespace gpvit {

// 8-bit raster, row-major, interleaved channels (1 = gray, 3 = RGB).
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> pixels;
};

// Binary P5/P6 with maxval 255.
std::string encode_pnm(const Image& image);
Image decode_pnm(const std::string& bytes, const std::string& source = "<image>");
Image read_pnm(const std::string& path);
void write_pnm(const std::string& path, const Image& image);

// [H x W x 3] in [0, 1]; gray images are replicated across channels.
template <typename T>
Tensor<T> image_to_tensor(const Image& image);

}  // namespace gpvit
