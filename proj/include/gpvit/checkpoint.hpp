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

#include "gpvit/model.hpp"

namespace gpvit {

// Little-endian layout:
//   char[8]  magic "GPVTCKPT"
//   u32      version
//   u64      config digest
//   u8       precision (0 = f32, 1 = f64)
//   u32      tensor count
//   per tensor, in parameter declaration order:
//     u32 name length, name bytes, u32 rank, u64 dims[rank], raw values
inline constexpr char kCheckpointMagic[8] = {'G', 'P', 'V', 'T', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void save_checkpoint(const std::string& path, const Model<T>& model);

// Overwrites the model's parameters. Throws IoError on unreadable or
// truncated files and ConfigError on digest, precision, name or shape
// mismatch.
template <typename T>
void load_checkpoint(const std::string& path, Model<T>& model);

}  // namespace gpvit
