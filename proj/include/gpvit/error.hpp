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

#include <stdexcept>
#include <string>

namespace gpvit {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor extents that do not line up for an operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid model / layer / kernel configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// API or CLI misuse (bad arguments, wrong call order).
class UsageError : public Error {
 public:
  using Error::Error;
};

// File system and serialization failures; message carries the path.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace gpvit
