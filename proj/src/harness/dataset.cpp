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

#include "gpvit/harness/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "gpvit/error.hpp"
#include "gpvit/random.hpp"

namespace gpvit {

namespace {

constexpr std::array<std::array<double, 3>, 8> kPalette = {{
    {0.95, 0.20, 0.20},
    {0.20, 0.85, 0.25},
    {0.25, 0.35, 0.95},
    {0.95, 0.85, 0.20},
    {0.85, 0.25, 0.90},
    {0.20, 0.90, 0.90},
    {0.95, 0.55, 0.15},
    {0.90, 0.90, 0.90},
}};

}  // namespace

template <typename T>
Dataset<T> make_synthetic_dataset(const DatasetSpec& spec) {
  if (spec.classes == 0 || spec.samples_per_class == 0 || spec.image_size == 0) {
    throw ConfigError("synthetic dataset: classes, samples per class and image size must be positive");
  }
  Rng rng(spec.seed);
  const std::size_t s = spec.image_size;
  const std::size_t period = std::max<std::size_t>(2, s / 4);
  Dataset<T> d;
  const std::size_t total = spec.classes * spec.samples_per_class;
  for (std::size_t i = 0; i < total; ++i) {
    const std::size_t k = i % spec.classes;
    const auto& base = kPalette[k % kPalette.size()];
    // Colours beyond the palette are darkened copies.
    const double shade = 1.0 / static_cast<double>(1 + k / kPalette.size());
    const std::size_t phase = static_cast<std::size_t>(rng.next() % period);
    const double cx = (0.3 + 0.4 * rng.uniform()) * static_cast<double>(s);
    const double cy = (0.3 + 0.4 * rng.uniform()) * static_cast<double>(s);
    const double radius = 0.25 * static_cast<double>(s);
    std::vector<T> px(s * s * 3);
    for (std::size_t r = 0; r < s; ++r) {
      for (std::size_t c = 0; c < s; ++c) {
        bool on = false;
        switch (k % 4) {
          case 0: on = ((r + phase) / (period / 2)) % 2 == 0; break;
          case 1: on = ((c + phase) / (period / 2)) % 2 == 0; break;
          case 2: on = (((r + phase) / (period / 2)) + ((c + phase) / (period / 2))) % 2 == 0; break;
          case 3: on = std::hypot(static_cast<double>(r) + 0.5 - cy, static_cast<double>(c) + 0.5 - cx) < radius; break;
        }
        for (std::size_t ch = 0; ch < 3; ++ch) {
          double v = on ? base[ch] * shade : 0.1;
          v += spec.noise * rng.normal();
          px[(r * s + c) * 3 + ch] = static_cast<T>(std::clamp(v, 0.0, 1.0));
        }
      }
    }
    d.images.push_back(Tensor<T>::from_data({s, s, 3}, std::move(px)));
    d.labels.push_back(k);
  }
  return d;
}

template Dataset<float> make_synthetic_dataset(const DatasetSpec&);
template Dataset<double> make_synthetic_dataset(const DatasetSpec&);

}  // namespace gpvit
