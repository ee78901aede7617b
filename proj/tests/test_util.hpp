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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "gpvit/autograd.hpp"
#include "gpvit/random.hpp"
#include "gpvit/tensor.hpp"

namespace gpvit::testing {

inline Tensor<double> random_tensor(Shape shape, Rng& rng, double scale = 1.0, bool requires_grad = true) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = scale * rng.normal();
  return Tensor<double>::from_data(std::move(shape), std::move(v), requires_grad);
}

template <typename T>
Tensor<T> make(Shape shape, std::vector<T> values, bool requires_grad = false) {
  return Tensor<T>::from_data(std::move(shape), std::move(values), requires_grad);
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  EXPECT_EQ(a.shape(), b.shape());
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(double(a.data()[i]) - double(b.data()[i])));
  return m;
}

// Largest |analytic - numeric| / max(|analytic|, |numeric|, floor) over
// every coordinate of every leaf, with central differences of step h.
inline double fd_max_rel_error(const std::function<Tensor<double>()>& loss, std::vector<Tensor<double>> leaves,
                               double h = 1e-5, double floor = 1e-8) {
  const auto grads = backward(loss());
  double worst = 0.0;
  for (auto& leaf : leaves) {
    const auto analytic = grads[leaf].to_vector();
    auto data = leaf.mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + h;
      const double up = loss().item();
      data[i] = saved - h;
      const double down = loss().item();
      data[i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
      worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace gpvit::testing
