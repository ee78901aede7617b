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
#include <string>
#include <vector>

#include "gpvit/ops.hpp"
#include "gpvit/random.hpp"
#include "gpvit/tensor.hpp"
#include "gpvit/token_map.hpp"

namespace gpvit {

template <typename T>
struct NamedParameter {
  std::string name;
  Tensor<T> tensor;
};

template <typename T>
using ParameterList = std::vector<NamedParameter<T>>;

template <typename T>
std::size_t count_parameters(const ParameterList<T>& params);

// Weight init: truncated normal (std 0.02, cut at 2 std); zeros for biases;
// ones for norm gains.
inline constexpr double kInitStd = 0.02;

template <typename T>
Tensor<T> init_trunc_normal(Shape shape, Rng& rng, double stddev = kInitStd);

// Evaluation state threaded through every forward pass.
struct ForwardContext {
  bool training = false;
  Rng* rng = nullptr;  // required when training with drop path
};

// Stochastic depth on a residual branch; identity outside training.
template <typename T>
Tensor<T> drop_path(const Tensor<T>& branch, double rate, ForwardContext& ctx);

template <typename T>
struct Linear {
  Tensor<T> weight;  // [in x out]
  Tensor<T> bias;    // [out], undefined when constructed without bias

  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng, bool with_bias = true);

  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }

  Tensor<T> forward(const Tensor<T>& x) const;
  void collect(const std::string& prefix, ParameterList<T>& out) const;
};

template <typename T>
struct LayerNorm {
  Tensor<T> gain;
  Tensor<T> bias;
  T eps = T(1e-5);

  LayerNorm() = default;
  explicit LayerNorm(std::size_t channels);

  Tensor<T> forward(const Tensor<T>& x) const { return ops::layer_norm(x, gain, bias, eps); }
  void collect(const std::string& prefix, ParameterList<T>& out) const;
};

// Pre-norm feed-forward branch: W2 gelu(W1 LN(x)). The caller adds the residual.
template <typename T>
struct FeedForward {
  LayerNorm<T> norm;
  Linear<T> fc1;
  Linear<T> fc2;

  FeedForward() = default;
  FeedForward(std::size_t channels, std::size_t expansion, Rng& rng);

  Tensor<T> forward(const Tensor<T>& x) const;
  void collect(const std::string& prefix, ParameterList<T>& out) const;
};

// Dense k x k convolution on a token map, lowered to row gathers + matmul.
template <typename T>
struct Conv2d {
  Tensor<T> weight;  // [k x k x Cin x Cout]
  Tensor<T> bias;    // [Cout] or undefined
  std::size_t stride = 1;
  std::size_t padding = 0;

  Conv2d() = default;
  Conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
         std::size_t padding, Rng& rng, bool with_bias);

  std::size_t kernel_size() const { return weight.dim(0); }
  GridShape output_grid(GridShape in) const;
  TokenMap<T> forward(const TokenMap<T>& x) const;
  void collect(const std::string& prefix, ParameterList<T>& out) const;
};

// Depthwise k x k convolution with bias on a token map.
template <typename T>
struct DepthwiseConv {
  Tensor<T> kernel;  // [k x k x C]
  Tensor<T> bias;    // [C]

  DepthwiseConv() = default;
  DepthwiseConv(std::size_t channels, std::size_t kernel_size, Rng& rng, bool identity_init);

  TokenMap<T> forward(const TokenMap<T>& x) const;
  void collect(const std::string& prefix, ParameterList<T>& out) const;
};

}  // namespace gpvit
