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
#include <variant>
#include <vector>

#include "gpvit/attention.hpp"
#include "gpvit/config.hpp"
#include "gpvit/gp_block.hpp"
#include "gpvit/nn.hpp"

namespace gpvit {

// Stride-2 3x3 convs; all but the last are followed by LayerNorm and GELU.
// The last conv has a bias and emits the model width directly.
template <typename T>
struct Stem {
  std::vector<Conv2d<T>> convs;
  std::vector<LayerNorm<T>> norms;  // one per non-final conv

  Stem() = default;
  Stem(const ModelConfig& cfg, Rng& rng);

  TokenMap<T> forward(const TokenMap<T>& image) const;
  void collect(const std::string& prefix, ParameterList<T>& out) const;
};

// x + conv_b(gelu(conv_a(LN(x)))), two dense 3x3 convs.
template <typename T>
struct ConvBlock {
  double drop_path_rate = 0.0;
  LayerNorm<T> norm;
  Conv2d<T> conv_a;
  Conv2d<T> conv_b;

  ConvBlock() = default;
  ConvBlock(std::size_t channels, double drop_path_rate, Rng& rng);

  TokenMap<T> forward(const TokenMap<T>& x, ForwardContext& ctx) const;
  void collect(const std::string& prefix, ParameterList<T>& out) const;
};

template <typename T>
using Layer = std::variant<EncoderLayer<T>, GPBlock<T>, ConvBlock<T>>;

// Separable bicubic interpolation (a = -0.75, half-pixel centres, clamped
// borders) from an `from` grid to a `to` grid, as a [to.tokens() x
// from.tokens()] matrix.
std::vector<double> bicubic_matrix(GridShape from, GridShape to);

template <typename T>
class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  const std::vector<LayerSpec>& schedule() const { return schedule_; }

  // image: [H x W x 3]. Stem output plus (resampled) positional embedding.
  TokenMap<T> embed(const Tensor<T>& image) const;
  TokenMap<T> forward_features(const Tensor<T>& image, ForwardContext& ctx,
                               std::vector<GroupAssignment<T>>* assignments = nullptr) const;
  // Logits [num_classes].
  Tensor<T> forward_classify(const Tensor<T>& image, ForwardContext& ctx,
                             std::vector<GroupAssignment<T>>* assignments = nullptr) const;
  Tensor<T> forward_classify(const Tensor<T>& image) const;
  // Each sample is evaluated independently; returns [B x num_classes].
  Tensor<T> forward_batch(const std::vector<Tensor<T>>& images, ForwardContext& ctx) const;

  ParameterList<T> parameters() const;
  std::size_t parameter_count() const { return count_parameters(parameters()); }

  Stem<T> stem;
  Tensor<T> pos_embed;  // [native tokens x C]
  std::vector<Layer<T>> layers;
  LayerNorm<T> head_norm;
  Linear<T> head;

 private:
  ModelConfig cfg_;
  std::vector<LayerSpec> schedule_;
};

}  // namespace gpvit
