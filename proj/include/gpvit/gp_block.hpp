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

#include "gpvit/attention.hpp"
#include "gpvit/nn.hpp"
#include "gpvit/token_map.hpp"

namespace gpvit {

enum class PropagationKind { mixer, selfattn, none };

std::string propagation_name(PropagationKind kind);
PropagationKind parse_propagation(const std::string& name);

struct GPBlockOptions {
  std::size_t channels = 0;
  std::size_t groups = 0;
  std::size_t grouping_heads = 6;
  std::size_t ungrouping_heads = 6;
  PropagationKind propagation = PropagationKind::mixer;
  double token_expansion = 0.5;        // mixer token MLP hidden = ceil(0.5 M)
  std::size_t channel_expansion = 4;   // mixer channel MLP
  std::size_t ffn_expansion = 4;       // ungrouping FFN
  // Fault injection for the invariants harness: normalise grouping weights
  // over groups instead of over tokens.
  bool transpose_grouping_softmax = false;

  std::size_t token_hidden() const;
  void validate() const;
};

template <typename T>
struct GroupAssignment {
  Tensor<T> weights;               // [heads x M x N]
  GridShape grid;
  std::vector<std::size_t> argmax; // per token, over head-averaged weights
  std::size_t groups = 0;
};

template <typename T>
struct GroupingResult {
  Tensor<T> grouped;  // [M x C]
  GroupAssignment<T> assignment;
};

// Group tokens attend to image tokens. Keys are W^K LN(X); queries and values
// are the group tokens and LN(X) with no projection.
template <typename T>
struct FeatureGrouping {
  std::size_t heads = 1;
  bool transpose_softmax = false;
  LayerNorm<T> norm;
  Linear<T> key;

  FeatureGrouping() = default;
  FeatureGrouping(std::size_t channels, std::size_t heads, Rng& rng);

  GroupingResult<T> forward(const TokenMap<T>& x, const Tensor<T>& group_tokens) const;
  void collect(const std::string& prefix, ParameterList<T>& out) const;
};

// Y' = Y + MLP1(LN1(Y)^T)^T, Y~ = Y' + MLP2(LN2(Y')).
template <typename T>
struct MixerPropagation {
  std::size_t groups = 0;
  LayerNorm<T> token_norm;
  Linear<T> token_fc1;  // M -> ceil(M/2)
  Linear<T> token_fc2;
  LayerNorm<T> channel_norm;
  Linear<T> channel_fc1;  // C -> 4C
  Linear<T> channel_fc2;

  MixerPropagation() = default;
  MixerPropagation(const GPBlockOptions& opts, Rng& rng);

  Tensor<T> forward(const Tensor<T>& y) const;
  void collect(const std::string& prefix, ParameterList<T>& out) const;
};

// Image tokens attend to the propagated groups; the attention output is
// concatenated with X, projected back to C, passed through an FFN and a
// depthwise conv (no residual around the conv).
template <typename T>
struct FeatureUngrouping {
  std::size_t heads = 1;
  LayerNorm<T> norm_q;
  LayerNorm<T> norm_kv;
  Linear<T> query;
  Linear<T> key;
  Linear<T> value;
  Linear<T> proj;  // 2C -> C
  FeedForward<T> ffn;
  DepthwiseConv<T> dwconv;

  FeatureUngrouping() = default;
  FeatureUngrouping(const GPBlockOptions& opts, Rng& rng);

  TokenMap<T> forward(const TokenMap<T>& x, const Tensor<T>& groups) const;
  void collect(const std::string& prefix, ParameterList<T>& out) const;
};

template <typename T>
struct GPBlock {
  GPBlockOptions opts;
  Tensor<T> group_tokens;  // [M x C]
  FeatureGrouping<T> grouping;
  MixerPropagation<T> mixer;      // propagation == mixer
  EncoderLayer<T> self_attention; // propagation == selfattn
  FeatureUngrouping<T> ungrouping;

  GPBlock() = default;
  GPBlock(const GPBlockOptions& opts, Rng& rng);

  Tensor<T> propagate(const Tensor<T>& y, ForwardContext& ctx) const;
  TokenMap<T> forward(const TokenMap<T>& x, ForwardContext& ctx, GroupAssignment<T>* assignment = nullptr) const;
  void collect(const std::string& prefix, ParameterList<T>& out) const;
};

}  // namespace gpvit
