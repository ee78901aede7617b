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

#include "gpvit/nn.hpp"
#include "gpvit/tensor.hpp"
#include "gpvit/token_map.hpp"

namespace gpvit {

// Additive logit used for keys outside a query's support.
inline constexpr double kMaskedLogit = -1e9;

struct AttentionConfig {
  std::size_t num_heads = 1;
  std::size_t model_dim = 1;
  bool use_output_projection = true;

  std::size_t head_dim() const { return model_dim / num_heads; }
  void validate() const;
};

enum class WindowKind { full, window, strip_pair, shifted_window };

std::string window_kind_name(WindowKind kind);

struct WindowSpec {
  WindowKind kind = WindowKind::full;
  std::size_t size = 0;   // window side, or strip width for strip_pair
  std::size_t shift = 0;  // displacement for shifted_window

  static WindowSpec full() { return {}; }
  static WindowSpec window(std::size_t w) { return {WindowKind::window, w, 0}; }
  static WindowSpec strip_pair(std::size_t s) { return {WindowKind::strip_pair, s, 0}; }
  static WindowSpec shifted(std::size_t w) { return {WindowKind::shifted_window, w, w / 2}; }
  static WindowSpec shifted(std::size_t w, std::size_t shift) {
    return {WindowKind::shifted_window, w, shift};
  }
};

// Boolean [rows x cols] matrix of allowed (query, key) pairs.
struct SupportMask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> allowed;

  SupportMask() = default;
  SupportMask(std::size_t r, std::size_t c, bool value = true)
      : rows(r), cols(c), allowed(r * c, value ? 1 : 0) {}
  bool at(std::size_t i, std::size_t j) const { return allowed[i * cols + j] != 0; }
  void set(std::size_t i, std::size_t j, bool value) { allowed[i * cols + j] = value ? 1 : 0; }
};

// Token partition for local attention. Each of `count` partitions has `size`
// slots laid out as a cell.height x cell.width patch; slot values are token
// indices, -1 for padding. When `region` is non-empty, slots with differing
// region labels may not attend to each other.
struct PartitionPlan {
  std::size_t count = 0;
  std::size_t size = 0;
  GridShape cell;
  std::vector<std::int64_t> slots;
  std::vector<std::int32_t> region;

  bool needs_mask() const;
  // Slot holding each token (every token must occur exactly once).
  std::vector<std::int64_t> inverse(std::size_t tokens) const;
  SupportMask support(std::size_t tokens) const;
};

enum class StripAxis { horizontal, vertical };

PartitionPlan full_partition(GridShape grid);
PartitionPlan window_partition(GridShape grid, std::size_t window);
PartitionPlan shifted_window_partition(GridShape grid, std::size_t window, std::size_t shift);
// Horizontal strips are `strip` rows tall and span the width; vertical ones
// are `strip` columns wide. Strip extent is clamped to the grid.
PartitionPlan strip_partition(GridShape grid, std::size_t strip, StripAxis axis);

// Rows of B consecutive P-row partitions, [B*P x h*d] -> [B*h x P x d], and back.
template <typename T>
Tensor<T> split_heads(const Tensor<T>& x, std::size_t batches, std::size_t rows, std::size_t heads);
template <typename T>
Tensor<T> merge_heads(const Tensor<T>& x, std::size_t batches, std::size_t heads);

template <typename T>
struct AttentionResult {
  Tensor<T> output;   // [Nq x C]
  Tensor<T> weights;  // [h x Nq x Nk] when requested
};

// Fused QKV projection plus optional output projection.
template <typename T>
struct AttentionParams {
  Linear<T> qkv;   // C -> 3C
  Linear<T> proj;  // C -> C, undefined when the config has no output projection

  AttentionParams() = default;
  AttentionParams(std::size_t channels, Rng& rng, bool output_projection = true);

  const Linear<T>* output_projection() const { return proj.weight.defined() ? &proj : nullptr; }
  void collect(const std::string& prefix, ParameterList<T>& out) const;
};

// Per head: Softmax(Q_h K_h^T / sqrt(d) + mask) V_h, heads concatenated, then
// the output projection if `cfg.use_output_projection`.
template <typename T>
AttentionResult<T> multi_head_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                                        const AttentionConfig& cfg, const SupportMask* mask = nullptr,
                                        const Linear<T>* output_projection = nullptr,
                                        bool keep_weights = false);

// Token-map kernels. `weights`, when given, receives the dense [h x N x N]
// attention matrix (zero outside each query's support).
template <typename T>
TokenMap<T> global_attention(const TokenMap<T>& x, const AttentionParams<T>& params,
                             const AttentionConfig& cfg, Tensor<T>* weights = nullptr);

template <typename T>
TokenMap<T> window_attention(const TokenMap<T>& x, const AttentionParams<T>& params,
                             const AttentionConfig& cfg, const WindowSpec& spec,
                             Tensor<T>* weights = nullptr);

template <typename T>
TokenMap<T> shifted_window_attention(const TokenMap<T>& x, const AttentionParams<T>& params,
                                     const AttentionConfig& cfg, const WindowSpec& spec,
                                     Tensor<T>* weights = nullptr);

// Half of the heads (first C/2 channels) attend within horizontal strips,
// the other half within vertical strips; each adds a 3x3 depthwise conv of V
// computed on its strip.
template <typename T>
TokenMap<T> lepe_attention(const TokenMap<T>& x, const AttentionParams<T>& params,
                           const AttentionConfig& cfg, const WindowSpec& spec,
                           const Tensor<T>& lepe_kernel, const Tensor<T>& lepe_bias,
                           Tensor<T>* weights = nullptr);

// Pre-norm transformer encoder layer: x + Attn(LN(x)), then x + FFN(LN(x)).
template <typename T>
struct EncoderLayer {
  AttentionConfig cfg;
  WindowSpec spec;
  double drop_path_rate = 0.0;
  LayerNorm<T> norm;
  AttentionParams<T> attn;
  DepthwiseConv<T> lepe;  // strip_pair only
  FeedForward<T> ffn;

  EncoderLayer() = default;
  EncoderLayer(std::size_t channels, std::size_t heads, std::size_t ffn_expansion, WindowSpec spec,
               double drop_path_rate, Rng& rng);

  TokenMap<T> forward(const TokenMap<T>& x, ForwardContext& ctx, Tensor<T>* weights = nullptr) const;
  TokenMap<T> attend(const TokenMap<T>& normed, Tensor<T>* weights) const;
  void collect(const std::string& prefix, ParameterList<T>& out) const;
};

}  // namespace gpvit
