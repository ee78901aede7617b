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

#include "gpvit/config.hpp"

namespace gpvit {

// Counting convention: one multiply-accumulate is one FLOP; softmax,
// normalisation, activations and elementwise ops are free. Window padding
// tokens are counted.
inline constexpr const char* kCostConvention = "mac";

struct CostEntry {
  std::string layer;  // "stem", "0".."depth-1", "head"
  std::string kind;
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
};

struct CostReport {
  std::string model;
  std::size_t input_height = 0;
  std::size_t input_width = 0;
  std::string convention = kCostConvention;
  std::vector<CostEntry> entries;
  std::uint64_t total_params = 0;
  std::uint64_t total_flops = 0;
};

// Per-component closed forms on a Ht x Wt token grid.
std::uint64_t encoder_layer_params(const ModelConfig& cfg, const WindowSpec& window);
std::uint64_t encoder_layer_flops(const ModelConfig& cfg, const WindowSpec& window, GridShape grid);
std::uint64_t gp_block_params(const ModelConfig& cfg, std::size_t groups);
std::uint64_t gp_block_flops(const ModelConfig& cfg, std::size_t groups, std::size_t tokens);
std::uint64_t conv_block_params(std::size_t channels);
std::uint64_t conv_block_flops(std::size_t channels, std::size_t tokens);
// Attention module only (QKV, logits, weighted sum, output projection, LePE).
std::uint64_t attention_flops(std::size_t channels, const WindowSpec& window, GridShape grid);

std::uint64_t count_params(const ModelConfig& cfg);
std::uint64_t count_flops(const ModelConfig& cfg, std::size_t height, std::size_t width);

// Throws UsageError for a zero input size.
CostReport emit_report(const ModelConfig& cfg, std::size_t height, std::size_t width);
std::string report_csv(const CostReport& report);
std::string report_json(const CostReport& report);

enum class ScalingKind { self_attn, window, lepe, gp };

struct ScalingBlock {
  ScalingKind kind = ScalingKind::self_attn;
  std::size_t groups = 0;  // gp only

  std::string label() const;
};

// Most square Ht x Wt with Ht * Wt = n and Ht <= Wt.
GridShape square_grid(std::size_t n);

// FLOPs of one block at each token count (grid from square_grid). Attention
// kinds report the attention module; gp reports the whole GP block. Zero
// tokens give zero FLOPs.
std::vector<std::uint64_t> scaling_series(const ScalingBlock& block, std::size_t channels,
                                          const std::vector<std::size_t>& tokens, std::size_t window_size = 7,
                                          std::size_t strip_size = 2);

// Token count, then one column per block.
std::string scaling_csv(const std::vector<ScalingBlock>& blocks, std::size_t channels,
                        const std::vector<std::size_t>& tokens);

}  // namespace gpvit
