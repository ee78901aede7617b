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

#include "gpvit/attention.hpp"
#include "gpvit/gp_block.hpp"
#include "gpvit/token_map.hpp"

namespace gpvit {

enum class ModelFamily { gpvit, vit_baseline };
enum class AttentionKind { lepe, window, global };
// What sits at the configured GP positions.
enum class BlockOverride { gp, none, conv, global_attn, win_shift };

std::string family_name(ModelFamily f);
ModelFamily parse_family(const std::string& s);
std::string attention_name(AttentionKind k);
AttentionKind parse_attention(const std::string& s);
std::string override_name(BlockOverride b);
BlockOverride parse_override(const std::string& s);

struct ModelConfig {
  std::string name = "custom";
  ModelFamily family = ModelFamily::gpvit;
  std::size_t patch_size = 8;
  std::size_t channels = 216;
  std::size_t depth = 12;
  AttentionKind attention = AttentionKind::lepe;
  std::size_t heads = 12;
  std::size_t ffn_expansion = 4;
  std::vector<std::size_t> gp_positions{1, 4, 7, 10};
  std::vector<std::size_t> gp_group_counts{64, 32, 32, 16};
  PropagationKind propagation = PropagationKind::mixer;
  BlockOverride block_override = BlockOverride::gp;
  double drop_path = 0.0;
  std::size_t num_classes = 1000;
  std::size_t input_size = 224;
  std::size_t window_size = 7;
  std::size_t strip_size = 2;
  std::size_t grouping_heads = 6;
  std::size_t ungrouping_heads = 6;
  double mixer_token_expansion = 0.5;
  std::size_t mixer_channel_expansion = 4;

  // Throws ConfigError naming the offending field (and index for schedules).
  void validate() const;
  // Token grid for an H x W input; throws ConfigError unless both are
  // positive multiples of the patch size.
  GridShape token_grid(std::size_t height, std::size_t width) const;
  GridShape native_grid() const { return token_grid(input_size, input_size); }
  GPBlockOptions gp_options(std::size_t groups) const;
};

enum class LayerKind { encoder, gp, conv };

struct LayerSpec {
  LayerKind kind = LayerKind::encoder;
  WindowSpec window;        // encoder layers
  std::size_t groups = 0;   // gp layers
  std::string label;        // lepe, window, global, win-shift, gp, conv
};

// One entry per layer, in order.
std::vector<LayerSpec> layer_schedule(const ModelConfig& cfg);

// Output widths of the stride-2 stem convs (log2(patch) of them, last = C).
std::vector<std::size_t> stem_widths(const ModelConfig& cfg);

// Linearly increasing stochastic depth rate for layer i.
double drop_path_rate(const ModelConfig& cfg, std::size_t layer);

// Built-in presets -----------------------------------------------------------

std::vector<std::string> preset_names();
ModelConfig preset(const std::string& name);  // throws ConfigError for unknown names

// Key/value text format ---------------------------------------------------------
//
//   # comment
//   key = value
//
// Lists are comma separated. Unknown keys, malformed values and invalid
// configurations raise ConfigError with "<source>:<line>: <field>: ..." context.

ModelConfig parse_config(const std::string& text, const std::string& source = "<config>");
ModelConfig load_config(const std::string& path);
std::string serialize_config(const ModelConfig& cfg);
// FNV-1a over the serialized form, excluding the name.
std::uint64_t config_digest(const ModelConfig& cfg);

}  // namespace gpvit
