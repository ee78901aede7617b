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

#include "gpvit/config.hpp"

#include <bit>

#include "gpvit/error.hpp"

namespace gpvit {

std::string family_name(ModelFamily f) { return f == ModelFamily::gpvit ? "gpvit" : "vit-baseline"; }

ModelFamily parse_family(const std::string& s) {
  if (s == "gpvit") return ModelFamily::gpvit;
  if (s == "vit-baseline") return ModelFamily::vit_baseline;
  throw ConfigError("unknown family '" + s + "' (expected gpvit or vit-baseline)");
}

std::string attention_name(AttentionKind k) {
  switch (k) {
    case AttentionKind::lepe: return "lepe";
    case AttentionKind::window: return "window";
    case AttentionKind::global: return "global";
  }
  return "unknown";
}

AttentionKind parse_attention(const std::string& s) {
  if (s == "lepe") return AttentionKind::lepe;
  if (s == "window") return AttentionKind::window;
  if (s == "global") return AttentionKind::global;
  throw ConfigError("unknown attention kind '" + s + "' (expected lepe, window or global)");
}

std::string override_name(BlockOverride b) {
  switch (b) {
    case BlockOverride::gp: return "gp";
    case BlockOverride::none: return "none";
    case BlockOverride::conv: return "conv";
    case BlockOverride::global_attn: return "global-attn";
    case BlockOverride::win_shift: return "win-shift";
  }
  return "unknown";
}

BlockOverride parse_override(const std::string& s) {
  if (s == "gp") return BlockOverride::gp;
  if (s == "none") return BlockOverride::none;
  if (s == "conv") return BlockOverride::conv;
  if (s == "global-attn") return BlockOverride::global_attn;
  if (s == "win-shift") return BlockOverride::win_shift;
  throw ConfigError("unknown block override '" + s + "' (expected gp, none, conv, global-attn or win-shift)");
}

namespace {

[[noreturn]] void fail(const std::string& field, const std::string& what) {
  throw ConfigError(field + ": " + what);
}

}  // namespace

void ModelConfig::validate() const {
  if (patch_size != 8 && patch_size != 16) fail("patch_size", "must be 8 or 16, got " + std::to_string(patch_size));
  if (channels == 0) fail("channels", "must be positive");
  if (heads == 0 || channels % heads != 0) {
    fail("heads", std::to_string(channels) + " channels are not divisible by " + std::to_string(heads) + " heads");
  }
  if (attention == AttentionKind::lepe && heads % 2 != 0) fail("heads", "lepe attention needs an even head count");
  if (ffn_expansion == 0) fail("ffn_expansion", "must be positive");
  if (num_classes == 0) fail("num_classes", "must be positive");
  if (input_size == 0 || input_size % patch_size != 0) {
    fail("input_size", std::to_string(input_size) + " is not a positive multiple of patch size " +
                           std::to_string(patch_size));
  }
  if (window_size == 0) fail("window_size", "must be positive");
  if (strip_size == 0) fail("strip_size", "must be positive");
  if (!(drop_path >= 0.0 && drop_path < 1.0)) fail("drop_path", "must lie in [0, 1)");
  if (gp_positions.size() != gp_group_counts.size()) {
    fail("gp_group_counts", std::to_string(gp_group_counts.size()) + " entries for " +
                                std::to_string(gp_positions.size()) + " gp_positions");
  }
  for (std::size_t i = 0; i < gp_positions.size(); ++i) {
    if (gp_positions[i] >= depth) {
      fail("gp_positions", "index " + std::to_string(i) + " (layer " + std::to_string(gp_positions[i]) +
                               ") is not below depth " + std::to_string(depth));
    }
    if (i > 0 && gp_positions[i] <= gp_positions[i - 1]) {
      fail("gp_positions", "index " + std::to_string(i) + " (layer " + std::to_string(gp_positions[i]) +
                               ") is not strictly increasing");
    }
    if (gp_group_counts[i] == 0) fail("gp_group_counts", "index " + std::to_string(i) + " is zero");
  }
  if (family == ModelFamily::vit_baseline && !gp_positions.empty()) {
    fail("gp_positions", "must be empty for the vit-baseline family");
  }
  const bool has_gp = family == ModelFamily::gpvit && block_override == BlockOverride::gp && !gp_positions.empty();
  if (has_gp) {
    gp_options(gp_group_counts.front()).validate();
    if (propagation == PropagationKind::selfattn && channels % grouping_heads != 0) {
      fail("grouping_heads", "does not divide channels");
    }
  }
  if (mixer_channel_expansion == 0) fail("mixer_channel_expansion", "must be positive");
  if (!(mixer_token_expansion > 0.0)) fail("mixer_token_expansion", "must be positive");
}

GridShape ModelConfig::token_grid(std::size_t height, std::size_t width) const {
  if (height == 0 || width == 0 || height % patch_size != 0 || width % patch_size != 0) {
    throw ConfigError("input " + std::to_string(height) + "x" + std::to_string(width) +
                      " is not a positive multiple of patch size " + std::to_string(patch_size));
  }
  return {height / patch_size, width / patch_size};
}

GPBlockOptions ModelConfig::gp_options(std::size_t groups) const {
  GPBlockOptions o;
  o.channels = channels;
  o.groups = groups;
  o.grouping_heads = grouping_heads;
  o.ungrouping_heads = ungrouping_heads;
  o.propagation = propagation;
  o.token_expansion = mixer_token_expansion;
  o.channel_expansion = mixer_channel_expansion;
  o.ffn_expansion = ffn_expansion;
  return o;
}

std::vector<LayerSpec> layer_schedule(const ModelConfig& cfg) {
  LayerSpec local;
  switch (cfg.attention) {
    case AttentionKind::lepe: local = {LayerKind::encoder, WindowSpec::strip_pair(cfg.strip_size), 0, "lepe"}; break;
    case AttentionKind::window: local = {LayerKind::encoder, WindowSpec::window(cfg.window_size), 0, "window"}; break;
    case AttentionKind::global: local = {LayerKind::encoder, WindowSpec::full(), 0, "global"}; break;
  }
  std::vector<LayerSpec> layers(cfg.depth, local);
  if (cfg.family == ModelFamily::vit_baseline) return layers;
  for (std::size_t i = 0; i < cfg.gp_positions.size(); ++i) {
    LayerSpec& l = layers.at(cfg.gp_positions[i]);
    switch (cfg.block_override) {
      case BlockOverride::gp: l = {LayerKind::gp, {}, cfg.gp_group_counts[i], "gp"}; break;
      case BlockOverride::none: break;
      case BlockOverride::conv: l = {LayerKind::conv, {}, 0, "conv"}; break;
      case BlockOverride::global_attn: l = {LayerKind::encoder, WindowSpec::full(), 0, "global"}; break;
      case BlockOverride::win_shift:
        l = {LayerKind::encoder, WindowSpec::shifted(cfg.window_size), 0, "win-shift"};
        break;
    }
  }
  return layers;
}

std::vector<std::size_t> stem_widths(const ModelConfig& cfg) {
  const auto levels = static_cast<std::size_t>(std::countr_zero(cfg.patch_size));
  std::vector<std::size_t> w(levels);
  for (std::size_t i = 0; i < levels; ++i) {
    const std::size_t v = cfg.channels >> (levels - 1 - i);
    w[i] = v == 0 ? 1 : v;
  }
  return w;
}

double drop_path_rate(const ModelConfig& cfg, std::size_t layer) {
  if (cfg.depth <= 1) return 0.0;
  return cfg.drop_path * static_cast<double>(layer) / static_cast<double>(cfg.depth - 1);
}

}  // namespace gpvit
