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

#include <map>

#include "gpvit/config.hpp"
#include "gpvit/error.hpp"

namespace gpvit {

namespace {

ModelConfig gpvit_variant(const std::string& name, std::size_t channels, double drop_path) {
  ModelConfig c;
  c.name = name;
  c.channels = channels;
  c.drop_path = drop_path;
  return c;
}

ModelConfig vit_baseline(std::size_t channels, std::size_t patch) {
  ModelConfig c;
  c.name = "vit-d" + std::to_string(channels) + "-p" + std::to_string(patch);
  c.family = ModelFamily::vit_baseline;
  c.patch_size = patch;
  c.channels = channels;
  c.attention = AttentionKind::global;
  c.gp_positions.clear();
  c.gp_group_counts.clear();
  return c;
}

ModelConfig ablation(const std::string& name, AttentionKind attention, BlockOverride block) {
  ModelConfig c = gpvit_variant(name, 216, 0.2);
  c.attention = attention;
  c.block_override = block;
  return c;
}

ModelConfig tiny_base(const std::string& name) {
  ModelConfig c;
  c.name = name;
  c.channels = 32;
  c.depth = 4;
  c.heads = 4;
  c.grouping_heads = 4;
  c.ungrouping_heads = 4;
  c.num_classes = 8;
  c.input_size = 32;
  return c;
}

std::map<std::string, ModelConfig> build_presets() {
  std::map<std::string, ModelConfig> p;
  auto add = [&](ModelConfig c) { p.emplace(c.name, std::move(c)); };

  add(gpvit_variant("gpvit-l1", 216, 0.2));
  add(gpvit_variant("gpvit-l2", 348, 0.2));
  add(gpvit_variant("gpvit-l3", 432, 0.3));
  add(gpvit_variant("gpvit-l4", 624, 0.3));
  for (std::size_t ch : {216, 348, 432, 624}) {
    for (std::size_t patch : {8, 16}) add(vit_baseline(ch, patch));
  }

  const std::pair<const char*, BlockOverride> blocks[] = {{"none", BlockOverride::none},
                                                          {"conv", BlockOverride::conv},
                                                          {"global-attn", BlockOverride::global_attn},
                                                          {"win-shift", BlockOverride::win_shift},
                                                          {"gp", BlockOverride::gp}};
  for (const auto& [suffix, block] : blocks) {
    add(ablation(std::string("ablate-win-") + suffix, AttentionKind::window, block));
    if (block != BlockOverride::win_shift) {
      add(ablation(std::string("ablate-lepe-") + suffix, AttentionKind::lepe, block));
    }
  }

  const std::vector<std::vector<std::size_t>> combos = {
      {16, 16, 16, 16}, {32, 32, 32, 32}, {64, 64, 64, 64}, {16, 32, 32, 64}, {64, 32, 32, 16}};
  for (const auto& g : combos) {
    std::string name = "ablate-groups";
    for (std::size_t m : g) name += "-" + std::to_string(m);
    ModelConfig c = gpvit_variant(name, 216, 0.2);
    c.gp_group_counts = g;
    add(c);
  }
  for (PropagationKind k : {PropagationKind::none, PropagationKind::selfattn, PropagationKind::mixer}) {
    ModelConfig c = gpvit_variant("ablate-prop-" + propagation_name(k), 216, 0.2);
    c.propagation = k;
    add(c);
  }

  {
    ModelConfig c = tiny_base("tiny-gradcheck");
    c.channels = 12;
    c.depth = 2;
    c.heads = 2;
    c.grouping_heads = 6;
    c.ungrouping_heads = 6;
    c.gp_positions = {1};
    c.gp_group_counts = {4};
    c.num_classes = 3;
    add(c);
  }
  {
    ModelConfig c = tiny_base("tiny-train");
    c.gp_positions = {1, 3};
    c.gp_group_counts = {8, 4};
    add(c);
  }
  {
    ModelConfig c = tiny_base("tiny");
    c.gp_positions = {1};
    c.gp_group_counts = {8};
    add(c);
  }
  {
    ModelConfig c;
    c.name = "minimal";
    c.depth = 1;
    c.channels = 6;
    c.heads = 1;
    c.num_classes = 2;
    c.attention = AttentionKind::window;
    c.gp_positions.clear();
    c.gp_group_counts.clear();
    c.input_size = 16;
    add(c);
  }
  return p;
}

const std::map<std::string, ModelConfig>& presets() {
  static const std::map<std::string, ModelConfig> p = build_presets();
  return p;
}

}  // namespace

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const auto& [name, cfg] : presets()) names.push_back(name);
  return names;
}

ModelConfig preset(const std::string& name) {
  const auto it = presets().find(name);
  if (it == presets().end()) throw ConfigError("unknown preset '" + name + "'");
  return it->second;
}

}  // namespace gpvit
