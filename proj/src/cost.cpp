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

#include "gpvit/cost.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <sstream>

#include "gpvit/error.hpp"

namespace gpvit {

namespace {

using u64 = std::uint64_t;

u64 round_up(u64 n, u64 m) { return (n + m - 1) / m * m; }

u64 linear_params(u64 in, u64 out) { return in * out + out; }
u64 norm_params(u64 c) { return 2 * c; }
u64 ffn_params(u64 c, u64 e) { return norm_params(c) + linear_params(c, e * c) + linear_params(e * c, c); }

// Logits plus weighted sum over `count` partitions of `size` slots.
u64 partition_flops(u64 count, u64 size, u64 width) { return 2 * count * size * size * width; }

u64 strip_flops(GridShape g, std::size_t strip, StripAxis axis, u64 width) {
  u64 count, size;
  if (axis == StripAxis::horizontal) {
    const u64 s = std::min<u64>(strip, g.height);
    count = round_up(g.height, s) / s;
    size = s * g.width;
  } else {
    const u64 s = std::min<u64>(strip, g.width);
    count = round_up(g.width, s) / s;
    size = s * g.height;
  }
  return partition_flops(count, size, width) + 9 * count * size * width;
}

}  // namespace

u64 attention_flops(std::size_t channels, const WindowSpec& window, GridShape grid) {
  const u64 c = channels, n = grid.tokens();
  if (n == 0) return 0;
  u64 f = 4 * n * c * c;
  switch (window.kind) {
    case WindowKind::full: f += 2 * n * n * c; break;
    case WindowKind::window:
    case WindowKind::shifted_window: {
      const u64 w = window.size;
      const u64 padded = round_up(grid.height, w) * round_up(grid.width, w);
      f += partition_flops(padded / (w * w), w * w, c);
      break;
    }
    case WindowKind::strip_pair:
      f += strip_flops(grid, window.size, StripAxis::horizontal, c / 2) +
           strip_flops(grid, window.size, StripAxis::vertical, c / 2);
      break;
  }
  return f;
}

u64 encoder_layer_params(const ModelConfig& cfg, const WindowSpec& window) {
  const u64 c = cfg.channels;
  u64 p = norm_params(c) + linear_params(c, 3 * c) + linear_params(c, c) + ffn_params(c, cfg.ffn_expansion);
  if (window.kind == WindowKind::strip_pair) p += 9 * c + c;
  return p;
}

u64 encoder_layer_flops(const ModelConfig& cfg, const WindowSpec& window, GridShape grid) {
  const u64 c = cfg.channels, n = grid.tokens();
  return attention_flops(cfg.channels, window, grid) + 2 * cfg.ffn_expansion * n * c * c;
}

u64 gp_block_params(const ModelConfig& cfg, std::size_t groups) {
  const GPBlockOptions o = cfg.gp_options(groups);
  const u64 c = cfg.channels, m = groups, th = o.token_hidden(), ce = o.channel_expansion;
  u64 p = m * c;                                    // group tokens
  p += norm_params(c) + linear_params(c, c);        // grouping
  switch (o.propagation) {
    case PropagationKind::mixer:
      p += norm_params(c) + linear_params(m, th) + linear_params(th, m);
      p += norm_params(c) + linear_params(c, ce * c) + linear_params(ce * c, c);
      break;
    case PropagationKind::selfattn:
      p += norm_params(c) + linear_params(c, 3 * c) + linear_params(c, c) + ffn_params(c, ce);
      break;
    case PropagationKind::none: break;
  }
  p += 2 * norm_params(c) + 3 * linear_params(c, c) + linear_params(2 * c, c) + ffn_params(c, o.ffn_expansion);
  p += 9 * c + c;  // dwconv
  return p;
}

u64 gp_block_flops(const ModelConfig& cfg, std::size_t groups, std::size_t tokens) {
  if (tokens == 0) return 0;
  const GPBlockOptions o = cfg.gp_options(groups);
  const u64 c = cfg.channels, m = groups, n = tokens, th = o.token_hidden(), ce = o.channel_expansion;
  u64 f = n * c * c + 2 * m * n * c;  // grouping keys, logits + weighted sum
  switch (o.propagation) {
    case PropagationKind::mixer: f += 2 * c * m * th + 2 * ce * m * c * c; break;
    case PropagationKind::selfattn: f += 4 * m * c * c + 2 * m * m * c + 2 * ce * m * c * c; break;
    case PropagationKind::none: break;
  }
  f += n * c * c + 2 * m * c * c + 2 * n * m * c;  // ungrouping attention
  f += 2 * n * c * c;                              // concat projection
  f += 2 * o.ffn_expansion * n * c * c;            // FFN
  f += 9 * n * c;                                  // dwconv
  return f;
}

u64 conv_block_params(std::size_t channels) {
  const u64 c = channels;
  return norm_params(c) + 2 * (9 * c * c + c);
}

u64 conv_block_flops(std::size_t channels, std::size_t tokens) {
  const u64 c = channels;
  return 2 * 9 * static_cast<u64>(tokens) * c * c;
}

namespace {

u64 stem_params(const ModelConfig& cfg) {
  const std::vector<std::size_t> widths = stem_widths(cfg);
  u64 p = 0, in = 3;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    p += 9 * in * widths[i];
    p += i + 1 == widths.size() ? widths[i] : norm_params(widths[i]);
    in = widths[i];
  }
  return p + static_cast<u64>(cfg.native_grid().tokens()) * cfg.channels;
}

u64 stem_flops(const ModelConfig& cfg, std::size_t height, std::size_t width) {
  const std::vector<std::size_t> widths = stem_widths(cfg);
  u64 f = 0, in = 3, h = height, w = width;
  for (std::size_t wi : widths) {
    h = (h + 1) / 2;
    w = (w + 1) / 2;
    f += h * w * 9 * in * wi;
    in = wi;
  }
  const GridShape native = cfg.native_grid();
  if (native.height != h || native.width != w) f += h * w * native.tokens() * cfg.channels;
  return f;
}

u64 head_params(const ModelConfig& cfg) { return norm_params(cfg.channels) + linear_params(cfg.channels, cfg.num_classes); }

}  // namespace

CostReport emit_report(const ModelConfig& cfg, std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) throw UsageError("cost report: input size must be positive");
  cfg.validate();
  const GridShape grid = cfg.token_grid(height, width);
  CostReport r;
  r.model = cfg.name;
  r.input_height = height;
  r.input_width = width;
  r.entries.push_back({"stem", "stem", stem_params(cfg), stem_flops(cfg, height, width)});
  const std::vector<LayerSpec> schedule = layer_schedule(cfg);
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    const LayerSpec& l = schedule[i];
    CostEntry e{std::to_string(i), l.label, 0, 0};
    switch (l.kind) {
      case LayerKind::encoder:
        e.params = encoder_layer_params(cfg, l.window);
        e.flops = encoder_layer_flops(cfg, l.window, grid);
        break;
      case LayerKind::gp:
        e.kind = "gp-" + std::to_string(l.groups);
        e.params = gp_block_params(cfg, l.groups);
        e.flops = gp_block_flops(cfg, l.groups, grid.tokens());
        break;
      case LayerKind::conv:
        e.params = conv_block_params(cfg.channels);
        e.flops = conv_block_flops(cfg.channels, grid.tokens());
        break;
    }
    r.entries.push_back(e);
  }
  r.entries.push_back({"head", "head", head_params(cfg), static_cast<u64>(cfg.channels) * cfg.num_classes});
  for (const CostEntry& e : r.entries) {
    r.total_params += e.params;
    r.total_flops += e.flops;
  }
  return r;
}

u64 count_params(const ModelConfig& cfg) { return emit_report(cfg, cfg.input_size, cfg.input_size).total_params; }

u64 count_flops(const ModelConfig& cfg, std::size_t height, std::size_t width) {
  return emit_report(cfg, height, width).total_flops;
}

std::string report_csv(const CostReport& report) {
  std::ostringstream out;
  out << "layer,kind,params,flops\n";
  for (const CostEntry& e : report.entries) out << e.layer << ',' << e.kind << ',' << e.params << ',' << e.flops << '\n';
  out << "total,total," << report.total_params << ',' << report.total_flops << '\n';
  return out.str();
}

std::string report_json(const CostReport& report) {
  nlohmann::json j;
  j["model"] = report.model;
  j["input"] = {report.input_height, report.input_width};
  j["convention"] = report.convention;
  j["total_params"] = report.total_params;
  j["total_flops"] = report.total_flops;
  j["entries"] = nlohmann::json::array();
  for (const CostEntry& e : report.entries) {
    j["entries"].push_back({{"layer", e.layer}, {"kind", e.kind}, {"params", e.params}, {"flops", e.flops}});
  }
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------

std::string ScalingBlock::label() const {
  switch (kind) {
    case ScalingKind::self_attn: return "self-attn";
    case ScalingKind::window: return "window";
    case ScalingKind::lepe: return "lepe";
    case ScalingKind::gp: return "gp-" + std::to_string(groups);
  }
  return "unknown";
}

GridShape square_grid(std::size_t n) {
  if (n == 0) return {0, 0};
  auto h = static_cast<std::size_t>(std::sqrt(static_cast<double>(n)));
  while (h * h > n) --h;
  while ((h + 1) * (h + 1) <= n) ++h;
  while (n % h != 0) --h;
  return {h, n / h};
}

std::vector<u64> scaling_series(const ScalingBlock& block, std::size_t channels, const std::vector<std::size_t>& tokens,
                                std::size_t window_size, std::size_t strip_size) {
  ModelConfig cfg;
  cfg.channels = channels;
  std::vector<u64> out;
  out.reserve(tokens.size());
  for (std::size_t n : tokens) {
    if (n == 0) {
      out.push_back(0);
      continue;
    }
    const GridShape g = square_grid(n);
    switch (block.kind) {
      case ScalingKind::self_attn: out.push_back(attention_flops(channels, WindowSpec::full(), g)); break;
      case ScalingKind::window: out.push_back(attention_flops(channels, WindowSpec::window(window_size), g)); break;
      case ScalingKind::lepe: out.push_back(attention_flops(channels, WindowSpec::strip_pair(strip_size), g)); break;
      case ScalingKind::gp:
        if (block.groups == 0) throw ConfigError("scaling series: gp block needs a group count");
        out.push_back(gp_block_flops(cfg, block.groups, n));
        break;
    }
  }
  return out;
}

std::string scaling_csv(const std::vector<ScalingBlock>& blocks, std::size_t channels,
                        const std::vector<std::size_t>& tokens) {
  std::vector<std::vector<u64>> cols;
  for (const auto& b : blocks) cols.push_back(scaling_series(b, channels, tokens));
  std::ostringstream out;
  out << "tokens";
  for (const auto& b : blocks) out << ',' << b.label();
  out << '\n';
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    out << tokens[i];
    for (const auto& c : cols) out << ',' << c[i];
    out << '\n';
  }
  return out.str();
}

}  // namespace gpvit
