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

#include "gpvit/attention.hpp"

#include <algorithm>
#include <cmath>

#include "gpvit/error.hpp"

namespace gpvit {

using ops::bmm;
using ops::permute;
using ops::reshape;
using ops::slice;

void AttentionConfig::validate() const {
  if (num_heads == 0) throw ConfigError("attention: head count must be positive");
  if (model_dim == 0 || model_dim % num_heads != 0) {
    throw ConfigError("attention: model dim " + std::to_string(model_dim) +
                      " is not divisible by " + std::to_string(num_heads) + " heads");
  }
}

std::string window_kind_name(WindowKind kind) {
  switch (kind) {
    case WindowKind::full: return "full";
    case WindowKind::window: return "window";
    case WindowKind::strip_pair: return "strip_pair";
    case WindowKind::shifted_window: return "shifted_window";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Partition plans

bool PartitionPlan::needs_mask() const {
  if (!region.empty()) return true;
  return std::any_of(slots.begin(), slots.end(), [](std::int64_t s) { return s < 0; });
}

std::vector<std::int64_t> PartitionPlan::inverse(std::size_t tokens) const {
  std::vector<std::int64_t> inv(tokens, -1);
  for (std::size_t s = 0; s < slots.size(); ++s) {
    const std::int64_t t = slots[s];
    if (t < 0) continue;
    if (static_cast<std::size_t>(t) >= tokens || inv[static_cast<std::size_t>(t)] >= 0) {
      throw ShapeError("partition plan: token " + std::to_string(t) + " is out of range or repeated");
    }
    inv[static_cast<std::size_t>(t)] = static_cast<std::int64_t>(s);
  }
  for (std::size_t t = 0; t < tokens; ++t) {
    if (inv[t] < 0) throw ShapeError("partition plan: token " + std::to_string(t) + " is not covered");
  }
  return inv;
}

SupportMask PartitionPlan::support(std::size_t tokens) const {
  SupportMask m(tokens, tokens, false);
  for (std::size_t p = 0; p < count; ++p) {
    for (std::size_t a = 0; a < size; ++a) {
      const std::int64_t i = slots[p * size + a];
      if (i < 0) continue;
      for (std::size_t b = 0; b < size; ++b) {
        const std::int64_t j = slots[p * size + b];
        if (j < 0) continue;
        if (!region.empty() && region[p * size + a] != region[p * size + b]) continue;
        m.set(static_cast<std::size_t>(i), static_cast<std::size_t>(j), true);
      }
    }
  }
  return m;
}

namespace {

std::size_t round_up(std::size_t n, std::size_t m) { return (n + m - 1) / m * m; }

// Tiles a (virtual) rows x cols frame with cell-sized patches; `token_at`
// maps frame coordinates to a token index or -1.
template <typename F>
PartitionPlan tile_frame(std::size_t rows, std::size_t cols, GridShape cell, F token_at) {
  PartitionPlan plan;
  plan.cell = cell;
  plan.size = cell.tokens();
  const std::size_t pr = rows / cell.height, pc = cols / cell.width;
  plan.count = pr * pc;
  plan.slots.reserve(plan.count * plan.size);
  for (std::size_t a = 0; a < pr; ++a) {
    for (std::size_t b = 0; b < pc; ++b) {
      for (std::size_t u = 0; u < cell.height; ++u) {
        for (std::size_t v = 0; v < cell.width; ++v) {
          plan.slots.push_back(token_at(a * cell.height + u, b * cell.width + v));
        }
      }
    }
  }
  return plan;
}

void check_grid(GridShape grid, const char* where) {
  if (grid.height == 0 || grid.width == 0) throw ShapeError(std::string(where) + ": empty grid");
}

}  // namespace

PartitionPlan full_partition(GridShape grid) {
  check_grid(grid, "full partition");
  return tile_frame(grid.height, grid.width, grid, [&](std::size_t r, std::size_t c) {
    return static_cast<std::int64_t>(r * grid.width + c);
  });
}

PartitionPlan window_partition(GridShape grid, std::size_t window) {
  check_grid(grid, "window partition");
  if (window == 0) throw ConfigError("window partition: window size must be positive");
  const std::size_t hp = round_up(grid.height, window), wp = round_up(grid.width, window);
  return tile_frame(hp, wp, {window, window}, [&](std::size_t r, std::size_t c) -> std::int64_t {
    if (r >= grid.height || c >= grid.width) return -1;
    return static_cast<std::int64_t>(r * grid.width + c);
  });
}

PartitionPlan shifted_window_partition(GridShape grid, std::size_t window, std::size_t shift) {
  check_grid(grid, "shifted window partition");
  if (window == 0) throw ConfigError("shifted window partition: window size must be positive");
  if (shift >= window) throw ConfigError("shifted window partition: shift must be below the window size");
  const std::size_t hp = round_up(grid.height, window), wp = round_up(grid.width, window);
  // Frame position (r, c) holds padded-grid position ((r + shift) mod hp, (c + shift) mod wp).
  PartitionPlan plan = tile_frame(hp, wp, {window, window}, [&](std::size_t r, std::size_t c) -> std::int64_t {
    const std::size_t sr = (r + shift) % hp, sc = (c + shift) % wp;
    if (sr >= grid.height || sc >= grid.width) return -1;
    return static_cast<std::int64_t>(sr * grid.width + sc);
  });
  if (shift > 0) {
    auto band = [&](std::size_t x, std::size_t extent) -> std::int32_t {
      if (x < extent - window) return 0;
      return x < extent - shift ? 1 : 2;
    };
    const PartitionPlan labels =
        tile_frame(hp, wp, {window, window}, [&](std::size_t r, std::size_t c) -> std::int64_t {
          return 3 * band(r, hp) + band(c, wp);
        });
    plan.region.assign(labels.slots.begin(), labels.slots.end());
  }
  return plan;
}

PartitionPlan strip_partition(GridShape grid, std::size_t strip, StripAxis axis) {
  check_grid(grid, "strip partition");
  if (strip == 0) throw ConfigError("strip partition: strip size must be positive");
  auto token = [&](std::size_t r, std::size_t c) -> std::int64_t {
    if (r >= grid.height || c >= grid.width) return -1;
    return static_cast<std::int64_t>(r * grid.width + c);
  };
  if (axis == StripAxis::horizontal) {
    const std::size_t s = std::min(strip, grid.height);
    return tile_frame(round_up(grid.height, s), grid.width, {s, grid.width}, token);
  }
  const std::size_t s = std::min(strip, grid.width);
  return tile_frame(grid.height, round_up(grid.width, s), {grid.height, s}, token);
}

// ---------------------------------------------------------------------------
// Attention core

template <typename T>
Tensor<T> split_heads(const Tensor<T>& x, std::size_t batches, std::size_t rows, std::size_t heads) {
  const std::size_t d = x.dim(1) / heads;
  return reshape(permute(reshape(x, {batches, rows, heads, d}), {0, 2, 1, 3}), {batches * heads, rows, d});
}

template <typename T>
Tensor<T> merge_heads(const Tensor<T>& x, std::size_t batches, std::size_t heads) {
  const std::size_t rows = x.dim(1), d = x.dim(2);
  return reshape(permute(reshape(x, {batches, heads, rows, d}), {0, 2, 1, 3}), {batches * rows, heads * d});
}

namespace {

template <typename T>
T inv_sqrt(std::size_t d) {
  return static_cast<T>(1.0 / std::sqrt(static_cast<double>(d)));
}

// Attention restricted to the partitions of `plan`. q, k, v: [N x h*d].
// If lepe_kernel is given, a depthwise conv of V on each partition's cell is
// added to the attention output. Dense weights for these heads are written to
// dense[head_offset + ...] when dense is non-null.
template <typename T>
Tensor<T> partitioned_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                                std::size_t heads, const PartitionPlan& plan,
                                const Tensor<T>* lepe_kernel, const Tensor<T>* lepe_bias,
                                std::vector<T>* dense, std::size_t head_offset) {
  const std::size_t n = q.dim(0), width = q.dim(1);
  const std::size_t P = plan.size, B = plan.count;
  const std::span<const std::int64_t> slots(plan.slots);
  Tensor<T> qg = ops::gather_rows(q, slots);
  Tensor<T> kg = ops::gather_rows(k, slots);
  Tensor<T> vg = ops::gather_rows(v, slots);

  Tensor<T> logits = ops::scale(bmm(split_heads(qg, B, P, heads), split_heads(kg, B, P, heads), true),
                                inv_sqrt<T>(width / heads));
  if (plan.needs_mask()) {
    std::vector<T> mask(B * heads * P * P, T(0));
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t i = 0; i < P; ++i) {
        for (std::size_t j = 0; j < P; ++j) {
          const bool blocked = plan.slots[b * P + j] < 0 ||
                               (!plan.region.empty() && plan.region[b * P + i] != plan.region[b * P + j]);
          if (!blocked) continue;
          for (std::size_t h = 0; h < heads; ++h) mask[((b * heads + h) * P + i) * P + j] = T(kMaskedLogit);
        }
      }
    }
    logits = ops::add(logits, Tensor<T>::from_data({B * heads, P, P}, std::move(mask)));
  }
  Tensor<T> probs = ops::softmax(logits, 2);
  Tensor<T> out = merge_heads(bmm(probs, split_heads(vg, B, P, heads)), B, heads);

  if (lepe_kernel) {
    Tensor<T> cells = reshape(vg, {B, plan.cell.height, plan.cell.width, width});
    out = ops::add(out, reshape(ops::depthwise_conv2d(cells, *lepe_kernel, *lepe_bias), {B * P, width}));
  }

  if (dense) {
    const auto p = probs.data();
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t h = 0; h < heads; ++h) {
        for (std::size_t i = 0; i < P; ++i) {
          const std::int64_t ti = plan.slots[b * P + i];
          if (ti < 0) continue;
          for (std::size_t j = 0; j < P; ++j) {
            const std::int64_t tj = plan.slots[b * P + j];
            if (tj < 0) continue;
            (*dense)[((head_offset + h) * n + static_cast<std::size_t>(ti)) * n + static_cast<std::size_t>(tj)] =
                p[((b * heads + h) * P + i) * P + j];
          }
        }
      }
    }
  }
  const std::vector<std::int64_t> inv = plan.inverse(n);
  return ops::gather_rows(out, std::span<const std::int64_t>(inv));
}

template <typename T>
struct QKV {
  Tensor<T> q, k, v;
};

template <typename T>
QKV<T> project_qkv(const TokenMap<T>& x, const AttentionParams<T>& params, const AttentionConfig& cfg,
                   const char* where) {
  check_token_map(x, where);
  cfg.validate();
  const std::size_t c = cfg.model_dim;
  if (x.channels() != c || params.qkv.in_features() != c || params.qkv.out_features() != 3 * c) {
    throw ShapeError(std::string(where) + ": channel mismatch (input " + std::to_string(x.channels()) +
                     ", model dim " + std::to_string(c) + ")");
  }
  Tensor<T> qkv = params.qkv.forward(x.features);
  return {slice(qkv, 1, 0, c), slice(qkv, 1, c, 2 * c), slice(qkv, 1, 2 * c, 3 * c)};
}

template <typename T>
Tensor<T> finish(const Tensor<T>& y, const AttentionParams<T>& params, const AttentionConfig& cfg) {
  if (!cfg.use_output_projection) return y;
  const Linear<T>* proj = params.output_projection();
  if (!proj) throw UsageError("attention: output projection requested but not constructed");
  return proj->forward(y);
}

template <typename T>
TokenMap<T> run_plan(const TokenMap<T>& x, const AttentionParams<T>& params, const AttentionConfig& cfg,
                     const PartitionPlan& plan, Tensor<T>* weights, const char* where) {
  QKV<T> t = project_qkv(x, params, cfg, where);
  const std::size_t n = x.tokens();
  std::vector<T> dense;
  if (weights) dense.assign(cfg.num_heads * n * n, T(0));
  Tensor<T> y = partitioned_attention(t.q, t.k, t.v, cfg.num_heads, plan, static_cast<const Tensor<T>*>(nullptr),
                                      static_cast<const Tensor<T>*>(nullptr), weights ? &dense : nullptr, 0);
  if (weights) *weights = Tensor<T>::from_data({cfg.num_heads, n, n}, std::move(dense));
  return {finish(y, params, cfg), x.grid};
}

}  // namespace

template <typename T>
AttentionParams<T>::AttentionParams(std::size_t channels, Rng& rng, bool output_projection)
    : qkv(channels, 3 * channels, rng) {
  if (output_projection) proj = Linear<T>(channels, channels, rng);
}

template <typename T>
void AttentionParams<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
  qkv.collect(prefix + ".qkv", out);
  if (proj.weight.defined()) proj.collect(prefix + ".proj", out);
}

template <typename T>
AttentionResult<T> multi_head_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                                        const AttentionConfig& cfg, const SupportMask* mask,
                                        const Linear<T>* output_projection, bool keep_weights) {
  cfg.validate();
  const std::size_t h = cfg.num_heads, c = cfg.model_dim;
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.dim(1) != c || k.dim(1) != c || v.dim(1) != c ||
      k.dim(0) != v.dim(0)) {
    throw ShapeError("multi_head_attention: expected q [Nq x " + std::to_string(c) + "], k/v [Nk x " +
                     std::to_string(c) + "], got " + shape_str(q.shape()) + ", " + shape_str(k.shape()) + ", " +
                     shape_str(v.shape()));
  }
  const std::size_t nq = q.dim(0), nk = k.dim(0);
  Tensor<T> logits = ops::scale(bmm(split_heads(q, 1, nq, h), split_heads(k, 1, nk, h), true), inv_sqrt<T>(c / h));
  if (mask) {
    if (mask->rows != nq || mask->cols != nk) {
      throw ShapeError("multi_head_attention: mask is " + std::to_string(mask->rows) + "x" +
                       std::to_string(mask->cols) + ", expected " + std::to_string(nq) + "x" + std::to_string(nk));
    }
    std::vector<T> add(h * nq * nk, T(0));
    for (std::size_t i = 0; i < nq; ++i) {
      bool any = false;
      for (std::size_t j = 0; j < nk; ++j) {
        if (mask->at(i, j)) {
          any = true;
          continue;
        }
        for (std::size_t hh = 0; hh < h; ++hh) add[(hh * nq + i) * nk + j] = T(kMaskedLogit);
      }
      if (!any) throw ConfigError("multi_head_attention: query " + std::to_string(i) + " has an empty support");
    }
    logits = ops::add(logits, Tensor<T>::from_data({h, nq, nk}, std::move(add)));
  }
  Tensor<T> probs = ops::softmax(logits, 2);
  Tensor<T> y = merge_heads(bmm(probs, split_heads(v, 1, nk, h)), 1, h);
  if (cfg.use_output_projection) {
    if (!output_projection) throw UsageError("multi_head_attention: output projection requested but not given");
    y = output_projection->forward(y);
  }
  AttentionResult<T> r;
  r.output = y;
  if (keep_weights) r.weights = probs.detach();
  return r;
}

template <typename T>
TokenMap<T> global_attention(const TokenMap<T>& x, const AttentionParams<T>& params, const AttentionConfig& cfg,
                             Tensor<T>* weights) {
  QKV<T> t = project_qkv(x, params, cfg, "global attention");
  AttentionConfig inner = cfg;
  inner.use_output_projection = false;
  AttentionResult<T> r = multi_head_attention<T>(t.q, t.k, t.v, inner, nullptr, nullptr, weights != nullptr);
  if (weights) *weights = r.weights;
  return {finish(r.output, params, cfg), x.grid};
}

template <typename T>
TokenMap<T> window_attention(const TokenMap<T>& x, const AttentionParams<T>& params, const AttentionConfig& cfg,
                             const WindowSpec& spec, Tensor<T>* weights) {
  if (spec.kind != WindowKind::window) throw ConfigError("window attention: spec kind is " + window_kind_name(spec.kind));
  return run_plan(x, params, cfg, window_partition(x.grid, spec.size), weights, "window attention");
}

template <typename T>
TokenMap<T> shifted_window_attention(const TokenMap<T>& x, const AttentionParams<T>& params,
                                     const AttentionConfig& cfg, const WindowSpec& spec, Tensor<T>* weights) {
  if (spec.kind != WindowKind::shifted_window) {
    throw ConfigError("shifted window attention: spec kind is " + window_kind_name(spec.kind));
  }
  return run_plan(x, params, cfg, shifted_window_partition(x.grid, spec.size, spec.shift), weights,
                  "shifted window attention");
}

template <typename T>
TokenMap<T> lepe_attention(const TokenMap<T>& x, const AttentionParams<T>& params, const AttentionConfig& cfg,
                           const WindowSpec& spec, const Tensor<T>& lepe_kernel, const Tensor<T>& lepe_bias,
                           Tensor<T>* weights) {
  if (spec.kind != WindowKind::strip_pair) throw ConfigError("lepe attention: spec kind is " + window_kind_name(spec.kind));
  if (cfg.num_heads % 2 != 0) {
    throw ConfigError("lepe attention: head count " + std::to_string(cfg.num_heads) + " must be even");
  }
  QKV<T> t = project_qkv(x, params, cfg, "lepe attention");
  const std::size_t c = cfg.model_dim, half = c / 2, hh = cfg.num_heads / 2, n = x.tokens();
  if (lepe_kernel.rank() != 3 || lepe_kernel.dim(2) != c || lepe_bias.rank() != 1 || lepe_bias.dim(0) != c) {
    throw ShapeError("lepe attention: positional kernel/bias do not match " + std::to_string(c) + " channels");
  }
  std::vector<T> dense;
  if (weights) dense.assign(cfg.num_heads * n * n, T(0));
  std::vector<T>* dp = weights ? &dense : nullptr;

  Tensor<T> parts[2];
  const StripAxis axes[2] = {StripAxis::horizontal, StripAxis::vertical};
  for (std::size_t g = 0; g < 2; ++g) {
    const std::size_t lo = g * half, hi = lo + half;
    Tensor<T> kg = slice(lepe_kernel, 2, lo, hi);
    Tensor<T> bg = slice(lepe_bias, 0, lo, hi);
    parts[g] = partitioned_attention(slice(t.q, 1, lo, hi), slice(t.k, 1, lo, hi), slice(t.v, 1, lo, hi), hh,
                                     strip_partition(x.grid, spec.size, axes[g]), &kg, &bg, dp, g * hh);
  }
  if (weights) *weights = Tensor<T>::from_data({cfg.num_heads, n, n}, std::move(dense));
  return {finish(ops::concat<T>({parts[0], parts[1]}, 1), params, cfg), x.grid};
}

// ---------------------------------------------------------------------------

template <typename T>
EncoderLayer<T>::EncoderLayer(std::size_t channels, std::size_t heads, std::size_t ffn_expansion, WindowSpec spec_,
                              double drop_path_rate_, Rng& rng)
    : cfg{heads, channels, true}, spec(spec_), drop_path_rate(drop_path_rate_), norm(channels) {
  cfg.validate();
  if (spec.kind == WindowKind::strip_pair && heads % 2 != 0) {
    throw ConfigError("encoder layer: strip attention needs an even head count, got " + std::to_string(heads));
  }
  attn = AttentionParams<T>(channels, rng, true);
  if (spec.kind == WindowKind::strip_pair) lepe = DepthwiseConv<T>(channels, 3, rng, false);
  ffn = FeedForward<T>(channels, ffn_expansion, rng);
}

template <typename T>
TokenMap<T> EncoderLayer<T>::attend(const TokenMap<T>& normed, Tensor<T>* weights) const {
  switch (spec.kind) {
    case WindowKind::full: return global_attention(normed, attn, cfg, weights);
    case WindowKind::window: return window_attention(normed, attn, cfg, spec, weights);
    case WindowKind::shifted_window: return shifted_window_attention(normed, attn, cfg, spec, weights);
    case WindowKind::strip_pair: return lepe_attention(normed, attn, cfg, spec, lepe.kernel, lepe.bias, weights);
  }
  throw ConfigError("encoder layer: unknown window kind");
}

template <typename T>
TokenMap<T> EncoderLayer<T>::forward(const TokenMap<T>& x, ForwardContext& ctx, Tensor<T>* weights) const {
  check_token_map(x, "encoder layer");
  Tensor<T> a = attend({norm.forward(x.features), x.grid}, weights).features;
  Tensor<T> h = ops::add(x.features, drop_path(a, drop_path_rate, ctx));
  Tensor<T> f = ffn.forward(h);
  return {ops::add(h, drop_path(f, drop_path_rate, ctx)), x.grid};
}

template <typename T>
void EncoderLayer<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
  norm.collect(prefix + ".norm", out);
  attn.collect(prefix + ".attn", out);
  if (lepe.kernel.defined()) lepe.collect(prefix + ".lepe", out);
  ffn.collect(prefix + ".ffn", out);
}

#define GPVIT_INSTANTIATE_ATTN(T)                                                                               \
  template Tensor<T> split_heads(const Tensor<T>&, std::size_t, std::size_t, std::size_t);                    \
  template Tensor<T> merge_heads(const Tensor<T>&, std::size_t, std::size_t);                                 \
  template struct AttentionParams<T>;                                                                           \
  template AttentionResult<T> multi_head_attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,        \
                                                   const AttentionConfig&, const SupportMask*, const Linear<T>*, \
                                                   bool);                                                        \
  template TokenMap<T> global_attention(const TokenMap<T>&, const AttentionParams<T>&, const AttentionConfig&,  \
                                        Tensor<T>*);                                                             \
  template TokenMap<T> window_attention(const TokenMap<T>&, const AttentionParams<T>&, const AttentionConfig&,  \
                                        const WindowSpec&, Tensor<T>*);                                          \
  template TokenMap<T> shifted_window_attention(const TokenMap<T>&, const AttentionParams<T>&,                   \
                                                const AttentionConfig&, const WindowSpec&, Tensor<T>*);          \
  template TokenMap<T> lepe_attention(const TokenMap<T>&, const AttentionParams<T>&, const AttentionConfig&,    \
                                      const WindowSpec&, const Tensor<T>&, const Tensor<T>&, Tensor<T>*);        \
  template struct EncoderLayer<T>;

GPVIT_INSTANTIATE_ATTN(float)
GPVIT_INSTANTIATE_ATTN(double)

#undef GPVIT_INSTANTIATE_ATTN

}  // namespace gpvit
