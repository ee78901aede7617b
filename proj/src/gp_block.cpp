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

#include "gpvit/gp_block.hpp"

#include <cmath>

#include "gpvit/error.hpp"

namespace gpvit {

std::string propagation_name(PropagationKind kind) {
  switch (kind) {
    case PropagationKind::mixer: return "mixer";
    case PropagationKind::selfattn: return "selfattn";
    case PropagationKind::none: return "none";
  }
  return "unknown";
}

PropagationKind parse_propagation(const std::string& name) {
  if (name == "mixer") return PropagationKind::mixer;
  if (name == "selfattn") return PropagationKind::selfattn;
  if (name == "none") return PropagationKind::none;
  throw ConfigError("unknown propagation core '" + name + "' (expected mixer, selfattn or none)");
}

std::size_t GPBlockOptions::token_hidden() const {
  const auto h = static_cast<std::size_t>(std::ceil(token_expansion * static_cast<double>(groups)));
  return h == 0 ? 1 : h;
}

void GPBlockOptions::validate() const {
  if (groups == 0) throw ConfigError("gp block: group count must be positive");
  if (channels == 0) throw ConfigError("gp block: channels must be positive");
  if (grouping_heads == 0 || channels % grouping_heads != 0) {
    throw ConfigError("gp block: channels " + std::to_string(channels) + " not divisible by " +
                      std::to_string(grouping_heads) + " grouping heads");
  }
  if (ungrouping_heads == 0 || channels % ungrouping_heads != 0) {
    throw ConfigError("gp block: channels " + std::to_string(channels) + " not divisible by " +
                      std::to_string(ungrouping_heads) + " ungrouping heads");
  }
  if (!(token_expansion > 0.0)) throw ConfigError("gp block: token expansion must be positive");
}

// ---------------------------------------------------------------------------

template <typename T>
FeatureGrouping<T>::FeatureGrouping(std::size_t channels, std::size_t heads_, Rng& rng)
    : heads(heads_), norm(channels), key(channels, channels, rng) {}

template <typename T>
GroupingResult<T> FeatureGrouping<T>::forward(const TokenMap<T>& x, const Tensor<T>& g) const {
  check_token_map(x, "feature grouping");
  const std::size_t n = x.tokens(), c = x.channels();
  if (g.rank() != 2 || g.dim(1) != c) {
    throw ShapeError("feature grouping: group tokens " + shape_str(g.shape()) + " do not have " +
                     std::to_string(c) + " channels");
  }
  if (c % heads != 0) throw ConfigError("feature grouping: channels not divisible by heads");
  const std::size_t m = g.dim(0), d = c / heads;
  Tensor<T> values = norm.forward(x.features);
  Tensor<T> keys = key.forward(values);
  Tensor<T> logits = ops::scale(ops::bmm(split_heads(g, 1, m, heads), split_heads(keys, 1, n, heads), true),
                                static_cast<T>(1.0 / std::sqrt(static_cast<double>(d))));
  Tensor<T> w = ops::softmax(logits, transpose_softmax ? 1 : 2);  // [h x M x N]
  GroupingResult<T> r;
  r.grouped = merge_heads(ops::bmm(w, split_heads(values, 1, n, heads)), 1, heads);

  GroupAssignment<T>& a = r.assignment;
  a.weights = w.detach();
  a.grid = x.grid;
  a.groups = m;
  a.argmax.assign(n, 0);
  const auto wd = w.data();
  for (std::size_t t = 0; t < n; ++t) {
    T best = T(0);
    for (std::size_t j = 0; j < m; ++j) {
      T avg = T(0);
      for (std::size_t h = 0; h < heads; ++h) avg += wd[(h * m + j) * n + t];
      if (j == 0 || avg > best) {
        best = avg;
        a.argmax[t] = j;
      }
    }
  }
  return r;
}

template <typename T>
void FeatureGrouping<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
  norm.collect(prefix + ".norm", out);
  key.collect(prefix + ".key", out);
}

// ---------------------------------------------------------------------------

template <typename T>
MixerPropagation<T>::MixerPropagation(const GPBlockOptions& opts, Rng& rng)
    : groups(opts.groups),
      token_norm(opts.channels),
      token_fc1(opts.groups, opts.token_hidden(), rng),
      token_fc2(opts.token_hidden(), opts.groups, rng),
      channel_norm(opts.channels),
      channel_fc1(opts.channels, opts.channels * opts.channel_expansion, rng),
      channel_fc2(opts.channels * opts.channel_expansion, opts.channels, rng) {}

template <typename T>
Tensor<T> MixerPropagation<T>::forward(const Tensor<T>& y) const {
  if (y.rank() != 2 || y.dim(0) != groups) {
    throw ShapeError("mixer propagation: expected " + std::to_string(groups) + " groups, got " + shape_str(y.shape()));
  }
  Tensor<T> mixed = token_fc2.forward(ops::gelu(token_fc1.forward(ops::transpose(token_norm.forward(y)))));
  Tensor<T> y1 = ops::add(y, ops::transpose(mixed));
  Tensor<T> ch = channel_fc2.forward(ops::gelu(channel_fc1.forward(channel_norm.forward(y1))));
  return ops::add(y1, ch);
}

template <typename T>
void MixerPropagation<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
  token_norm.collect(prefix + ".token_norm", out);
  token_fc1.collect(prefix + ".token_fc1", out);
  token_fc2.collect(prefix + ".token_fc2", out);
  channel_norm.collect(prefix + ".channel_norm", out);
  channel_fc1.collect(prefix + ".channel_fc1", out);
  channel_fc2.collect(prefix + ".channel_fc2", out);
}

// ---------------------------------------------------------------------------

template <typename T>
FeatureUngrouping<T>::FeatureUngrouping(const GPBlockOptions& opts, Rng& rng)
    : heads(opts.ungrouping_heads),
      norm_q(opts.channels),
      norm_kv(opts.channels),
      query(opts.channels, opts.channels, rng),
      key(opts.channels, opts.channels, rng),
      value(opts.channels, opts.channels, rng),
      proj(2 * opts.channels, opts.channels, rng),
      ffn(opts.channels, opts.ffn_expansion, rng),
      dwconv(opts.channels, 3, rng, true) {}

template <typename T>
TokenMap<T> FeatureUngrouping<T>::forward(const TokenMap<T>& x, const Tensor<T>& groups) const {
  if (x.grid.tokens() == 0) throw UsageError("feature ungrouping: token map has no grid shape");
  check_token_map(x, "feature ungrouping");
  const std::size_t c = x.channels();
  if (groups.rank() != 2 || groups.dim(1) != c) {
    throw ShapeError("feature ungrouping: groups " + shape_str(groups.shape()) + " do not have " +
                     std::to_string(c) + " channels");
  }
  Tensor<T> kv = norm_kv.forward(groups);
  AttentionConfig cfg{heads, c, false};
  Tensor<T> u = multi_head_attention<T>(query.forward(norm_q.forward(x.features)), key.forward(kv),
                                        value.forward(kv), cfg)
                    .output;
  Tensor<T> z1 = proj.forward(ops::concat<T>({u, x.features}, 1));
  Tensor<T> z2 = ops::add(z1, ffn.forward(z1));
  return dwconv.forward({z2, x.grid});
}

template <typename T>
void FeatureUngrouping<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
  norm_q.collect(prefix + ".norm_q", out);
  norm_kv.collect(prefix + ".norm_kv", out);
  query.collect(prefix + ".query", out);
  key.collect(prefix + ".key", out);
  value.collect(prefix + ".value", out);
  proj.collect(prefix + ".proj", out);
  ffn.collect(prefix + ".ffn", out);
  dwconv.collect(prefix + ".dwconv", out);
}

// ---------------------------------------------------------------------------

template <typename T>
GPBlock<T>::GPBlock(const GPBlockOptions& opts_, Rng& rng) : opts(opts_) {
  opts.validate();
  group_tokens = init_trunc_normal<T>({opts.groups, opts.channels}, rng);
  grouping = FeatureGrouping<T>(opts.channels, opts.grouping_heads, rng);
  grouping.transpose_softmax = opts.transpose_grouping_softmax;
  if (opts.propagation == PropagationKind::mixer) {
    mixer = MixerPropagation<T>(opts, rng);
  } else if (opts.propagation == PropagationKind::selfattn) {
    self_attention = EncoderLayer<T>(opts.channels, opts.grouping_heads, opts.channel_expansion,
                                     WindowSpec::full(), 0.0, rng);
  }
  ungrouping = FeatureUngrouping<T>(opts, rng);
}

template <typename T>
Tensor<T> GPBlock<T>::propagate(const Tensor<T>& y, ForwardContext& ctx) const {
  if (y.rank() != 2 || y.dim(0) != opts.groups) {
    throw ShapeError("group propagation: expected " + std::to_string(opts.groups) + " groups, got " +
                     shape_str(y.shape()));
  }
  switch (opts.propagation) {
    case PropagationKind::mixer: return mixer.forward(y);
    case PropagationKind::selfattn: return self_attention.forward({y, {1, opts.groups}}, ctx).features;
    case PropagationKind::none: return y;
  }
  throw ConfigError("group propagation: unknown core");
}

template <typename T>
TokenMap<T> GPBlock<T>::forward(const TokenMap<T>& x, ForwardContext& ctx, GroupAssignment<T>* assignment) const {
  GroupingResult<T> g = grouping.forward(x, group_tokens);
  if (assignment) *assignment = std::move(g.assignment);
  return ungrouping.forward(x, propagate(g.grouped, ctx));
}

template <typename T>
void GPBlock<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
  out.push_back({prefix + ".group_tokens", group_tokens});
  grouping.collect(prefix + ".grouping", out);
  if (opts.propagation == PropagationKind::mixer) mixer.collect(prefix + ".mixer", out);
  if (opts.propagation == PropagationKind::selfattn) self_attention.collect(prefix + ".self_attention", out);
  ungrouping.collect(prefix + ".ungrouping", out);
}

#define GPVIT_INSTANTIATE_GP(T)          \
  template struct FeatureGrouping<T>;    \
  template struct MixerPropagation<T>;   \
  template struct FeatureUngrouping<T>;  \
  template struct GPBlock<T>;

GPVIT_INSTANTIATE_GP(float)
GPVIT_INSTANTIATE_GP(double)

#undef GPVIT_INSTANTIATE_GP

}  // namespace gpvit
