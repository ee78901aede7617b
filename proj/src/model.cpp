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

#include "gpvit/model.hpp"

#include <cmath>

#include "gpvit/error.hpp"

namespace gpvit {

namespace {

double cubic_weight(double x) {
  constexpr double a = -0.75;
  x = std::fabs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

// [to x from]
std::vector<double> bicubic_1d(std::size_t from, std::size_t to) {
  std::vector<double> r(to * from, 0.0);
  const double scale = static_cast<double>(from) / static_cast<double>(to);
  for (std::size_t i = 0; i < to; ++i) {
    const double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
    const double base = std::floor(src);
    const double t = src - base;
    for (int k = -1; k <= 2; ++k) {
      const double w = cubic_weight(t - k);
      auto idx = static_cast<long long>(base) + k;
      if (idx < 0) idx = 0;
      if (idx >= static_cast<long long>(from)) idx = static_cast<long long>(from) - 1;
      r[i * from + static_cast<std::size_t>(idx)] += w;
    }
  }
  return r;
}

}  // namespace

std::vector<double> bicubic_matrix(GridShape from, GridShape to) {
  const std::vector<double> rh = bicubic_1d(from.height, to.height);
  const std::vector<double> rw = bicubic_1d(from.width, to.width);
  const std::size_t nf = from.tokens();
  std::vector<double> r(to.tokens() * nf, 0.0);
  for (std::size_t i = 0; i < to.height; ++i)
    for (std::size_t j = 0; j < to.width; ++j)
      for (std::size_t a = 0; a < from.height; ++a)
        for (std::size_t b = 0; b < from.width; ++b)
          r[(i * to.width + j) * nf + a * from.width + b] = rh[i * from.height + a] * rw[j * from.width + b];
  return r;
}

// ---------------------------------------------------------------------------

template <typename T>
Stem<T>::Stem(const ModelConfig& cfg, Rng& rng) {
  const std::vector<std::size_t> widths = stem_widths(cfg);
  std::size_t in = 3;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const bool last = i + 1 == widths.size();
    convs.emplace_back(in, widths[i], 3, 2, 1, rng, last);
    if (!last) norms.emplace_back(widths[i]);
    in = widths[i];
  }
}

template <typename T>
TokenMap<T> Stem<T>::forward(const TokenMap<T>& image) const {
  TokenMap<T> x = image;
  for (std::size_t i = 0; i < convs.size(); ++i) {
    x = convs[i].forward(x);
    if (i < norms.size()) x.features = ops::gelu(norms[i].forward(x.features));
  }
  return x;
}

template <typename T>
void Stem<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
  for (std::size_t i = 0; i < convs.size(); ++i) {
    convs[i].collect(prefix + ".conv" + std::to_string(i), out);
    if (i < norms.size()) norms[i].collect(prefix + ".norm" + std::to_string(i), out);
  }
}

template <typename T>
ConvBlock<T>::ConvBlock(std::size_t channels, double rate, Rng& rng)
    : drop_path_rate(rate),
      norm(channels),
      conv_a(channels, channels, 3, 1, 1, rng, true),
      conv_b(channels, channels, 3, 1, 1, rng, true) {}

template <typename T>
TokenMap<T> ConvBlock<T>::forward(const TokenMap<T>& x, ForwardContext& ctx) const {
  TokenMap<T> h = conv_a.forward({norm.forward(x.features), x.grid});
  h.features = ops::gelu(h.features);
  Tensor<T> branch = conv_b.forward(h).features;
  return {ops::add(x.features, drop_path(branch, drop_path_rate, ctx)), x.grid};
}

template <typename T>
void ConvBlock<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
  norm.collect(prefix + ".norm", out);
  conv_a.collect(prefix + ".conv_a", out);
  conv_b.collect(prefix + ".conv_b", out);
}

// ---------------------------------------------------------------------------

template <typename T>
Model<T>::Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  schedule_ = layer_schedule(cfg_);
  Rng rng(seed);
  stem = Stem<T>(cfg_, rng);
  pos_embed = init_trunc_normal<T>({cfg_.native_grid().tokens(), cfg_.channels}, rng);
  std::size_t gp_index = 0;
  for (std::size_t i = 0; i < schedule_.size(); ++i) {
    const LayerSpec& spec = schedule_[i];
    const double rate = drop_path_rate(cfg_, i);
    switch (spec.kind) {
      case LayerKind::encoder:
        layers.emplace_back(std::in_place_type<EncoderLayer<T>>, cfg_.channels, cfg_.heads, cfg_.ffn_expansion,
                            spec.window, rate, rng);
        break;
      case LayerKind::gp:
        layers.emplace_back(std::in_place_type<GPBlock<T>>, cfg_.gp_options(cfg_.gp_group_counts[gp_index++]), rng);
        break;
      case LayerKind::conv:
        layers.emplace_back(std::in_place_type<ConvBlock<T>>, cfg_.channels, rate, rng);
        break;
    }
  }
  head_norm = LayerNorm<T>(cfg_.channels);
  head = Linear<T>(cfg_.channels, cfg_.num_classes, rng);
}

template <typename T>
TokenMap<T> Model<T>::embed(const Tensor<T>& image) const {
  if (image.rank() != 3 || image.dim(2) != 3) {
    throw ShapeError("model: expected an [H x W x 3] image, got " +
                     (image.defined() ? shape_str(image.shape()) : std::string("undefined")));
  }
  const std::size_t h = image.dim(0), w = image.dim(1);
  const GridShape grid = cfg_.token_grid(h, w);
  TokenMap<T> x = stem.forward({ops::reshape(image, {h * w, 3}), {h, w}});
  if (x.grid != grid) throw ShapeError("model: stem produced an unexpected grid");
  const GridShape native = cfg_.native_grid();
  Tensor<T> pos = pos_embed;
  if (grid != native) {
    const std::vector<double> r = bicubic_matrix(native, grid);
    pos = ops::matmul(Tensor<T>::from_data({grid.tokens(), native.tokens()}, std::vector<T>(r.begin(), r.end())),
                      pos_embed);
  }
  x.features = ops::add(x.features, pos);
  return x;
}

template <typename T>
TokenMap<T> Model<T>::forward_features(const Tensor<T>& image, ForwardContext& ctx,
                                       std::vector<GroupAssignment<T>>* assignments) const {
  TokenMap<T> x = embed(image);
  if (assignments) assignments->clear();
  for (const Layer<T>& layer : layers) {
    if (const auto* enc = std::get_if<EncoderLayer<T>>(&layer)) {
      x = enc->forward(x, ctx);
    } else if (const auto* gp = std::get_if<GPBlock<T>>(&layer)) {
      GroupAssignment<T> a;
      x = gp->forward(x, ctx, assignments ? &a : nullptr);
      if (assignments) assignments->push_back(std::move(a));
    } else {
      x = std::get<ConvBlock<T>>(layer).forward(x, ctx);
    }
  }
  return x;
}

template <typename T>
Tensor<T> Model<T>::forward_classify(const Tensor<T>& image, ForwardContext& ctx,
                                     std::vector<GroupAssignment<T>>* assignments) const {
  TokenMap<T> x = forward_features(image, ctx, assignments);
  Tensor<T> pooled = ops::reshape(ops::mean_rows(head_norm.forward(x.features)), {1, cfg_.channels});
  return ops::reshape(head.forward(pooled), {cfg_.num_classes});
}

template <typename T>
Tensor<T> Model<T>::forward_classify(const Tensor<T>& image) const {
  ForwardContext ctx;
  return forward_classify(image, ctx);
}

template <typename T>
Tensor<T> Model<T>::forward_batch(const std::vector<Tensor<T>>& images, ForwardContext& ctx) const {
  if (images.empty()) throw UsageError("model: empty batch");
  std::vector<Tensor<T>> rows;
  rows.reserve(images.size());
  for (const auto& img : images) rows.push_back(ops::reshape(forward_classify(img, ctx), {1, cfg_.num_classes}));
  return ops::concat(rows, 0);
}

template <typename T>
ParameterList<T> Model<T>::parameters() const {
  ParameterList<T> out;
  stem.collect("stem", out);
  out.push_back({"pos_embed", pos_embed});
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string prefix = "layers." + std::to_string(i);
    std::visit([&](const auto& l) { l.collect(prefix, out); }, layers[i]);
  }
  head_norm.collect("head.norm", out);
  head.collect("head.fc", out);
  return out;
}

#define GPVIT_INSTANTIATE_MODEL(T) \
  template struct Stem<T>;         \
  template struct ConvBlock<T>;    \
  template class Model<T>;

GPVIT_INSTANTIATE_MODEL(float)
GPVIT_INSTANTIATE_MODEL(double)

#undef GPVIT_INSTANTIATE_MODEL

}  // namespace gpvit
