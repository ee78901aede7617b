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

#include "gpvit/nn.hpp"

#include "gpvit/error.hpp"

namespace gpvit {

template <typename T>
void check_token_map(const TokenMap<T>& x, const char* where) {
  if (!x.features.defined() || x.features.rank() != 2 || x.features.dim(0) != x.grid.tokens()) {
    throw ShapeError(std::string(where) + ": features " +
                     (x.features.defined() ? shape_str(x.features.shape()) : "undefined") +
                     " do not match grid " + std::to_string(x.grid.height) + "x" +
                     std::to_string(x.grid.width));
  }
}

template <typename T>
std::size_t count_parameters(const ParameterList<T>& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.numel();
  return n;
}

template <typename T>
Tensor<T> init_trunc_normal(Shape shape, Rng& rng, double stddev) {
  std::vector<T> data(shape_numel(shape));
  for (auto& v : data) v = static_cast<T>(rng.truncated_normal(stddev));
  return Tensor<T>::from_data(std::move(shape), std::move(data), true);
}

template <typename T>
Tensor<T> drop_path(const Tensor<T>& branch, double rate, ForwardContext& ctx) {
  if (!ctx.training || rate <= 0.0) return branch;
  if (!ctx.rng) throw UsageError("drop_path: training forward needs an Rng");
  const double keep = 1.0 - rate;
  if (ctx.rng->uniform() >= keep) return ops::scale(branch, T(0));
  return ops::scale(branch, static_cast<T>(1.0 / keep));
}

// ---------------------------------------------------------------------------

template <typename T>
Linear<T>::Linear(std::size_t in, std::size_t out, Rng& rng, bool with_bias)
    : weight(init_trunc_normal<T>({in, out}, rng)) {
  if (with_bias) bias = Tensor<T>::zeros({out}, true);
}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x) const {
  Tensor<T> y = ops::matmul(x, weight);
  return bias.defined() ? ops::add_bias(y, bias) : y;
}

template <typename T>
void Linear<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
  out.push_back({prefix + ".weight", weight});
  if (bias.defined()) out.push_back({prefix + ".bias", bias});
}

template <typename T>
LayerNorm<T>::LayerNorm(std::size_t channels)
    : gain(Tensor<T>::ones({channels}, true)), bias(Tensor<T>::zeros({channels}, true)) {}

template <typename T>
void LayerNorm<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
  out.push_back({prefix + ".gain", gain});
  out.push_back({prefix + ".bias", bias});
}

template <typename T>
FeedForward<T>::FeedForward(std::size_t channels, std::size_t expansion, Rng& rng)
    : norm(channels), fc1(channels, channels * expansion, rng), fc2(channels * expansion, channels, rng) {}

template <typename T>
Tensor<T> FeedForward<T>::forward(const Tensor<T>& x) const {
  return fc2.forward(ops::gelu(fc1.forward(norm.forward(x))));
}

template <typename T>
void FeedForward<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
  norm.collect(prefix + ".norm", out);
  fc1.collect(prefix + ".fc1", out);
  fc2.collect(prefix + ".fc2", out);
}

// ---------------------------------------------------------------------------

template <typename T>
Conv2d<T>::Conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride_,
                  std::size_t padding_, Rng& rng, bool with_bias)
    : weight(init_trunc_normal<T>({kernel, kernel, in, out}, rng)), stride(stride_), padding(padding_) {
  if (stride == 0) throw ConfigError("conv2d: stride must be positive");
  if (with_bias) bias = Tensor<T>::zeros({out}, true);
}

template <typename T>
GridShape Conv2d<T>::output_grid(GridShape in) const {
  const std::size_t k = kernel_size();
  if (in.height + 2 * padding < k || in.width + 2 * padding < k) {
    throw ShapeError("conv2d: input grid smaller than kernel");
  }
  return {(in.height + 2 * padding - k) / stride + 1, (in.width + 2 * padding - k) / stride + 1};
}

template <typename T>
TokenMap<T> Conv2d<T>::forward(const TokenMap<T>& x) const {
  check_token_map(x, "conv2d");
  const std::size_t k = kernel_size();
  const std::size_t cin = weight.dim(2), cout = weight.dim(3);
  if (x.channels() != cin) {
    throw ShapeError("conv2d: expected " + std::to_string(cin) + " input channels, got " +
                     std::to_string(x.channels()));
  }
  const GridShape out_grid = output_grid(x.grid);
  std::vector<std::int64_t> index;
  index.reserve(out_grid.tokens() * k * k);
  const auto H = static_cast<std::int64_t>(x.grid.height);
  const auto W = static_cast<std::int64_t>(x.grid.width);
  for (std::size_t i = 0; i < out_grid.height; ++i) {
    for (std::size_t j = 0; j < out_grid.width; ++j) {
      for (std::size_t u = 0; u < k; ++u) {
        for (std::size_t v = 0; v < k; ++v) {
          const auto r = static_cast<std::int64_t>(i * stride + u) - static_cast<std::int64_t>(padding);
          const auto c = static_cast<std::int64_t>(j * stride + v) - static_cast<std::int64_t>(padding);
          index.push_back(r >= 0 && r < H && c >= 0 && c < W ? r * W + c : -1);
        }
      }
    }
  }
  Tensor<T> cols = ops::reshape(ops::gather_rows(x.features, std::span<const std::int64_t>(index)),
                                {out_grid.tokens(), k * k * cin});
  Tensor<T> y = ops::matmul(cols, ops::reshape(weight, {k * k * cin, cout}));
  if (bias.defined()) y = ops::add_bias(y, bias);
  return {y, out_grid};
}

template <typename T>
void Conv2d<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
  out.push_back({prefix + ".weight", weight});
  if (bias.defined()) out.push_back({prefix + ".bias", bias});
}

template <typename T>
DepthwiseConv<T>::DepthwiseConv(std::size_t channels, std::size_t kernel_size, Rng& rng,
                                bool identity_init)
    : kernel(init_trunc_normal<T>({kernel_size, kernel_size, channels}, rng)),
      bias(Tensor<T>::zeros({channels}, true)) {
  if (kernel_size % 2 == 0) throw ConfigError("depthwise conv: kernel size must be odd");
  if (identity_init) {
    auto d = kernel.mutable_data();
    const std::size_t center = (kernel_size / 2) * kernel_size + kernel_size / 2;
    for (std::size_t c = 0; c < channels; ++c) d[center * channels + c] += T(1);
  }
}

template <typename T>
TokenMap<T> DepthwiseConv<T>::forward(const TokenMap<T>& x) const {
  check_token_map(x, "depthwise conv");
  const std::size_t c = x.channels();
  Tensor<T> img = ops::reshape(x.features, {x.grid.height, x.grid.width, c});
  Tensor<T> y = ops::depthwise_conv2d(img, kernel, bias);
  return {ops::reshape(y, {x.grid.tokens(), c}), x.grid};
}

template <typename T>
void DepthwiseConv<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
  out.push_back({prefix + ".kernel", kernel});
  out.push_back({prefix + ".bias", bias});
}

#define GPVIT_INSTANTIATE_NN(T)                                                    \
  template void check_token_map(const TokenMap<T>&, const char*);                  \
  template std::size_t count_parameters(const ParameterList<T>&);                  \
  template Tensor<T> init_trunc_normal(Shape, Rng&, double);                       \
  template Tensor<T> drop_path(const Tensor<T>&, double, ForwardContext&);         \
  template struct Linear<T>;                                                       \
  template struct LayerNorm<T>;                                                    \
  template struct FeedForward<T>;                                                  \
  template struct Conv2d<T>;                                                       \
  template struct DepthwiseConv<T>;

GPVIT_INSTANTIATE_NN(float)
GPVIT_INSTANTIATE_NN(double)

#undef GPVIT_INSTANTIATE_NN

}  // namespace gpvit
