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


#include <gtest/gtest.h>

#include <cmath>
#include <algorithm>
#include <numeric>

#include "gpvit/error.hpp"
#include "gpvit/gp_block.hpp"
#include "test_util.hpp"

namespace gpvit {
namespace {

using testing::make;
using testing::max_abs_diff;
using testing::random_tensor;

constexpr double kEps = 1e-5;  // LayerNorm default

// Scalar helpers for the hand-worked cases.
std::vector<double> ln_row(std::vector<double> x, const std::vector<double>& gain, const std::vector<double>& bias) {
  double m = 0, v = 0;
  for (double e : x) m += e / double(x.size());
  for (double e : x) v += (e - m) * (e - m) / double(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = (x[i] - m) / std::sqrt(v + kEps) * gain[i] + bias[i];
  return x;
}
double gelu(double x) { return 0.5 * x * (1 + std::tanh(std::sqrt(2 / M_PI) * (x + 0.044715 * x * x * x))); }

void set(Tensor<double>& t, std::vector<double> values) { t = make<double>(t.shape(), std::move(values)); }

// Reports the full-precision value so a deliberate behaviour change can be
// re-frozen.
void expect_frozen(const std::vector<double>& actual, const std::vector<double>& frozen, double tol = 1e-12) {
  ASSERT_EQ(actual.size(), frozen.size());
  for (std::size_t i = 0; i < actual.size(); ++i) {
    EXPECT_NEAR(actual[i], frozen[i], tol) << "index " << i << " = " << std::scientific << actual[i];
  }
}

GPBlockOptions small_options(std::size_t c, std::size_t m, PropagationKind prop = PropagationKind::mixer) {
  GPBlockOptions o;
  o.channels = c;
  o.groups = m;
  o.grouping_heads = 2;
  o.ungrouping_heads = 2;
  o.propagation = prop;
  return o;
}

// Randomises every parameter so no stage is near its initial identity.
void scramble(GPBlock<double>& block, Rng& rng, double scale = 0.4) {
  ParameterList<double> params;
  block.collect("gp", params);
  for (auto& p : params) {
    auto d = p.tensor.mutable_data();
    for (auto& e : d) e += scale * rng.normal();
  }
}

TokenMap<double> random_map(GridShape g, std::size_t c, Rng& rng) {
  return {random_tensor({g.tokens(), c}, rng, 1.0, false), g};
}

// ---------------------------------------------------------------------------
// Feature grouping

TEST(FeatureGrouping, SingleTokenGivesItsNormalisedFeatures) {
  Rng rng(1);
  FeatureGrouping<double> fg(4, 2, rng);
  fg.key.weight = random_tensor({4, 4}, rng, 1.0, false);
  auto x = random_map({1, 1}, 4, rng);
  auto r = fg.forward(x, random_tensor({3, 4}, rng, 1.0, false));
  auto v = fg.norm.forward(x.features);
  for (std::size_t m = 0; m < 3; ++m)
    for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(r.grouped.at({m, c}), v.at({0, c}), 1e-14);
}

TEST(FeatureGrouping, ZeroKeysGiveUniformWeightsAndMeanFeatures) {
  Rng rng(2);
  FeatureGrouping<double> fg(6, 3, rng);
  fg.key.weight = Tensor<double>::zeros({6, 6});
  auto x = random_map({2, 3}, 6, rng);
  auto r = fg.forward(x, random_tensor({4, 6}, rng, 1.0, false));
  for (double w : r.assignment.weights.data()) EXPECT_NEAR(w, 1.0 / 6.0, 1e-15);
  auto mean = ops::mean_rows(fg.norm.forward(x.features));
  for (std::size_t m = 0; m < 4; ++m)
    for (std::size_t c = 0; c < 6; ++c) EXPECT_NEAR(r.grouped.at({m, c}), mean.at({c}), 1e-14);
}

TEST(FeatureGrouping, HandCaseTwoTokensOneGroup) {
  Rng rng(0);
  FeatureGrouping<double> fg(2, 1, rng);
  set(fg.key.weight, {1.0, 0.0, 0.0, 2.0});
  set(fg.key.bias, {0.1, -0.2});
  const std::vector<double> x0{1.0, 3.0}, x1{2.0, -2.0}, g{0.5, 1.0};
  auto r = fg.forward({make<double>({2, 2}, {1.0, 3.0, 2.0, -2.0}), {1, 2}}, make<double>({1, 2}, g));

  // Oracle: values are LN(x); keys = values W + b; softmax over the two tokens.
  const auto v0 = ln_row(x0, {1, 1}, {0, 0}), v1 = ln_row(x1, {1, 1}, {0, 0});
  auto key = [](const std::vector<double>& v) { return std::vector<double>{v[0] + 0.1, 2.0 * v[1] - 0.2}; };
  const auto k0 = key(v0), k1 = key(v1);
  const double l0 = (g[0] * k0[0] + g[1] * k0[1]) / std::sqrt(2.0);
  const double l1 = (g[0] * k1[0] + g[1] * k1[1]) / std::sqrt(2.0);
  const double w0 = 1.0 / (1.0 + std::exp(l1 - l0)), w1 = 1.0 - w0;
  const std::vector<double> y{w0 * v0[0] + w1 * v1[0], w0 * v0[1] + w1 * v1[1]};
  EXPECT_NEAR(r.grouped.at({0, 0}), y[0], 1e-14);
  EXPECT_NEAR(r.grouped.at({0, 1}), y[1], 1e-14);
  EXPECT_NEAR(r.assignment.weights.at({0, 0, 0}), w0, 1e-14);
  // Frozen from the oracle above.
  expect_frozen(r.grouped.to_vector(), {-7.85910798848050707e-01, 7.85910798848050707e-01});
  expect_frozen({w0}, {8.92957564899798273e-01});
}

TEST(FeatureGrouping, AssignmentRowsSumToOneAndGroupsAreConvexCombinations) {
  Rng rng(3);
  GPBlock<double> block(small_options(8, 5), rng);
  scramble(block, rng, 1.0);
  const auto x = random_map({3, 4}, 8, rng);
  auto r = block.grouping.forward(x, block.group_tokens);
  const auto& w = r.assignment.weights;
  ASSERT_EQ(w.shape(), (Shape{2, 5, 12}));
  auto values = block.grouping.norm.forward(x.features);
  for (std::size_t h = 0; h < 2; ++h)
    for (std::size_t m = 0; m < 5; ++m) {
      double s = 0;
      for (std::size_t n = 0; n < 12; ++n) {
        EXPECT_GE(w.at({h, m, n}), 0.0);
        s += w.at({h, m, n});
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
      // The head slice of each group is exactly the weighted sum of token slices.
      for (std::size_t c = h * 4; c < h * 4 + 4; ++c) {
        double expect = 0;
        for (std::size_t n = 0; n < 12; ++n) expect += w.at({h, m, n}) * values.at({n, c});
        EXPECT_NEAR(r.grouped.at({m, c}), expect, 1e-12);
      }
    }
  for (auto a : r.assignment.argmax) EXPECT_LT(a, 5u);
  EXPECT_EQ(r.assignment.grid, x.grid);
}

TEST(FeatureGrouping, ArgmaxFollowsHeadAveragedWeights) {
  Rng rng(4);
  GPBlock<double> block(small_options(4, 3), rng);
  scramble(block, rng, 1.5);
  auto r = block.grouping.forward(random_map({2, 2}, 4, rng), block.group_tokens);
  const auto& w = r.assignment.weights;
  for (std::size_t n = 0; n < 4; ++n) {
    std::size_t best = 0;
    double best_v = -1;
    for (std::size_t m = 0; m < 3; ++m) {
      const double avg = (w.at({0, m, n}) + w.at({1, m, n})) / 2;
      if (avg > best_v) best_v = avg, best = m;
    }
    EXPECT_EQ(r.assignment.argmax[n], best);
  }
}

TEST(FeatureGrouping, FaultModeBreaksTokenNormalisation) {
  Rng rng(5);
  auto opts = small_options(4, 3);
  opts.transpose_grouping_softmax = true;
  GPBlock<double> block(opts, rng);
  scramble(block, rng, 1.0);
  auto w = block.grouping.forward(random_map({2, 3}, 4, rng), block.group_tokens).assignment.weights;
  double worst = 0;
  for (std::size_t m = 0; m < 3; ++m) {
    double s = 0;
    for (std::size_t n = 0; n < 6; ++n) s += w.at({0, m, n});
    worst = std::max(worst, std::abs(s - 1.0));
  }
  EXPECT_GT(worst, 1e-3);
  for (std::size_t n = 0; n < 6; ++n) {
    double s = 0;
    for (std::size_t m = 0; m < 3; ++m) s += w.at({0, m, n});
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(FeatureGrouping, HasNoQueryOrValueProjection) {
  Rng rng(6);
  FeatureGrouping<double> fg(6, 3, rng);
  ParameterList<double> params;
  fg.collect("g", params);
  std::vector<std::string> names;
  for (auto& p : params) names.push_back(p.name);
  EXPECT_EQ(names, (std::vector<std::string>{"g.norm.gain", "g.norm.bias", "g.key.weight", "g.key.bias"}));
}

// ---------------------------------------------------------------------------
// Propagation

TEST(MixerPropagation, ZeroMlpsAreIdentity) {
  Rng rng(7);
  auto opts = small_options(6, 4);
  MixerPropagation<double> mixer(opts, rng);
  for (auto* lin : {&mixer.token_fc2, &mixer.channel_fc2}) lin->weight = Tensor<double>::zeros(lin->weight.shape());
  auto y = random_tensor({4, 6}, rng, 1.0, false);
  EXPECT_EQ(mixer.forward(y).to_vector(), y.to_vector());
}

TEST(MixerPropagation, PreservesShapeAndRejectsWrongGroupCount) {
  Rng rng(8);
  for (std::size_t m : {1u, 3u, 16u}) {
    MixerPropagation<double> mixer(small_options(4, m), rng);
    EXPECT_EQ(mixer.token_fc1.out_features(), std::max<std::size_t>(1, (m + 1) / 2));
    EXPECT_EQ(mixer.channel_fc1.out_features(), 16u);
    EXPECT_EQ(mixer.forward(random_tensor({m, 4}, rng, 1.0, false)).shape(), (Shape{m, 4}));
    EXPECT_THROW(mixer.forward(Tensor<double>::zeros({m + 1, 4})), ShapeError);
  }
}

TEST(MixerPropagation, HandCaseTwoGroupsTwoChannels) {
  Rng rng(0);
  auto opts = small_options(2, 2);
  opts.grouping_heads = opts.ungrouping_heads = 1;
  opts.channel_expansion = 1;
  MixerPropagation<double> mixer(opts, rng);
  ASSERT_EQ(mixer.token_fc1.out_features(), 1u);
  set(mixer.token_norm.gain, {1.5, 0.5});
  set(mixer.token_norm.bias, {0.1, -0.1});
  set(mixer.token_fc1.weight, {0.7, -0.3});  // [M=2 x 1]
  set(mixer.token_fc1.bias, {0.2});
  set(mixer.token_fc2.weight, {1.1, -0.6});  // [1 x 2]
  set(mixer.token_fc2.bias, {0.05, 0.0});
  set(mixer.channel_norm.gain, {0.9, 1.2});
  set(mixer.channel_norm.bias, {0.0, 0.3});
  set(mixer.channel_fc1.weight, {0.4, -0.8, 0.25, 0.6});
  set(mixer.channel_fc1.bias, {-0.1, 0.1});
  set(mixer.channel_fc2.weight, {0.5, 0.2, -0.4, 0.9});
  set(mixer.channel_fc2.bias, {0.0, -0.05});
  const std::vector<std::vector<double>> y{{1.0, -0.5}, {0.25, 2.0}};
  auto out = mixer.forward(make<double>({2, 2}, {1.0, -0.5, 0.25, 2.0}));

  // Token mixing: LN each group row, then for channel c mix the column over groups.
  std::vector<std::vector<double>> n{ln_row(y[0], {1.5, 0.5}, {0.1, -0.1}), ln_row(y[1], {1.5, 0.5}, {0.1, -0.1})};
  std::vector<std::vector<double>> y1 = y;
  for (std::size_t c = 0; c < 2; ++c) {
    const double hidden = gelu(0.7 * n[0][c] - 0.3 * n[1][c] + 0.2);
    y1[0][c] += 1.1 * hidden + 0.05;
    y1[1][c] += -0.6 * hidden + 0.0;
  }
  std::vector<double> expect;
  for (std::size_t m = 0; m < 2; ++m) {
    const auto z = ln_row(y1[m], {0.9, 1.2}, {0.0, 0.3});
    const double h0 = gelu(0.4 * z[0] + 0.25 * z[1] - 0.1), h1 = gelu(-0.8 * z[0] + 0.6 * z[1] + 0.1);
    expect.push_back(y1[m][0] + 0.5 * h0 - 0.4 * h1 + 0.0);
    expect.push_back(y1[m][1] + 0.2 * h0 + 0.9 * h1 - 0.05);
  }
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(out.data()[i], expect[i], 1e-14);
  expect_frozen(out.to_vector(), {2.95168659313909787e+00, -7.62257915514382711e-01, -1.42956869594014635e+00,
                                 3.49869415701908526e+00});
}

TEST(Propagation, NoneIsExactIdentity) {
  Rng rng(9);
  GPBlock<double> block(small_options(4, 3, PropagationKind::none), rng);
  auto y = random_tensor({3, 4}, rng, 1.0, false);
  ForwardContext ctx;
  EXPECT_EQ(block.propagate(y, ctx).to_vector(), y.to_vector());
}

TEST(Propagation, SelfAttnWithZeroValueAndFeedForwardIsIdentity) {
  Rng rng(10);
  GPBlock<double> block(small_options(4, 3, PropagationKind::selfattn), rng);
  auto& sa = block.self_attention;
  auto w = sa.attn.qkv.weight.to_vector();
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 8; c < 12; ++c) w[r * 12 + c] = 0.0;
  set(sa.attn.qkv.weight, w);
  sa.ffn.fc2.weight = Tensor<double>::zeros(sa.ffn.fc2.weight.shape());
  auto y = random_tensor({3, 4}, rng, 1.0, false);
  ForwardContext ctx;
  EXPECT_EQ(block.propagate(y, ctx).to_vector(), y.to_vector());
}

TEST(Propagation, SelfAttnTwoGroupsMatchesAttentionPlusResiduals) {
  Rng rng(11);
  GPBlock<double> block(small_options(4, 2, PropagationKind::selfattn), rng);
  scramble(block, rng, 0.5);
  const auto& sa = block.self_attention;
  EXPECT_EQ(sa.cfg.num_heads, 2u);
  EXPECT_EQ(sa.ffn.fc1.out_features(), 16u);
  auto y = random_tensor({2, 4}, rng, 1.0, false);
  ForwardContext ctx;
  auto out = block.propagate(y, ctx);

  auto h = sa.norm.forward(y);
  auto qkv = sa.attn.qkv.forward(h);
  AttentionConfig cfg{2, 4, true};
  auto a = multi_head_attention<double>(ops::slice(qkv, 1, 0, 4), ops::slice(qkv, 1, 4, 8), ops::slice(qkv, 1, 8, 12),
                                        cfg, nullptr, &sa.attn.proj)
               .output;
  auto y1 = ops::add(y, a);
  auto expect = ops::add(y1, sa.ffn.forward(y1));
  EXPECT_LT(max_abs_diff(out, expect), 1e-13);
}

// ---------------------------------------------------------------------------
// Feature ungrouping

TEST(FeatureUngrouping, SingleGroupGivesValueProjectionToEveryToken) {
  Rng rng(12);
  auto opts = small_options(4, 1);
  FeatureUngrouping<double> ug(opts, rng);
  ug.query.weight = random_tensor({4, 4}, rng, 1.0, false);
  ug.value.weight = random_tensor({4, 4}, rng, 1.0, false);
  auto x = random_map({2, 3}, 4, rng);
  auto groups = random_tensor({1, 4}, rng, 1.0, false);
  // Zero the right half of W_proj and the FFN output, make the conv a pure
  // centre tap and W_proj's left half the identity, so Z is exactly U.
  std::vector<double> p(8 * 4, 0.0);
  for (std::size_t i = 0; i < 4; ++i) p[i * 4 + i] = 1.0;
  set(ug.proj.weight, p);
  ug.ffn.fc2.weight = Tensor<double>::zeros(ug.ffn.fc2.weight.shape());
  std::vector<double> k(9 * 4, 0.0);
  for (std::size_t c = 0; c < 4; ++c) k[4 * 4 + c] = 1.0;
  set(ug.dwconv.kernel, k);
  auto z = ug.forward(x, groups);
  auto u = ug.value.forward(ug.norm_kv.forward(groups));
  for (std::size_t n = 0; n < 6; ++n)
    for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(z.features.at({n, c}), u.at({0, c}), 1e-14);
}

TEST(FeatureUngrouping, ShapeContractAndProjectionWidth) {
  Rng rng(13);
  for (std::size_t m : {1u, 4u, 9u}) {
    FeatureUngrouping<double> ug(small_options(6, m), rng);
    EXPECT_EQ(ug.proj.in_features(), 12u);
    auto z = ug.forward(random_map({3, 2}, 6, rng), random_tensor({m, 6}, rng, 1.0, false));
    EXPECT_EQ(z.features.shape(), (Shape{6, 6}));
    EXPECT_EQ(z.grid, (GridShape{3, 2}));
  }
}

TEST(FeatureUngrouping, MissingGridIsUsageError) {
  Rng rng(14);
  FeatureUngrouping<double> ug(small_options(4, 2), rng);
  TokenMap<double> no_grid{Tensor<double>::zeros({4, 4}), {0, 0}};
  EXPECT_THROW(ug.forward(no_grid, Tensor<double>::zeros({2, 4})), UsageError);
}

TEST(FeatureUngrouping, HandCaseTwoTokensOneGroup) {
  Rng rng(0);
  auto opts = small_options(2, 1);
  opts.grouping_heads = opts.ungrouping_heads = 1;
  opts.ffn_expansion = 1;
  FeatureUngrouping<double> ug(opts, rng);
  set(ug.norm_q.gain, {1.0, 1.0});
  set(ug.norm_kv.gain, {0.8, 1.3});
  set(ug.norm_kv.bias, {0.2, -0.1});
  set(ug.value.weight, {0.6, -0.2, 0.3, 0.9});
  set(ug.value.bias, {0.05, 0.1});
  set(ug.proj.weight, {0.5, 0.1, -0.3, 0.7, 0.2, -0.4, 0.6, 0.3});  // [2C=4 x 2]
  set(ug.proj.bias, {0.0, 0.2});
  set(ug.ffn.norm.gain, {1.1, 0.9});
  set(ug.ffn.fc1.weight, {0.3, -0.5, 0.8, 0.2});
  set(ug.ffn.fc1.bias, {0.1, 0.0});
  set(ug.ffn.fc2.weight, {0.4, 0.6, -0.7, 0.1});
  set(ug.ffn.fc2.bias, {-0.05, 0.0});
  std::vector<double> k(9 * 2);
  for (std::size_t i = 0; i < k.size(); ++i) k[i] = 0.1 * double(i) - 0.8;
  set(ug.dwconv.kernel, k);
  set(ug.dwconv.bias, {0.01, -0.02});
  const std::vector<std::vector<double>> x{{1.0, 2.0}, {-1.0, 0.5}};
  const std::vector<double> yt{0.3, -0.7};
  auto z = ug.forward({make<double>({2, 2}, {1.0, 2.0, -1.0, 0.5}), {1, 2}}, make<double>({1, 2}, yt));

  // One group: U is the value projection of LN_kv(y) for every token.
  const auto nkv = ln_row(yt, {0.8, 1.3}, {0.2, -0.1});
  const std::vector<double> u{0.6 * nkv[0] + 0.3 * nkv[1] + 0.05, -0.2 * nkv[0] + 0.9 * nkv[1] + 0.1};
  std::vector<std::vector<double>> z2(2);
  for (std::size_t n = 0; n < 2; ++n) {
    const std::vector<double> cat{u[0], u[1], x[n][0], x[n][1]};
    const std::vector<double> pw{0.5, 0.1, -0.3, 0.7, 0.2, -0.4, 0.6, 0.3};
    std::vector<double> z1{0.0, 0.2};
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 2; ++j) z1[j] += cat[i] * pw[i * 2 + j];
    const auto h = ln_row(z1, {1.1, 0.9}, {0.0, 0.0});
    const double a0 = gelu(0.3 * h[0] + 0.8 * h[1] + 0.1), a1 = gelu(-0.5 * h[0] + 0.2 * h[1]);
    z2[n] = {z1[0] + 0.4 * a0 - 0.7 * a1 - 0.05, z1[1] + 0.6 * a0 + 0.1 * a1};
  }
  // 1x2 grid: only the middle kernel row touches real pixels.
  auto tap = [&](std::size_t col, std::size_t c) { return k[(1 * 3 + col) * 2 + c]; };
  const std::vector<double> bias{0.01, -0.02};
  std::vector<double> expect;
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 2; ++c) {
      const double left = n == 1 ? tap(0, c) * z2[0][c] : 0.0;
      const double right = n == 0 ? tap(2, c) * z2[1][c] : 0.0;
      expect.push_back(left + tap(1, c) * z2[n][c] + right + bias[c]);
    }
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(z.features.data()[i], expect[i], 1e-14);
  expect_frozen(z.features.to_vector(), {1.39435515822546319e-01, -1.60248956003882781e-01, -3.79435305563622260e-01,
                                        1.50001806988370769e-02});
}

TEST(FeatureUngrouping, DepthwiseConvStartsNearIdentity) {
  Rng rng(15);
  FeatureUngrouping<double> ug(small_options(6, 2), rng);
  const auto k = ug.dwconv.kernel;
  for (std::size_t c = 0; c < 6; ++c) {
    EXPECT_NEAR(k.at({1, 1, c}), 1.0, 0.05);
    EXPECT_NEAR(k.at({0, 0, c}), 0.0, 0.05);
  }
}

// ---------------------------------------------------------------------------
// Whole block

class BlockByCore : public ::testing::TestWithParam<PropagationKind> {};

TEST_P(BlockByCore, OutputShapeMatchesInput) {
  Rng rng(16);
  GPBlock<double> block(small_options(4, 3, GetParam()), rng);
  ForwardContext ctx;
  for (GridShape g : {GridShape{1, 1}, GridShape{2, 5}, GridShape{4, 4}}) {
    auto y = block.forward(random_map(g, 4, rng), ctx);
    EXPECT_EQ(y.features.shape(), (Shape{g.tokens(), 4}));
    EXPECT_EQ(y.grid, g);
  }
}

TEST_P(BlockByCore, TokenPermutationEquivarianceWithIdentityConv) {
  Rng rng(17);
  GPBlock<double> block(small_options(8, 4, GetParam()), rng);
  scramble(block, rng, 0.5);
  std::vector<double> k(9 * 8, 0.0);
  for (std::size_t c = 0; c < 8; ++c) k[4 * 8 + c] = 1.0;
  set(block.ungrouping.dwconv.kernel, k);
  const GridShape g{3, 4};
  auto x = random_map(g, 8, rng);
  std::vector<std::int64_t> perm(12);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng.engine());
  const std::span<const std::int64_t> p(perm);
  ForwardContext ctx;
  auto base = block.forward(x, ctx).features;
  auto permuted = block.forward({ops::gather_rows(x.features, p), g}, ctx).features;
  EXPECT_LT(max_abs_diff(permuted, ops::gather_rows(base, p)), 1e-12);
}

TEST_P(BlockByCore, GradientsMatchFiniteDifferences) {
  Rng rng(18);
  GPBlock<double> block(small_options(4, 3, GetParam()), rng);
  scramble(block, rng, 0.3);
  auto x = random_map({2, 3}, 4, rng);
  x.features.set_requires_grad(true);
  ParameterList<double> params;
  block.collect("gp", params);
  std::vector<Tensor<double>> leaves{x.features};
  for (auto& pr : params) {
    pr.tensor.set_requires_grad(true);
    leaves.push_back(pr.tensor);
  }
  auto w = random_tensor({6, 4}, rng, 1.0, false);
  ForwardContext ctx;
  auto loss = [&] { return ops::sum(ops::mul(block.forward(x, ctx).features, w)); };
  // Floor as in the attention tests: the O(10) loss leaves ~1e-10 of
  // round-off in each difference.
  EXPECT_LT(testing::fd_max_rel_error(loss, leaves, 1e-5, 1e-4), 1e-5);
}

INSTANTIATE_TEST_SUITE_P(Cores, BlockByCore,
                         ::testing::Values(PropagationKind::mixer, PropagationKind::selfattn, PropagationKind::none),
                         [](const auto& info) { return propagation_name(info.param); });

TEST(GPBlock, SinglePrecisionPermutationEquivariance) {
  Rng rng(19);
  GPBlock<float> block(small_options(8, 4), rng);
  auto& k = block.ungrouping.dwconv.kernel;
  auto kd = k.mutable_data();
  for (std::size_t i = 0; i < kd.size(); ++i) kd[i] = (i / 8 == 4) ? 1.0f : 0.0f;
  std::vector<float> xv(20 * 8);
  for (auto& e : xv) e = float(rng.normal());
  TokenMap<float> x{Tensor<float>::from_data({20, 8}, xv), {4, 5}};
  std::vector<std::int64_t> perm(20);
  std::iota(perm.rbegin(), perm.rend(), 0);
  const std::span<const std::int64_t> p(perm);
  ForwardContext ctx;
  auto base = block.forward(x, ctx).features;
  auto permuted = block.forward({ops::gather_rows(x.features, p), x.grid}, ctx).features;
  EXPECT_LT(max_abs_diff(permuted, ops::gather_rows(base, p)), 1e-5);
}

TEST(GPBlock, NonePropagationStillSpreadsEveryToken) {
  // Hand-built case: one 2-channel head, 3 groups, 1x4 grid. Changing a
  // single token reaches every output token through the groups.
  Rng rng(20);
  auto opts = small_options(2, 3, PropagationKind::none);
  opts.grouping_heads = opts.ungrouping_heads = 1;
  GPBlock<double> block(opts, rng);
  set(block.group_tokens, {1.0, 0.0, 0.0, 1.0, -1.0, -1.0});
  set(block.grouping.key.weight, {1.0, 0.0, 0.0, 1.0});
  set(block.ungrouping.query.weight, {1.0, 0.5, -0.5, 1.0});
  set(block.ungrouping.key.weight, {1.0, 0.0, 0.0, 1.0});
  set(block.ungrouping.value.weight, {1.0, 0.0, 0.0, 1.0});
  auto x = make<double>({4, 2}, {1.0, 0.0, 0.0, 2.0, -1.0, 0.5, 0.3, -0.3});
  ForwardContext ctx;
  GroupAssignment<double> a;
  auto base = block.forward({x, {1, 4}}, ctx, &a).features;
  auto changed = x.to_vector();
  changed[2 * 2 + 0] = 2.0;
  changed[2 * 2 + 1] = -1.5;
  auto y = block.forward({make<double>({4, 2}, changed), {1, 4}}, ctx).features;
  for (std::size_t m = 0; m < 3; ++m) EXPECT_GT(a.weights.at({0, m, 2}), 0.0);
  for (std::size_t n = 0; n < 4; ++n) {
    const double d = std::abs(y.at({n, 0}) - base.at({n, 0})) + std::abs(y.at({n, 1}) - base.at({n, 1}));
    EXPECT_GT(d, 1e-6) << "token " << n;
  }
}

TEST(GPBlock, MoreGroupsThanTokensIsLegal) {
  Rng rng(21);
  GPBlock<double> block(small_options(4, 16), rng);
  ForwardContext ctx;
  GroupAssignment<double> a;
  auto y = block.forward(random_map({1, 2}, 4, rng), ctx, &a);
  EXPECT_EQ(y.features.shape(), (Shape{2, 4}));
  EXPECT_EQ(a.weights.shape(), (Shape{2, 16, 2}));
}

TEST(GPBlock, OptionValidation) {
  auto o = small_options(6, 4);
  o.groups = 0;
  EXPECT_THROW(o.validate(), ConfigError);
  o = small_options(6, 4);
  o.grouping_heads = 4;
  EXPECT_THROW(o.validate(), ConfigError);
  o = small_options(6, 4);
  o.ungrouping_heads = 0;
  EXPECT_THROW(o.validate(), ConfigError);
  EXPECT_THROW(parse_propagation("attention"), ConfigError);
  EXPECT_EQ(parse_propagation("selfattn"), PropagationKind::selfattn);
}

TEST(GPBlock, TokenHiddenWidthRoundsUp) {
  auto o = small_options(6, 16);
  EXPECT_EQ(o.token_hidden(), 8u);
  o.groups = 5;
  EXPECT_EQ(o.token_hidden(), 3u);
  o.groups = 1;
  EXPECT_EQ(o.token_hidden(), 1u);
}

TEST(GPBlock, ParameterLayout) {
  Rng rng(22);
  const std::size_t C = 12, M = 6;
  GPBlock<double> block(small_options(C, M), rng);
  ParameterList<double> params;
  block.collect("gp", params);
  const std::size_t th = 3;
  const std::size_t grouping = 2 * C + C * C + C;
  const std::size_t mixer = 2 * C + (M * th + th) + (th * M + M) + 2 * C + (C * 4 * C + 4 * C) + (4 * C * C + C);
  const std::size_t ungrouping = 4 * C + 3 * (C * C + C) + (2 * C * C + C) + (2 * C + 8 * C * C + 5 * C) + 10 * C;
  EXPECT_EQ(count_parameters(params), M * C + grouping + mixer + ungrouping);
  EXPECT_EQ(params.front().name, "gp.group_tokens");
}

}  // namespace
}  // namespace gpvit
