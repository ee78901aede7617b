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
#include <numeric>

#include "gpvit/autograd.hpp"
#include "gpvit/error.hpp"
#include "gpvit/nn.hpp"
#include "gpvit/ops.hpp"
#include "test_util.hpp"

namespace gpvit {
namespace {

using testing::fd_max_rel_error;
using testing::make;
using testing::random_tensor;

TEST(Matmul, IdentityLeavesOperandUnchanged) {
  auto b = make<float>({2, 2}, {1, 2, 3, 4});
  auto c = ops::matmul(Tensor<float>::identity(2), b);
  EXPECT_EQ(c.to_vector(), b.to_vector());
}

TEST(Matmul, ZeroOperandAnnihilates) {
  auto c = ops::matmul(make<float>({2, 2}, {1, 2, 3, 4}), Tensor<float>::zeros({2, 2}));
  EXPECT_EQ(c.to_vector(), std::vector<float>(4, 0.0f));
}

TEST(Matmul, RowTimesColumnIsDotProduct) {
  auto c = ops::matmul(make<double>({1, 2}, {1, 2}), make<double>({2, 1}, {3, 5}));
  ASSERT_EQ(c.shape(), (Shape{1, 1}));
  EXPECT_EQ(c.item(), 13.0);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    ops::matmul(Tensor<float>::zeros({1, 2}), Tensor<float>::zeros({3, 1}));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[1x2]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[3x1]"), std::string::npos) << msg;
  }
}

TEST(Matmul, AgreesWithNaiveTripleLoop) {
  Rng rng(3);
  auto a = random_tensor({5, 7}, rng, 1.0, false);
  auto b = random_tensor({7, 4}, rng, 1.0, false);
  auto c = ops::matmul(a, b);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < 7; ++k) s += a.at({i, k}) * b.at({k, j});
      EXPECT_NEAR(c.at({i, j}), s, 1e-12);
    }
}

TEST(Bmm, TransposedOperandMatchesExplicitTranspose) {
  Rng rng(4);
  auto a = random_tensor({3, 4, 5}, rng, 1.0, false);
  auto b = random_tensor({3, 6, 5}, rng, 1.0, false);
  auto fused = ops::bmm(a, b, true);
  auto explicit_t = ops::bmm(a, ops::permute(b, {0, 2, 1}));
  EXPECT_LT(testing::max_abs_diff(fused, explicit_t), 1e-12);
}

TEST(Softmax, ZerosGiveUniform) {
  auto y = ops::softmax(Tensor<double>::zeros({3}), 0);
  for (double v : y.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Softmax, LogThreeClosedForm) {
  auto y = ops::softmax(make<double>({2}, {0.0, std::log(3.0)}), 0);
  EXPECT_NEAR(y.at({0}), 0.25, 1e-15);
  EXPECT_NEAR(y.at({1}), 0.75, 1e-15);
}

TEST(Softmax, ShiftInvariant) {
  Rng rng(5);
  auto x = random_tensor({4, 6}, rng, 3.0, false);
  auto shifted = x.to_vector();
  for (auto& v : shifted) v += 123.25;
  auto a = ops::softmax(x, 1);
  auto b = ops::softmax(make<double>({4, 6}, shifted), 1);
  EXPECT_LT(testing::max_abs_diff(a, b), 1e-14);
}

TEST(Softmax, RowsSumToOneAlongEitherAxis) {
  Rng rng(6);
  auto x = random_tensor({5, 7}, rng, 10.0, false);
  for (std::size_t axis : {0, 1}) {
    auto y = ops::softmax(x, axis);
    const std::size_t outer = axis == 0 ? 7 : 5, inner = axis == 0 ? 5 : 7;
    for (std::size_t o = 0; o < outer; ++o) {
      double s = 0;
      for (std::size_t i = 0; i < inner; ++i) {
        const double v = axis == 0 ? y.at({i, o}) : y.at({o, i});
        EXPECT_GE(v, 0.0);
        s += v;
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Softmax, SinglePrecisionRowSums) {
  std::vector<float> v(64);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = float(std::sin(double(i)) * 40.0);
  auto y = ops::softmax(make<float>({8, 8}, v), 1);
  for (std::size_t r = 0; r < 8; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 8; ++c) s += y.at({r, c});
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(Softmax, LargeLogitsStayFinite) {
  auto y = ops::softmax(make<float>({3}, {1000.0f, 999.0f, -1e9f}), 0);
  for (float v : y.data()) EXPECT_TRUE(std::isfinite(v));
  EXPECT_EQ(y.at({2}), 0.0f);
}

TEST(Softmax, InvalidAxisIsShapeError) {
  EXPECT_THROW(ops::softmax(Tensor<float>::zeros({2, 2}), 2), ShapeError);
}

TEST(LayerNorm, ConstantRowMapsToZero) {
  auto y = ops::layer_norm(Tensor<double>::full({1, 4}, 3.5), Tensor<double>::ones({4}),
                           Tensor<double>::zeros({4}), 1e-5);
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, UnitRowIsFixedPoint) {
  auto y = ops::layer_norm(make<double>({1, 2}, {1, -1}), Tensor<double>::ones({2}), Tensor<double>::zeros({2}),
                           1e-12);
  EXPECT_NEAR(y.at({0, 0}), 1.0, 1e-11);
  EXPECT_NEAR(y.at({0, 1}), -1.0, 1e-11);
}

TEST(LayerNorm, ZeroGainCollapsesToBias) {
  Rng rng(7);
  auto bias = make<double>({3}, {0.5, -2.0, 7.0});
  auto y = ops::layer_norm(random_tensor({4, 3}, rng, 1.0, false), Tensor<double>::zeros({3}), bias, 1e-5);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(y.at({r, c}), bias.at({c}));
}

TEST(LayerNorm, RowsHaveZeroMeanUnitVariance) {
  Rng rng(8);
  auto y = ops::layer_norm(random_tensor({6, 16}, rng, 4.0, false), Tensor<double>::ones({16}),
                           Tensor<double>::zeros({16}), 1e-12);
  for (std::size_t r = 0; r < 6; ++r) {
    double m = 0, v = 0;
    for (std::size_t c = 0; c < 16; ++c) m += y.at({r, c});
    m /= 16;
    for (std::size_t c = 0; c < 16; ++c) v += (y.at({r, c}) - m) * (y.at({r, c}) - m);
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v / 16, 1.0, 1e-9);
  }
}

TEST(LayerNorm, NonPositiveEpsIsConfigError) {
  EXPECT_THROW(ops::layer_norm(Tensor<double>::zeros({1, 2}), Tensor<double>::ones({2}),
                               Tensor<double>::zeros({2}), 0.0),
               ConfigError);
}

TEST(Gelu, FixedPointsAndAsymptotes) {
  auto y = ops::gelu(make<double>({3}, {0.0, 10.0, -10.0}));
  EXPECT_EQ(y.at({0}), 0.0);
  EXPECT_NEAR(y.at({1}), 10.0, 1e-12);
  EXPECT_NEAR(y.at({2}), 0.0, 1e-12);
}

TEST(Gelu, MatchesTanhFormula) {
  const double x = 0.7;
  const double expect = 0.5 * x * (1 + std::tanh(std::sqrt(2 / M_PI) * (x + 0.044715 * x * x * x)));
  EXPECT_NEAR(ops::gelu(make<double>({1}, {x})).item(), expect, 1e-15);
}

TEST(DepthwiseConv, CentreTapIsIdentity) {
  Rng rng(9);
  auto x = random_tensor({4, 5, 3}, rng, 1.0, false);
  auto k = Tensor<double>::zeros({3, 3, 3});
  for (std::size_t c = 0; c < 3; ++c) k.mutable_data()[4 * 3 + c] = 1.0;
  auto y = ops::depthwise_conv2d(x, k, Tensor<double>::zeros({3}));
  EXPECT_EQ(y.to_vector(), x.to_vector());
}

TEST(DepthwiseConv, ZeroInputGivesBias) {
  Rng rng(10);
  auto bias = make<double>({2}, {0.25, -1.5});
  auto y = ops::depthwise_conv2d(Tensor<double>::zeros({3, 3, 2}), random_tensor({3, 3, 2}, rng, 1.0, false), bias);
  for (std::size_t i = 0; i < 9; ++i) {
    EXPECT_EQ(y.data()[2 * i], 0.25);
    EXPECT_EQ(y.data()[2 * i + 1], -1.5);
  }
}

TEST(DepthwiseConv, SinglePixelSeesCentreTapOnly) {
  auto y = ops::depthwise_conv2d(make<double>({1, 1, 1}, {2.5}), Tensor<double>::ones({3, 3, 1}),
                                 make<double>({1}, {0.5}));
  EXPECT_EQ(y.item(), 3.0);
}

TEST(DepthwiseConv, ChannelsDoNotMix) {
  Rng rng(11);
  auto x = random_tensor({4, 4, 3}, rng, 1.0, false);
  auto k = random_tensor({3, 3, 3}, rng, 1.0, false);
  auto b = Tensor<double>::zeros({3});
  auto base = ops::depthwise_conv2d(x, k, b).to_vector();
  auto perturbed = x.to_vector();
  for (std::size_t i = 1; i < perturbed.size(); i += 3) perturbed[i] += 5.0;
  auto y = ops::depthwise_conv2d(make<double>({4, 4, 3}, perturbed), k, b).to_vector();
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (i % 3 == 1) continue;
    EXPECT_EQ(y[i], base[i]);
  }
}

TEST(DepthwiseConv, MatchesNaiveZeroPaddedLoop) {
  Rng rng(12);
  const std::size_t H = 4, W = 5, C = 2, K = 3;
  auto x = random_tensor({H, W, C}, rng, 1.0, false);
  auto k = random_tensor({K, K, C}, rng, 1.0, false);
  auto b = random_tensor({C}, rng, 1.0, false);
  auto y = ops::depthwise_conv2d(x, k, b);
  for (std::size_t r = 0; r < H; ++r)
    for (std::size_t c = 0; c < W; ++c)
      for (std::size_t ch = 0; ch < C; ++ch) {
        double s = b.at({ch});
        for (std::size_t i = 0; i < K; ++i)
          for (std::size_t j = 0; j < K; ++j) {
            const long rr = long(r) + long(i) - 1, cc = long(c) + long(j) - 1;
            if (rr < 0 || cc < 0 || rr >= long(H) || cc >= long(W)) continue;
            s += k.at({i, j, ch}) * x.at({std::size_t(rr), std::size_t(cc), ch});
          }
        EXPECT_NEAR(y.at({r, c, ch}), s, 1e-12);
      }
}

TEST(DepthwiseConv, EvenKernelIsConfigError) {
  EXPECT_THROW(ops::depthwise_conv2d(Tensor<double>::zeros({3, 3, 1}), Tensor<double>::zeros({2, 2, 1}),
                                     Tensor<double>::zeros({1})),
               ConfigError);
}

TEST(Backward, SumGivesOnes) {
  auto x = make<double>({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  auto g = backward(ops::sum(x));
  EXPECT_EQ(g[x].to_vector(), std::vector<double>(6, 1.0));
}

TEST(Backward, SumOfSquaresGivesTwiceInput) {
  auto x = make<double>({3}, {1.5, -2, 0.25}, true);
  auto g = backward(ops::sum(ops::mul(x, x)));
  EXPECT_EQ(g[x].to_vector(), (std::vector<double>{3, -4, 0.5}));
}

TEST(Backward, DisconnectedLeafGetsZeroGradient) {
  auto x = Tensor<double>::ones({2}, true);
  auto unused = Tensor<double>::ones({3, 2}, true);
  auto g = backward(ops::sum(x));
  EXPECT_EQ(g[unused].shape(), (Shape{3, 2}));
  EXPECT_EQ(g[unused].to_vector(), std::vector<double>(6, 0.0));
  EXPECT_FALSE(g.contains(unused));
}

TEST(Backward, NonScalarRootIsUsageError) {
  auto x = Tensor<double>::ones({2}, true);
  EXPECT_THROW(backward(ops::scale(x, 2.0)), UsageError);
}

TEST(Backward, SharedSubexpressionAccumulates) {
  auto x = make<double>({1}, {3.0}, true);
  auto y = ops::mul(x, x);
  auto g = backward(ops::sum(ops::add(y, y)));
  EXPECT_EQ(g[x].item(), 12.0);
}

TEST(Backward, NoGradGuardStopsRecording) {
  auto x = Tensor<double>::ones({2}, true);
  Tensor<double> y;
  {
    NoGradGuard guard;
    y = ops::scale(x, 3.0);
  }
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(GradMode::enabled());
}

TEST(GradTape, TopologicalOrderVisitsEachNodeOnce) {
  auto x = Tensor<double>::ones({2}, true);
  auto a = ops::scale(x, 2.0);
  auto b = ops::mul(a, x);
  auto root = ops::sum(ops::add(a, b));
  GradTape<double> tape(root);
  const auto& order = tape.order();
  std::vector<const Node<double>*> seen;
  for (auto* n : order) {
    EXPECT_EQ(std::count(seen.begin(), seen.end(), n), 0);
    for (auto& in : n->inputs) {
      if (in->requires_grad) {
        EXPECT_NE(std::find(seen.begin(), seen.end(), in.get()), seen.end());
      }
    }
    seen.push_back(n);
  }
  EXPECT_EQ(order.back(), root.node());
}

TEST(Tensor, LeafHasNoParentsAndShapeMatchesData) {
  auto t = Tensor<float>::zeros({2, 3});
  EXPECT_TRUE(t.is_leaf());
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_THROW(Tensor<float>::from_data({2, 2}, {1, 2, 3}), ShapeError);
  EXPECT_THROW(Tensor<float>::zeros({2, 0}), ShapeError);
}

TEST(Tensor, PrecisionNames) {
  EXPECT_EQ(parse_precision("f32"), Precision::f32);
  EXPECT_EQ(parse_precision("f64"), Precision::f64);
  EXPECT_THROW(parse_precision("f16"), UsageError);
}

TEST(ShapeOps, ConcatSliceRoundTrip) {
  Rng rng(13);
  auto a = random_tensor({3, 2}, rng, 1.0, false);
  auto b = random_tensor({3, 4}, rng, 1.0, false);
  auto c = ops::concat<double>({a, b}, 1);
  EXPECT_EQ(ops::slice(c, 1, 0, 2).to_vector(), a.to_vector());
  EXPECT_EQ(ops::slice(c, 1, 2, 6).to_vector(), b.to_vector());
  EXPECT_THROW(ops::concat<double>({a, Tensor<double>::zeros({2, 2})}, 1), ShapeError);
}

TEST(ShapeOps, GatherRowsPadsWithZeros) {
  auto x = make<double>({2, 2}, {1, 2, 3, 4});
  std::vector<std::int64_t> idx{1, -1, 0, 1};
  auto y = ops::gather_rows(x, idx);
  EXPECT_EQ(y.shape(), (Shape{4, 2}));
  EXPECT_EQ(y.to_vector(), (std::vector<double>{3, 4, 0, 0, 1, 2, 3, 4}));
  std::vector<std::int64_t> bad{2};
  EXPECT_THROW(ops::gather_rows(x, bad), ShapeError);
}

TEST(ShapeOps, ReshapeRejectsWrongSize) {
  EXPECT_THROW(ops::reshape(Tensor<float>::zeros({2, 3}), {4, 2}), ShapeError);
}

TEST(CrossEntropy, MatchesLogSumExp) {
  auto logits = make<double>({3}, {1.0, 2.0, 0.5});
  const double lse = std::log(std::exp(1.0) + std::exp(2.0) + std::exp(0.5));
  EXPECT_NEAR(ops::cross_entropy(logits, 1).item(), lse - 2.0, 1e-14);
  EXPECT_THROW(ops::cross_entropy(logits, 3), ShapeError);
}

// Finite-difference checks of every differentiable op at f64.
constexpr double kOpTolerance = 1e-6;

TEST(Gradients, TwoLayerGeluMlp) {
  Rng rng(14);
  auto x = random_tensor({4, 5}, rng);
  auto w1 = random_tensor({5, 8}, rng, 0.5);
  auto b1 = random_tensor({8}, rng, 0.5);
  auto w2 = random_tensor({8, 3}, rng, 0.5);
  auto b2 = random_tensor({3}, rng, 0.5);
  auto loss = [&] {
    auto h = ops::gelu(ops::add_bias(ops::matmul(x, w1), b1));
    auto y = ops::add_bias(ops::matmul(h, w2), b2);
    return ops::sum(ops::mul(y, y));
  };
  EXPECT_LT(fd_max_rel_error(loss, {x, w1, b1, w2, b2}), kOpTolerance);
}

TEST(Gradients, Bmm) {
  Rng rng(15);
  auto a = random_tensor({2, 3, 4}, rng);
  auto b = random_tensor({2, 4, 2}, rng);
  auto bt = random_tensor({2, 5, 4}, rng);
  auto w = random_tensor({2, 3, 2}, rng, 1.0, false);
  auto wt = random_tensor({2, 3, 5}, rng, 1.0, false);
  auto loss = [&] {
    return ops::add(ops::sum(ops::mul(ops::bmm(a, b), w)), ops::sum(ops::mul(ops::bmm(a, bt, true), wt)));
  };
  EXPECT_LT(fd_max_rel_error(loss, {a, b, bt}), kOpTolerance);
}

TEST(Gradients, SoftmaxBothAxes) {
  Rng rng(16);
  auto x = random_tensor({3, 4}, rng);
  auto w = random_tensor({3, 4}, rng, 1.0, false);
  auto loss = [&] {
    return ops::add(ops::sum(ops::mul(ops::softmax(x, 1), w)), ops::sum(ops::mul(ops::softmax(x, 0), w)));
  };
  EXPECT_LT(fd_max_rel_error(loss, {x}), kOpTolerance);
}

TEST(Gradients, LayerNorm) {
  Rng rng(17);
  auto x = random_tensor({3, 6}, rng);
  auto g = random_tensor({6}, rng);
  auto b = random_tensor({6}, rng);
  auto w = random_tensor({3, 6}, rng, 1.0, false);
  auto loss = [&] { return ops::sum(ops::mul(ops::layer_norm(x, g, b, 1e-5), w)); };
  EXPECT_LT(fd_max_rel_error(loss, {x, g, b}), kOpTolerance);
}

TEST(Gradients, DepthwiseConvBothLayouts) {
  Rng rng(18);
  auto x = random_tensor({3, 4, 2}, rng);
  auto xb = random_tensor({2, 3, 3, 2}, rng);
  auto k = random_tensor({3, 3, 2}, rng);
  auto b = random_tensor({2}, rng);
  auto w = random_tensor({3, 4, 2}, rng, 1.0, false);
  auto wb = random_tensor({2, 3, 3, 2}, rng, 1.0, false);
  auto loss = [&] {
    return ops::add(ops::sum(ops::mul(ops::depthwise_conv2d(x, k, b), w)),
                    ops::sum(ops::mul(ops::depthwise_conv2d(xb, k, b), wb)));
  };
  EXPECT_LT(fd_max_rel_error(loss, {x, xb, k, b}), kOpTolerance);
}

TEST(Gradients, ShapeAlgebra) {
  Rng rng(19);
  auto x = random_tensor({2, 3, 4}, rng);
  auto y = random_tensor({6, 2}, rng);
  auto w = random_tensor({4, 6}, rng, 1.0, false);
  std::vector<std::int64_t> idx{3, -1, 0, 3, 5};
  auto loss = [&] {
    auto p = ops::reshape(ops::permute(x, {2, 0, 1}), {4, 6});
    auto t = ops::transpose(ops::concat<double>({y, ops::slice(y, 1, 0, 1)}, 1));
    auto g = ops::gather_rows(ops::transpose(t), idx);
    return ops::add(ops::sum(ops::mul(p, w)), ops::sum(ops::mul(g, g)));
  };
  EXPECT_LT(fd_max_rel_error(loss, {x, y}), kOpTolerance);
}

TEST(Gradients, ElementwiseReductionsAndLoss) {
  Rng rng(20);
  auto a = random_tensor({3, 4}, rng);
  auto b = random_tensor({3, 4}, rng);
  auto loss = [&] {
    auto d = ops::sub(ops::scale(a, 1.5), b);
    auto m = ops::mean_rows(ops::mul(d, a));
    return ops::add(ops::cross_entropy(m, 2), ops::mean(ops::mul(b, b)));
  };
  EXPECT_LT(fd_max_rel_error(loss, {a, b}), kOpTolerance);
}

TEST(MacCounter, CountsDenseKernels) {
  MacCountScope scope;
  ops::matmul(Tensor<float>::zeros({3, 4}), Tensor<float>::zeros({4, 5}));
  EXPECT_EQ(scope.count(), 60u);
  ops::bmm(Tensor<float>::zeros({2, 3, 4}), Tensor<float>::zeros({2, 5, 4}), true);
  EXPECT_EQ(scope.count(), 60u + 120u);
  ops::depthwise_conv2d(Tensor<float>::zeros({4, 4, 2}), Tensor<float>::zeros({3, 3, 2}), Tensor<float>::zeros({2}));
  EXPECT_EQ(scope.count(), 180u + 16u * 2u * 9u);
  ops::softmax(Tensor<float>::zeros({8, 8}), 1);
  EXPECT_EQ(scope.count(), 180u + 288u);
}

TEST(DropPath, IdentityOutsideTraining) {
  Rng rng(21);
  auto x = random_tensor({4, 3}, rng, 1.0, false);
  ForwardContext eval;
  EXPECT_EQ(drop_path(x, 0.9, eval).to_vector(), x.to_vector());
}

TEST(DropPath, TrainingDropsOrRescalesWholeBranch) {
  Rng data_rng(22);
  auto x = random_tensor({4, 3}, data_rng, 1.0, false);
  Rng rng(0);
  ForwardContext train{true, &rng};
  int dropped = 0;
  for (int trial = 0; trial < 200; ++trial) {
    auto y = drop_path(x, 0.25, train).to_vector();
    if (y[0] == 0.0) {
      ++dropped;
      for (double v : y) EXPECT_EQ(v, 0.0);
    } else {
      for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], x.data()[i] / 0.75, 1e-12);
    }
  }
  EXPECT_GT(dropped, 25);
  EXPECT_LT(dropped, 75);
}

}  // namespace
}  // namespace gpvit
