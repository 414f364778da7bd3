/* Copyright 2026 The rescale-lab Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include "rescale_lab/engine.h"
#include "rescale_lab/errors.h"
#include "rescale_lab/kernels.h"
#include "test_support.h"

namespace rescale {
namespace {

QTensor Act(Shape shape, std::vector<std::int8_t> data, std::int32_t zp = 0) {
  return {std::move(shape), std::move(data), {1.0}, zp};
}

QTensor Weights(Shape shape, std::vector<std::int8_t> data, std::int64_t channels) {
  return {std::move(shape), std::move(data), std::vector<double>(channels, 1.0), 0};
}

TEST(EffectiveBiasTest, Examples) {
  const QTensor w2 = Weights({2, 3}, {1, -4, 9, 7, 0, -2}, 2);
  EXPECT_EQ(ComputeEffectiveBias(std::vector<std::int32_t>{5, -7}, w2, 0),
            (std::vector<std::int32_t>{5, -7}));
  const QTensor w = Weights({1, 3}, {1, 2, 3}, 1);
  EXPECT_EQ(ComputeEffectiveBias(std::vector<std::int32_t>{10}, w, 2),
            (std::vector<std::int32_t>{-2}));
  const QTensor zeros = Weights({1, 4}, {0, 0, 0, 0}, 1);
  EXPECT_EQ(ComputeEffectiveBias(std::vector<std::int32_t>{0}, zeros, -128),
            (std::vector<std::int32_t>{0}));
}

TEST(EffectiveBiasTest, OverflowIsAnError) {
  const QTensor w = Weights({1, 4}, {127, 127, 127, 127}, 1);
  EXPECT_THROW(ComputeEffectiveBias(std::vector<std::int32_t>{INT32_MIN + 10}, w, 127),
               OverflowError);
  EXPECT_THROW(ComputeEffectiveBias(std::vector<std::int32_t>{1, 2}, w, 0), ShapeError);
}

TEST(EffectiveBiasTest, DepthwiseLayoutSumsPerChannel) {
  // [1, 1, 2, 2]: taps (0: c0=1, c1=2), (1: c0=3, c1=4).
  const QTensor w = Weights({1, 1, 2, 2}, {1, 2, 3, 4}, 2);
  EXPECT_EQ(ComputeEffectiveBias(std::vector<std::int32_t>{0, 0}, w, 1,
                                 WeightLayout::kChannelLast),
            (std::vector<std::int32_t>{-4, -6}));
}

TEST(DenseIntTest, Examples) {
  EXPECT_EQ(DenseInt(Act({1, 2}, {1, 2}), Weights({1, 2}, {1, 1}, 1),
                     std::vector<std::int32_t>{0})
                .data,
            (std::vector<std::int32_t>{3}));
  EXPECT_EQ(DenseInt(Act({1, 4}, {-128, -43, 42, 127}), Weights({1, 4}, {1, -1, 1, -1}, 1),
                     std::vector<std::int32_t>{100})
                .data,
            (std::vector<std::int32_t>{-70}));
  EXPECT_EQ(DenseInt(Act({1, 256}, std::vector<std::int8_t>(256, 127)),
                     Weights({1, 256}, std::vector<std::int8_t>(256, 127), 1),
                     std::vector<std::int32_t>{0})
                .data,
            (std::vector<std::int32_t>{4129024}));
}

TEST(DenseIntTest, ShapeErrors) {
  EXPECT_THROW(DenseInt(Act({1, 3}, {1, 2, 3}), Weights({1, 2}, {1, 1}, 1),
                        std::vector<std::int32_t>{0}),
               ShapeError);
  // More than 2^16 MAC terms per accumulator.
  const std::int64_t n = (1 << 16) + 1;
  EXPECT_THROW(DenseInt(Act({1, n}, std::vector<std::int8_t>(n, 0)),
                        Weights({1, n}, std::vector<std::int8_t>(n, 0), 1),
                        std::vector<std::int32_t>{0}),
               ShapeError);
}

TEST(DenseIntTest, AccumulatorOverflowIsAnError) {
  const std::int64_t n = 1 << 16;
  EXPECT_THROW(DenseInt(Act({1, n}, std::vector<std::int8_t>(n, -128)),
                        Weights({1, n}, std::vector<std::int8_t>(n, -128), 1),
                        std::vector<std::int32_t>{INT32_MAX}),
               OverflowError);
}

TEST(Conv2DIntTest, Examples) {
  // 1x1 identity.
  const QTensor x = Act({1, 2, 2, 1}, {5, -3, 7, 0});
  EXPECT_EQ(Conv2DInt(x, Weights({1, 1, 1, 1}, {1}, 1), std::vector<std::int32_t>{0}, {},
                      Padding::kValid)
                .data,
            (std::vector<std::int32_t>{5, -3, 7, 0}));
  // Counting kernel.
  EXPECT_EQ(Conv2DInt(Act({1, 3, 3, 1}, std::vector<std::int8_t>(9, 1)),
                      Weights({1, 3, 3, 1}, std::vector<std::int8_t>(9, 1), 1),
                      std::vector<std::int32_t>{0}, {}, Padding::kValid)
                .data,
            (std::vector<std::int32_t>{9}));
  // Hand convolution.
  const AccTensor acc = Conv2DInt(Act({1, 3, 3, 1}, {1, 2, 3, 4, 5, 6, 7, 8, 9}),
                                  Weights({1, 2, 2, 1}, {1, 0, 0, 1}, 1),
                                  std::vector<std::int32_t>{0}, {}, Padding::kValid);
  EXPECT_EQ(acc.shape, (Shape{1, 2, 2, 1}));
  EXPECT_EQ(acc.data, (std::vector<std::int32_t>{6, 8, 12, 14}));
}

TEST(Conv2DIntTest, SamePaddingReadsZeroPoint) {
  // Constant input equal to the zero point is real zero everywhere, so with
  // b_eff applied every output (border included) equals the raw bias.
  const QTensor x = Act({1, 4, 4, 1}, std::vector<std::int8_t>(16, -7), -7);
  const QTensor w = Weights({1, 3, 3, 1}, {1, 2, 3, 4, 5, 6, 7, 8, 9}, 1);
  const auto b_eff = ComputeEffectiveBias(std::vector<std::int32_t>{11}, w, -7);
  const AccTensor acc = Conv2DInt(x, w, b_eff, {}, Padding::kSame);
  EXPECT_EQ(acc.shape, (Shape{1, 4, 4, 1}));
  for (std::int32_t v : acc.data) EXPECT_EQ(v, 11);
}

TEST(Conv2DIntTest, OneByOneMatchesDensePerPosition) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> v(-128, 127);
  QTensor x = Act({2, 3, 4, 5}, std::vector<std::int8_t>(120));
  for (auto& e : x.data) e = static_cast<std::int8_t>(v(rng));
  QTensor w = Weights({6, 1, 1, 5}, std::vector<std::int8_t>(30), 6);
  for (auto& e : w.data) e = static_cast<std::int8_t>(v(rng) / 2);
  std::vector<std::int32_t> b(6);
  for (auto& e : b) e = v(rng) * 100;
  const AccTensor conv = Conv2DInt(x, w, b, {}, Padding::kValid);
  const QTensor flat = Act({24, 5}, x.data);
  const QTensor dense_w = Weights({6, 5}, w.data, 6);
  EXPECT_EQ(conv.data, DenseInt(flat, dense_w, b).data);
}

TEST(Conv2DIntTest, LinearInInputWithZeroPointZero) {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> v(-60, 60);
  QTensor x1 = Act({1, 5, 5, 2}, std::vector<std::int8_t>(50));
  QTensor x2 = x1, x12 = x1;
  for (std::size_t i = 0; i < x1.data.size(); ++i) {
    x1.data[i] = static_cast<std::int8_t>(v(rng));
    x2.data[i] = static_cast<std::int8_t>(v(rng));
    x12.data[i] = static_cast<std::int8_t>(x1.data[i] + x2.data[i]);
  }
  QTensor w = Weights({3, 3, 3, 2}, std::vector<std::int8_t>(54), 3);
  for (auto& e : w.data) e = static_cast<std::int8_t>(v(rng));
  const std::vector<std::int32_t> b{17, -4, 300};
  const AccTensor f1 = Conv2DInt(x1, w, b, {}, Padding::kSame);
  const AccTensor f2 = Conv2DInt(x2, w, b, {}, Padding::kSame);
  const AccTensor f12 = Conv2DInt(x12, w, b, {}, Padding::kSame);
  for (std::size_t i = 0; i < f1.data.size(); ++i) {
    const std::int32_t bias = b[i % 3];
    EXPECT_EQ(f1.data[i] + f2.data[i] - bias, f12.data[i]);
  }
}

TEST(DepthwiseConv2DIntTest, Examples) {
  const QTensor x = Act({1, 2, 2, 1}, {5, -3, 7, 0});
  EXPECT_EQ(DepthwiseConv2DInt(x, Weights({1, 1, 1, 1}, {1}, 1), std::vector<std::int32_t>{0},
                               {}, Padding::kValid)
                .data,
            x.data.size() == 4 ? (std::vector<std::int32_t>{5, -3, 7, 0})
                               : std::vector<std::int32_t>{});
  EXPECT_EQ(DepthwiseConv2DInt(Act({1, 1, 1, 2}, {1, 1}), Weights({1, 1, 1, 2}, {2, 3}, 2),
                               std::vector<std::int32_t>{0, 0}, {}, Padding::kValid)
                .data,
            (std::vector<std::int32_t>{2, 3}));
  EXPECT_EQ(DepthwiseConv2DInt(Act({1, 3, 3, 1}, std::vector<std::int8_t>(9, 5)),
                               Weights({1, 3, 3, 1}, std::vector<std::int8_t>(9, 1), 1),
                               std::vector<std::int32_t>{0}, {}, Padding::kValid)
                .data,
            (std::vector<std::int32_t>{45}));
}

TEST(AvgPoolIntTest, Examples) {
  EXPECT_EQ(AvgPoolInt(Act({1, 2, 2, 1}, {4, 4, 4, 4}), {2, 2}, 32).data,
            (std::vector<std::int8_t>{4}));
  EXPECT_EQ(AvgPoolInt(Act({1, 2, 2, 1}, {1, 2, 3, 4}), {2, 2}, 32).data,
            (std::vector<std::int8_t>{3}));
  const QTensor x = Act({1, 2, 3, 1}, {1, -2, 3, -4, 5, -128}, -9);
  const QTensor id = AvgPoolInt(x, {1, 1}, 8);
  EXPECT_EQ(id.data, x.data);
  EXPECT_EQ(id.zero_point, -9);
  EXPECT_THROW(AvgPoolInt(x, {2, 2}, 8), ShapeError);
}

LayerSpec DenseLayer(std::vector<std::int8_t> w, std::int64_t in, std::int64_t out, double m,
                     Activation act = Activation::kNone, QuantParams output = {1.0, 0}) {
  LayerSpec l;
  l.config.kind = LayerKind::kDense;
  l.config.out_channels = static_cast<int>(out);
  l.config.activation = act;
  l.weights = Weights({out, in}, std::move(w), out);
  l.bias.assign(out, 0);
  l.output = output;
  for (std::int64_t c = 0; c < out; ++c) l.rescalers.push_back(QuantizeRescaler(m, 8));
  return l;
}

TEST(LayerForwardIntTest, Examples) {
  EXPECT_EQ(LayerForwardInt(Act({1, 1}, {7}), DenseLayer({1}, 1, 1, 1.0), 8).data,
            (std::vector<std::int8_t>{7}));
  // acc = 999 * 1; 999 * 0.5 -> 500 saturates at 127.
  LayerSpec half = DenseLayer({1}, 1, 1, 0.5);
  half.bias = {999 - 7};
  EXPECT_EQ(LayerForwardInt(Act({1, 1}, {7}), half, 8).data, (std::vector<std::int8_t>{127}));
  // ReLU6 with S_y = 1: the rescaled 9 clamps at round(6 / 1) + 0 = 6.
  LayerSpec relu6 = DenseLayer({9}, 1, 1, 1.0, Activation::kRelu6);
  EXPECT_EQ(LayerForwardInt(Act({1, 1}, {1}), relu6, 8).data, (std::vector<std::int8_t>{6}));
  // ReLU floors at the output zero point.
  LayerSpec relu = DenseLayer({-9}, 1, 1, 1.0, Activation::kRelu, {0.5, -20});
  EXPECT_EQ(LayerForwardInt(Act({1, 1}, {1}), relu, 8).data, (std::vector<std::int8_t>{-20}));
  EXPECT_THROW(LayerForwardInt(Act({1, 1}, {1}), relu, 9), DomainError);
}

TEST(ActivationClampRangeTest, Bounds) {
  EXPECT_EQ(ActivationClampRange(Activation::kNone, {0.1, 3}).lo, -128);
  EXPECT_EQ(ActivationClampRange(Activation::kRelu, {0.1, 3}).lo, 3);
  EXPECT_EQ(ActivationClampRange(Activation::kRelu6, {0.1, -128}).hi, -68);
  EXPECT_EQ(ActivationClampRange(Activation::kRelu6, {0.01, -128}).hi, 127);
}

// Random small layers against the definition-level reference.
class KernelFuzzTest : public ::testing::TestWithParam<LayerKind> {};

TEST_P(KernelFuzzTest, MatchesNaiveReference) {
  std::mt19937_64 rng(100 + static_cast<int>(GetParam()));
  std::uniform_int_distribution<int> dim(1, 6), ch(1, 5), kern(1, 3), strd(1, 2), pad(0, 1),
      act(0, 2);
  int cases = 0;
  while (cases < 400) {
    Architecture arch;
    arch.name = "fuzz";
    LayerConfig c;
    c.kind = GetParam();
    c.activation = static_cast<Activation>(act(rng));
    if (c.kind == LayerKind::kDense) {
      arch.input_shape = {1, 1, dim(rng) * 3};
      c.out_channels = ch(rng);
    } else if (c.kind == LayerKind::kAvgPool) {
      c.activation = Activation::kNone;
      c.window = {kern(rng), kern(rng)};
      arch.input_shape = {c.window.h * dim(rng), c.window.w * dim(rng), ch(rng)};
    } else {
      arch.input_shape = {dim(rng) + 2, dim(rng) + 2, ch(rng)};
      c.kernel_h = kern(rng);
      c.kernel_w = kern(rng);
      c.stride = {strd(rng), strd(rng)};
      c.padding = pad(rng) ? Padding::kSame : Padding::kValid;
      c.out_channels = c.kind == LayerKind::kConv2D ? ch(rng) : 1;
    }
    if (c.kind == LayerKind::kDense) {
      LayerConfig flatten;
      flatten.kind = LayerKind::kFlatten;
      arch.layers = {flatten, c};
    } else {
      arch.layers = {c};
    }
    ModelGraph model;
    try {
      model = testing::RandomModel(arch, rng);
    } catch (const ShapeError& e) {
      // Only geometries whose window does not fit are skipped.
      ASSERT_NE(std::string(e.what()).find("window"), std::string::npos) << e.what();
      continue;
    }
    const int k = 2 + static_cast<int>(rng() % 31);
    const ModelGraph at_k = [&] {
      ModelGraph m = model;
      for (auto& l : m.layers)
        for (auto& r : l.rescalers) r = QuantizeRescaler(r.real_value, k);
      m.rescaler_bits = k;
      return m;
    }();
    QTensor x = testing::RandomInput(at_k, 1 + static_cast<int>(rng() % 3), rng);
    if (c.kind == LayerKind::kDense) x = FlattenInt(x);
    const LayerSpec& layer = at_k.layers.back();
    AccTensor acc;
    const QTensor y = LayerForwardInt(x, layer, k, &acc);
    const testing::OracleLayerOutput ref = testing::OracleLayer(layer, x);
    ASSERT_EQ(y.shape, ref.shape);
    ASSERT_EQ(y.data, ref.out);
    ASSERT_EQ(std::vector<std::int64_t>(acc.data.begin(), acc.data.end()), ref.acc);
    ++cases;
  }
}

INSTANTIATE_TEST_SUITE_P(AllKinds, KernelFuzzTest,
                         ::testing::Values(LayerKind::kDense, LayerKind::kConv2D,
                                           LayerKind::kDepthwiseConv2D, LayerKind::kAvgPool));

TEST(EngineTest, BatchPermutationEquivariance) {
  std::mt19937_64 rng(21);
  const ModelGraph model = testing::RandomModel(DeskCnnV1(), rng);
  const QTensor x = testing::RandomInput(model, 4, rng);
  const QTensor y = RunInteger(model, x);
  const std::int64_t per_in = NumElements(model.input_shape);
  const std::int64_t per_out = y.shape[1];
  QTensor reversed = x;
  for (int n = 0; n < 4; ++n) {
    std::copy_n(x.data.begin() + n * per_in, per_in, reversed.data.begin() + (3 - n) * per_in);
  }
  const QTensor yr = RunInteger(model, reversed);
  for (int n = 0; n < 4; ++n) {
    EXPECT_TRUE(std::equal(y.data.begin() + n * per_out, y.data.begin() + (n + 1) * per_out,
                           yr.data.begin() + (3 - n) * per_out));
  }
}

TEST(EngineTest, WholeModelMatchesNaiveReference) {
  std::mt19937_64 rng(22);
  for (int i = 0; i < 20; ++i) {
    const ModelGraph model = testing::RandomModel(testing::RandomDeskVariant(rng), rng);
    const QTensor x = testing::RandomInput(model, 2, rng);
    EXPECT_EQ(RunInteger(model, x).data, testing::OracleModel(model, x));
  }
}

TEST(EngineTest, ArgmaxTiesGoToLowestIndex) {
  QTensor logits{{2, 4}, {5, 9, 9, 1, -128, -128, -128, -128}, {1.0}, 0};
  EXPECT_EQ(ArgmaxRows(logits), (std::vector<int>{1, 0}));
}

}  // namespace
}  // namespace rescale
