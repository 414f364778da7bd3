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
// Integer-only layer kernels. Every kernel accumulates exactly (64-bit
// partial sums, checked into int32) and leaves requantization to
// RequantizeChannels.

#ifndef RESCALE_LAB_KERNELS_H_
#define RESCALE_LAB_KERNELS_H_

#include <cstdint>
#include <span>
#include <vector>

#include "rescale_lab/model.h"
#include "rescale_lab/qcore.h"
#include "rescale_lab/tensor.h"

namespace rescale {

enum class WeightLayout {
  kOutputMajor,  // dense [O, I] and conv2d [O, KH, KW, C]
  kChannelLast,  // depthwise [1, KH, KW, C]
};

// b_eff[c] = b_q[c] - z_in * sum_i w_q[c, i]. Throws OverflowError if a value
// leaves int32 and ShapeError on a channel count mismatch.
std::vector<std::int32_t> ComputeEffectiveBias(
    std::span<const std::int32_t> bias, const QTensor& weights,
    std::int32_t input_zero_point,
    WeightLayout layout = WeightLayout::kOutputMajor);

// x [N, I], w [O, I] -> acc [N, O].
AccTensor DenseInt(const QTensor& x, const QTensor& w,
                   std::span<const std::int32_t> b_eff);

// x [N, H, W, C], w [O, KH, KW, C] -> acc [N, OH, OW, O]. SAME padding taps
// read the input zero point, so they vanish once b_eff is applied.
AccTensor Conv2DInt(const QTensor& x, const QTensor& w,
                    std::span<const std::int32_t> b_eff, Stride stride,
                    Padding padding);

// x [N, H, W, C], w [1, KH, KW, C] -> acc [N, OH, OW, C].
AccTensor DepthwiseConv2DInt(const QTensor& x, const QTensor& w,
                             std::span<const std::int32_t> b_eff, Stride stride,
                             Padding padding);

// Window sums divided through MultiplyByQuantizedMultiplier; quantization
// parameters pass through unchanged.
QTensor AvgPoolInt(const QTensor& x, Window window, const DyadicRescaler& divisor);
QTensor AvgPoolInt(const QTensor& x, Window window, int bits);

QTensor FlattenInt(const QTensor& x);

struct ClampRange {
  std::int8_t lo = -128;
  std::int8_t hi = 127;
};

// Saturation bounds realizing the activation: ReLU clamps at Z_y, ReLU6 also
// at clamp(round(6 / S_y) + Z_y, -128, 127).
ClampRange ActivationClampRange(Activation activation, const QuantParams& output);

// Applies Requantize per output channel (last dimension of acc).
QTensor RequantizeChannels(const AccTensor& acc,
                           std::span<const DyadicRescaler> rescalers,
                           const QuantParams& output, ClampRange range);

// kernel -> per-channel requantize for one layer. The layer's rescalers must
// already be materialized at `bits` (DomainError otherwise). Writes the raw
// accumulators to `accumulators` when given (weighted layers and avgpool).
QTensor LayerForwardInt(const QTensor& x, const LayerSpec& layer, int bits,
                        AccTensor* accumulators = nullptr);

}  // namespace rescale

#endif  // RESCALE_LAB_KERNELS_H_
