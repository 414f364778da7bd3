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
#include "rescale_lab/kernels.h"

#include <algorithm>
#include <limits>
#include <string>

#include "rescale_lab/errors.h"

namespace rescale {
namespace {

constexpr std::int64_t kMaxMacTerms = std::int64_t{1} << 16;

std::int32_t CheckedInt32(std::int64_t value, const char* what) {
  if (value < std::numeric_limits<std::int32_t>::min() ||
      value > std::numeric_limits<std::int32_t>::max()) {
    throw OverflowError(std::string(what) + " overflows int32: " +
                        std::to_string(value));
  }
  return static_cast<std::int32_t>(value);
}

void CheckRank(const Shape& shape, std::size_t rank, const char* what) {
  if (shape.size() != rank) {
    throw ShapeError(std::string(what) + " must have rank " + std::to_string(rank) +
                     ", got " + ShapeToString(shape));
  }
}

void CheckData(const QTensor& t, const char* what) {
  if (static_cast<std::int64_t>(t.data.size()) != NumElements(t.shape)) {
    throw ShapeError(std::string(what) + " data length does not match its shape");
  }
}

void CheckMacs(std::int64_t macs) {
  if (macs > kMaxMacTerms) {
    throw ShapeError("more than 2^16 MAC terms per accumulator");
  }
}

}  // namespace

std::vector<std::int32_t> ComputeEffectiveBias(std::span<const std::int32_t> bias,
                                               const QTensor& weights,
                                               std::int32_t input_zero_point,
                                               WeightLayout layout) {
  CheckData(weights, "weights");
  if (weights.shape.empty()) throw ShapeError("weights have no dimensions");
  const std::int64_t total = NumElements(weights.shape);
  const std::int64_t channels = layout == WeightLayout::kOutputMajor
                                    ? weights.shape.front()
                                    : weights.shape.back();
  if (channels != static_cast<std::int64_t>(bias.size())) {
    throw ShapeError("bias has " + std::to_string(bias.size()) +
                     " channels, weights have " + std::to_string(channels));
  }
  std::vector<std::int64_t> sums(channels, 0);
  if (channels > 0) {
    const std::int64_t per_channel = total / channels;
    for (std::int64_t i = 0; i < total; ++i) {
      const std::int64_t c =
          layout == WeightLayout::kOutputMajor ? i / per_channel : i % channels;
      sums[c] += weights.data[i];
    }
  }
  std::vector<std::int32_t> out(channels);
  for (std::int64_t c = 0; c < channels; ++c) {
    out[c] = CheckedInt32(bias[c] - std::int64_t{input_zero_point} * sums[c],
                          "effective bias");
  }
  return out;
}

AccTensor DenseInt(const QTensor& x, const QTensor& w,
                   std::span<const std::int32_t> b_eff) {
  CheckRank(x.shape, 2, "dense input");
  CheckRank(w.shape, 2, "dense weights");
  CheckData(x, "dense input");
  CheckData(w, "dense weights");
  const std::int64_t batch = x.shape[0], in = x.shape[1], out = w.shape[0];
  if (w.shape[1] != in) throw ShapeError("dense inner dimensions differ");
  if (static_cast<std::int64_t>(b_eff.size()) != out) {
    throw ShapeError("dense bias length mismatch");
  }
  CheckMacs(in);

  AccTensor acc{{batch, out}, std::vector<std::int32_t>(batch * out)};
  for (std::int64_t n = 0; n < batch; ++n) {
    const std::int8_t* xr = x.data.data() + n * in;
    for (std::int64_t o = 0; o < out; ++o) {
      const std::int8_t* wr = w.data.data() + o * in;
      std::int64_t sum = b_eff[o];
      for (std::int64_t i = 0; i < in; ++i) sum += std::int32_t{xr[i]} * wr[i];
      acc.data[n * out + o] = CheckedInt32(sum, "dense accumulator");
    }
  }
  return acc;
}

AccTensor Conv2DInt(const QTensor& x, const QTensor& w,
                    std::span<const std::int32_t> b_eff, Stride stride,
                    Padding padding) {
  CheckRank(x.shape, 4, "conv2d input");
  CheckRank(w.shape, 4, "conv2d weights");
  CheckData(x, "conv2d input");
  CheckData(w, "conv2d weights");
  const std::int64_t batch = x.shape[0], in_h = x.shape[1], in_w = x.shape[2],
                     in_c = x.shape[3];
  const std::int64_t out_c = w.shape[0];
  const int k_h = static_cast<int>(w.shape[1]), k_w = static_cast<int>(w.shape[2]);
  if (w.shape[3] != in_c) throw ShapeError("conv2d channel counts differ");
  if (static_cast<std::int64_t>(b_eff.size()) != out_c) {
    throw ShapeError("conv2d bias length mismatch");
  }
  CheckMacs(std::int64_t{k_h} * k_w * in_c);
  const SpatialPlan plan = PlanWindow(in_h, in_w, k_h, k_w, stride, padding);
  const std::int32_t pad_value = x.zero_point;

  AccTensor acc{{batch, plan.out_h, plan.out_w, out_c},
                std::vector<std::int32_t>(batch * plan.out_h * plan.out_w * out_c)};
  std::int32_t* dst = acc.data.data();
  for (std::int64_t n = 0; n < batch; ++n) {
    const std::int8_t* image = x.data.data() + n * in_h * in_w * in_c;
    for (int oy = 0; oy < plan.out_h; ++oy) {
      for (int ox = 0; ox < plan.out_w; ++ox) {
        const std::int64_t y0 = std::int64_t{oy} * stride.h - plan.pad_top;
        const std::int64_t x0 = std::int64_t{ox} * stride.w - plan.pad_left;
        for (std::int64_t o = 0; o < out_c; ++o) {
          const std::int8_t* filter = w.data.data() + o * k_h * k_w * in_c;
          std::int64_t sum = b_eff[o];
          for (int ky = 0; ky < k_h; ++ky) {
            const std::int64_t iy = y0 + ky;
            const bool row_in = iy >= 0 && iy < in_h;
            for (int kx = 0; kx < k_w; ++kx) {
              const std::int64_t ix = x0 + kx;
              const std::int8_t* tap = filter + (ky * k_w + kx) * in_c;
              if (row_in && ix >= 0 && ix < in_w) {
                const std::int8_t* px = image + (iy * in_w + ix) * in_c;
                for (std::int64_t c = 0; c < in_c; ++c) sum += std::int32_t{px[c]} * tap[c];
              } else {
                for (std::int64_t c = 0; c < in_c; ++c) sum += pad_value * tap[c];
              }
            }
          }
          *dst++ = CheckedInt32(sum, "conv2d accumulator");
        }
      }
    }
  }
  return acc;
}

AccTensor DepthwiseConv2DInt(const QTensor& x, const QTensor& w,
                             std::span<const std::int32_t> b_eff, Stride stride,
                             Padding padding) {
  CheckRank(x.shape, 4, "depthwise input");
  CheckRank(w.shape, 4, "depthwise weights");
  CheckData(x, "depthwise input");
  CheckData(w, "depthwise weights");
  const std::int64_t batch = x.shape[0], in_h = x.shape[1], in_w = x.shape[2],
                     channels = x.shape[3];
  const int k_h = static_cast<int>(w.shape[1]), k_w = static_cast<int>(w.shape[2]);
  if (w.shape[0] != 1 || w.shape[3] != channels) {
    throw ShapeError("depthwise weights must be [1, KH, KW, C] matching the input");
  }
  if (static_cast<std::int64_t>(b_eff.size()) != channels) {
    throw ShapeError("depthwise bias length mismatch");
  }
  CheckMacs(std::int64_t{k_h} * k_w);
  const SpatialPlan plan = PlanWindow(in_h, in_w, k_h, k_w, stride, padding);
  const std::int32_t pad_value = x.zero_point;

  AccTensor acc{{batch, plan.out_h, plan.out_w, channels},
                std::vector<std::int32_t>(batch * plan.out_h * plan.out_w * channels)};
  std::vector<std::int64_t> sums(channels);
  std::int32_t* dst = acc.data.data();
  for (std::int64_t n = 0; n < batch; ++n) {
    const std::int8_t* image = x.data.data() + n * in_h * in_w * channels;
    for (int oy = 0; oy < plan.out_h; ++oy) {
      for (int ox = 0; ox < plan.out_w; ++ox) {
        for (std::int64_t c = 0; c < channels; ++c) sums[c] = b_eff[c];
        for (int ky = 0; ky < k_h; ++ky) {
          const std::int64_t iy = std::int64_t{oy} * stride.h - plan.pad_top + ky;
          for (int kx = 0; kx < k_w; ++kx) {
            const std::int64_t ix = std::int64_t{ox} * stride.w - plan.pad_left + kx;
            const std::int8_t* tap = w.data.data() + (ky * k_w + kx) * channels;
            if (iy >= 0 && iy < in_h && ix >= 0 && ix < in_w) {
              const std::int8_t* px = image + (iy * in_w + ix) * channels;
              for (std::int64_t c = 0; c < channels; ++c) sums[c] += std::int32_t{px[c]} * tap[c];
            } else {
              for (std::int64_t c = 0; c < channels; ++c) sums[c] += pad_value * tap[c];
            }
          }
        }
        for (std::int64_t c = 0; c < channels; ++c) {
          *dst++ = CheckedInt32(sums[c], "depthwise accumulator");
        }
      }
    }
  }
  return acc;
}

namespace {

AccTensor WindowSums(const QTensor& x, Window window) {
  CheckRank(x.shape, 4, "avgpool input");
  CheckData(x, "avgpool input");
  const std::int64_t batch = x.shape[0], in_h = x.shape[1], in_w = x.shape[2],
                     channels = x.shape[3];
  if (window.h < 1 || window.w < 1 || in_h % window.h != 0 || in_w % window.w != 0) {
    throw ShapeError("avgpool window must divide the spatial dimensions");
  }
  const std::int64_t out_h = in_h / window.h, out_w = in_w / window.w;
  AccTensor sums{{batch, out_h, out_w, channels},
                 std::vector<std::int32_t>(batch * out_h * out_w * channels, 0)};
  for (std::int64_t n = 0; n < batch; ++n) {
    for (std::int64_t iy = 0; iy < in_h; ++iy) {
      for (std::int64_t ix = 0; ix < in_w; ++ix) {
        const std::int8_t* px = x.data.data() + ((n * in_h + iy) * in_w + ix) * channels;
        std::int32_t* dst =
            sums.data.data() + ((n * out_h + iy / window.h) * out_w + ix / window.w) * channels;
        for (std::int64_t c = 0; c < channels; ++c) dst[c] += px[c];
      }
    }
  }
  return sums;
}

QTensor RescaleSums(const AccTensor& sums, const QTensor& x,
                    const DyadicRescaler& divisor) {
  QTensor out{sums.shape, std::vector<std::int8_t>(sums.data.size()), x.scales,
              x.zero_point};
  for (std::size_t i = 0; i < sums.data.size(); ++i) {
    out.data[i] = SaturateInt8(MultiplyByQuantizedMultiplier(sums.data[i], divisor));
  }
  return out;
}

}  // namespace

QTensor AvgPoolInt(const QTensor& x, Window window, const DyadicRescaler& divisor) {
  return RescaleSums(WindowSums(x, window), x, divisor);
}

QTensor AvgPoolInt(const QTensor& x, Window window, int bits) {
  return AvgPoolInt(x, window, QuantizeRescaler(1.0 / (double(window.h) * window.w), bits));
}

QTensor FlattenInt(const QTensor& x) {
  if (x.shape.empty()) throw ShapeError("cannot flatten a scalar");
  QTensor out = x;
  out.shape = {x.shape[0], NumElements(x.shape) / std::max<std::int64_t>(x.shape[0], 1)};
  return out;
}

ClampRange ActivationClampRange(Activation activation, const QuantParams& output) {
  ClampRange range;
  if (activation == Activation::kNone) return range;
  range.lo = static_cast<std::int8_t>(std::clamp(output.zero_point, -128, 127));
  if (activation == Activation::kRelu6) {
    const double hi = RoundHalfUp(6.0 / output.scale) + output.zero_point;
    range.hi = static_cast<std::int8_t>(std::clamp(hi, -128.0, 127.0));
  }
  return range;
}

QTensor RequantizeChannels(const AccTensor& acc,
                           std::span<const DyadicRescaler> rescalers,
                           const QuantParams& output, ClampRange range) {
  if (acc.shape.empty() ||
      acc.shape.back() != static_cast<std::int64_t>(rescalers.size())) {
    throw ShapeError("one rescaler per output channel required");
  }
  const std::size_t channels = rescalers.size();
  QTensor out{acc.shape, std::vector<std::int8_t>(acc.data.size()), {output.scale},
              output.zero_point};
  for (std::size_t i = 0; i < acc.data.size(); ++i) {
    out.data[i] = Requantize(acc.data[i], rescalers[i % channels], output.zero_point,
                             range.lo, range.hi);
  }
  return out;
}

QTensor LayerForwardInt(const QTensor& x, const LayerSpec& layer, int bits,
                        AccTensor* accumulators) {
  for (const DyadicRescaler& r : layer.rescalers) {
    if (r.bits != bits) {
      throw DomainError("layer rescalers are materialized at k=" +
                        std::to_string(r.bits) + ", not k=" + std::to_string(bits));
    }
  }
  const LayerConfig& config = layer.config;
  switch (config.kind) {
    case LayerKind::kFlatten:
      return FlattenInt(x);
    case LayerKind::kAvgPool: {
      if (layer.rescalers.size() != 1) throw ShapeError("avgpool needs one rescaler");
      AccTensor sums = WindowSums(x, config.window);
      QTensor out = RescaleSums(sums, x, layer.rescalers[0]);
      if (accumulators) *accumulators = std::move(sums);
      return out;
    }
    default:
      break;
  }

  const WeightLayout layout = config.kind == LayerKind::kDepthwiseConv2D
                                  ? WeightLayout::kChannelLast
                                  : WeightLayout::kOutputMajor;
  const std::vector<std::int32_t> b_eff =
      ComputeEffectiveBias(layer.bias, layer.weights, x.zero_point, layout);
  AccTensor acc;
  if (config.kind == LayerKind::kDense) {
    acc = DenseInt(x, layer.weights, b_eff);
  } else if (config.kind == LayerKind::kConv2D) {
    acc = Conv2DInt(x, layer.weights, b_eff, config.stride, config.padding);
  } else {
    acc = DepthwiseConv2DInt(x, layer.weights, b_eff, config.stride, config.padding);
  }
  QTensor out = RequantizeChannels(acc, layer.rescalers, layer.output,
                                   ActivationClampRange(config.activation, layer.output));
  if (accumulators) *accumulators = std::move(acc);
  return out;
}

}  // namespace rescale
