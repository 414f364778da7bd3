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
#include "rescale_lab/ptq.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "rescale_lab/errors.h"
#include "rescale_lab/nn.h"

namespace rescale {

void CalibrationStats::Observe(std::size_t tensor, std::span<const double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw CalibrationError("non-finite activation in tensor " + std::to_string(tensor));
    }
    min[tensor] = std::min(min[tensor], v);
    max[tensor] = std::max(max[tensor], v);
  }
}

CalibrationStats CollectCalibrationStats(const FloatModel& model,
                                         std::span<const DTensor> batches) {
  if (batches.empty()) throw CalibrationError("calibration needs at least one batch");
  ValidateFloatModel(model);
  const std::size_t tensors = model.arch.layers.size() + 1;
  CalibrationStats stats;
  stats.min.assign(tensors, std::numeric_limits<double>::infinity());
  stats.max.assign(tensors, -std::numeric_limits<double>::infinity());
  for (const DTensor& batch : batches) {
    nn::FloatCache cache;
    const DTensor out = nn::FloatForward(model, batch, &cache);
    for (std::size_t i = 0; i < cache.inputs.size(); ++i) stats.Observe(i, cache.inputs[i].data);
    stats.Observe(tensors - 1, out.data);
  }
  return stats;
}

QuantParams AffineParamsFromRange(double lo, double hi) {
  if (!std::isfinite(lo) || !std::isfinite(hi) || lo > hi) {
    throw CalibrationError("invalid calibration range [" + std::to_string(lo) + ", " +
                           std::to_string(hi) + "]");
  }
  lo = std::min(lo, 0.0);
  hi = std::max(hi, 0.0);
  const double scale = (hi - lo) / 255.0;
  if (!(scale >= kMinActivationScale)) return {kMinActivationScale, 0};
  const double zp = std::clamp(RoundHalfUp(-128.0 - lo / scale), -128.0, 127.0);
  return {scale, static_cast<std::int32_t>(zp)};
}

QTensor QuantizeWeights(const LayerConfig& config, const Shape& weight_shape,
                        std::span<const double> weights) {
  const bool channel_last = config.kind == LayerKind::kDepthwiseConv2D;
  const std::int64_t channels = channel_last ? weight_shape.back() : weight_shape.front();
  const std::int64_t per_channel = NumElements(weight_shape) / channels;
  if (static_cast<std::int64_t>(weights.size()) != NumElements(weight_shape)) {
    throw ShapeError("weight count does not match " + ShapeToString(weight_shape));
  }
  auto index = [&](std::int64_t c, std::int64_t j) {
    return channel_last ? j * channels + c : c * per_channel + j;
  };
  QTensor q;
  q.shape = weight_shape;
  q.data.resize(weights.size());
  q.scales.resize(channels);
  for (std::int64_t c = 0; c < channels; ++c) {
    double peak = 0.0;
    for (std::int64_t j = 0; j < per_channel; ++j) {
      peak = std::max(peak, std::fabs(weights[index(c, j)]));
    }
    const double scale = std::max(peak / 127.0, kMinWeightScale);
    q.scales[c] = scale;
    for (std::int64_t j = 0; j < per_channel; ++j) {
      const double v = std::clamp(RoundHalfUp(weights[index(c, j)] / scale), -127.0, 127.0);
      q.data[index(c, j)] = static_cast<std::int8_t>(v);
    }
  }
  return q;
}

ModelGraph QuantizeFloatModel(const FloatModel& model, const CalibrationStats& stats) {
  ValidateFloatModel(model);
  const std::size_t layers = model.arch.layers.size();
  if (stats.min.size() != layers + 1 || stats.max.size() != layers + 1) {
    throw CalibrationError("calibration stats do not match the model");
  }
  const std::vector<Shape> shapes = ArchitectureShapes(model.arch);
  ModelGraph graph;
  graph.name = model.arch.name;
  graph.input_shape = model.arch.input_shape;
  graph.input = AffineParamsFromRange(stats.min[0], stats.max[0]);
  graph.rescaler_bits = kMaxRescalerBits;

  QuantParams in = graph.input;
  for (std::size_t i = 0; i < layers; ++i) {
    const LayerConfig& config = model.arch.layers[i];
    LayerSpec layer;
    layer.config = config;
    switch (config.kind) {
      case LayerKind::kFlatten:
        layer.output = in;
        break;
      case LayerKind::kAvgPool: {
        layer.output = in;
        const double area = static_cast<double>(config.window.h) * config.window.w;
        layer.rescalers.push_back(QuantizeRescaler(1.0 / area, kMaxRescalerBits));
        break;
      }
      default: {
        layer.output = AffineParamsFromRange(stats.min[i + 1], stats.max[i + 1]);
        layer.weights = QuantizeWeights(config, WeightShape(config, shapes[i]),
                                        model.params[i].weights);
        const std::vector<double>& bias = model.params[i].bias;
        for (std::size_t c = 0; c < bias.size(); ++c) {
          const double sw = layer.weights.scales[c];
          const double q = RoundHalfUp(bias[c] / (in.scale * sw));
          if (!(std::fabs(q) <= std::numeric_limits<std::int32_t>::max())) {
            throw CalibrationError("layer " + std::to_string(i) + " channel " +
                                   std::to_string(c) + ": bias does not fit int32");
          }
          layer.bias.push_back(static_cast<std::int32_t>(q));
          const double m = RealRescaleFactor(in.scale, sw, layer.output.scale);
          if (!(m > 0.0 && m <= 1.0)) {
            throw CalibrationError("layer " + std::to_string(i) + " channel " +
                                   std::to_string(c) + ": rescale factor " +
                                   std::to_string(m) + " outside (0, 1]");
          }
          try {
            layer.rescalers.push_back(QuantizeRescaler(m, kMaxRescalerBits));
          } catch (const RescalerUnderflow& e) {
            throw RescalerUnderflow("layer " + std::to_string(i) + " channel " +
                                    std::to_string(c) + ": " + e.what());
          }
        }
        break;
      }
    }
    in = layer.output;
    graph.layers.push_back(std::move(layer));
  }
  ValidateModel(graph);
  return graph;
}

ModelGraph QuantizeFloatModel(const FloatModel& model, std::span<const DTensor> batches) {
  return QuantizeFloatModel(model, CollectCalibrationStats(model, batches));
}

}  // namespace rescale
