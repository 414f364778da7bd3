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
#include "rescale_lab/model.h"

#include <cmath>
#include <cstdlib>
#include <string>

#include "rescale_lab/errors.h"

namespace rescale {
namespace {

std::string LayerTag(std::size_t index) {
  return "layer " + std::to_string(index);
}

void RequireRank(const Shape& shape, std::size_t rank, std::size_t index) {
  if (shape.size() != rank) {
    throw ShapeError(LayerTag(index) + ": expected rank " + std::to_string(rank) +
                     " input, got " + ShapeToString(shape));
  }
}

void CheckConfig(const LayerConfig& config, std::size_t index) {
  if (config.stride.h < 1 || config.stride.w < 1 || config.kernel_h < 1 ||
      config.kernel_w < 1 || config.window.h < 1 || config.window.w < 1) {
    throw ShapeError(LayerTag(index) + ": non-positive kernel/stride/window");
  }
  if ((config.kind == LayerKind::kDense || config.kind == LayerKind::kConv2D) &&
      config.out_channels < 1) {
    throw ShapeError(LayerTag(index) + ": out_channels must be positive");
  }
  if ((config.kind == LayerKind::kAvgPool || config.kind == LayerKind::kFlatten) &&
      config.activation != Activation::kNone) {
    throw ShapeError(LayerTag(index) + ": pooling/flatten take no activation");
  }
}

}  // namespace

const char* LayerKindName(LayerKind kind) {
  switch (kind) {
    case LayerKind::kDense: return "dense";
    case LayerKind::kConv2D: return "conv2d";
    case LayerKind::kDepthwiseConv2D: return "depthwise";
    case LayerKind::kAvgPool: return "avgpool";
    case LayerKind::kFlatten: return "flatten";
  }
  return "unknown";
}

const char* ActivationName(Activation activation) {
  switch (activation) {
    case Activation::kNone: return "none";
    case Activation::kRelu: return "relu";
    case Activation::kRelu6: return "relu6";
  }
  return "unknown";
}

Architecture DeskCnnV1() {
  Architecture arch;
  arch.name = "desk-cnn-v1";
  arch.input_shape = {28, 28, 1};

  LayerConfig conv;
  conv.kind = LayerKind::kConv2D;
  conv.activation = Activation::kRelu6;
  conv.out_channels = 8;
  conv.kernel_h = conv.kernel_w = 3;
  conv.padding = Padding::kSame;

  LayerConfig pool;
  pool.kind = LayerKind::kAvgPool;
  pool.window = {2, 2};

  LayerConfig depthwise;
  depthwise.kind = LayerKind::kDepthwiseConv2D;
  depthwise.activation = Activation::kRelu6;
  depthwise.kernel_h = depthwise.kernel_w = 3;
  depthwise.padding = Padding::kSame;

  LayerConfig pointwise;
  pointwise.kind = LayerKind::kConv2D;
  pointwise.activation = Activation::kRelu6;
  pointwise.out_channels = 16;

  LayerConfig flatten;
  flatten.kind = LayerKind::kFlatten;

  LayerConfig dense;
  dense.kind = LayerKind::kDense;
  dense.out_channels = 10;

  arch.layers = {conv, pool, depthwise, pointwise, pool, flatten, dense};
  return arch;
}

Shape LayerOutputShape(const LayerConfig& config, const Shape& in) {
  switch (config.kind) {
    case LayerKind::kDense:
      if (in.size() != 1) throw ShapeError("dense expects a flat input, got " + ShapeToString(in));
      return {config.out_channels};
    case LayerKind::kConv2D:
    case LayerKind::kDepthwiseConv2D: {
      if (in.size() != 3) throw ShapeError("convolution expects HWC input, got " + ShapeToString(in));
      const SpatialPlan plan = PlanWindow(in[0], in[1], config.kernel_h,
                                          config.kernel_w, config.stride, config.padding);
      const std::int64_t channels =
          config.kind == LayerKind::kConv2D ? config.out_channels : in[2];
      return {plan.out_h, plan.out_w, channels};
    }
    case LayerKind::kAvgPool:
      if (in.size() != 3) throw ShapeError("avgpool expects HWC input, got " + ShapeToString(in));
      if (in[0] % config.window.h != 0 || in[1] % config.window.w != 0) {
        throw ShapeError("avgpool window must divide " + ShapeToString(in));
      }
      return {in[0] / config.window.h, in[1] / config.window.w, in[2]};
    case LayerKind::kFlatten:
      return {NumElements(in)};
  }
  throw ShapeError("unknown layer kind");
}

Shape WeightShape(const LayerConfig& config, const Shape& in) {
  switch (config.kind) {
    case LayerKind::kDense:
      return {config.out_channels, in.at(0)};
    case LayerKind::kConv2D:
      return {config.out_channels, config.kernel_h, config.kernel_w, in.at(2)};
    case LayerKind::kDepthwiseConv2D:
      return {1, config.kernel_h, config.kernel_w, in.at(2)};
    default:
      return {};
  }
}

std::int64_t OutputChannels(const LayerConfig& config, const Shape& in) {
  if (config.kind == LayerKind::kDepthwiseConv2D) return in.at(2);
  return config.out_channels;
}

std::int64_t MacCount(const LayerConfig& config, const Shape& in) {
  switch (config.kind) {
    case LayerKind::kDense: return in.at(0);
    case LayerKind::kConv2D: return std::int64_t{config.kernel_h} * config.kernel_w * in.at(2);
    case LayerKind::kDepthwiseConv2D: return std::int64_t{config.kernel_h} * config.kernel_w;
    case LayerKind::kAvgPool: return std::int64_t{config.window.h} * config.window.w;
    case LayerKind::kFlatten: return 0;
  }
  return 0;
}

QuantParams LayerInputParams(const ModelGraph& model, std::size_t index) {
  return index == 0 ? model.input : model.layers.at(index - 1).output;
}

std::vector<Shape> ArchitectureShapes(const Architecture& arch) {
  std::vector<Shape> shapes{arch.input_shape};
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    CheckConfig(arch.layers[i], i);
    shapes.push_back(LayerOutputShape(arch.layers[i], shapes.back()));
  }
  return shapes;
}

Architecture ModelArchitecture(const ModelGraph& model) {
  Architecture arch{model.name, model.input_shape, {}};
  for (const LayerSpec& layer : model.layers) arch.layers.push_back(layer.config);
  return arch;
}

std::vector<Shape> ModelShapes(const ModelGraph& model) {
  return ArchitectureShapes(ModelArchitecture(model));
}

double RealRescaleFactor(double input_scale, double weight_scale,
                         double output_scale) {
  return input_scale * weight_scale / output_scale;
}

void ValidateModel(const ModelGraph& model) {
  if (model.input_shape.size() != 3) {
    throw ShapeError("model input must be HWC, got " + ShapeToString(model.input_shape));
  }
  for (std::int64_t d : model.input_shape) {
    if (d < 1) throw ShapeError("model input has an empty dimension");
  }
  ValidateQuantParams(model.input);
  if (model.rescaler_bits < kMinRescalerBits || model.rescaler_bits > kMaxRescalerBits) {
    throw DomainError("rescaler_bits outside [2, 32]");
  }
  if (model.layers.empty()) throw ShapeError("model has no layers");

  const std::vector<Shape> shapes = ModelShapes(model);
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const LayerSpec& layer = model.layers[i];
    const Shape& in = shapes[i];
    const QuantParams in_params = LayerInputParams(model, i);
    const std::string tag = LayerTag(i);
    ValidateQuantParams(layer.output);

    for (const DyadicRescaler& r : layer.rescalers) {
      ValidateRescaler(r);
      if (r.bits != model.rescaler_bits) {
        throw DomainError(tag + ": rescaler width " + std::to_string(r.bits) +
                          " differs from model width " +
                          std::to_string(model.rescaler_bits));
      }
    }

    if (!layer.config.has_weights()) {
      if (!layer.weights.data.empty() || !layer.weights.shape.empty() ||
          !layer.bias.empty()) {
        throw ShapeError(tag + ": unweighted layer carries parameters");
      }
      if (!(layer.output == in_params)) {
        throw DomainError(tag + ": pooling/flatten must keep input quantization");
      }
      if (layer.config.kind == LayerKind::kAvgPool) {
        if (layer.rescalers.size() != 1) {
          throw ShapeError(tag + ": avgpool needs exactly one rescaler");
        }
        const double area = double(layer.config.window.h) * layer.config.window.w;
        if (layer.rescalers[0].real_value != 1.0 / area) {
          throw DomainError(tag + ": avgpool rescaler must encode 1/area");
        }
      } else if (!layer.rescalers.empty()) {
        throw ShapeError(tag + ": flatten carries rescalers");
      }
      continue;
    }

    RequireRank(in, layer.config.kind == LayerKind::kDense ? 1 : 3, i);
    const Shape wshape = WeightShape(layer.config, in);
    const std::int64_t channels = OutputChannels(layer.config, in);
    if (layer.weights.shape != wshape) {
      throw ShapeError(tag + ": weight shape " + ShapeToString(layer.weights.shape) +
                       " != expected " + ShapeToString(wshape));
    }
    if (static_cast<std::int64_t>(layer.weights.data.size()) != NumElements(wshape)) {
      throw ShapeError(tag + ": weight data length mismatch");
    }
    if (layer.weights.zero_point != 0) {
      throw DomainError(tag + ": weights must be symmetric");
    }
    if (static_cast<std::int64_t>(layer.weights.scales.size()) != channels ||
        static_cast<std::int64_t>(layer.bias.size()) != channels ||
        static_cast<std::int64_t>(layer.rescalers.size()) != channels) {
      throw ShapeError(tag + ": per-channel scales/bias/rescalers must have " +
                       std::to_string(channels) + " entries");
    }

    const std::int64_t macs = MacCount(layer.config, in);
    if (macs > (std::int64_t{1} << 16)) {
      throw OverflowError(tag + ": more than 2^16 MAC terms per accumulator");
    }
    const std::int64_t per_channel = NumElements(wshape) / channels;
    for (std::int64_t c = 0; c < channels; ++c) {
      const double sw = layer.weights.scales[c];
      ValidateQuantParams({sw, 0}, /*symmetric=*/true);
      const double expected = RealRescaleFactor(in_params.scale, sw, layer.output.scale);
      if (layer.rescalers[c].real_value != expected) {
        throw DomainError(tag + " channel " + std::to_string(c) +
                          ": rescale factor inconsistent with stored scales");
      }
      // |acc| <= sum |w| * 255 + |b| must stay inside int32.
      std::int64_t envelope = std::llabs(static_cast<long long>(layer.bias[c]));
      for (std::int64_t j = 0; j < per_channel; ++j) {
        const std::int64_t flat = layer.config.kind == LayerKind::kDepthwiseConv2D
                                      ? j * channels + c
                                      : c * per_channel + j;
        envelope += 255 * std::abs(static_cast<int>(layer.weights.data[flat]));
      }
      if (envelope > std::int64_t{2147483647}) {
        throw OverflowError(tag + " channel " + std::to_string(c) +
                            ": accumulator envelope exceeds int32");
      }
    }
  }
}

void ValidateFloatModel(const FloatModel& model) {
  const std::vector<Shape> shapes = ArchitectureShapes(model.arch);
  if (model.params.size() != model.arch.layers.size()) {
    throw ShapeError("float model parameter count does not match its layers");
  }
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    const LayerConfig& config = model.arch.layers[i];
    const FloatParams& p = model.params[i];
    std::size_t want_w = 0, want_b = 0;
    if (config.has_weights()) {
      want_w = static_cast<std::size_t>(NumElements(WeightShape(config, shapes[i])));
      want_b = static_cast<std::size_t>(OutputChannels(config, shapes[i]));
    }
    if (p.weights.size() != want_w || p.bias.size() != want_b) {
      throw ShapeError(LayerTag(i) + ": float parameter size mismatch");
    }
    for (double v : p.weights) {
      if (!std::isfinite(v)) throw DomainError(LayerTag(i) + ": non-finite weight");
    }
    for (double v : p.bias) {
      if (!std::isfinite(v)) throw DomainError(LayerTag(i) + ": non-finite bias");
    }
  }
}

}  // namespace rescale
