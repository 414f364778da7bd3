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
// Layer graph of a quantized model and of its floating-point twin.

#ifndef RESCALE_LAB_MODEL_H_
#define RESCALE_LAB_MODEL_H_

#include <cstdint>
#include <string>
#include <vector>

#include "rescale_lab/qcore.h"
#include "rescale_lab/tensor.h"

namespace rescale {

enum class LayerKind { kDense, kConv2D, kDepthwiseConv2D, kAvgPool, kFlatten };
enum class Activation { kNone, kRelu, kRelu6 };

const char* LayerKindName(LayerKind kind);
const char* ActivationName(Activation activation);

// Geometry shared by the float, quantized and shadow models.
//   dense     weights [out_channels, in_features]
//   conv2d    weights [out_channels, kernel_h, kernel_w, in_channels]
//   depthwise weights [1, kernel_h, kernel_w, channels]
struct LayerConfig {
  LayerKind kind = LayerKind::kDense;
  Activation activation = Activation::kNone;
  int out_channels = 0;
  int kernel_h = 1;
  int kernel_w = 1;
  Stride stride;
  Padding padding = Padding::kValid;
  Window window;

  bool has_weights() const {
    return kind == LayerKind::kDense || kind == LayerKind::kConv2D ||
           kind == LayerKind::kDepthwiseConv2D;
  }

  friend bool operator==(const LayerConfig& a, const LayerConfig& b) {
    return a.kind == b.kind && a.activation == b.activation &&
           a.out_channels == b.out_channels && a.kernel_h == b.kernel_h &&
           a.kernel_w == b.kernel_w && a.stride.h == b.stride.h &&
           a.stride.w == b.stride.w && a.padding == b.padding &&
           a.window.h == b.window.h && a.window.w == b.window.w;
  }
};

struct Architecture {
  std::string name;
  Shape input_shape;  // HWC, no batch dimension
  std::vector<LayerConfig> layers;
};

// 28x28x1 -> conv 3x3x8 SAME relu6 -> avgpool 2x2 -> depthwise 3x3 SAME relu6
// -> conv 1x1x16 relu6 -> avgpool 2x2 -> flatten -> dense 10.
Architecture DeskCnnV1();

// Per-sample output shape of a layer given its per-sample input shape.
Shape LayerOutputShape(const LayerConfig& config, const Shape& input_shape);

Shape WeightShape(const LayerConfig& config, const Shape& input_shape);

// Channel count of a weighted layer's output (dense/conv: out_channels,
// depthwise: input channels).
std::int64_t OutputChannels(const LayerConfig& config, const Shape& input_shape);

// Number of MAC terms feeding each accumulator.
std::int64_t MacCount(const LayerConfig& config, const Shape& input_shape);

struct LayerSpec {
  LayerConfig config;
  QTensor weights;                   // empty for avgpool / flatten
  std::vector<std::int32_t> bias;    // scale S_x * S_w[c]
  QuantParams output;
  std::vector<DyadicRescaler> rescalers;  // per channel; one for avgpool

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct ModelGraph {
  std::string name;
  Shape input_shape;  // HWC
  QuantParams input;
  std::vector<LayerSpec> layers;
  int rescaler_bits = kMaxRescalerBits;

  friend bool operator==(const ModelGraph&, const ModelGraph&) = default;
};

// Input quantization parameters seen by layer `index`.
QuantParams LayerInputParams(const ModelGraph& model, std::size_t index);

// Per-sample input shape of every layer plus the final output shape
// (size layers + 1).
std::vector<Shape> ModelShapes(const ModelGraph& model);
std::vector<Shape> ArchitectureShapes(const Architecture& arch);

Architecture ModelArchitecture(const ModelGraph& model);

// Re-checks every structural and numeric invariant: shape chaining, per-channel
// counts, symmetric weights, real rescale factors consistent with the stored
// scales, rescalers at rescaler_bits, and the int32 accumulator envelope.
// Throws ShapeError / DomainError / OverflowError.
void ValidateModel(const ModelGraph& model);

// Real rescale factor S_x * S_w / S_y.
double RealRescaleFactor(double input_scale, double weight_scale,
                         double output_scale);

struct FloatParams {
  std::vector<double> weights;
  std::vector<double> bias;

  friend bool operator==(const FloatParams&, const FloatParams&) = default;
};

struct FloatModel {
  Architecture arch;
  std::vector<FloatParams> params;  // one entry per layer (empty if unweighted)
};

void ValidateFloatModel(const FloatModel& model);

}  // namespace rescale

#endif  // RESCALE_LAB_MODEL_H_
