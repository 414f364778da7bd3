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
// Post-training quantization of a float model into an integer graph.

#ifndef RESCALE_LAB_PTQ_H_
#define RESCALE_LAB_PTQ_H_

#include <span>
#include <vector>

#include "rescale_lab/model.h"
#include "rescale_lab/qcore.h"
#include "rescale_lab/tensor.h"

namespace rescale {

// Running min/max per activation tensor: index 0 is the model input, index
// i + 1 the output of layer i.
struct CalibrationStats {
  std::vector<double> min;
  std::vector<double> max;

  void Observe(std::size_t tensor, std::span<const double> values);
};

// Smallest accepted activation scale; degenerate ranges collapse to it with
// zero point 0.
inline constexpr double kMinActivationScale = 1e-7;
inline constexpr double kMinWeightScale = 1e-7;

CalibrationStats CollectCalibrationStats(const FloatModel& model,
                                         std::span<const DTensor> batches);

// Affine int8 parameters covering [min(lo, 0), max(hi, 0)].
QuantParams AffineParamsFromRange(double lo, double hi);

// Per-channel symmetric int8 weights, scale max|w_c| / 127. The channel is the
// leading dimension for dense/conv and the trailing one for depthwise.
QTensor QuantizeWeights(const LayerConfig& config, const Shape& weight_shape,
                        std::span<const double> weights);

ModelGraph QuantizeFloatModel(const FloatModel& model, const CalibrationStats& stats);
ModelGraph QuantizeFloatModel(const FloatModel& model, std::span<const DTensor> batches);

}  // namespace rescale

#endif  // RESCALE_LAB_PTQ_H_
