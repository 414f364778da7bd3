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
// Real-valued (binary64) layer operators shared by float training, the
// calibration pass and the emulated-integer training graph.

#ifndef RESCALE_LAB_NN_H_
#define RESCALE_LAB_NN_H_

#include <cstdint>
#include <span>
#include <vector>

#include "rescale_lab/model.h"
#include "rescale_lab/tensor.h"

namespace rescale::nn {

// Bias-free dense / conv2d / depthwise product. Padded taps read `offset`.
DTensor LinearForward(const LayerConfig& config, const DTensor& x,
                      std::span<const double> w, double offset);

// Gradients of LinearForward. Adds sum (x - offset) * dout into `dw` (padded
// taps therefore contribute nothing) and writes sum w * dout into `dx` when
// non-null.
void LinearBackward(const LayerConfig& config, const DTensor& x,
                    std::span<const double> w, double offset, const DTensor& dout,
                    DTensor* dx, std::span<double> dw);

// Non-overlapping window sums.
DTensor SumPool(const DTensor& x, Window window);
// Every input position receives the gradient of the window it belongs to.
DTensor SumPoolBackward(const Shape& input_shape, Window window, const DTensor& dout);

// Mean softmax cross-entropy over the batch. `grad` (optional) receives
// d loss / d logits.
double SoftmaxCrossEntropy(const DTensor& logits, std::span<const std::uint8_t> labels,
                           DTensor* grad = nullptr);

struct FloatCache {
  std::vector<DTensor> inputs;          // input of each layer
  std::vector<DTensor> pre_activation;  // linear output + bias (weighted layers)
};

// Float forward pass; ReLU/ReLU6 clamp real values, avgpool averages.
DTensor FloatForward(const FloatModel& model, const DTensor& x,
                     FloatCache* cache = nullptr);

// Parameter gradients for the batch that produced `cache`.
std::vector<FloatParams> FloatBackward(const FloatModel& model, const FloatCache& cache,
                                       const DTensor& dlogits);

}  // namespace rescale::nn

#endif  // RESCALE_LAB_NN_H_
