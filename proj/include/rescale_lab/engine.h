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
// Whole-model integer inference and evaluation. Images enter as real values
// p / 255 for pixel p and are quantized with the model's input parameters.

#ifndef RESCALE_LAB_ENGINE_H_
#define RESCALE_LAB_ENGINE_H_

#include <cstddef>
#include <vector>

#include "rescale_lab/idx.h"
#include "rescale_lab/model.h"
#include "rescale_lab/tensor.h"

namespace rescale {

// [count, rows, cols, 1] real tensor with values p / 255.
DTensor ImagesToReal(const Dataset& data, std::size_t begin, std::size_t count);

// [count, H, W, C] int8 tensor quantized with model.input; throws ShapeError if
// the images do not match model.input_shape.
QTensor QuantizeImages(const Dataset& data, std::size_t begin, std::size_t count,
                       const ModelGraph& model);

struct IntegerTrace {
  std::vector<QTensor> outputs;           // per layer
  std::vector<AccTensor> accumulators;    // per layer; empty for flatten
};

// Runs every layer at model.rescaler_bits.
QTensor RunInteger(const ModelGraph& model, const QTensor& input,
                   IntegerTrace* trace = nullptr);

// Row-wise argmax; ties go to the lowest class index.
std::vector<int> ArgmaxRows(const QTensor& logits);
std::vector<int> ArgmaxRows(const DTensor& logits);

// Top-1 accuracy in [0, 1] of the integer path.
double EvaluateAccuracy(const ModelGraph& model, const Dataset& data,
                        std::size_t batch_size = 500);

}  // namespace rescale

#endif  // RESCALE_LAB_ENGINE_H_
