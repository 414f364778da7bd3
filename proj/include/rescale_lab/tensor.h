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
#ifndef RESCALE_LAB_TENSOR_H_
#define RESCALE_LAB_TENSOR_H_

#include <cstdint>
#include <string>
#include <vector>

#include "rescale_lab/qcore.h"

namespace rescale {

using Shape = std::vector<std::int64_t>;

// Product of the dimensions; throws ShapeError on negative dimensions or when
// the count does not fit in 2^40 elements.
std::int64_t NumElements(const Shape& shape);

std::string ShapeToString(const Shape& shape);

// int8 tensor. Activations are NHWC (or [N, features]) with a single scale;
// weights carry one scale per output channel and zero_point 0.
struct QTensor {
  Shape shape;
  std::vector<std::int8_t> data;
  std::vector<double> scales;
  std::int32_t zero_point = 0;

  QuantParams params() const { return {scales.empty() ? 1.0 : scales[0], zero_point}; }

  friend bool operator==(const QTensor&, const QTensor&) = default;
};

// Accumulators at scale S_x * S_w[c]; the last dimension is the channel.
struct AccTensor {
  Shape shape;
  std::vector<std::int32_t> data;
};

// Real-valued tensor used by the float and emulated paths.
struct DTensor {
  Shape shape;
  std::vector<double> data;

  DTensor() = default;
  explicit DTensor(Shape s) : shape(std::move(s)), data(NumElements(shape), 0.0) {}
};

enum class Padding { kValid, kSame };

struct Stride {
  int h = 1;
  int w = 1;
};

struct Window {
  int h = 1;
  int w = 1;
};

// Output extent and leading padding of a 2-D sliding window.
struct SpatialPlan {
  int out_h = 0;
  int out_w = 0;
  int pad_top = 0;
  int pad_left = 0;
};

// SAME: out = ceil(in / stride) with the extra padding row/column placed at the
// bottom/right. VALID: out = (in - kernel) / stride + 1. Throws ShapeError when
// the window does not fit.
SpatialPlan PlanWindow(std::int64_t in_h, std::int64_t in_w, int kernel_h,
                       int kernel_w, Stride stride, Padding padding);

}  // namespace rescale

#endif  // RESCALE_LAB_TENSOR_H_
