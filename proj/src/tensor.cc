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
#include "rescale_lab/tensor.h"

#include <algorithm>
#include <sstream>

#include "rescale_lab/errors.h"

namespace rescale {

std::int64_t NumElements(const Shape& shape) {
  constexpr std::int64_t kLimit = std::int64_t{1} << 40;
  std::int64_t count = 1;
  for (std::int64_t d : shape) {
    if (d < 0) throw ShapeError("negative dimension in " + ShapeToString(shape));
    if (d != 0 && count > kLimit / d) {
      throw ShapeError("tensor too large: " + ShapeToString(shape));
    }
    count *= d;
  }
  return count;
}

std::string ShapeToString(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

SpatialPlan PlanWindow(std::int64_t in_h, std::int64_t in_w, int kernel_h,
                       int kernel_w, Stride stride, Padding padding) {
  if (kernel_h < 1 || kernel_w < 1 || stride.h < 1 || stride.w < 1) {
    throw ShapeError("kernel and stride must be positive");
  }
  if (in_h < 1 || in_w < 1) throw ShapeError("empty spatial input");
  SpatialPlan plan;
  if (padding == Padding::kSame) {
    plan.out_h = static_cast<int>((in_h + stride.h - 1) / stride.h);
    plan.out_w = static_cast<int>((in_w + stride.w - 1) / stride.w);
    const std::int64_t pad_h =
        std::max<std::int64_t>((plan.out_h - 1) * stride.h + kernel_h - in_h, 0);
    const std::int64_t pad_w =
        std::max<std::int64_t>((plan.out_w - 1) * stride.w + kernel_w - in_w, 0);
    plan.pad_top = static_cast<int>(pad_h / 2);
    plan.pad_left = static_cast<int>(pad_w / 2);
  } else {
    if (in_h < kernel_h || in_w < kernel_w) {
      throw ShapeError("VALID window larger than input");
    }
    plan.out_h = static_cast<int>((in_h - kernel_h) / stride.h + 1);
    plan.out_w = static_cast<int>((in_w - kernel_w) / stride.w + 1);
  }
  return plan;
}

}  // namespace rescale
