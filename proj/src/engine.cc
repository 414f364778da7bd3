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
#include "rescale_lab/engine.h"

#include <algorithm>

#include "rescale_lab/errors.h"
#include "rescale_lab/kernels.h"

namespace rescale {
namespace {

template <typename T>
std::vector<int> Argmax(const Shape& shape, const std::vector<T>& data) {
  if (shape.size() != 2) throw ShapeError("argmax expects [N, classes]");
  const std::int64_t rows = shape[0], cols = shape[1];
  std::vector<int> out(rows, 0);
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* row = data.data() + r * cols;
    // max_element keeps the first maximum.
    out[r] = static_cast<int>(std::max_element(row, row + cols) - row);
  }
  return out;
}

}  // namespace

DTensor ImagesToReal(const Dataset& data, std::size_t begin, std::size_t count) {
  if (begin + count > data.size()) throw ShapeError("image range out of bounds");
  DTensor out({static_cast<std::int64_t>(count), data.rows, data.cols, 1});
  const std::size_t px = static_cast<std::size_t>(data.pixels_per_image());
  for (std::size_t i = 0; i < count * px; ++i) {
    out.data[i] = data.images[begin * px + i] / 255.0;
  }
  return out;
}

QTensor QuantizeImages(const Dataset& data, std::size_t begin, std::size_t count,
                       const ModelGraph& model) {
  if (model.input_shape != Shape{data.rows, data.cols, 1}) {
    throw ShapeError("dataset images " + std::to_string(data.rows) + "x" +
                     std::to_string(data.cols) + " do not match model input " +
                     ShapeToString(model.input_shape));
  }
  if (begin + count > data.size()) throw ShapeError("image range out of bounds");
  QTensor out{{static_cast<std::int64_t>(count), data.rows, data.cols, 1},
              {}, {model.input.scale}, model.input.zero_point};
  const std::size_t px = static_cast<std::size_t>(data.pixels_per_image());
  out.data.resize(count * px);
  // Only 256 distinct pixel values exist.
  std::int8_t table[256];
  for (int p = 0; p < 256; ++p) table[p] = QuantizeReal(p / 255.0, model.input);
  for (std::size_t i = 0; i < count * px; ++i) {
    out.data[i] = table[data.images[begin * px + i]];
  }
  return out;
}

QTensor RunInteger(const ModelGraph& model, const QTensor& input, IntegerTrace* trace) {
  if (trace) {
    trace->outputs.clear();
    trace->accumulators.clear();
  }
  QTensor x = input;
  for (const LayerSpec& layer : model.layers) {
    AccTensor acc;
    x = LayerForwardInt(x, layer, model.rescaler_bits, trace ? &acc : nullptr);
    if (trace) {
      trace->outputs.push_back(x);
      trace->accumulators.push_back(std::move(acc));
    }
  }
  return x;
}

std::vector<int> ArgmaxRows(const QTensor& logits) {
  return Argmax(logits.shape, logits.data);
}

std::vector<int> ArgmaxRows(const DTensor& logits) {
  return Argmax(logits.shape, logits.data);
}

double EvaluateAccuracy(const ModelGraph& model, const Dataset& data,
                        std::size_t batch_size) {
  if (data.size() == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t begin = 0; begin < data.size(); begin += batch_size) {
    const std::size_t count = std::min(batch_size, data.size() - begin);
    const std::vector<int> predicted =
        ArgmaxRows(RunInteger(model, QuantizeImages(data, begin, count, model)));
    for (std::size_t i = 0; i < count; ++i) {
      correct += predicted[i] == data.labels[begin + i];
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace rescale
