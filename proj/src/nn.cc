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
#include "rescale_lab/nn.h"

#include <algorithm>
#include <cmath>

#include "rescale_lab/errors.h"

namespace rescale::nn {
namespace {

struct ConvDims {
  std::int64_t batch, in_h, in_w, in_c, out_c;
  int k_h, k_w;
  SpatialPlan plan;
};

ConvDims Dims(const LayerConfig& config, const DTensor& x) {
  if (x.shape.size() != 4) throw ShapeError("convolution input must be NHWC");
  ConvDims d;
  d.batch = x.shape[0];
  d.in_h = x.shape[1];
  d.in_w = x.shape[2];
  d.in_c = x.shape[3];
  d.out_c = config.kind == LayerKind::kConv2D ? config.out_channels : d.in_c;
  d.k_h = config.kernel_h;
  d.k_w = config.kernel_w;
  d.plan = PlanWindow(d.in_h, d.in_w, d.k_h, d.k_w, config.stride, config.padding);
  return d;
}

void CheckWeights(const LayerConfig& config, const DTensor& x, std::span<const double> w) {
  Shape per_sample(x.shape.begin() + 1, x.shape.end());
  if (static_cast<std::int64_t>(w.size()) != NumElements(WeightShape(config, per_sample))) {
    throw ShapeError("weight count does not match layer geometry");
  }
}

}  // namespace

DTensor LinearForward(const LayerConfig& config, const DTensor& x,
                      std::span<const double> w, double offset) {
  CheckWeights(config, x, w);
  if (config.kind == LayerKind::kDense) {
    const std::int64_t batch = x.shape[0], in = x.shape[1], out = config.out_channels;
    DTensor y({batch, out});
    for (std::int64_t n = 0; n < batch; ++n) {
      const double* xr = x.data.data() + n * in;
      for (std::int64_t o = 0; o < out; ++o) {
        const double* wr = w.data() + o * in;
        double sum = 0.0;
        for (std::int64_t i = 0; i < in; ++i) sum += xr[i] * wr[i];
        y.data[n * out + o] = sum;
      }
    }
    return y;
  }

  const ConvDims d = Dims(config, x);
  DTensor y({d.batch, d.plan.out_h, d.plan.out_w, d.out_c});
  const bool depthwise = config.kind == LayerKind::kDepthwiseConv2D;
  double* dst = y.data.data();
  for (std::int64_t n = 0; n < d.batch; ++n) {
    const double* image = x.data.data() + n * d.in_h * d.in_w * d.in_c;
    for (int oy = 0; oy < d.plan.out_h; ++oy) {
      for (int ox = 0; ox < d.plan.out_w; ++ox, dst += d.out_c) {
        for (int ky = 0; ky < d.k_h; ++ky) {
          const std::int64_t iy = std::int64_t{oy} * config.stride.h - d.plan.pad_top + ky;
          for (int kx = 0; kx < d.k_w; ++kx) {
            const std::int64_t ix = std::int64_t{ox} * config.stride.w - d.plan.pad_left + kx;
            const bool inside = iy >= 0 && iy < d.in_h && ix >= 0 && ix < d.in_w;
            const double* px = inside ? image + (iy * d.in_w + ix) * d.in_c : nullptr;
            if (depthwise) {
              const double* tap = w.data() + (ky * d.k_w + kx) * d.in_c;
              for (std::int64_t c = 0; c < d.in_c; ++c) {
                dst[c] += (inside ? px[c] : offset) * tap[c];
              }
            } else {
              for (std::int64_t o = 0; o < d.out_c; ++o) {
                const double* tap = w.data() + ((o * d.k_h + ky) * d.k_w + kx) * d.in_c;
                double sum = 0.0;
                for (std::int64_t c = 0; c < d.in_c; ++c) {
                  sum += (inside ? px[c] : offset) * tap[c];
                }
                dst[o] += sum;
              }
            }
          }
        }
      }
    }
  }
  return y;
}

void LinearBackward(const LayerConfig& config, const DTensor& x,
                    std::span<const double> w, double offset, const DTensor& dout,
                    DTensor* dx, std::span<double> dw) {
  CheckWeights(config, x, w);
  if (dw.size() != w.size()) throw ShapeError("weight gradient size mismatch");
  if (dx) *dx = DTensor(x.shape);

  if (config.kind == LayerKind::kDense) {
    const std::int64_t batch = x.shape[0], in = x.shape[1], out = config.out_channels;
    for (std::int64_t n = 0; n < batch; ++n) {
      const double* xr = x.data.data() + n * in;
      for (std::int64_t o = 0; o < out; ++o) {
        const double g = dout.data[n * out + o];
        if (g == 0.0) continue;
        double* dwr = dw.data() + o * in;
        const double* wr = w.data() + o * in;
        for (std::int64_t i = 0; i < in; ++i) dwr[i] += (xr[i] - offset) * g;
        if (dx) {
          double* dxr = dx->data.data() + n * in;
          for (std::int64_t i = 0; i < in; ++i) dxr[i] += wr[i] * g;
        }
      }
    }
    return;
  }

  const ConvDims d = Dims(config, x);
  const bool depthwise = config.kind == LayerKind::kDepthwiseConv2D;
  const double* src = dout.data.data();
  for (std::int64_t n = 0; n < d.batch; ++n) {
    const std::int64_t image_offset = n * d.in_h * d.in_w * d.in_c;
    const double* image = x.data.data() + image_offset;
    for (int oy = 0; oy < d.plan.out_h; ++oy) {
      for (int ox = 0; ox < d.plan.out_w; ++ox, src += d.out_c) {
        for (int ky = 0; ky < d.k_h; ++ky) {
          const std::int64_t iy = std::int64_t{oy} * config.stride.h - d.plan.pad_top + ky;
          for (int kx = 0; kx < d.k_w; ++kx) {
            const std::int64_t ix = std::int64_t{ox} * config.stride.w - d.plan.pad_left + kx;
            if (iy < 0 || iy >= d.in_h || ix < 0 || ix >= d.in_w) continue;
            const std::int64_t pixel = (iy * d.in_w + ix) * d.in_c;
            const double* px = image + pixel;
            double* dpx = dx ? dx->data.data() + image_offset + pixel : nullptr;
            if (depthwise) {
              const std::int64_t tap = (ky * d.k_w + kx) * d.in_c;
              for (std::int64_t c = 0; c < d.in_c; ++c) {
                dw[tap + c] += (px[c] - offset) * src[c];
                if (dpx) dpx[c] += w[tap + c] * src[c];
              }
            } else {
              for (std::int64_t o = 0; o < d.out_c; ++o) {
                const double g = src[o];
                if (g == 0.0) continue;
                const std::int64_t tap = ((o * d.k_h + ky) * d.k_w + kx) * d.in_c;
                for (std::int64_t c = 0; c < d.in_c; ++c) {
                  dw[tap + c] += (px[c] - offset) * g;
                  if (dpx) dpx[c] += w[tap + c] * g;
                }
              }
            }
          }
        }
      }
    }
  }
}

DTensor SumPool(const DTensor& x, Window window) {
  if (x.shape.size() != 4) throw ShapeError("pool input must be NHWC");
  const std::int64_t batch = x.shape[0], in_h = x.shape[1], in_w = x.shape[2],
                     channels = x.shape[3];
  if (in_h % window.h != 0 || in_w % window.w != 0) {
    throw ShapeError("pool window must divide the spatial dimensions");
  }
  const std::int64_t out_h = in_h / window.h, out_w = in_w / window.w;
  DTensor y({batch, out_h, out_w, channels});
  for (std::int64_t n = 0; n < batch; ++n) {
    for (std::int64_t iy = 0; iy < in_h; ++iy) {
      for (std::int64_t ix = 0; ix < in_w; ++ix) {
        const double* px = x.data.data() + ((n * in_h + iy) * in_w + ix) * channels;
        double* dst = y.data.data() +
                      ((n * out_h + iy / window.h) * out_w + ix / window.w) * channels;
        for (std::int64_t c = 0; c < channels; ++c) dst[c] += px[c];
      }
    }
  }
  return y;
}

DTensor SumPoolBackward(const Shape& input_shape, Window window, const DTensor& dout) {
  DTensor dx(input_shape);
  const std::int64_t batch = input_shape[0], in_h = input_shape[1],
                     in_w = input_shape[2], channels = input_shape[3];
  const std::int64_t out_h = in_h / window.h, out_w = in_w / window.w;
  for (std::int64_t n = 0; n < batch; ++n) {
    for (std::int64_t iy = 0; iy < in_h; ++iy) {
      for (std::int64_t ix = 0; ix < in_w; ++ix) {
        double* dst = dx.data.data() + ((n * in_h + iy) * in_w + ix) * channels;
        const double* g = dout.data.data() +
                          ((n * out_h + iy / window.h) * out_w + ix / window.w) * channels;
        for (std::int64_t c = 0; c < channels; ++c) dst[c] = g[c];
      }
    }
  }
  return dx;
}

double SoftmaxCrossEntropy(const DTensor& logits, std::span<const std::uint8_t> labels,
                           DTensor* grad) {
  if (logits.shape.size() != 2 ||
      logits.shape[0] != static_cast<std::int64_t>(labels.size())) {
    throw ShapeError("logits must be [N, classes] with one label per row");
  }
  const std::int64_t rows = logits.shape[0], cols = logits.shape[1];
  if (grad) *grad = DTensor(logits.shape);
  double total = 0.0;
  std::vector<double> p(cols);
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* row = logits.data.data() + r * cols;
    const double peak = *std::max_element(row, row + cols);
    double z = 0.0;
    for (std::int64_t c = 0; c < cols; ++c) z += (p[c] = std::exp(row[c] - peak));
    const int label = labels[r];
    if (label >= cols) throw ShapeError("label outside the class range");
    total += std::log(z) - (row[label] - peak);
    if (grad) {
      double* g = grad->data.data() + r * cols;
      for (std::int64_t c = 0; c < cols; ++c) {
        g[c] = (p[c] / z - (c == label ? 1.0 : 0.0)) / static_cast<double>(rows);
      }
    }
  }
  return total / static_cast<double>(rows);
}

namespace {

double ApplyActivation(Activation activation, double v) {
  switch (activation) {
    case Activation::kRelu: return std::max(v, 0.0);
    case Activation::kRelu6: return std::clamp(v, 0.0, 6.0);
    case Activation::kNone: break;
  }
  return v;
}

bool ActivationPasses(Activation activation, double v) {
  switch (activation) {
    case Activation::kRelu: return v > 0.0;
    case Activation::kRelu6: return v > 0.0 && v < 6.0;
    case Activation::kNone: break;
  }
  return true;
}

DTensor Flatten(const DTensor& x) {
  DTensor y;
  y.shape = {x.shape[0], NumElements(x.shape) / std::max<std::int64_t>(x.shape[0], 1)};
  y.data = x.data;
  return y;
}

}  // namespace

DTensor FloatForward(const FloatModel& model, const DTensor& x, FloatCache* cache) {
  if (cache) {
    cache->inputs.clear();
    cache->pre_activation.clear();
  }
  DTensor h = x;
  for (std::size_t i = 0; i < model.arch.layers.size(); ++i) {
    const LayerConfig& config = model.arch.layers[i];
    if (cache) cache->inputs.push_back(h);
    DTensor pre;
    switch (config.kind) {
      case LayerKind::kFlatten:
        h = Flatten(h);
        break;
      case LayerKind::kAvgPool: {
        h = SumPool(h, config.window);
        const double area = double(config.window.h) * config.window.w;
        for (double& v : h.data) v /= area;
        break;
      }
      default: {
        pre = LinearForward(config, h, model.params[i].weights, 0.0);
        const std::vector<double>& bias = model.params[i].bias;
        const std::size_t channels = bias.size();
        for (std::size_t j = 0; j < pre.data.size(); ++j) pre.data[j] += bias[j % channels];
        h = pre;
        for (double& v : h.data) v = ApplyActivation(config.activation, v);
        break;
      }
    }
    if (cache) cache->pre_activation.push_back(std::move(pre));
  }
  return h;
}

std::vector<FloatParams> FloatBackward(const FloatModel& model, const FloatCache& cache,
                                       const DTensor& dlogits) {
  std::vector<FloatParams> grads(model.params.size());
  DTensor g = dlogits;
  for (std::size_t li = model.arch.layers.size(); li-- > 0;) {
    const LayerConfig& config = model.arch.layers[li];
    const DTensor& input = cache.inputs[li];
    switch (config.kind) {
      case LayerKind::kFlatten:
        g.shape = input.shape;
        break;
      case LayerKind::kAvgPool: {
        const double area = double(config.window.h) * config.window.w;
        for (double& v : g.data) v /= area;
        g = SumPoolBackward(input.shape, config.window, g);
        break;
      }
      default: {
        const DTensor& pre = cache.pre_activation[li];
        for (std::size_t j = 0; j < g.data.size(); ++j) {
          if (!ActivationPasses(config.activation, pre.data[j])) g.data[j] = 0.0;
        }
        FloatParams& grad = grads[li];
        grad.weights.assign(model.params[li].weights.size(), 0.0);
        grad.bias.assign(model.params[li].bias.size(), 0.0);
        const std::size_t channels = grad.bias.size();
        for (std::size_t j = 0; j < g.data.size(); ++j) grad.bias[j % channels] += g.data[j];
        DTensor dx;
        LinearBackward(config, input, model.params[li].weights, 0.0, g,
                       li > 0 ? &dx : nullptr, grad.weights);
        g = std::move(dx);
        break;
      }
    }
  }
  return grads;
}

}  // namespace rescale::nn
