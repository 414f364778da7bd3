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
#include "rescale_lab/trainer.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "rescale_lab/engine.h"
#include "rescale_lab/errors.h"
#include "rescale_lab/kernels.h"
#include "rescale_lab/model_io.h"
#include "rescale_lab/nn.h"

namespace rescale {
namespace {

constexpr double kInt32Min = std::numeric_limits<std::int32_t>::min();
constexpr double kInt32Max = std::numeric_limits<std::int32_t>::max();

// floor(a * mq + 1/2) for integer-valued a and dyadic mq. The rounded product
// only seeds the search; both fma residuals are exact in sign, so the result
// is exact even when a * mq needs more than 53 bits.
double RoundedRescale(double a, double mq) {
  double n = std::floor(a * mq + 0.5);
  while (std::fma(a, mq, -(n - 0.5)) < 0.0) n -= 1.0;
  while (std::fma(a, mq, -(n + 0.5)) >= 0.0) n += 1.0;
  return n;
}

double FakeQuantWeight(double w) { return RoundHalfUp(std::clamp(w, -128.0, 127.0)); }

void CheckEnvelope(double v, std::size_t layer, const char* what) {
  if (v < kInt32Min || v > kInt32Max) {
    throw OverflowEnvelopeError("layer " + std::to_string(layer) + ": " + what +
                                " leaves the int32 range");
  }
}

DTensor FlattenReal(const DTensor& x) {
  DTensor y;
  y.shape = {x.shape[0], NumElements(x.shape) / std::max<std::int64_t>(x.shape[0], 1)};
  y.data = x.data;
  return y;
}

template <typename Fill>
void ForEachBatch(std::size_t count, std::size_t batch, Fill&& fill) {
  for (std::size_t begin = 0; begin < count; begin += batch) {
    fill(begin, std::min(batch, count - begin));
  }
}

DTensor GatherReal(const Dataset& data, std::span<const std::size_t> indices) {
  DTensor out({static_cast<std::int64_t>(indices.size()), data.rows, data.cols, 1});
  const std::size_t px = static_cast<std::size_t>(data.pixels_per_image());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::uint8_t* src = data.images.data() + indices[i] * px;
    for (std::size_t j = 0; j < px; ++j) out.data[i * px + j] = src[j] / 255.0;
  }
  return out;
}

QTensor GatherQuantized(const Dataset& data, std::span<const std::size_t> indices,
                        const ModelGraph& model) {
  if (model.input_shape != Shape{data.rows, data.cols, 1}) {
    throw ShapeError("dataset images do not match model input " +
                     ShapeToString(model.input_shape));
  }
  std::int8_t table[256];
  for (int p = 0; p < 256; ++p) table[p] = QuantizeReal(p / 255.0, model.input);
  const std::size_t px = static_cast<std::size_t>(data.pixels_per_image());
  QTensor out{{static_cast<std::int64_t>(indices.size()), data.rows, data.cols, 1},
              std::vector<std::int8_t>(indices.size() * px),
              {model.input.scale},
              model.input.zero_point};
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::uint8_t* src = data.images.data() + indices[i] * px;
    for (std::size_t j = 0; j < px; ++j) out.data[i * px + j] = table[src[j]];
  }
  return out;
}

std::vector<std::uint8_t> GatherLabels(const Dataset& data,
                                       std::span<const std::size_t> indices) {
  std::vector<std::uint8_t> labels(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) labels[i] = data.labels[indices[i]];
  return labels;
}

}  // namespace

ShadowModel MakeShadow(const ModelGraph& model, int bits) {
  ShadowModel shadow;
  shadow.frozen = MaterializeRescalers(model, bits);
  shadow.bits = bits;
  for (const LayerSpec& layer : shadow.frozen.layers) {
    FloatParams p;
    p.weights.assign(layer.weights.data.begin(), layer.weights.data.end());
    p.bias.assign(layer.bias.begin(), layer.bias.end());
    shadow.params.push_back(std::move(p));
  }
  return shadow;
}

void ValidateTrainConfig(const TrainConfig& cfg) {
  if (!(cfg.learning_rate >= 0.0) || !std::isfinite(cfg.learning_rate)) {
    throw DomainError("learning rate must be finite and non-negative");
  }
  if (cfg.batch_size < 1) throw DomainError("batch size must be at least 1");
  if (cfg.epochs < 0) throw DomainError("epochs must be non-negative");
}

DTensor EmulatedForward(const ShadowModel& shadow, const QTensor& input, EmulationMode mode,
                        EmulatedCache* cache) {
  const ModelGraph& model = shadow.frozen;
  const bool exact = mode == EmulationMode::kInteger;
  if (cache) cache->layers.assign(model.layers.size(), {});
  DTensor x(input.shape);
  std::copy(input.data.begin(), input.data.end(), x.data.begin());
  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    const LayerSpec& layer = model.layers[li];
    const LayerConfig& config = layer.config;
    EmulatedLayerCache* lc = cache ? &cache->layers[li] : nullptr;
    if (lc) lc->input = x;

    if (config.kind == LayerKind::kFlatten) {
      x = FlattenReal(x);
      continue;
    }

    DTensor v;
    double lo = -128.0, hi = 127.0;
    if (config.kind == LayerKind::kAvgPool) {
      const double mq = layer.rescalers[0].QuantizedValue();
      v = nn::SumPool(x, config.window);
      for (double& s : v.data) s = exact ? RoundedRescale(s, mq) : s * mq;
    } else {
      const FloatParams& p = shadow.params[li];
      std::vector<double> w(p.weights.size());
      for (std::size_t j = 0; j < w.size(); ++j) {
        w[j] = exact ? FakeQuantWeight(p.weights[j]) : std::clamp(p.weights[j], -128.0, 127.0);
      }
      const double zx = LayerInputParams(model, li).zero_point;
      const std::size_t channels = layer.rescalers.size();
      const bool channel_last = config.kind == LayerKind::kDepthwiseConv2D;
      const std::size_t per_channel = w.size() / channels;
      std::vector<double> b_eff(channels);
      for (std::size_t c = 0; c < channels; ++c) {
        double sum = 0.0;
        for (std::size_t j = 0; j < per_channel; ++j) {
          sum += w[channel_last ? j * channels + c : c * per_channel + j];
        }
        const double b = exact ? RoundHalfUp(p.bias[c]) : p.bias[c];
        b_eff[c] = b - zx * sum;
        if (exact) CheckEnvelope(b_eff[c], li, "effective bias");
      }
      v = nn::LinearForward(config, x, w, zx);
      std::vector<double> mq(channels);
      for (std::size_t c = 0; c < channels; ++c) mq[c] = layer.rescalers[c].QuantizedValue();
      const double zy = layer.output.zero_point;
      for (std::size_t j = 0; j < v.data.size(); ++j) {
        const std::size_t c = j % channels;
        const double acc = v.data[j] + b_eff[c];
        if (exact) CheckEnvelope(acc, li, "accumulator");
        v.data[j] = (exact ? RoundedRescale(acc, mq[c]) : acc * mq[c]) + zy;
      }
      const ClampRange range = ActivationClampRange(config.activation, layer.output);
      lo = range.lo;
      hi = range.hi;
      if (lc) lc->weights = std::move(w);
    }
    x = v;
    for (double& e : x.data) e = std::clamp(e, lo, hi);
    if (lc) {
      lc->pre_clamp = std::move(v);
      lc->clamp_lo = lo;
      lc->clamp_hi = hi;
    }
  }
  return x;
}

QTensor ToQTensor(const DTensor& values, const QuantParams& params) {
  QTensor out{values.shape, std::vector<std::int8_t>(values.data.size()), {params.scale},
              params.zero_point};
  for (std::size_t i = 0; i < values.data.size(); ++i) {
    out.data[i] = static_cast<std::int8_t>(std::clamp(values.data[i], -128.0, 127.0));
  }
  return out;
}

double RescaleNodeGradient(const DyadicRescaler& rescaler) { return rescaler.QuantizedValue(); }

std::vector<FloatParams> SteBackward(const ShadowModel& shadow, const EmulatedCache& cache,
                                     const DTensor& upstream) {
  const ModelGraph& model = shadow.frozen;
  if (cache.layers.size() != model.layers.size()) {
    throw ShapeError("cache does not belong to this model");
  }
  std::vector<FloatParams> grads(model.layers.size());
  DTensor g = upstream;
  for (std::size_t li = model.layers.size(); li-- > 0;) {
    const LayerSpec& layer = model.layers[li];
    const EmulatedLayerCache& lc = cache.layers[li];
    if (layer.config.kind == LayerKind::kFlatten) {
      g.shape = lc.input.shape;
      continue;
    }
    if (g.data.size() != lc.pre_clamp.data.size()) throw ShapeError("gradient shape mismatch");
    // Clipped saturation, identity rounding, then the rescale node.
    const std::size_t channels = layer.rescalers.size();
    for (std::size_t j = 0; j < g.data.size(); ++j) {
      const double v = lc.pre_clamp.data[j];
      const bool inside = v >= lc.clamp_lo && v <= lc.clamp_hi;
      g.data[j] = inside ? g.data[j] * RescaleNodeGradient(layer.rescalers[j % channels]) : 0.0;
    }
    if (layer.config.kind == LayerKind::kAvgPool) {
      g = nn::SumPoolBackward(lc.input.shape, layer.config.window, g);
      continue;
    }
    FloatParams& grad = grads[li];
    const FloatParams& p = shadow.params[li];
    grad.weights.assign(p.weights.size(), 0.0);
    grad.bias.assign(p.bias.size(), 0.0);
    for (std::size_t j = 0; j < g.data.size(); ++j) grad.bias[j % channels] += g.data[j];
    DTensor dx;
    const double zx = LayerInputParams(model, li).zero_point;
    nn::LinearBackward(layer.config, lc.input, lc.weights, zx, g, li > 0 ? &dx : nullptr,
                       grad.weights);
    for (std::size_t j = 0; j < p.weights.size(); ++j) {
      if (p.weights[j] < -128.0 || p.weights[j] > 127.0) grad.weights[j] = 0.0;
    }
    g = std::move(dx);
  }
  return grads;
}

double DequantizedCrossEntropy(const DTensor& logits_q, const QuantParams& params,
                               std::span<const std::uint8_t> labels, DTensor* grad) {
  DTensor real = logits_q;
  for (double& v : real.data) v = params.scale * (v - params.zero_point);
  const double loss = nn::SoftmaxCrossEntropy(real, labels, grad);
  if (grad) {
    for (double& v : grad->data) v *= params.scale;
  }
  return loss;
}

WeightChangeStats ComputeWeightChangeStats(const ModelGraph& original,
                                           const ModelGraph& retrained) {
  if (original.layers.size() != retrained.layers.size()) {
    throw ShapeError("models have different layer counts");
  }
  WeightChangeStats stats;
  double abs_sum = 0.0;
  for (std::size_t li = 0; li < original.layers.size(); ++li) {
    const LayerSpec& a = original.layers[li];
    const LayerSpec& b = retrained.layers[li];
    if (!(a.config == b.config) || a.weights.shape != b.weights.shape ||
        a.weights.data.size() != b.weights.data.size() || a.bias.size() != b.bias.size()) {
      throw ShapeError("layer " + std::to_string(li) + " differs in topology");
    }
    std::map<int, std::int64_t> histogram;
    for (std::size_t j = 0; j < a.weights.data.size(); ++j) {
      const int delta = int{b.weights.data[j]} - int{a.weights.data[j]};
      if (delta == 0) continue;
      ++histogram[delta];
      ++stats.changed_weights;
      abs_sum += std::abs(delta);
    }
    for (std::size_t j = 0; j < a.bias.size(); ++j) stats.changed_biases += a.bias[j] != b.bias[j];
    stats.total_weights += static_cast<std::int64_t>(a.weights.data.size());
    stats.total_biases += static_cast<std::int64_t>(a.bias.size());
    stats.layers_affected += histogram.empty() ? 0 : 1;
    stats.histograms.push_back(std::move(histogram));
  }
  if (stats.total_weights > 0) {
    stats.changed_ratio = double(stats.changed_weights) / double(stats.total_weights);
  }
  if (stats.changed_weights > 0) stats.mean_abs_diff = abs_sum / double(stats.changed_weights);
  return stats;
}

FinetuneResult Finetune(const ModelGraph& model, const Dataset& train, const Dataset& eval,
                        const TrainConfig& cfg, int bits) {
  ValidateTrainConfig(cfg);
  if (train.size() == 0) throw DomainError("fine-tuning needs training data");
  ShadowModel shadow = MakeShadow(model, bits);
  const ModelGraph& original = shadow.frozen;
  const QuantParams logits = original.layers.back().output;

  FinetuneResult result;
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(train.size());
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    ForEachBatch(order.size(), static_cast<std::size_t>(cfg.batch_size),
                 [&](std::size_t begin, std::size_t count) {
                   const std::span<const std::size_t> idx(order.data() + begin, count);
                   EmulatedCache cache;
                   const DTensor out = EmulatedForward(
                       shadow, GatherQuantized(train, idx, original), EmulationMode::kInteger,
                       &cache);
                   DTensor grad;
                   loss_sum += DequantizedCrossEntropy(out, logits, GatherLabels(train, idx),
                                                       &grad);
                   ++batches;
                   const std::vector<FloatParams> g = SteBackward(shadow, cache, grad);
                   for (std::size_t li = 0; li < g.size(); ++li) {
                     FloatParams& p = shadow.params[li];
                     for (std::size_t j = 0; j < g[li].weights.size(); ++j) {
                       p.weights[j] -= cfg.learning_rate * g[li].weights[j];
                     }
                     if (!cfg.train_bias) continue;
                     for (std::size_t j = 0; j < g[li].bias.size(); ++j) {
                       p.bias[j] -= cfg.learning_rate * g[li].bias[j];
                     }
                   }
                 });
    const ModelGraph deployed = RedeployWeights(original, shadow.params);
    result.epochs.push_back({epoch, loss_sum / double(std::max<std::size_t>(batches, 1)),
                             EvaluateAccuracy(deployed, eval)});
  }
  result.model = RedeployWeights(original, shadow.params);
  result.stats = ComputeWeightChangeStats(original, result.model);
  return result;
}

FloatModel InitFloatModel(const Architecture& arch, std::uint64_t seed) {
  FloatModel model;
  model.arch = arch;
  const std::vector<Shape> shapes = ArchitectureShapes(arch);
  std::mt19937_64 rng(seed);
  for (std::size_t li = 0; li < arch.layers.size(); ++li) {
    const LayerConfig& config = arch.layers[li];
    FloatParams p;
    if (config.has_weights()) {
      const Shape ws = WeightShape(config, shapes[li]);
      const double fan_in = double(MacCount(config, shapes[li]));
      std::uniform_real_distribution<double> dist(-std::sqrt(6.0 / fan_in),
                                                  std::sqrt(6.0 / fan_in));
      p.weights.resize(NumElements(ws));
      for (double& w : p.weights) w = dist(rng);
      p.bias.assign(OutputChannels(config, shapes[li]), 0.0);
    }
    model.params.push_back(std::move(p));
  }
  ValidateFloatModel(model);
  return model;
}

double EvaluateFloatAccuracy(const FloatModel& model, const Dataset& data,
                             std::size_t batch_size) {
  if (data.size() == 0) return 0.0;
  std::size_t correct = 0;
  ForEachBatch(data.size(), batch_size, [&](std::size_t begin, std::size_t count) {
    const std::vector<int> predicted =
        ArgmaxRows(nn::FloatForward(model, ImagesToReal(data, begin, count)));
    for (std::size_t i = 0; i < count; ++i) correct += predicted[i] == data.labels[begin + i];
  });
  return double(correct) / double(data.size());
}

FloatTrainResult TrainFloat(const Architecture& arch, const Dataset& train,
                            const Dataset& eval, const TrainConfig& cfg) {
  ValidateTrainConfig(cfg);
  if (train.size() == 0) throw DomainError("training needs data");
  FloatTrainResult result;
  result.model = InitFloatModel(arch, cfg.seed);
  FloatModel& model = result.model;
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(train.size());
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    ForEachBatch(order.size(), static_cast<std::size_t>(cfg.batch_size),
                 [&](std::size_t begin, std::size_t count) {
                   const std::span<const std::size_t> idx(order.data() + begin, count);
                   nn::FloatCache cache;
                   const DTensor out = nn::FloatForward(model, GatherReal(train, idx), &cache);
                   DTensor grad;
                   loss_sum += nn::SoftmaxCrossEntropy(out, GatherLabels(train, idx), &grad);
                   ++batches;
                   const std::vector<FloatParams> g = nn::FloatBackward(model, cache, grad);
                   for (std::size_t li = 0; li < g.size(); ++li) {
                     FloatParams& p = model.params[li];
                     for (std::size_t j = 0; j < g[li].weights.size(); ++j) {
                       p.weights[j] -= cfg.learning_rate * g[li].weights[j];
                     }
                     for (std::size_t j = 0; j < g[li].bias.size(); ++j) {
                       p.bias[j] -= cfg.learning_rate * g[li].bias[j];
                     }
                   }
                 });
    result.epochs.push_back({epoch, loss_sum / double(std::max<std::size_t>(batches, 1)),
                             EvaluateFloatAccuracy(model, eval)});
  }
  return result;
}

std::int64_t CountParityMismatches(const ModelGraph& model, const QTensor& input, int bits) {
  const ShadowModel shadow = MakeShadow(model, bits);
  const DTensor emulated = EmulatedForward(shadow, input);
  const QTensor reference = RunInteger(shadow.frozen, input);
  if (emulated.data.size() != reference.data.size()) return -1;
  std::int64_t mismatches = 0;
  for (std::size_t i = 0; i < emulated.data.size(); ++i) {
    mismatches += emulated.data[i] != static_cast<double>(reference.data[i]);
  }
  return mismatches;
}

}  // namespace rescale
