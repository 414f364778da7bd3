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
// Rescale-aware training: a binary64 replay of the integer graph with fake
// quantized weights, straight-through gradients, SGD fine-tuning of the
// integer weights at a fixed rescaler width, and float baseline training.

#ifndef RESCALE_LAB_TRAINER_H_
#define RESCALE_LAB_TRAINER_H_

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "rescale_lab/idx.h"
#include "rescale_lab/model.h"
#include "rescale_lab/tensor.h"

namespace rescale {

// Real-valued copies of the integer weights and biases next to a frozen
// graph whose scales, zero points and rescalers (at `bits`) never change.
struct ShadowModel {
  ModelGraph frozen;
  std::vector<FloatParams> params;
  int bits = kMaxRescalerBits;
};

// Casts the integers to binary64 (no dequantization). Rescalers are
// materialized at `bits`.
ShadowModel MakeShadow(const ModelGraph& model, int bits);

enum class TrainMode { kFinetuneInt, kFloatBaseline };

// Defaults of the float baseline run (the fine-tuning defaults live in
// TrainConfig).
inline constexpr double kFloatBaselineLearningRate = 0.1;
inline constexpr int kFloatBaselineEpochs = 3;

struct TrainConfig {
  double learning_rate = 0.01;
  int epochs = 2;
  int batch_size = 32;
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::kFinetuneInt;
  bool train_bias = true;
};

void ValidateTrainConfig(const TrainConfig& cfg);

enum class EmulationMode {
  kInteger,          // bit-exact replay of the integer kernels
  kSmoothSurrogate,  // rounding removed, weights used as given
};

struct EmulatedLayerCache {
  DTensor input;                 // integer-valued input of the layer
  std::vector<double> weights;   // fake-quantized weights
  DTensor pre_clamp;             // rescaled value + zero point, before saturation
  double clamp_lo = -128.0;
  double clamp_hi = 127.0;
};

struct EmulatedCache {
  std::vector<EmulatedLayerCache> layers;
};

// Replays every integer step in binary64. In kInteger mode the result holds
// exactly the int8 values the kernels produce. Throws OverflowEnvelopeError
// when an accumulator or effective bias leaves int32.
DTensor EmulatedForward(const ShadowModel& shadow, const QTensor& input,
                        EmulationMode mode = EmulationMode::kInteger,
                        EmulatedCache* cache = nullptr);

// Integer-valued emulated output as an int8 tensor.
QTensor ToQTensor(const DTensor& values, const QuantParams& params);

// d output / d input of a rescale node: the quantized multiplier itself.
double RescaleNodeGradient(const DyadicRescaler& rescaler);

// Backpropagates d loss / d (int8 output) through the cached graph with
// identity gradients for rounding and clipped ones for saturation.
std::vector<FloatParams> SteBackward(const ShadowModel& shadow, const EmulatedCache& cache,
                                     const DTensor& upstream);

// Mean cross-entropy over dequantized logits; `grad` receives d loss / d y_q.
double DequantizedCrossEntropy(const DTensor& logits_q, const QuantParams& params,
                               std::span<const std::uint8_t> labels, DTensor* grad);

struct WeightChangeStats {
  std::int64_t total_weights = 0;
  std::int64_t changed_weights = 0;
  double changed_ratio = 0.0;
  double mean_abs_diff = 0.0;  // over changed weights, integer units
  int layers_affected = 0;
  std::vector<std::map<int, std::int64_t>> histograms;  // per layer, delta -> count
  std::int64_t total_biases = 0;
  std::int64_t changed_biases = 0;
};

WeightChangeStats ComputeWeightChangeStats(const ModelGraph& original,
                                           const ModelGraph& retrained);

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double int_accuracy = 0.0;
};

struct FinetuneResult {
  ModelGraph model;
  WeightChangeStats stats;
  std::vector<EpochLog> epochs;
};

// SGD over the emulated graph at width `bits`; after every epoch the shadow
// weights are redeployed and evaluated on `eval` with the integer engine.
FinetuneResult Finetune(const ModelGraph& model, const Dataset& train, const Dataset& eval,
                        const TrainConfig& cfg, int bits);

struct FloatTrainResult {
  FloatModel model;
  std::vector<EpochLog> epochs;  // int_accuracy holds the float test accuracy
};

FloatModel InitFloatModel(const Architecture& arch, std::uint64_t seed);

FloatTrainResult TrainFloat(const Architecture& arch, const Dataset& train,
                            const Dataset& eval, const TrainConfig& cfg);

double EvaluateFloatAccuracy(const FloatModel& model, const Dataset& data,
                             std::size_t batch_size = 500);

// Number of int8 outputs on which the emulated path and the integer engine
// disagree at width `bits`.
std::int64_t CountParityMismatches(const ModelGraph& model, const QTensor& input, int bits);

}  // namespace rescale

#endif  // RESCALE_LAB_TRAINER_H_
