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
#include "rescale_lab/errmodel.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "rescale_lab/engine.h"
#include "rescale_lab/errors.h"
#include "rescale_lab/kernels.h"
#include "rescale_lab/model_io.h"

namespace rescale {
namespace {

constexpr int kMaxFracBits = 90;

__int128 Abs(__int128 v) { return v < 0 ? -v : v; }

// M = mantissa * 2^-frac_bits and M_q = m * 2^-shift brought to one scale.
struct CommonScale {
  int frac_bits = 0;
  __int128 m_units = 0;   // M * 2^T
  __int128 mq_units = 0;  // M_q * 2^T
};

CommonScale ToCommonScale(const DyadicRescaler& r) {
  const FloatDecomposition d = DecomposeFloat(r.real_value);
  const std::uint64_t mantissa =
      (std::bit_cast<std::uint64_t>(r.real_value) & ((std::uint64_t{1} << 52) - 1)) |
      (std::uint64_t{1} << 52);
  const int t = 52 - d.exponent;
  const int shift = static_cast<int>(r.shift);
  const int common = std::max(t, shift);
  if (common > kMaxFracBits) {
    throw DomainError("rescaler scale 2^-" + std::to_string(common) +
                      " is too fine for the exact error model");
  }
  CommonScale c;
  c.frac_bits = common;
  c.m_units = static_cast<__int128>(mantissa) << (common - t);
  c.mq_units = static_cast<__int128>(r.multiplier) << (common - shift);
  return c;
}

double ToDouble(__int128 units, int frac_bits) {
  return std::ldexp(static_cast<double>(units), -frac_bits);
}

std::int64_t AnalyticMaxAbsAcc(const ModelGraph& model, std::size_t index, int channel) {
  const LayerSpec& layer = model.layers[index];
  const QuantParams in = LayerInputParams(model, index);
  const std::int64_t x_peak = std::max(std::abs(-128 - in.zero_point),
                                       std::abs(127 - in.zero_point));
  if (layer.config.kind == LayerKind::kAvgPool) {
    return std::int64_t{layer.config.window.h} * layer.config.window.w * 128;
  }
  const QTensor& w = layer.weights;
  const bool channel_last = layer.config.kind == LayerKind::kDepthwiseConv2D;
  const std::int64_t channels = channel_last ? w.shape.back() : w.shape.front();
  const std::int64_t per_channel = static_cast<std::int64_t>(w.data.size()) / channels;
  std::int64_t sum = 0;
  for (std::int64_t j = 0; j < per_channel; ++j) {
    const std::int64_t idx = channel_last ? j * channels + channel : channel * per_channel + j;
    sum += std::abs(static_cast<std::int64_t>(w.data[idx]));
  }
  return sum * x_peak + std::abs(static_cast<std::int64_t>(layer.bias[channel]));
}

}  // namespace

double AccumulatorError(double a, std::int32_t a_q, double s_x, double s_w) {
  return a - s_x * s_w * a_q;
}

double OutputError(double y, std::int32_t y_q_raw, double s_y, std::int32_t sat_lo,
                   std::int32_t sat_hi) {
  return y - s_y * std::clamp(y_q_raw, sat_lo, sat_hi);
}

ErrorStats MeasureErrors(double a, std::int32_t a_q, double s_x, double s_w,
                         const DyadicRescaler& rescaler, double s_y, std::int32_t sat_lo,
                         std::int32_t sat_hi) {
  ErrorStats stats;
  stats.eps_a = AccumulatorError(a, a_q, s_x, s_w);
  stats.eps_y = OutputError(a, MultiplyByQuantizedMultiplier(a_q, rescaler), s_y, sat_lo,
                            sat_hi);
  stats.eps_r = stats.eps_a - stats.eps_y;
  stats.delta_r = DecomposeRescaleError(a_q, rescaler, s_y).delta_r;
  return stats;
}

RescaleErrorTerms DecomposeRescaleError(std::int32_t a_q, const DyadicRescaler& r,
                                        double s_y) {
  const CommonScale c = ToCommonScale(r);
  RescaleErrorTerms terms;
  terms.rescaled = MultiplyByQuantizedMultiplier(a_q, r);
  terms.frac_bits = c.frac_bits;
  const __int128 q_units = static_cast<__int128>(terms.rescaled) << c.frac_bits;
  terms.mismatch_units = a_q * (c.mq_units - c.m_units);
  terms.rounding_units = q_units - a_q * c.mq_units;
  terms.total_units = q_units - a_q * c.m_units;
  terms.mismatch = s_y * ToDouble(terms.mismatch_units, c.frac_bits);
  terms.delta_r = ToDouble(terms.rounding_units, c.frac_bits);
  terms.eps_r = s_y * ToDouble(terms.total_units, c.frac_bits);
  return terms;
}

double RescaleErrorBound(const DyadicRescaler& r, double s_y, std::int64_t max_abs_acc) {
  const CommonScale c = ToCommonScale(r);
  const double gap = ToDouble(Abs(c.mq_units - c.m_units), c.frac_bits);
  return gap * s_y * static_cast<double>(max_abs_acc) + s_y / 2;
}

bool WithinRescaleErrorBound(const RescaleErrorTerms& terms, const DyadicRescaler& r,
                             std::int64_t max_abs_acc) {
  const CommonScale c = ToCommonScale(r);
  if (c.frac_bits != terms.frac_bits) throw DomainError("terms belong to another rescaler");
  // Units of s_y * 2^-(T+1) so the half is an integer.
  const __int128 bound =
      2 * Abs(c.mq_units - c.m_units) * max_abs_acc + (static_cast<__int128>(1) << c.frac_bits);
  return 2 * Abs(terms.total_units) <= bound;
}

bool MismatchWithinRoundingFloor(const DyadicRescaler& r, std::int64_t max_abs_acc) {
  const CommonScale c = ToCommonScale(r);
  return 2 * Abs(c.mq_units - c.m_units) * max_abs_acc <=
         (static_cast<__int128>(1) << c.frac_bits);
}

SafeBitwidth MinSafeBitwidth(double m_real, std::int64_t max_abs_acc) {
  if (max_abs_acc < 0) throw DomainError("max_abs_acc must be non-negative");
  for (int k = kMinRescalerBits; k <= kMaxRescalerBits; ++k) {
    DyadicRescaler r;
    try {
      r = QuantizeRescaler(m_real, k);
    } catch (const RescalerUnderflow&) {
      continue;
    }
    if (MismatchWithinRoundingFloor(r, max_abs_acc)) return {k, true};
  }
  return {kMaxRescalerBits, false};
}

bool LayerErrorReport::safe() const {
  return std::all_of(channels.begin(), channels.end(),
                     [](const ChannelErrorReport& c) { return c.safe; });
}

LayerErrorReport AnalyzeLayer(const ModelGraph& model, std::size_t layer,
                              std::span<const QTensor> probes, int k) {
  if (probes.empty()) throw DomainError("error analysis needs a non-empty probe set");
  if (layer >= model.layers.size()) throw DomainError("layer index out of range");
  const LayerSpec& spec = model.layers[layer];
  if (spec.rescalers.empty()) {
    throw DomainError("layer " + std::to_string(layer) + " has no rescalers");
  }
  const ModelGraph at_k = MaterializeRescalers(model, k);
  const std::size_t channels = spec.rescalers.size();
  std::vector<std::int64_t> peak(channels, 0);
  for (const QTensor& batch : probes) {
    IntegerTrace trace;
    RunInteger(at_k, batch, &trace);
    const AccTensor& acc = trace.accumulators[layer];
    const std::size_t width = static_cast<std::size_t>(acc.shape.back());
    for (std::size_t i = 0; i < acc.data.size(); ++i) {
      const std::size_t c = channels == 1 ? 0 : i % width;
      peak[c] = std::max(peak[c], std::abs(static_cast<std::int64_t>(acc.data[i])));
    }
  }
  LayerErrorReport report;
  report.layer = layer;
  report.kind = spec.config.kind;
  report.output_scale = spec.output.scale;
  for (std::size_t c = 0; c < channels; ++c) {
    ChannelErrorReport ch;
    ch.channel = static_cast<int>(c);
    ch.rescaler = at_k.layers[layer].rescalers[c];
    ch.abs_mismatch = std::fabs(ch.rescaler.QuantizedValue() - ch.rescaler.real_value);
    ch.max_abs_acc = peak[c];
    ch.analytic_max_abs_acc = AnalyticMaxAbsAcc(model, layer, static_cast<int>(c));
    ch.mismatch_bound = ch.abs_mismatch * spec.output.scale * static_cast<double>(peak[c]);
    ch.rounding_floor = spec.output.scale / 2;
    ch.safe = MismatchWithinRoundingFloor(ch.rescaler, peak[c]);
    report.channels.push_back(ch);
  }
  return report;
}

std::vector<LayerErrorReport> AnalyzeModel(const ModelGraph& model,
                                           std::span<const QTensor> probes, int k) {
  std::vector<LayerErrorReport> reports;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    if (!model.layers[i].rescalers.empty()) reports.push_back(AnalyzeLayer(model, i, probes, k));
  }
  return reports;
}

void WriteErrorReportCsv(std::ostream& out, std::span<const LayerErrorReport> reports) {
  out << "layer,channel,M,k,m,s,mismatch_bound,rounding_floor,safe\n";
  char line[256];
  for (const LayerErrorReport& report : reports) {
    for (const ChannelErrorReport& c : report.channels) {
      std::snprintf(line, sizeof(line), "%zu,%d,%.17g,%d,%u,%u,%.17g,%.17g,%d\n",
                    report.layer, c.channel, c.rescaler.real_value, c.rescaler.bits,
                    c.rescaler.multiplier, c.rescaler.shift, c.mismatch_bound,
                    c.rounding_floor, c.safe ? 1 : 0);
      out << line;
    }
  }
}

}  // namespace rescale
