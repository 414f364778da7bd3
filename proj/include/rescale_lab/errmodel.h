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
// Rescale error model: accumulator, output and rescale errors, the
// mismatch + rounding decomposition of the rescale error, its bound, and
// per-layer reports over probe data.

#ifndef RESCALE_LAB_ERRMODEL_H_
#define RESCALE_LAB_ERRMODEL_H_

#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "rescale_lab/model.h"
#include "rescale_lab/qcore.h"
#include "rescale_lab/tensor.h"

namespace rescale {

// a - s_x * s_w * a_q.
double AccumulatorError(double a, std::int32_t a_q, double s_x, double s_w);

// y - s_y * clamp(y_q_raw, sat_lo, sat_hi).
double OutputError(double y, std::int32_t y_q_raw, double s_y, std::int32_t sat_lo,
                   std::int32_t sat_hi);

struct ErrorStats {
  double eps_a = 0.0;
  double eps_y = 0.0;
  double eps_r = 0.0;    // eps_a - eps_y
  double delta_r = 0.0;  // rounding residual in units of s_y
};

// Errors of one rescaled accumulator whose true (real) value is `a`, taking
// the no-saturation view y = a.
ErrorStats MeasureErrors(double a, std::int32_t a_q, double s_x, double s_w,
                         const DyadicRescaler& rescaler, double s_y, std::int32_t sat_lo,
                         std::int32_t sat_hi);

// Exact decomposition of the rescale error of q = MBQM(a_q) against the
// real-M path, in units of s_y * 2^-frac_bits:
//   total    = q * 2^T - a_q * M        (eps_r)
//   mismatch = a_q * (M_q - M)
//   rounding = q * 2^T - a_q * M_q      (delta_r)
// M and M_q are both integers at this common scale, so total == mismatch +
// rounding holds in integer arithmetic.
struct RescaleErrorTerms {
  std::int32_t rescaled = 0;  // q
  int frac_bits = 0;          // T
  __int128 mismatch_units = 0;
  __int128 rounding_units = 0;
  __int128 total_units = 0;
  // Real-valued views, rounded once from the exact units.
  double mismatch = 0.0;  // s_y * a_q * (M_q - M)
  double delta_r = 0.0;   // in units of s_y
  double eps_r = 0.0;     // s_y * (q - a_q * M)
};

// Uses r.real_value as M. Throws DomainError when M and M_q do not share a
// common scale of at most 2^-90 (only possible for clamp-policy rescalers).
RescaleErrorTerms DecomposeRescaleError(std::int32_t a_q, const DyadicRescaler& r,
                                        double s_y);

// |M_q - M| * s_y * max_abs_acc + s_y / 2.
double RescaleErrorBound(const DyadicRescaler& r, double s_y, std::int64_t max_abs_acc);

// Exact comparisons at the common scale of M and M_q.
// |eps_r| <= |M_q - M| * s_y * max_abs_acc + s_y / 2.
bool WithinRescaleErrorBound(const RescaleErrorTerms& terms, const DyadicRescaler& r,
                             std::int64_t max_abs_acc);
// |M_q - M| * max_abs_acc <= 1/2.
bool MismatchWithinRoundingFloor(const DyadicRescaler& r, std::int64_t max_abs_acc);

struct SafeBitwidth {
  int bits = kMaxRescalerBits;
  bool satisfied = false;  // false when even 32 bits miss the condition
};

// Smallest k in [2, 32] with |M_q(k) - M| * max_abs_acc <= 1/2.
SafeBitwidth MinSafeBitwidth(double m_real, std::int64_t max_abs_acc);

struct ChannelErrorReport {
  int channel = 0;
  DyadicRescaler rescaler;
  double abs_mismatch = 0.0;             // |M_q - M|
  std::int64_t max_abs_acc = 0;          // observed on the probe set
  std::int64_t analytic_max_abs_acc = 0; // worst case over all int8 inputs
  double mismatch_bound = 0.0;           // |M_q - M| * s_y * max_abs_acc
  double rounding_floor = 0.0;           // s_y / 2
  bool safe = false;                     // mismatch_bound <= rounding_floor
};

struct LayerErrorReport {
  std::size_t layer = 0;
  LayerKind kind = LayerKind::kDense;
  double output_scale = 0.0;
  std::vector<ChannelErrorReport> channels;

  bool safe() const;
};

// Runs the probes through the model at k and reports one layer. Avgpool
// layers report their single rescaler as channel 0. Throws DomainError on an
// empty probe set or a layer without rescalers.
LayerErrorReport AnalyzeLayer(const ModelGraph& model, std::size_t layer,
                              std::span<const QTensor> probes, int k);

// Reports for every layer that rescales.
std::vector<LayerErrorReport> AnalyzeModel(const ModelGraph& model,
                                           std::span<const QTensor> probes, int k);

// Columns: layer, channel, M, k, m, s, mismatch_bound, rounding_floor, safe.
void WriteErrorReportCsv(std::ostream& out, std::span<const LayerErrorReport> reports);

}  // namespace rescale

#endif  // RESCALE_LAB_ERRMODEL_H_
