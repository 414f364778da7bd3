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
#include "rescale_lab/sweep.h"

#include <cstdio>
#include <set>

#include "rescale_lab/engine.h"
#include "rescale_lab/errors.h"
#include "rescale_lab/model_io.h"

namespace rescale {

std::optional<int> DegradationPoint(double base, const std::map<int, double>& per_k,
                                    double threshold) {
  for (auto it = per_k.rbegin(); it != per_k.rend(); ++it) {
    if (base - it->second > threshold) return it->first;
  }
  return std::nullopt;
}

SweepResult RunSweep(const ModelGraph& model, const Dataset& data, std::span<const int> bits,
                     double threshold) {
  std::set<int> seen;
  for (int k : bits) {
    if (k < kMinRescalerBits || k > kMaxRescalerBits) {
      throw UsageError("rescaler width " + std::to_string(k) + " outside [2, 32]");
    }
    if (!seen.insert(k).second) throw UsageError("duplicate width " + std::to_string(k));
  }
  SweepResult result;
  result.baseline = 100.0 * EvaluateAccuracy(MaterializeRescalers(model, kMaxRescalerBits), data);
  std::map<int, double> per_k;
  for (int k : bits) {
    SweepRow row;
    row.bits = k;
    try {
      const double acc = k == kMaxRescalerBits
                             ? result.baseline
                             : 100.0 * EvaluateAccuracy(MaterializeRescalers(model, k), data);
      row.accuracy = acc;
      per_k[k] = acc;
    } catch (const RescalerUnderflow& e) {
      row.note = std::string("underflow: ") + e.what();
    }
    result.rows.push_back(std::move(row));
  }
  result.degradation_point = DegradationPoint(result.baseline, per_k, threshold);
  return result;
}

void WriteSweepCsv(std::ostream& out, const SweepResult& result) {
  out << "k,accuracy,delta_vs_base\n";
  char line[128];
  for (const SweepRow& row : result.rows) {
    if (row.accuracy) {
      std::snprintf(line, sizeof(line), "%d,%.4f,%.4f\n", row.bits, *row.accuracy,
                    *row.accuracy - result.baseline);
    } else {
      std::snprintf(line, sizeof(line), "%d,underflow,\n", row.bits);
    }
    out << line;
  }
  out << "# degradation_point="
      << (result.degradation_point ? std::to_string(*result.degradation_point) : "none")
      << "\n";
}

}  // namespace rescale
