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
// Accuracy sweeps over rescaler widths.

#ifndef RESCALE_LAB_SWEEP_H_
#define RESCALE_LAB_SWEEP_H_

#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "rescale_lab/idx.h"
#include "rescale_lab/model.h"

namespace rescale {

inline constexpr double kDefaultDegradationThreshold = 0.5;  // percentage points

struct SweepRow {
  int bits = 0;
  std::optional<double> accuracy;  // percent; empty when the rescalers underflow
  std::string note;
};

struct SweepResult {
  double baseline = 0.0;  // percent at k = 32
  std::vector<SweepRow> rows;
  std::optional<int> degradation_point;
};

// Largest k whose accuracy is more than `threshold` below `base` (scanning the
// widths downward); empty when no width fails.
std::optional<int> DegradationPoint(double base, const std::map<int, double>& per_k,
                                    double threshold = kDefaultDegradationThreshold);

// Materializes and evaluates the model at every width in `bits` (in order).
SweepResult RunSweep(const ModelGraph& model, const Dataset& data, std::span<const int> bits,
                     double threshold = kDefaultDegradationThreshold);

// "k,accuracy,delta_vs_base" rows plus a trailing "# degradation_point=" line.
void WriteSweepCsv(std::ostream& out, const SweepResult& result);

}  // namespace rescale

#endif  // RESCALE_LAB_SWEEP_H_
