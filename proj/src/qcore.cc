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
#include "rescale_lab/qcore.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <iostream>
#include <limits>
#include <string>

#include "rescale_lab/errors.h"

namespace rescale {
namespace {

constexpr int kMantissaBits = 52;
constexpr std::uint64_t kMantissaMask = (std::uint64_t{1} << kMantissaBits) - 1;
constexpr int kExponentBias = 1023;

struct RawFields {
  std::uint64_t mantissa;
  int biased_exponent;
  bool negative;
};

RawFields ReadFields(double value) {
  const auto bits = std::bit_cast<std::uint64_t>(value);
  return {bits & kMantissaMask, static_cast<int>((bits >> kMantissaBits) & 0x7ff),
          (bits >> 63) != 0};
}

void CheckRescaleDomain(double value) {
  if (!std::isnormal(value) || value <= 0.0 || value > 1.0) {
    throw DomainError("rescale factor must be a normal binary64 in (0, 1], got " +
                      std::to_string(value));
  }
}

void CheckBits(int bits) {
  if (bits < kMinRescalerBits || bits > kMaxRescalerBits) {
    throw DomainError("rescaler bit-width must be in [2, 32], got " +
                      std::to_string(bits));
  }
}

}  // namespace

void ValidateQuantParams(const QuantParams& params, bool symmetric) {
  if (!std::isnormal(params.scale) || params.scale <= 0.0) {
    throw DomainError("quantization scale must be positive and normal");
  }
  if (params.zero_point < -128 || params.zero_point > 127) {
    throw DomainError("zero point outside int8 range: " +
                      std::to_string(params.zero_point));
  }
  if (symmetric && params.zero_point != 0) {
    throw DomainError("symmetric tensor with non-zero zero point");
  }
}

FloatDecomposition DecomposeFloat(double value) {
  CheckRescaleDomain(value);
  const RawFields fields = ReadFields(value);
  return {std::ldexp(static_cast<double>(fields.mantissa), -kMantissaBits),
          fields.biased_exponent - kExponentBias};
}

DyadicRescaler QuantizeRescaler(double real_value, int bits,
                                UnderflowPolicy policy) {
  CheckRescaleDomain(real_value);
  CheckBits(bits);
  const RawFields fields = ReadFields(real_value);
  const int exponent = fields.biased_exponent - kExponentBias;

  const int kept = bits - 1;
  std::uint64_t multiplier = (std::uint64_t{1} << kept) |
                             (fields.mantissa >> (kMantissaBits - kept));
  std::int64_t shift = kept - exponent;

  const int max_shift = MaxRescalerShift(bits);
  if (shift > max_shift) {
    if (policy == UnderflowPolicy::kError) {
      throw RescalerUnderflow(
          "rescale factor " + std::to_string(real_value) + " needs shift " +
          std::to_string(shift) + " > " + std::to_string(max_shift) +
          " at k=" + std::to_string(bits));
    }
    const std::int64_t excess = shift - max_shift;
    std::cerr << "warning: clamping rescaler shift " << shift << " to "
              << max_shift << " (k=" << bits << ")\n";
    multiplier = excess >= 64 ? 0 : multiplier >> excess;
    shift = max_shift;
  }
  return {static_cast<std::uint32_t>(multiplier),
          static_cast<std::uint32_t>(shift), bits, real_value};
}

void ValidateRescaler(const DyadicRescaler& rescaler) {
  CheckBits(rescaler.bits);
  CheckRescaleDomain(rescaler.real_value);
  const std::uint64_t lead = std::uint64_t{1} << (rescaler.bits - 1);
  if (rescaler.multiplier < lead ||
      rescaler.multiplier > (lead << 1) - 1) {
    throw DomainError("rescaler multiplier lacks its leading bit");
  }
  if (rescaler.shift < 1 ||
      rescaler.shift > static_cast<std::uint32_t>(MaxRescalerShift(rescaler.bits))) {
    throw DomainError("rescaler shift out of range");
  }
  DyadicRescaler expected;
  try {
    expected = QuantizeRescaler(rescaler.real_value, rescaler.bits);
  } catch (const RescalerUnderflow& e) {
    throw DomainError(e.what());
  }
  if (expected.multiplier != rescaler.multiplier ||
      expected.shift != rescaler.shift) {
    throw DomainError("rescaler (m, s) does not match its real value at k=" +
                      std::to_string(rescaler.bits));
  }
}

std::int32_t MultiplyByQuantizedMultiplier(std::int32_t x,
                                           std::uint32_t multiplier, int shift) {
  const std::int64_t product =
      static_cast<std::int64_t>(x) * static_cast<std::int64_t>(multiplier);
  std::int64_t result;
  if (shift <= 0) {
    result = product << -shift;
  } else {
    // floor((p + 2^(s-1)) / 2^s) == (floor(p / 2^(s-1)) + 1) >> 1, which keeps
    // the rounding add from overflowing when the product uses all 63 bits.
    result = ((product >> (shift - 1)) + 1) >> 1;
  }
  result = std::clamp<std::int64_t>(result, std::numeric_limits<std::int32_t>::min(),
                                    std::numeric_limits<std::int32_t>::max());
  return static_cast<std::int32_t>(result);
}

std::int8_t SaturateInt8(std::int32_t value, std::int8_t lo, std::int8_t hi) {
  return static_cast<std::int8_t>(std::clamp<std::int32_t>(value, lo, hi));
}

std::int8_t Requantize(std::int32_t acc, const DyadicRescaler& rescaler,
                       std::int32_t z_out, std::int8_t lo, std::int8_t hi) {
  const std::int64_t shifted =
      static_cast<std::int64_t>(MultiplyByQuantizedMultiplier(acc, rescaler)) +
      z_out;
  return static_cast<std::int8_t>(std::clamp<std::int64_t>(shifted, lo, hi));
}

double RoundHalfUp(double x) {
  if (!std::isfinite(x)) return x;
  const double lower = std::floor(x);
  return (x - lower >= 0.5) ? lower + 1.0 : lower;
}

std::int8_t QuantizeReal(double real, const QuantParams& params) {
  const double q = RoundHalfUp(real / params.scale) + params.zero_point;
  return static_cast<std::int8_t>(std::clamp(q, -128.0, 127.0));
}

}  // namespace rescale
