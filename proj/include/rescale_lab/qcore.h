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
// Fixed-point quantization primitives: dyadic rescaler construction straight
// from the binary64 bit fields, the integer rescale operation and int8
// saturation.

#ifndef RESCALE_LAB_QCORE_H_
#define RESCALE_LAB_QCORE_H_

#include <cmath>
#include <cstdint>

namespace rescale {

// Affine quantization parameters: real = scale * (q - zero_point).
struct QuantParams {
  double scale = 1.0;
  std::int32_t zero_point = 0;

  friend bool operator==(const QuantParams&, const QuantParams&) = default;
};

// Throws DomainError unless scale is a positive normal number and the zero
// point lies in the int8 range (and is 0 when `symmetric`).
void ValidateQuantParams(const QuantParams& params, bool symmetric = false);

// value == (1 + fraction) * 2^exponent.
struct FloatDecomposition {
  double fraction = 0.0;
  int exponent = 0;
};

// Splits a normal binary64 in (0, 1] into mantissa fraction and exponent by
// reading the IEEE-754 fields. Throws DomainError outside that domain.
FloatDecomposition DecomposeFloat(double value);

inline constexpr int kMinRescalerBits = 2;
inline constexpr int kMaxRescalerBits = 32;

// Largest right shift that can still land a 32 + k bit product in int8.
constexpr int MaxRescalerShift(int bits) { return 32 + bits - 8; }

// M_q = multiplier * 2^-shift approximates real_value with a `bits`-wide
// multiplier whose leading bit is set.
struct DyadicRescaler {
  std::uint32_t multiplier = 0;
  std::uint32_t shift = 0;
  int bits = 0;
  double real_value = 0.0;

  double QuantizedValue() const {
    return std::ldexp(static_cast<double>(multiplier),
                      -static_cast<int>(shift));
  }

  friend bool operator==(const DyadicRescaler&,
                         const DyadicRescaler&) = default;
};

enum class UnderflowPolicy {
  kError,  // throw RescalerUnderflow
  kClamp,  // warn, pin shift to its budget and drop low multiplier bits
};

// Builds the k-bit rescaler for `real_value` by appending the top (k - 1)
// mantissa bits to the hidden bit (truncation, so M_q <= M). The shift is
// (k - 1) - exponent.
//
// Throws DomainError for M outside (0, 1], non-normal M, or k outside
// [2, 32]; RescalerUnderflow when the shift exceeds 32 + k - 8 under
// UnderflowPolicy::kError.
DyadicRescaler QuantizeRescaler(double real_value, int bits,
                                UnderflowPolicy policy = UnderflowPolicy::kError);

// Checks every invariant of a rescaler produced with UnderflowPolicy::kError,
// including that multiplier/shift are exactly what QuantizeRescaler yields
// for (real_value, bits). Throws DomainError on violation.
void ValidateRescaler(const DyadicRescaler& rescaler);

// floor((x * multiplier + 2^(shift - 1)) * 2^-shift) in a signed 64-bit
// intermediate, saturated to int32. Halves round toward +inf.
std::int32_t MultiplyByQuantizedMultiplier(std::int32_t x,
                                           std::uint32_t multiplier, int shift);

inline std::int32_t MultiplyByQuantizedMultiplier(
    std::int32_t x, const DyadicRescaler& rescaler) {
  return MultiplyByQuantizedMultiplier(x, rescaler.multiplier,
                                       static_cast<int>(rescaler.shift));
}

std::int8_t SaturateInt8(std::int32_t value, std::int8_t lo = -128,
                         std::int8_t hi = 127);

// Sat(MultiplyByQuantizedMultiplier(acc) + z_out, lo, hi).
std::int8_t Requantize(std::int32_t acc, const DyadicRescaler& rescaler,
                       std::int32_t z_out, std::int8_t lo = -128,
                       std::int8_t hi = 127);

// floor(x + 1/2), computed without the double rounding of `x + 0.5`.
double RoundHalfUp(double x);

// clamp(RoundHalfUp(real / scale) + zero_point, -128, 127).
std::int8_t QuantizeReal(double real, const QuantParams& params);

}  // namespace rescale

#endif  // RESCALE_LAB_QCORE_H_
