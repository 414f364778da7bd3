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
// Independent reference implementations and random model builders shared by
// the test binaries. Nothing here calls the kernels under test.

#ifndef RESCALE_LAB_TESTS_TEST_SUPPORT_H_
#define RESCALE_LAB_TESTS_TEST_SUPPORT_H_

#include <algorithm>
#include <boost/multiprecision/cpp_int.hpp>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "rescale_lab/model.h"
#include "rescale_lab/qcore.h"
#include "rescale_lab/tensor.h"
#include "rescale_lab/trainer.h"

namespace rescale::testing {

using BigInt = boost::multiprecision::cpp_int;

// floor(n / 2^s) for any sign.
using Rational = boost::multiprecision::cpp_rational;

// Exact value of a finite double.
inline Rational ExactRational(double v) {
  if (v == 0) return 0;
  int e = 0;
  const double f = std::frexp(v, &e);
  Rational r(BigInt(static_cast<std::int64_t>(std::ldexp(f, 53))));
  const int shift = e - 53;
  if (shift >= 0) return r * Rational(BigInt(1) << shift);
  return r / Rational(BigInt(1) << -shift);
}

inline Rational DyadicRational(std::uint64_t m, int s) {
  return Rational(BigInt(m)) / Rational(BigInt(1) << s);
}

// A signed 128-bit count of 2^-frac_bits units.
inline Rational UnitsRational(__int128 v, int frac_bits) {
  const bool neg = v < 0;
  const unsigned __int128 mag = neg ? -static_cast<unsigned __int128>(v) : v;
  BigInt b = static_cast<std::uint64_t>(mag >> 64);
  b = (b << 64) + static_cast<std::uint64_t>(mag);
  if (neg) b = -b;
  return Rational(b) / Rational(BigInt(1) << frac_bits);
}

inline BigInt FloorShift(const BigInt& n, unsigned s) {
  const BigInt d = BigInt(1) << s;
  BigInt q = n / d;  // truncates toward zero
  if (n < 0 && q * d != n) q -= 1;
  return q;
}

// Round-half-up of x * m / 2^s, saturated to int32.
inline std::int32_t OracleRescale(std::int64_t x, std::uint64_t m, unsigned s) {
  BigInt q = FloorShift(BigInt(x) * m + (BigInt(1) << (s - 1)), s);
  if (q > INT32_MAX) return INT32_MAX;
  if (q < INT32_MIN) return INT32_MIN;
  return static_cast<std::int32_t>(q);
}

// Exact (m, s) for real in (0, 1] at k bits from its binary expansion: the k
// leading significant bits, truncated.
inline void OracleRescaler(double real, int k, std::uint64_t* m, int* s) {
  int e = 0;
  double frac = std::frexp(real, &e);  // real = frac * 2^e, frac in [0.5, 1)
  std::uint64_t bits = 0;
  for (int i = 0; i < k; ++i) {
    frac *= 2.0;
    const int bit = frac >= 1.0 ? 1 : 0;
    frac -= bit;
    bits = (bits << 1) | static_cast<std::uint64_t>(bit);
  }
  *m = bits;
  *s = k - e;
}

inline std::int32_t OracleClamp(std::int64_t v, std::int64_t lo, std::int64_t hi) {
  return static_cast<std::int32_t>(std::min(std::max(v, lo), hi));
}

// Direct integer evaluation of one layer from its definition:
// acc = b + sum (x - z_x) * w over in-bounds taps, y = clamp(rescale(acc) + z_y).
struct OracleLayerOutput {
  Shape shape;
  std::vector<std::int64_t> acc;
  std::vector<std::int8_t> out;
};

inline OracleLayerOutput OracleLayer(const LayerSpec& layer, const QTensor& x) {
  const LayerConfig& c = layer.config;
  OracleLayerOutput r;
  const std::int64_t zx = x.zero_point;
  auto clamp_bounds = [&](std::int64_t* lo, std::int64_t* hi) {
    *lo = -128;
    *hi = 127;
    if (c.activation == Activation::kNone) return;
    *lo = layer.output.zero_point;
    if (c.activation == Activation::kRelu6) {
      const double six = std::floor(6.0 / layer.output.scale + 0.5);
      *hi = std::min<std::int64_t>(127, static_cast<std::int64_t>(
                                            std::min(six, 1e9)) + layer.output.zero_point);
    }
  };
  if (c.kind == LayerKind::kFlatten) {
    r.shape = {x.shape[0], NumElements(x.shape) / x.shape[0]};
    r.out = x.data;
    return r;
  }
  if (c.kind == LayerKind::kAvgPool) {
    const std::int64_t n = x.shape[0], h = x.shape[1], w = x.shape[2], ch = x.shape[3];
    const std::int64_t oh = h / c.window.h, ow = w / c.window.w;
    r.shape = {n, oh, ow, ch};
    const DyadicRescaler& d = layer.rescalers[0];
    for (std::int64_t b = 0; b < n; ++b)
      for (std::int64_t y = 0; y < oh; ++y)
        for (std::int64_t xx = 0; xx < ow; ++xx)
          for (std::int64_t k = 0; k < ch; ++k) {
            std::int64_t sum = 0;
            for (int dy = 0; dy < c.window.h; ++dy)
              for (int dx = 0; dx < c.window.w; ++dx)
                sum += x.data[((b * h + y * c.window.h + dy) * w + xx * c.window.w + dx) * ch + k];
            r.acc.push_back(sum);
            r.out.push_back(static_cast<std::int8_t>(
                OracleClamp(OracleRescale(sum, d.multiplier, d.shift), -128, 127)));
          }
    return r;
  }
  std::int64_t lo, hi;
  clamp_bounds(&lo, &hi);
  auto finish = [&](std::int64_t acc, std::size_t ch) {
    r.acc.push_back(acc);
    const DyadicRescaler& d = layer.rescalers[ch];
    const std::int64_t q = OracleRescale(acc, d.multiplier, d.shift);
    r.out.push_back(static_cast<std::int8_t>(OracleClamp(q + layer.output.zero_point, lo, hi)));
  };
  const auto& wq = layer.weights.data;
  if (c.kind == LayerKind::kDense) {
    const std::int64_t n = x.shape[0], in = x.shape[1], out = c.out_channels;
    r.shape = {n, out};
    for (std::int64_t b = 0; b < n; ++b)
      for (std::int64_t o = 0; o < out; ++o) {
        std::int64_t acc = layer.bias[o];
        for (std::int64_t i = 0; i < in; ++i) acc += (x.data[b * in + i] - zx) * wq[o * in + i];
        finish(acc, o);
      }
    return r;
  }
  const std::int64_t n = x.shape[0], h = x.shape[1], w = x.shape[2], cin = x.shape[3];
  const bool dw = c.kind == LayerKind::kDepthwiseConv2D;
  const std::int64_t cout = dw ? cin : c.out_channels;
  std::int64_t oh, ow, pt = 0, pl = 0;
  if (c.padding == Padding::kSame) {
    oh = (h + c.stride.h - 1) / c.stride.h;
    ow = (w + c.stride.w - 1) / c.stride.w;
    pt = std::max<std::int64_t>((oh - 1) * c.stride.h + c.kernel_h - h, 0) / 2;
    pl = std::max<std::int64_t>((ow - 1) * c.stride.w + c.kernel_w - w, 0) / 2;
  } else {
    oh = (h - c.kernel_h) / c.stride.h + 1;
    ow = (w - c.kernel_w) / c.stride.w + 1;
  }
  r.shape = {n, oh, ow, cout};
  for (std::int64_t b = 0; b < n; ++b)
    for (std::int64_t y = 0; y < oh; ++y)
      for (std::int64_t xx = 0; xx < ow; ++xx)
        for (std::int64_t o = 0; o < cout; ++o) {
          std::int64_t acc = layer.bias[o];
          for (int ky = 0; ky < c.kernel_h; ++ky)
            for (int kx = 0; kx < c.kernel_w; ++kx) {
              const std::int64_t iy = y * c.stride.h - pt + ky, ix = xx * c.stride.w - pl + kx;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              const std::int8_t* px = x.data.data() + ((b * h + iy) * w + ix) * cin;
              if (dw) {
                acc += (px[o] - zx) * wq[(ky * c.kernel_w + kx) * cin + o];
              } else {
                for (std::int64_t ci = 0; ci < cin; ++ci) {
                  acc += (px[ci] - zx) * wq[((o * c.kernel_h + ky) * c.kernel_w + kx) * cin + ci];
                }
              }
            }
          finish(acc, o);
        }
  return r;
}

// Runs OracleLayer through the whole graph.
inline std::vector<std::int8_t> OracleModel(const ModelGraph& model, const QTensor& input) {
  QTensor x = input;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    OracleLayerOutput r = OracleLayer(model.layers[i], x);
    x.shape = r.shape;
    x.data = std::move(r.out);
    x.zero_point = model.layers[i].output.zero_point;
    x.scales = {model.layers[i].output.scale};
  }
  return x.data;
}

inline double LogUniform(std::mt19937_64& rng, double lo, double hi) {
  return std::exp(std::uniform_real_distribution<double>(std::log(lo), std::log(hi))(rng));
}

// Random quantized parameters for `arch`: int8 weights, per-channel weight
// scales, biases, affine output parameters, and rescalers materialized at
// k = 32 from the real factors.
inline ModelGraph RandomModel(const Architecture& arch, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> weight(-127, 127), zp(-128, 127), bias(-3000, 3000);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  ModelGraph g;
  g.name = arch.name;
  g.input_shape = arch.input_shape;
  g.input = {LogUniform(rng, 1e-3, 1e-1), zp(rng)};
  const std::vector<Shape> shapes = ArchitectureShapes(arch);
  QuantParams in = g.input;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    LayerSpec l;
    l.config = arch.layers[i];
    if (l.config.kind == LayerKind::kFlatten) {
      l.output = in;
    } else if (l.config.kind == LayerKind::kAvgPool) {
      l.output = in;
      l.rescalers.push_back(
          QuantizeRescaler(1.0 / (double(l.config.window.h) * l.config.window.w), 32));
    } else {
      const Shape ws = WeightShape(l.config, shapes[i]);
      const std::int64_t channels = OutputChannels(l.config, shapes[i]);
      const std::int64_t macs = MacCount(l.config, shapes[i]);
      l.weights.shape = ws;
      l.weights.data.resize(NumElements(ws));
      for (auto& w : l.weights.data) w = static_cast<std::int8_t>(weight(rng));
      const double w_top = LogUniform(rng, 1e-3, 1e-1);
      for (std::int64_t c = 0; c < channels; ++c) {
        l.weights.scales.push_back(w_top * (0.25 + 0.75 * unit(rng)));
        l.bias.push_back(bias(rng));
      }
      // Typical |acc| ~ sqrt(macs) * 127 * 128 / 3; aim the output grid so a
      // fair share of values land inside int8 without saturating everything.
      const double typical = std::sqrt(double(macs)) * 127.0 * 128.0 / 3.0;
      const double target = typical / LogUniform(rng, 8.0, 256.0);
      const double sy = std::max(in.scale * w_top * target, in.scale * w_top);
      l.output = {sy, zp(rng)};
      for (std::int64_t c = 0; c < channels; ++c) {
        l.rescalers.push_back(
            QuantizeRescaler(RealRescaleFactor(in.scale, l.weights.scales[c], sy), 32));
      }
    }
    in = l.output;
    g.layers.push_back(std::move(l));
  }
  ValidateModel(g);
  return g;
}

// desk-cnn-v1 geometry with randomized activations and padding.
inline Architecture RandomDeskVariant(std::mt19937_64& rng) {
  Architecture arch = DeskCnnV1();
  std::uniform_int_distribution<int> act(0, 2), pad(0, 1);
  for (LayerConfig& c : arch.layers) {
    if (!c.has_weights()) continue;
    if (c.kind != LayerKind::kDense) {
      c.activation = static_cast<Activation>(act(rng));
      if (c.kernel_h > 1) c.padding = pad(rng) ? Padding::kSame : Padding::kValid;
    }
  }
  // VALID 3x3 layers shrink the map; keep pooling windows dividing it.
  const std::vector<Shape> probe = [&] {
    std::vector<Shape> s;
    Shape cur = arch.input_shape;
    for (const LayerConfig& c : arch.layers) {
      s.push_back(cur);
      if (c.kind == LayerKind::kAvgPool && (cur[0] % 2 || cur[1] % 2)) return s;
      cur = LayerOutputShape(c, cur);
    }
    return std::vector<Shape>{};
  }();
  if (!probe.empty()) {
    for (LayerConfig& c : arch.layers) {
      if (c.has_weights() && c.kind != LayerKind::kDense) c.padding = Padding::kSame;
    }
  }
  // Re-size the dense layer input implicitly: shapes are derived on demand.
  return arch;
}

inline QTensor RandomInput(const ModelGraph& model, std::int64_t batch, std::mt19937_64& rng) {
  Shape shape{batch};
  shape.insert(shape.end(), model.input_shape.begin(), model.input_shape.end());
  QTensor x{shape, std::vector<std::int8_t>(NumElements(shape)), {model.input.scale},
            model.input.zero_point};
  std::uniform_int_distribution<int> v(-128, 127);
  for (auto& e : x.data) e = static_cast<std::int8_t>(v(rng));
  return x;
}

// Compares SteBackward on the smooth surrogate against central differences of
// <upstream, output>. The surrogate is piecewise linear, so steps that change
// which clamp nodes are active are skipped rather than compared.
struct GradientCheck {
  double rel_error = 0.0;  // ||fd - analytic|| / ||fd|| over compared entries
  double fd_norm = 0.0;
  int compared = 0;
  int skipped = 0;
};

inline double SurrogateObjective(const ShadowModel& shadow, const QTensor& x,
                                 const DTensor& upstream, std::vector<bool>* mask) {
  EmulatedCache cache;
  const DTensor y = EmulatedForward(shadow, x, EmulationMode::kSmoothSurrogate, &cache);
  mask->clear();
  for (const EmulatedLayerCache& l : cache.layers) {
    for (double v : l.pre_clamp.data) mask->push_back(v >= l.clamp_lo && v <= l.clamp_hi);
  }
  double total = 0;
  for (std::size_t i = 0; i < y.data.size(); ++i) total += y.data[i] * upstream.data[i];
  return total;
}

// Probes at most `max_weight_probes` weights per layer (all if 0) and every bias.
inline GradientCheck CheckSurrogateGradient(const ShadowModel& shadow, const QTensor& x,
                                            std::mt19937_64& rng, int max_weight_probes = 0,
                                            double h = 1e-2) {
  std::normal_distribution<double> normal(0.0, 1.0);
  EmulatedCache cache;
  const DTensor y = EmulatedForward(shadow, x, EmulationMode::kSmoothSurrogate, &cache);
  DTensor upstream(y.shape);
  for (double& v : upstream.data) v = normal(rng);
  const std::vector<FloatParams> g = SteBackward(shadow, cache, upstream);

  GradientCheck out;
  double num2 = 0, err2 = 0;
  auto probe = [&](std::size_t l, bool bias, std::size_t j) {
    ShadowModel plus = shadow, minus = shadow;
    (bias ? plus.params[l].bias : plus.params[l].weights)[j] += h;
    (bias ? minus.params[l].bias : minus.params[l].weights)[j] -= h;
    std::vector<bool> mask_plus, mask_minus;
    const double lp = SurrogateObjective(plus, x, upstream, &mask_plus);
    const double lm = SurrogateObjective(minus, x, upstream, &mask_minus);
    if (mask_plus != mask_minus) {
      ++out.skipped;
      return;
    }
    ++out.compared;
    const double fd = (lp - lm) / (2 * h);
    const double an = (bias ? g[l].bias : g[l].weights)[j];
    num2 += fd * fd;
    err2 += (fd - an) * (fd - an);
  };
  for (std::size_t l = 0; l < shadow.params.size(); ++l) {
    const std::vector<double>& w = shadow.params[l].weights;
    if (w.empty()) continue;
    const int n = max_weight_probes > 0 ? max_weight_probes : static_cast<int>(w.size());
    for (int i = 0; i < n; ++i) {
      const std::size_t j = max_weight_probes > 0 ? rng() % w.size() : static_cast<std::size_t>(i);
      // The weight clamp is a kink of its own.
      if (std::abs(w[j]) + h < 127) probe(l, false, j);
    }
    for (std::size_t c = 0; c < shadow.params[l].bias.size(); ++c) probe(l, true, c);
  }
  out.fd_norm = std::sqrt(num2);
  out.rel_error = num2 > 0 ? std::sqrt(err2 / num2) : 0.0;
  return out;
}

}  // namespace rescale::testing

#endif  // RESCALE_LAB_TESTS_TEST_SUPPORT_H_
