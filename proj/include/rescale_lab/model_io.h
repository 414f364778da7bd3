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
// RQM1 quantized-model container, its float-model sibling (RQF1), rescaler
// materialization and weight re-deployment.
//
// Container layout (all integers little-endian):
//   8 bytes   magic "RQM1\0\0\0\0" (or "RQF1\0\0\0\0")
//   8 bytes   manifest length L (u64)
//   L bytes   UTF-8 JSON manifest
//   ...       tensor blob, tensors in manifest order
//   4 bytes   CRC-32 of everything before it
//
// Scales and real rescale factors are stored in the manifest as 16-digit hex
// binary64 bit patterns so they survive the round trip bit-exactly.

#ifndef RESCALE_LAB_MODEL_IO_H_
#define RESCALE_LAB_MODEL_IO_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rescale_lab/model.h"

namespace rescale {

inline constexpr std::string_view kModelMagic{"RQM1\0\0\0\0", 8};
inline constexpr std::string_view kFloatModelMagic{"RQF1\0\0\0\0", 8};

std::vector<std::uint8_t> SerializeModel(const ModelGraph& model);
// Throws FormatError (with byte offset) for any malformed or invalid input.
ModelGraph DeserializeModel(std::span<const std::uint8_t> bytes);

void SaveModel(const ModelGraph& model, const std::filesystem::path& path);
ModelGraph LoadModel(const std::filesystem::path& path);

std::vector<std::uint8_t> SerializeFloatModel(const FloatModel& model);
FloatModel DeserializeFloatModel(std::span<const std::uint8_t> bytes);
void SaveFloatModel(const FloatModel& model, const std::filesystem::path& path);
FloatModel LoadFloatModel(const std::filesystem::path& path);

// Frames a manifest and blob with magic, length prefix and CRC trailer.
std::vector<std::uint8_t> WriteContainer(std::string_view magic,
                                         const std::string& manifest,
                                         std::span<const std::uint8_t> blob);

std::string EncodeDoubleHex(double value);
// Throws FormatError(offset, ...) unless `text` is exactly 16 hex digits.
double DecodeDoubleHex(const std::string& text, std::uint64_t offset = 0);

// Re-quantizes every rescaler from its stored real value at width `bits`.
// RescalerUnderflow names the offending layer and channel.
ModelGraph MaterializeRescalers(const ModelGraph& model, int bits);

// Substitutes clamp(round_half_up(w), -128, 127) for every weight and
// round_half_up(b) for every bias; scales, zero points and rescalers are kept.
// `params` holds one entry per layer. Throws ShapeError on a size mismatch.
ModelGraph RedeployWeights(const ModelGraph& model, std::span<const FloatParams> params);

std::vector<std::uint8_t> ReadBinaryFile(const std::filesystem::path& path);
void WriteBinaryFile(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace rescale

#endif  // RESCALE_LAB_MODEL_IO_H_
