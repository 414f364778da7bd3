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
#include "rescale_lab/model_io.h"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>

#include "json.hpp"
#include "rescale_lab/errors.h"

namespace rescale {
namespace {

using json = nlohmann::json;

constexpr std::uint64_t kHeaderSize = 16;
constexpr std::uint64_t kTrailerSize = 4;

void PutLittleEndian(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t GetLittleEndian(std::span<const std::uint8_t> in, std::uint64_t offset,
                              int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= std::uint64_t{in[offset + i]} << (8 * i);
  return v;
}

std::uint32_t Crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  std::size_t done = 0;
  while (done < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - done, 1u << 30));
    crc = crc32(crc, bytes.data() + done, chunk);
    done += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

struct Frame {
  std::string manifest;
  std::span<const std::uint8_t> blob;
  std::uint64_t blob_offset = 0;
};

Frame ReadContainer(std::span<const std::uint8_t> bytes, std::string_view magic) {
  if (bytes.size() < magic.size() ||
      std::memcmp(bytes.data(), magic.data(), magic.size()) != 0) {
    throw FormatError(0, "bad magic, expected " + std::string(magic.substr(0, 4)));
  }
  if (bytes.size() < kHeaderSize + kTrailerSize) {
    throw FormatError(8, "file truncated inside the header");
  }
  const std::uint64_t manifest_size = GetLittleEndian(bytes, 8, 8);
  if (manifest_size > bytes.size() - kHeaderSize - kTrailerSize) {
    throw FormatError(8, "manifest length " + std::to_string(manifest_size) +
                             " exceeds the file size");
  }
  const std::uint64_t trailer = bytes.size() - kTrailerSize;
  const auto stored = static_cast<std::uint32_t>(GetLittleEndian(bytes, trailer, 4));
  if (stored != Crc32(bytes.first(trailer))) {
    throw FormatError(trailer, "checksum mismatch (file truncated or corrupted)");
  }
  Frame frame;
  frame.manifest.assign(reinterpret_cast<const char*>(bytes.data() + kHeaderSize),
                        manifest_size);
  frame.blob_offset = kHeaderSize + manifest_size;
  frame.blob = bytes.subspan(frame.blob_offset, trailer - frame.blob_offset);
  return frame;
}

// --- manifest field helpers -------------------------------------------------

std::int64_t GetInt(const json& j, const char* key, std::int64_t lo, std::int64_t hi) {
  const json& v = j.at(key);
  if (!v.is_number_integer()) {
    throw FormatError(kHeaderSize, std::string("field '") + key + "' must be an integer");
  }
  std::int64_t value;
  if (v.is_number_unsigned()) {
    const auto u = v.get<std::uint64_t>();
    if (u > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) {
      throw FormatError(kHeaderSize, std::string("field '") + key + "' out of range");
    }
    value = static_cast<std::int64_t>(u);
  } else {
    value = v.get<std::int64_t>();
  }
  if (value < lo || value > hi) {
    throw FormatError(kHeaderSize, std::string("field '") + key + "' out of range: " +
                                       std::to_string(value));
  }
  return value;
}

Shape GetShape(const json& j) {
  if (!j.is_array() || j.size() > 8) throw FormatError(kHeaderSize, "bad shape");
  Shape shape;
  for (const json& d : j) {
    if (!d.is_number_integer() || d.get<std::int64_t>() < 0 ||
        d.get<std::int64_t>() > std::numeric_limits<std::int32_t>::max()) {
      throw FormatError(kHeaderSize, "bad dimension in shape");
    }
    shape.push_back(d.get<std::int64_t>());
  }
  return shape;
}

json PairJson(int a, int b) { return json::array({a, b}); }

void GetPair(const json& j, const char* key, int* a, int* b) {
  const json& v = j.at(key);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number_integer() ||
      !v[1].is_number_integer()) {
    throw FormatError(kHeaderSize, std::string("field '") + key + "' must be [int, int]");
  }
  const auto x = v[0].get<std::int64_t>(), y = v[1].get<std::int64_t>();
  if (x < 1 || y < 1 || x > 4096 || y > 4096) {
    throw FormatError(kHeaderSize, std::string("field '") + key + "' out of range");
  }
  *a = static_cast<int>(x);
  *b = static_cast<int>(y);
}

json ParamsJson(const QuantParams& p) {
  return {{"scale", EncodeDoubleHex(p.scale)}, {"zero_point", p.zero_point}};
}

QuantParams GetParams(const json& j) {
  return {DecodeDoubleHex(j.at("scale").get<std::string>(), kHeaderSize),
          static_cast<std::int32_t>(GetInt(j, "zero_point", -128, 127))};
}

template <typename E>
E ParseEnum(const std::string& text, const std::map<std::string, E>& table,
            const char* what) {
  auto it = table.find(text);
  if (it == table.end()) {
    throw FormatError(kHeaderSize, std::string("unknown ") + what + " '" + text + "'");
  }
  return it->second;
}

const std::map<std::string, LayerKind>& KindTable() {
  static const std::map<std::string, LayerKind> table{
      {"dense", LayerKind::kDense},       {"conv2d", LayerKind::kConv2D},
      {"depthwise", LayerKind::kDepthwiseConv2D}, {"avgpool", LayerKind::kAvgPool},
      {"flatten", LayerKind::kFlatten}};
  return table;
}

const std::map<std::string, Activation>& ActivationTable() {
  static const std::map<std::string, Activation> table{
      {"none", Activation::kNone}, {"relu", Activation::kRelu}, {"relu6", Activation::kRelu6}};
  return table;
}

json ConfigJson(const LayerConfig& c) {
  return {{"kind", LayerKindName(c.kind)},
          {"activation", ActivationName(c.activation)},
          {"out_channels", c.out_channels},
          {"kernel", PairJson(c.kernel_h, c.kernel_w)},
          {"stride", PairJson(c.stride.h, c.stride.w)},
          {"padding", c.padding == Padding::kSame ? "same" : "valid"},
          {"window", PairJson(c.window.h, c.window.w)}};
}

LayerConfig GetConfig(const json& j) {
  LayerConfig c;
  c.kind = ParseEnum(j.at("kind").get<std::string>(), KindTable(), "layer kind");
  c.activation =
      ParseEnum(j.at("activation").get<std::string>(), ActivationTable(), "activation");
  c.out_channels = static_cast<int>(GetInt(j, "out_channels", 0, 1 << 20));
  GetPair(j, "kernel", &c.kernel_h, &c.kernel_w);
  GetPair(j, "stride", &c.stride.h, &c.stride.w);
  GetPair(j, "window", &c.window.h, &c.window.w);
  const std::string padding = j.at("padding").get<std::string>();
  if (padding == "same") {
    c.padding = Padding::kSame;
  } else if (padding == "valid") {
    c.padding = Padding::kValid;
  } else {
    throw FormatError(kHeaderSize, "unknown padding '" + padding + "'");
  }
  return c;
}

// --- tensor blob ------------------------------------------------------------

std::size_t DtypeSize(const std::string& dtype) {
  if (dtype == "int8") return 1;
  if (dtype == "int32") return 4;
  if (dtype == "float64") return 8;
  return 0;
}

class BlobWriter {
 public:
  std::string Add(const std::string& name, const char* dtype, const Shape& shape,
                  std::span<const std::uint8_t> bytes) {
    tensors_.push_back({{"name", name},
                        {"dtype", dtype},
                        {"shape", shape},
                        {"offset", blob_.size()},
                        {"nbytes", bytes.size()}});
    blob_.insert(blob_.end(), bytes.begin(), bytes.end());
    return name;
  }

  std::string AddInt8(const std::string& name, const Shape& shape,
                      std::span<const std::int8_t> values) {
    return Add(name, "int8", shape,
               {reinterpret_cast<const std::uint8_t*>(values.data()), values.size()});
  }

  std::string AddInt32(const std::string& name, std::span<const std::int32_t> values) {
    std::vector<std::uint8_t> bytes;
    for (std::int32_t v : values) PutLittleEndian(bytes, static_cast<std::uint32_t>(v), 4);
    return Add(name, "int32", {static_cast<std::int64_t>(values.size())}, bytes);
  }

  std::string AddFloat64(const std::string& name, const Shape& shape,
                         std::span<const double> values) {
    std::vector<std::uint8_t> bytes;
    for (double v : values) PutLittleEndian(bytes, std::bit_cast<std::uint64_t>(v), 8);
    return Add(name, "float64", shape, bytes);
  }

  json tensors() const { return tensors_; }
  const std::vector<std::uint8_t>& blob() const { return blob_; }

 private:
  json tensors_ = json::array();
  std::vector<std::uint8_t> blob_;
};

class BlobReader {
 public:
  BlobReader(const json& tensors, std::span<const std::uint8_t> blob,
             std::uint64_t blob_offset)
      : blob_(blob), blob_offset_(blob_offset) {
    if (!tensors.is_array()) throw FormatError(kHeaderSize, "'tensors' must be an array");
    std::uint64_t cursor = 0;
    for (const json& t : tensors) {
      Entry e;
      const std::string name = t.at("name").get<std::string>();
      e.dtype = t.at("dtype").get<std::string>();
      e.shape = GetShape(t.at("shape"));
      e.offset = static_cast<std::uint64_t>(GetInt(t, "offset", 0, std::numeric_limits<std::int64_t>::max()));
      e.nbytes = static_cast<std::uint64_t>(GetInt(t, "nbytes", 0, std::numeric_limits<std::int64_t>::max()));
      const std::size_t width = DtypeSize(e.dtype);
      if (width == 0) {
        throw FormatError(kHeaderSize, "tensor '" + name + "' has unknown dtype " + e.dtype);
      }
      if (entries_.count(name)) {
        throw FormatError(kHeaderSize, "duplicate tensor '" + name + "'");
      }
      if (static_cast<std::uint64_t>(NumElements(e.shape)) * width != e.nbytes) {
        throw FormatError(kHeaderSize, "tensor '" + name + "': nbytes " +
                                           std::to_string(e.nbytes) +
                                           " does not match its shape");
      }
      if (e.offset != cursor || e.nbytes > blob_.size() - std::min<std::uint64_t>(cursor, blob_.size())) {
        throw FormatError(blob_offset_ + std::min<std::uint64_t>(cursor, blob_.size()),
                          "tensor '" + name + "': manifest extent [" +
                              std::to_string(e.offset) + ", +" + std::to_string(e.nbytes) +
                              ") does not match the blob (" + std::to_string(blob_.size()) +
                              " bytes)");
      }
      cursor += e.nbytes;
      entries_[name] = e;
    }
    if (cursor != blob_.size()) {
      throw FormatError(blob_offset_ + cursor, "blob has " +
                                                   std::to_string(blob_.size() - cursor) +
                                                   " bytes not described by the manifest");
    }
  }

  std::vector<std::int8_t> Int8(const std::string& name, Shape* shape) const {
    const Entry& e = Find(name, "int8");
    *shape = e.shape;
    const auto* p = reinterpret_cast<const std::int8_t*>(blob_.data() + e.offset);
    return {p, p + e.nbytes};
  }

  std::vector<std::int32_t> Int32(const std::string& name) const {
    const Entry& e = Find(name, "int32");
    std::vector<std::int32_t> out(e.nbytes / 4);
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = static_cast<std::int32_t>(
          static_cast<std::uint32_t>(GetLittleEndian(blob_, e.offset + 4 * i, 4)));
    }
    return out;
  }

  std::vector<double> Float64(const std::string& name) const {
    const Entry& e = Find(name, "float64");
    std::vector<double> out(e.nbytes / 8);
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = std::bit_cast<double>(GetLittleEndian(blob_, e.offset + 8 * i, 8));
    }
    return out;
  }

 private:
  struct Entry {
    std::string dtype;
    Shape shape;
    std::uint64_t offset = 0;
    std::uint64_t nbytes = 0;
  };

  const Entry& Find(const std::string& name, const char* dtype) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) {
      throw FormatError(kHeaderSize, "manifest references missing tensor '" + name + "'");
    }
    if (it->second.dtype != dtype) {
      throw FormatError(kHeaderSize, "tensor '" + name + "' must be " + dtype);
    }
    return it->second;
  }

  std::span<const std::uint8_t> blob_;
  std::uint64_t blob_offset_;
  std::map<std::string, Entry> entries_;
};

json ParseManifest(const Frame& frame) {
  try {
    json manifest = json::parse(frame.manifest);
    if (!manifest.is_object()) throw FormatError(kHeaderSize, "manifest is not an object");
    return manifest;
  } catch (const json::parse_error& e) {
    throw FormatError(kHeaderSize + e.byte, std::string("manifest: ") + e.what());
  }
}

// Runs `body`, converting any non-format failure into a FormatError.
template <typename Fn>
auto GuardedParse(Fn&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const FormatError&) {
    throw;
  } catch (const json::exception& e) {
    throw FormatError(kHeaderSize, std::string("manifest: ") + e.what());
  } catch (const Error& e) {
    throw FormatError(kHeaderSize, std::string("invalid model: ") + e.what());
  } catch (const std::exception& e) {
    throw FormatError(kHeaderSize, std::string("unreadable model: ") + e.what());
  }
}

}  // namespace

std::string EncodeDoubleHex(double value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(std::bit_cast<std::uint64_t>(value)));
  return buf;
}

double DecodeDoubleHex(const std::string& text, std::uint64_t offset) {
  if (text.size() != 16) throw FormatError(offset, "hex double must have 16 digits");
  std::uint64_t bits = 0;
  for (char ch : text) {
    int digit;
    if (ch >= '0' && ch <= '9') {
      digit = ch - '0';
    } else if (ch >= 'a' && ch <= 'f') {
      digit = ch - 'a' + 10;
    } else {
      throw FormatError(offset, "bad hex digit in '" + text + "'");
    }
    bits = (bits << 4) | static_cast<std::uint64_t>(digit);
  }
  return std::bit_cast<double>(bits);
}

std::vector<std::uint8_t> WriteContainer(std::string_view magic, const std::string& manifest,
                                         std::span<const std::uint8_t> blob) {
  std::vector<std::uint8_t> out(magic.begin(), magic.end());
  PutLittleEndian(out, manifest.size(), 8);
  out.insert(out.end(), manifest.begin(), manifest.end());
  out.insert(out.end(), blob.begin(), blob.end());
  PutLittleEndian(out, Crc32(out), 4);
  return out;
}

std::vector<std::uint8_t> SerializeModel(const ModelGraph& model) {
  ValidateModel(model);
  BlobWriter writer;
  json layers = json::array();
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const LayerSpec& layer = model.layers[i];
    json entry = ConfigJson(layer.config);
    entry["output"] = ParamsJson(layer.output);
    json rescalers = json::array();
    for (const DyadicRescaler& r : layer.rescalers) {
      rescalers.push_back({{"m", r.multiplier},
                           {"s", r.shift},
                           {"k", r.bits},
                           {"real", EncodeDoubleHex(r.real_value)}});
    }
    entry["rescalers"] = rescalers;
    if (layer.config.has_weights()) {
      const std::string prefix = "layer" + std::to_string(i);
      json scales = json::array();
      for (double s : layer.weights.scales) scales.push_back(EncodeDoubleHex(s));
      entry["weights"] = {{"tensor", writer.AddInt8(prefix + ".weights", layer.weights.shape,
                                                    layer.weights.data)},
                          {"scales", scales}};
      entry["bias"] = writer.AddInt32(prefix + ".bias", layer.bias);
    } else {
      entry["weights"] = nullptr;
      entry["bias"] = nullptr;
    }
    layers.push_back(entry);
  }
  json manifest = {{"format", "RQM1"},
                   {"version", 1},
                   {"name", model.name},
                   {"rescaler_bits", model.rescaler_bits},
                   {"input", ParamsJson(model.input)},
                   {"input_shape", model.input_shape},
                   {"layers", layers},
                   {"tensors", writer.tensors()}};
  return WriteContainer(kModelMagic, manifest.dump(), writer.blob());
}

ModelGraph DeserializeModel(std::span<const std::uint8_t> bytes) {
  const Frame frame = ReadContainer(bytes, kModelMagic);
  return GuardedParse([&] {
    const json manifest = ParseManifest(frame);
    if (manifest.at("format") != "RQM1" || manifest.at("version") != 1) {
      throw FormatError(kHeaderSize, "unsupported manifest format/version");
    }
    const BlobReader blob(manifest.at("tensors"), frame.blob, frame.blob_offset);

    ModelGraph model;
    model.name = manifest.at("name").get<std::string>();
    model.rescaler_bits = static_cast<int>(GetInt(manifest, "rescaler_bits", 2, 32));
    model.input = GetParams(manifest.at("input"));
    model.input_shape = GetShape(manifest.at("input_shape"));
    const json& layers = manifest.at("layers");
    if (!layers.is_array()) throw FormatError(kHeaderSize, "'layers' must be an array");
    for (const json& entry : layers) {
      LayerSpec layer;
      layer.config = GetConfig(entry);
      layer.output = GetParams(entry.at("output"));
      for (const json& r : entry.at("rescalers")) {
        DyadicRescaler rescaler;
        rescaler.multiplier = static_cast<std::uint32_t>(GetInt(r, "m", 0, 0xffffffffLL));
        rescaler.shift = static_cast<std::uint32_t>(GetInt(r, "s", 0, 64));
        rescaler.bits = static_cast<int>(GetInt(r, "k", 0, 64));
        rescaler.real_value = DecodeDoubleHex(r.at("real").get<std::string>(), kHeaderSize);
        layer.rescalers.push_back(rescaler);
      }
      const json& weights = entry.at("weights");
      if (!weights.is_null()) {
        layer.weights.data = blob.Int8(weights.at("tensor").get<std::string>(),
                                       &layer.weights.shape);
        for (const json& s : weights.at("scales")) {
          layer.weights.scales.push_back(DecodeDoubleHex(s.get<std::string>(), kHeaderSize));
        }
      }
      const json& bias = entry.at("bias");
      if (!bias.is_null()) layer.bias = blob.Int32(bias.get<std::string>());
      model.layers.push_back(std::move(layer));
    }
    ValidateModel(model);
    return model;
  });
}

std::vector<std::uint8_t> SerializeFloatModel(const FloatModel& model) {
  ValidateFloatModel(model);
  BlobWriter writer;
  json layers = json::array();
  const std::vector<Shape> shapes = ArchitectureShapes(model.arch);
  for (std::size_t i = 0; i < model.arch.layers.size(); ++i) {
    const LayerConfig& config = model.arch.layers[i];
    json entry = ConfigJson(config);
    if (config.has_weights()) {
      const std::string prefix = "layer" + std::to_string(i);
      entry["weights"] = writer.AddFloat64(prefix + ".weights", WeightShape(config, shapes[i]),
                                           model.params[i].weights);
      entry["bias"] = writer.AddFloat64(
          prefix + ".bias", {static_cast<std::int64_t>(model.params[i].bias.size())},
          model.params[i].bias);
    } else {
      entry["weights"] = nullptr;
      entry["bias"] = nullptr;
    }
    layers.push_back(entry);
  }
  json manifest = {{"format", "RQF1"},
                   {"version", 1},
                   {"name", model.arch.name},
                   {"input_shape", model.arch.input_shape},
                   {"layers", layers},
                   {"tensors", writer.tensors()}};
  return WriteContainer(kFloatModelMagic, manifest.dump(), writer.blob());
}

FloatModel DeserializeFloatModel(std::span<const std::uint8_t> bytes) {
  const Frame frame = ReadContainer(bytes, kFloatModelMagic);
  return GuardedParse([&] {
    const json manifest = ParseManifest(frame);
    if (manifest.at("format") != "RQF1" || manifest.at("version") != 1) {
      throw FormatError(kHeaderSize, "unsupported manifest format/version");
    }
    const BlobReader blob(manifest.at("tensors"), frame.blob, frame.blob_offset);
    FloatModel model;
    model.arch.name = manifest.at("name").get<std::string>();
    model.arch.input_shape = GetShape(manifest.at("input_shape"));
    for (const json& entry : manifest.at("layers")) {
      model.arch.layers.push_back(GetConfig(entry));
      FloatParams params;
      if (!entry.at("weights").is_null()) {
        params.weights = blob.Float64(entry.at("weights").get<std::string>());
      }
      if (!entry.at("bias").is_null()) {
        params.bias = blob.Float64(entry.at("bias").get<std::string>());
      }
      model.params.push_back(std::move(params));
    }
    ValidateFloatModel(model);
    return model;
  });
}

std::vector<std::uint8_t> ReadBinaryFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(0, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void WriteBinaryFile(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(0, "cannot write " + path.string());
}

void SaveModel(const ModelGraph& model, const std::filesystem::path& path) {
  WriteBinaryFile(path, SerializeModel(model));
}

ModelGraph LoadModel(const std::filesystem::path& path) {
  return DeserializeModel(ReadBinaryFile(path));
}

void SaveFloatModel(const FloatModel& model, const std::filesystem::path& path) {
  WriteBinaryFile(path, SerializeFloatModel(model));
}

FloatModel LoadFloatModel(const std::filesystem::path& path) {
  return DeserializeFloatModel(ReadBinaryFile(path));
}

ModelGraph MaterializeRescalers(const ModelGraph& model, int bits) {
  ModelGraph out = model;
  for (std::size_t i = 0; i < out.layers.size(); ++i) {
    std::vector<DyadicRescaler>& rescalers = out.layers[i].rescalers;
    for (std::size_t c = 0; c < rescalers.size(); ++c) {
      try {
        rescalers[c] = QuantizeRescaler(rescalers[c].real_value, bits);
      } catch (const RescalerUnderflow& e) {
        throw RescalerUnderflow("layer " + std::to_string(i) + " channel " +
                                std::to_string(c) + ": " + e.what());
      }
    }
  }
  out.rescaler_bits = bits;
  return out;
}

ModelGraph RedeployWeights(const ModelGraph& model, std::span<const FloatParams> params) {
  if (params.size() != model.layers.size()) {
    throw ShapeError("shadow parameters do not match the model's layer count");
  }
  ModelGraph out = model;
  for (std::size_t i = 0; i < out.layers.size(); ++i) {
    LayerSpec& layer = out.layers[i];
    const FloatParams& p = params[i];
    if (p.weights.size() != layer.weights.data.size() || p.bias.size() != layer.bias.size()) {
      throw ShapeError("layer " + std::to_string(i) + ": shadow parameter shape mismatch");
    }
    for (std::size_t j = 0; j < p.weights.size(); ++j) {
      layer.weights.data[j] =
          static_cast<std::int8_t>(std::clamp(RoundHalfUp(p.weights[j]), -128.0, 127.0));
    }
    for (std::size_t j = 0; j < p.bias.size(); ++j) {
      layer.bias[j] = static_cast<std::int32_t>(std::clamp(
          RoundHalfUp(p.bias[j]), double(std::numeric_limits<std::int32_t>::min()),
          double(std::numeric_limits<std::int32_t>::max())));
    }
  }
  ValidateModel(out);
  return out;
}

}  // namespace rescale
