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
#include "rescale_lab/idx.h"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <string>

#include "rescale_lab/errors.h"

namespace rescale {
namespace {

std::vector<std::uint8_t> ReadFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(0, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t ReadBigEndian32(const std::vector<std::uint8_t>& bytes,
                              std::size_t offset, const std::string& what) {
  if (bytes.size() < offset + 4) {
    throw FormatError(offset, what + ": file ends inside the header");
  }
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void AppendBigEndian32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

void WriteFile(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(0, "cannot write " + path.string());
}

}  // namespace

std::vector<std::uint8_t> LoadIdxImages(const std::filesystem::path& path,
                                        std::int64_t* count, std::int64_t* rows,
                                        std::int64_t* cols) {
  std::vector<std::uint8_t> bytes = ReadFile(path);
  const std::string name = path.filename().string();
  const std::uint32_t magic = ReadBigEndian32(bytes, 0, name);
  if (magic != kIdxImagesMagic) {
    throw FormatError(0, name + ": expected image magic 0x00000803");
  }
  *count = ReadBigEndian32(bytes, 4, name);
  *rows = ReadBigEndian32(bytes, 8, name);
  *cols = ReadBigEndian32(bytes, 12, name);
  const std::uint64_t expected = 16 + std::uint64_t(*count) * std::uint64_t(*rows) *
                                          std::uint64_t(*cols);
  if (bytes.size() != expected) {
    throw FormatError(16, name + ": pixel payload is " + std::to_string(bytes.size() - 16) +
                              " bytes, dimensions need " + std::to_string(expected - 16));
  }
  bytes.erase(bytes.begin(), bytes.begin() + 16);
  return bytes;
}

Dataset LoadIdxDataset(const std::filesystem::path& images_path,
                       const std::filesystem::path& labels_path) {
  Dataset data;
  std::int64_t count = 0;
  data.images = LoadIdxImages(images_path, &count, &data.rows, &data.cols);

  std::vector<std::uint8_t> labels = ReadFile(labels_path);
  const std::string name = labels_path.filename().string();
  if (ReadBigEndian32(labels, 0, name) != kIdxLabelsMagic) {
    throw FormatError(0, name + ": expected label magic 0x00000801");
  }
  const std::uint32_t label_count = ReadBigEndian32(labels, 4, name);
  if (labels.size() != 8 + std::uint64_t{label_count}) {
    throw FormatError(8, name + ": label payload length does not match its count");
  }
  if (label_count != count) {
    throw FormatError(4, "image count " + std::to_string(count) +
                             " differs from label count " + std::to_string(label_count));
  }
  data.labels.assign(labels.begin() + 8, labels.end());
  return data;
}

Dataset LoadMnist(const std::filesystem::path& dir, bool train) {
  const std::string prefix = train ? "train" : "t10k";
  return LoadIdxDataset(dir / (prefix + "-images-idx3-ubyte"),
                        dir / (prefix + "-labels-idx1-ubyte"));
}

void WriteIdxImages(const std::filesystem::path& path, std::int64_t count,
                    std::int64_t rows, std::int64_t cols,
                    std::span<const std::uint8_t> pixels) {
  std::vector<std::uint8_t> bytes;
  AppendBigEndian32(bytes, kIdxImagesMagic);
  AppendBigEndian32(bytes, static_cast<std::uint32_t>(count));
  AppendBigEndian32(bytes, static_cast<std::uint32_t>(rows));
  AppendBigEndian32(bytes, static_cast<std::uint32_t>(cols));
  bytes.insert(bytes.end(), pixels.begin(), pixels.end());
  WriteFile(path, bytes);
}

void WriteIdxLabels(const std::filesystem::path& path,
                    std::span<const std::uint8_t> labels) {
  std::vector<std::uint8_t> bytes;
  AppendBigEndian32(bytes, kIdxLabelsMagic);
  AppendBigEndian32(bytes, static_cast<std::uint32_t>(labels.size()));
  bytes.insert(bytes.end(), labels.begin(), labels.end());
  WriteFile(path, bytes);
}

Dataset Subset(const Dataset& data, std::size_t begin, std::size_t count) {
  begin = std::min(begin, data.size());
  count = std::min(count, data.size() - begin);
  Dataset out;
  out.rows = data.rows;
  out.cols = data.cols;
  const auto px = static_cast<std::size_t>(data.pixels_per_image());
  out.images.assign(data.images.begin() + begin * px,
                    data.images.begin() + (begin + count) * px);
  out.labels.assign(data.labels.begin() + begin, data.labels.begin() + begin + count);
  return out;
}

}  // namespace rescale
