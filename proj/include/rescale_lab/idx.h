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
// IDX (big-endian) dataset files: images 0x00000803 [N, H, W] u8 and labels
// 0x00000801 [N] u8.

#ifndef RESCALE_LAB_IDX_H_
#define RESCALE_LAB_IDX_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace rescale {

struct Dataset {
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::vector<std::uint8_t> images;  // size() * rows * cols pixels
  std::vector<std::uint8_t> labels;

  std::size_t size() const { return labels.size(); }
  std::int64_t pixels_per_image() const { return rows * cols; }
  std::span<const std::uint8_t> image(std::size_t i) const {
    return {images.data() + i * pixels_per_image(),
            static_cast<std::size_t>(pixels_per_image())};
  }
};

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

// Throws FormatError on a bad magic, short file, or count mismatch.
Dataset LoadIdxDataset(const std::filesystem::path& images_path,
                       const std::filesystem::path& labels_path);

// Reads only an IDX image file (labels left empty).
std::vector<std::uint8_t> LoadIdxImages(const std::filesystem::path& path,
                                        std::int64_t* count, std::int64_t* rows,
                                        std::int64_t* cols);

// {train,t10k}-{images-idx3,labels-idx1}-ubyte under `dir`.
Dataset LoadMnist(const std::filesystem::path& dir, bool train);

void WriteIdxImages(const std::filesystem::path& path, std::int64_t count,
                    std::int64_t rows, std::int64_t cols,
                    std::span<const std::uint8_t> pixels);
void WriteIdxLabels(const std::filesystem::path& path,
                    std::span<const std::uint8_t> labels);

Dataset Subset(const Dataset& data, std::size_t begin, std::size_t count);

}  // namespace rescale

#endif  // RESCALE_LAB_IDX_H_
