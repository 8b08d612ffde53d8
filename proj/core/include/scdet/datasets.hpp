// Copyright 2026 The scdet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <string>

#include "scdet/training.hpp"

namespace scdet {

inline constexpr int kImageSide = 28;

// IDX files (MNIST / FashionMNIST): images magic 0x00000803, labels
// 0x00000801, big-endian extents. Pixels are scaled to [0,1] and returned as
// [N, 1, 28, 28].
Dataset read_idx(const std::string& images_path, const std::string& labels_path, std::size_t limit = 0);
std::string encode_idx_images(const Tensor& images);  // [N,1,H,W] in [0,1]
std::string encode_idx_labels(std::span<const int> labels);

// CIFAR binary batches: per record `label_bytes` label bytes (1 for CIFAR-10,
// 2 for CIFAR-100 with the fine label last) then 3072 bytes of R,G,B planes.
// Converted to grayscale with BT.601 luminance weights and bilinearly resized
// to 28x28.
Dataset read_cifar_gray(const std::string& path, int label_bytes, std::size_t limit = 0);

// Bilinear resize of one single-channel image (align-corners=false sampling).
std::vector<float> resize_bilinear(std::span<const float> src, int src_h, int src_w, int dst_h, int dst_w);

enum class SyntheticFamily {
  Digits,      // MNIST-like strokes on a black background
  Fashion,     // FashionMNIST-like filled, textured silhouettes
  Cifar10,     // natural-image-like RGB scenes, converted to gray 28x28
  Cifar100,    // a second natural-image family with different statistics
};

// Deterministic 10-class stand-ins used when real files are not available.
Dataset synthetic_dataset(SyntheticFamily family, std::size_t count, std::uint64_t seed);

std::string to_string(SyntheticFamily family);

}  // namespace scdet
