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

#include <string>

#include "scdet/network.hpp"

namespace scdet {

// "SCNN" parameter checkpoint, little-endian:
//   magic "SCNN" | u16 version | u32 metadata length | metadata bytes
//   | u32 input rank | i32 dims... | u64 seed | u32 layer count
//   | per layer: u8 kind, i32 kernel, i32 channels, i32 units, i32 hidden,
//     f32 rate, u8 per_position, u8 frozen, u32 tensor count,
//     per tensor: u32 rank, i32 dims..., f32 values...
// The metadata block carries free-form config text (used by the detector).
inline constexpr std::uint16_t kCheckpointVersion = 1;

std::string encode_checkpoint(const Network& net, const std::string& metadata = {});
Network decode_checkpoint(std::string_view bytes, std::string* metadata = nullptr);

void save_checkpoint(const std::string& path, const Network& net, const std::string& metadata = {});
Network load_checkpoint(const std::string& path, std::string* metadata = nullptr);

}  // namespace scdet
