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

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

#include "scdet/error.hpp"

namespace scdet::byteio {

// Append-only little-endian encoder.
class Writer {
 public:
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) { put(v); }
  void u32(std::uint32_t v) { put(v); }
  void i32(std::int32_t v) { put(static_cast<std::uint32_t>(v)); }
  void u64(std::uint64_t v) { put(v); }
  void f32(float v) { put(std::bit_cast<std::uint32_t>(v)); }
  const std::string& data() const { return buf_; }

 private:
  template <class U>
  void put(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  std::string buf_;
};

// Bounds-checked decoder; little-endian unless the *_be variants are used.
class Reader {
 public:
  Reader(std::string_view data, std::string what) : data_(data), what_(std::move(what)) {}

  std::string_view bytes(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint8_t u8() { return static_cast<std::uint8_t>(bytes(1)[0]); }
  std::uint16_t u16() { return get<std::uint16_t>(false); }
  std::uint32_t u32() { return get<std::uint32_t>(false); }
  std::int32_t i32() { return static_cast<std::int32_t>(get<std::uint32_t>(false)); }
  std::uint64_t u64() { return get<std::uint64_t>(false); }
  float f32() { return std::bit_cast<float>(get<std::uint32_t>(false)); }
  std::uint32_t u32_be() { return get<std::uint32_t>(true); }
  std::size_t remaining() const { return data_.size() - pos_; }
  std::size_t position() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw DataError(what_ + ": truncated input");
  }
  template <class U>
  U get(bool big_endian) {
    auto s = bytes(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      const auto b = static_cast<U>(static_cast<unsigned char>(s[big_endian ? sizeof(U) - 1 - i : i]));
      v |= static_cast<U>(b << (8 * i));
    }
    return v;
  }
  std::string_view data_;
  std::string what_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view data);

}  // namespace scdet::byteio
