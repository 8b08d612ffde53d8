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

#include "scdet/checkpoint.hpp"

#include "scdet/byteio.hpp"

namespace scdet {

std::string encode_checkpoint(const Network& net, const std::string& metadata) {
  byteio::Writer w;
  w.bytes("SCNN");
  w.u16(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(metadata.size()));
  w.bytes(metadata);
  w.u32(static_cast<std::uint32_t>(net.input_shape.size()));
  for (int d : net.input_shape) w.i32(d);
  w.u64(net.seed);
  w.u32(static_cast<std::uint32_t>(net.layers.size()));
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto& l = net.layers[i];
    w.u8(static_cast<std::uint8_t>(l.kind));
    w.i32(l.kernel);
    w.i32(l.channels);
    w.i32(l.units);
    w.i32(l.hidden);
    w.f32(l.rate);
    w.u8(l.per_position ? 1 : 0);
    w.u8(net.frozen[i] ? 1 : 0);
    w.u32(static_cast<std::uint32_t>(net.params[i].size()));
    for (const auto& p : net.params[i]) {
      w.u32(static_cast<std::uint32_t>(p.rank()));
      for (int d : p.shape()) w.i32(d);
      for (float v : p.values()) w.f32(v);
    }
  }
  return w.data();
}

Network decode_checkpoint(std::string_view bytes, std::string* metadata) {
  byteio::Reader r(bytes, "SCNN checkpoint");
  if (r.bytes(4) != "SCNN") throw DataError("not an SCNN checkpoint");
  const auto version = r.u16();
  if (version != kCheckpointVersion) throw DataError("unsupported SCNN version " + std::to_string(version));
  const auto meta_len = r.u32();
  const auto meta = r.bytes(meta_len);
  if (metadata) *metadata = std::string(meta);
  Network net;
  const auto rank = r.u32();
  if (rank > 8) throw DataError("SCNN: implausible input rank");
  for (std::uint32_t i = 0; i < rank; ++i) net.input_shape.push_back(r.i32());
  net.seed = r.u64();
  const auto count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    LayerSpec l;
    const auto kind = r.u8();
    if (kind > static_cast<std::uint8_t>(LayerKind::TemporalMean)) throw DataError("SCNN: unknown layer kind");
    l.kind = static_cast<LayerKind>(kind);
    l.kernel = r.i32();
    l.channels = r.i32();
    l.units = r.i32();
    l.hidden = r.i32();
    l.rate = r.f32();
    l.per_position = r.u8() != 0;
    net.frozen.push_back(r.u8() != 0);
    const auto tensors = r.u32();
    std::vector<Tensor> ps;
    for (std::uint32_t t = 0; t < tensors; ++t) {
      const auto prank = r.u32();
      if (prank > 8) throw DataError("SCNN: implausible tensor rank");
      Shape s;
      for (std::uint32_t k = 0; k < prank; ++k) s.push_back(r.i32());
      for (int d : s)
        if (d <= 0) throw DataError("SCNN: non-positive tensor extent");
      std::vector<float> values(numel(s));
      for (auto& v : values) v = r.f32();
      ps.emplace_back(std::move(s), std::move(values));
    }
    net.layers.push_back(l);
    net.params.push_back(std::move(ps));
  }
  net.layer_shapes();  // validates layer/parameter consistency
  return net;
}

void save_checkpoint(const std::string& path, const Network& net, const std::string& metadata) {
  byteio::write_file(path, encode_checkpoint(net, metadata));
}

Network load_checkpoint(const std::string& path, std::string* metadata) {
  return decode_checkpoint(byteio::read_file(path), metadata);
}

}  // namespace scdet
