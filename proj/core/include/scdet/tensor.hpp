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

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <new>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "scdet/error.hpp"

namespace scdet {

using Shape = std::vector<int>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
}

std::string shape_string(const Shape& shape);

// Cache-line aligned storage. Eigen picks its vectorized head/tail split from
// the base address, so a fixed alignment keeps float reductions bit-stable
// across runs regardless of heap history.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

// Dense row-major tensor. The leading axis is the batch axis wherever a
// network consumes or produces one.
template <class T>
class BasicTensor {
 public:
  using value_type = T;
  using Storage = std::vector<T, AlignedAllocator<T>>;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)) {
    validate_shape();
    data_.assign(numel(shape_), fill);
  }

  BasicTensor(Shape shape, Storage data) : shape_(std::move(shape)), data_(std::move(data)) { check_data(); }
  BasicTensor(Shape shape, const std::vector<T>& data) : shape_(std::move(shape)), data_(data.begin(), data.end()) {
    check_data();
  }
  BasicTensor(Shape shape, std::initializer_list<T> data) : shape_(std::move(shape)), data_(data) { check_data(); }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int axis) const { return shape_.at(axis < 0 ? axis + rank() : axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  Storage& storage() { return data_; }
  const Storage& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  BasicTensor reshaped(Shape shape) const& {
    BasicTensor out = *this;
    out.reshape(std::move(shape));
    return out;
  }
  BasicTensor reshaped(Shape shape) && {
    reshape(std::move(shape));
    return std::move(*this);
  }
  void reshape(Shape shape) {
    if (numel(shape) != data_.size()) {
      throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    shape_ = std::move(shape);
  }

  // Slice [begin, end) along the leading axis.
  BasicTensor rows(int begin, int end) const {
    Shape s = shape_;
    s[0] = end - begin;
    const std::size_t stride = data_.size() / static_cast<std::size_t>(shape_[0]);
    return BasicTensor(std::move(s), Storage(data_.begin() + begin * stride, data_.begin() + end * stride));
  }

  bool all_finite() const {
    for (T v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  void require_finite(const std::string& where) const {
    if (!all_finite()) throw NumericError("non-finite value in " + where);
  }

  template <class U>
  BasicTensor<U> cast() const {
    return BasicTensor<U>(shape_, typename BasicTensor<U>::Storage(data_.begin(), data_.end()));
  }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void check_data() const {
    validate_shape();
    if (data_.size() != numel(shape_)) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_string(shape_));
    }
  }

  void validate_shape() const {
    for (int d : shape_) {
      if (d <= 0) throw ShapeError("tensor extents must be positive, got " + shape_string(shape_));
    }
  }

  Shape shape_;
  Storage data_;
};

using Tensor = BasicTensor<float>;

// Stacks equally shaped samples along a new leading axis.
template <class T>
BasicTensor<T> stack(std::span<const BasicTensor<T>> samples) {
  if (samples.empty()) throw ShapeError("cannot stack zero tensors");
  Shape s{static_cast<int>(samples.size())};
  s.insert(s.end(), samples[0].shape().begin(), samples[0].shape().end());
  typename BasicTensor<T>::Storage data;
  data.reserve(numel(s));
  for (const auto& t : samples) {
    if (t.shape() != samples[0].shape()) throw ShapeError("stack: mismatched sample shapes");
    data.insert(data.end(), t.storage().begin(), t.storage().end());
  }
  return BasicTensor<T>(std::move(s), std::move(data));
}

}  // namespace scdet
