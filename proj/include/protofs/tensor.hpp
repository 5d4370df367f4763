/* Copyright 2026 The protofs Authors. All Rights Reserved.

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

#ifndef PROTOFS_TENSOR_HPP_
#define PROTOFS_TENSOR_HPP_

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace protofs {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major float32 array. A rank-0 tensor (empty shape) is a scalar.
class Tensor {
 public:
  Tensor() : shape_{0}, data_{} {}
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<float> data);

  static Tensor scalar(float value) { return Tensor(Shape{}, {value}); }
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<float> data) {
    return Tensor(Shape{rows, cols}, std::move(data));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t numel() const noexcept { return data_.size(); }

  // Rows and columns of a rank-2 tensor.
  std::size_t rows() const { return shape_.at(0); }
  std::size_t cols() const { return shape_.at(1); }

  std::span<const float> data() const noexcept { return data_; }
  std::span<float> data() noexcept { return data_; }
  const std::vector<float>& values() const noexcept { return data_; }

  float operator[](std::size_t i) const { return data_[i]; }
  float& operator[](std::size_t i) { return data_[i]; }
  float at(std::size_t r, std::size_t c) const {
    return data_[r * shape_.at(1) + c];
  }
  float& at(std::size_t r, std::size_t c) {
    return data_[r * shape_.at(1) + c];
  }

  std::span<const float> row(std::size_t r) const {
    const std::size_t n = shape_.at(1);
    return std::span<const float>(data_).subspan(r * n, n);
  }

  Tensor reshaped(Shape shape) const;
  bool all_finite() const noexcept;

  /// Bitwise equality of shape and payload (NaN payloads compare by bits).
  bool bit_equal(const Tensor& other) const noexcept;

 private:
  Shape shape_;
  std::vector<float> data_;
};

}  // namespace protofs

#endif  // PROTOFS_TENSOR_HPP_
