// Copyright 2026 The pagetracker Authors.
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
#include <initializer_list>
#include <string>
#include <vector>

#include "pgtk/common.hpp"

namespace pgtk {

// Dense row-major tensor.  T is float in production and double when
// gradients are being checked against finite differences.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(size_t(validate_shape()), T(0));
  }

  Tensor(std::vector<int> shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    const int64_t n = validate_shape();
    if (int64_t(data_.size()) != n)
      fail<ContractViolation>("tensor data size ", data_.size(),
                              " does not match shape numel ", n);
  }

  static Tensor full(std::vector<int> shape, T v) {
    Tensor t(std::move(shape));
    for (auto& x : t.data_) x = v;
    return t;
  }

  static Tensor scalar(T v) { return Tensor({1}, {v}); }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return int(shape_.size()); }
  int dim(int i) const {
    check(i >= 0 && i < rank(), "tensor dim index out of range");
    return shape_[size_t(i)];
  }
  int64_t numel() const { return int64_t(data_.size()); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](int64_t i) { return data_[size_t(i)]; }
  const T& operator[](int64_t i) const { return data_[size_t(i)]; }

  T& at(int i) { return data_[size_t(index1(i))]; }
  const T& at(int i) const { return data_[size_t(index1(i))]; }
  T& at(int i, int j) { return data_[size_t(index2(i, j))]; }
  const T& at(int i, int j) const { return data_[size_t(index2(i, j))]; }
  T& at(int i, int j, int k) { return data_[size_t(index3(i, j, k))]; }
  const T& at(int i, int j, int k) const { return data_[size_t(index3(i, j, k))]; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  std::string shape_str() const {
    std::string s = "[";
    for (size_t i = 0; i < shape_.size(); ++i) {
      if (i) s += ", ";
      s += std::to_string(shape_[i]);
    }
    return s + "]";
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.size());
    for (size_t i = 0; i < data_.size(); ++i) out[i] = U(data_[i]);
    return Tensor<U>(shape_, std::move(out));
  }

 private:
  int64_t validate_shape() const {
    int64_t n = 1;
    for (int d : shape_) {
      if (d < 1) fail<ContractViolation>("tensor dims must be >= 1, got ", d);
      n *= d;
    }
    return n;
  }

  int64_t index1(int i) const {
    check(rank() == 1, "at(i) needs a rank-1 tensor");
    check(i >= 0 && i < shape_[0], "index out of range");
    return i;
  }
  int64_t index2(int i, int j) const {
    check(rank() == 2, "at(i,j) needs a rank-2 tensor");
    check(i >= 0 && i < shape_[0] && j >= 0 && j < shape_[1], "index out of range");
    return int64_t(i) * shape_[1] + j;
  }
  int64_t index3(int i, int j, int k) const {
    check(rank() == 3, "at(i,j,k) needs a rank-3 tensor");
    check(i >= 0 && i < shape_[0] && j >= 0 && j < shape_[1] && k >= 0 && k < shape_[2],
          "index out of range");
    return (int64_t(i) * shape_[1] + j) * shape_[2] + k;
  }

  std::vector<int> shape_;
  std::vector<T> data_;
};

}  // namespace pgtk
